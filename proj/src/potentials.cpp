#include "fieldloc/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fieldloc/errors.hpp"

namespace fieldloc {

bool HypothesisBox::normalize()
{
    lo[1] = std::max(lo[1], lo[0] + 1);
    hi[0] = std::min(hi[0], hi[1] - 1);
    lo[3] = std::max(lo[3], lo[2] + 1);
    hi[2] = std::min(hi[2], hi[3] - 1);
    for (int d = 0; d < 4; ++d)
        if (lo[d] > hi[d]) return false;
    return true;
}

long double HypothesisBox::count() const
{
    long double c = 1;
    for (int d = 0; d < 4; ++d) c *= static_cast<long double>(hi[d] - lo[d] + 1);
    return c;
}

bool HypothesisBox::contains(const Hypothesis& h) const
{
    for (int d = 0; d < 4; ++d)
        if (h.y[d] < lo[d] || h.y[d] > hi[d]) return false;
    return true;
}

const char* to_string(Tying t)
{
    switch (t) {
    case Tying::G: return "G";
    case Tying::GL: return "G+L";
    case Tying::GLC: return "G+L+C";
    case Tying::GVerLHorLC: return "G+VerL+HorL+C";
    case Tying::Untied: return "untied";
    }
    return "untied";
}

Tying tying_from_string(const std::string& s)
{
    if (s == "G") return Tying::G;
    if (s == "G+L") return Tying::GL;
    if (s == "G+L+C") return Tying::GLC;
    if (s == "G+VerL+HorL+C") return Tying::GVerLHorLC;
    if (s == "untied") return Tying::Untied;
    throw InputError("unknown tying scheme '" + s + "'");
}

int num_params(Tying t)
{
    switch (t) {
    case Tying::G: return 4;
    case Tying::GL: return 5;
    case Tying::GLC: return 6;
    case Tying::GVerLHorLC: return 7;
    case Tying::Untied: return kNumFeatures;
    }
    return kNumFeatures;
}

int param_of_feature(Tying t, int feature)
{
    if (feature < kFirstLine) return feature;
    const bool is_line = feature < kFirstCircle;
    switch (t) {
    case Tying::G: return -1;
    case Tying::GL: return is_line ? 4 : -1;
    case Tying::GLC: return is_line ? 4 : 5;
    case Tying::GVerLHorLC: {
        if (!is_line) return 6;
        const int line = feature - kFirstLine;
        return standard_field().lines[static_cast<std::size_t>(line)].orientation == Orientation::Vertical ? 4 : 5;
    }
    case Tying::Untied: return feature;
    }
    return feature;
}

WeightVector::WeightVector(Tying t, std::vector<double> p) : tying(t), params(std::move(p))
{
    if (static_cast<int>(params.size()) != num_params(t)) throw InputError("weight count does not match tying");
}

WeightVector WeightVector::from_full(Tying t, const Weights& w)
{
    std::vector<double> sum(static_cast<std::size_t>(num_params(t)), 0.0);
    std::vector<int> n(sum.size(), 0);
    for (int i = 0; i < kNumFeatures; ++i) {
        const int k = param_of_feature(t, i);
        if (k < 0) continue;
        sum[static_cast<std::size_t>(k)] += w[static_cast<std::size_t>(i)];
        ++n[static_cast<std::size_t>(k)];
    }
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] /= std::max(n[k], 1);
    return WeightVector(t, std::move(sum));
}

Weights WeightVector::expanded() const
{
    Weights w{};
    for (int i = 0; i < kNumFeatures; ++i) {
        const int k = param_of_feature(tying, i);
        w[static_cast<std::size_t>(i)] = k < 0 ? 0.0 : params[static_cast<std::size_t>(k)];
    }
    return w;
}

std::vector<double> group_features(Tying t, const FeatureVector& phi)
{
    std::vector<double> g(static_cast<std::size_t>(num_params(t)), 0.0);
    for (int i = 0; i < kNumFeatures; ++i) {
        const int k = param_of_feature(t, i);
        if (k >= 0) g[static_cast<std::size_t>(k)] += phi[static_cast<std::size_t>(i)];
    }
    return g;
}

namespace {

double ratio(std::int64_t count, std::int64_t total)
{
    return total > 0 ? static_cast<double>(count) / static_cast<double>(total) : 0.0;
}

int ifloor(double v) { return static_cast<int>(std::floor(v)); }
int iceil(double v) { return static_cast<int>(std::ceil(v)); }

// Cell interval [lo, hi) of a projected model interval, rounded outward
// (covering every touched cell) or inward (only fully covered cells).
struct CellSpan
{
    int lo, hi;
};
CellSpan outward(double a, double b) { return {ifloor(a), iceil(b)}; }
CellSpan inward(double a, double b) { return {iceil(a), ifloor(b)}; }

std::int64_t rect_count(const IntegralTable& t, CellSpan rows, CellSpan cols)
{
    return t.sum_clamped(rows.lo, rows.hi, cols.lo, cols.hi);
}

CellSpan meet(CellSpan a, CellSpan b) { return {std::max(a.lo, b.lo), std::min(a.hi, b.hi)}; }

} // namespace

Potentials::Potentials(const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model, int band_half_width)
    : acc_(acc), grid_(grid), model_(model), hw_(band_half_width)
{
    if (acc.n_h() != grid.n_h() || acc.n_v() != grid.n_v()) throw InputError("accumulators do not match the grid");
    if (hw_ < 1) throw InputError("band half-width must be positive");
    for (int c = 0; c < kNumCircles; ++c)
        circle_rects_[static_cast<std::size_t>(c)] = circle_rects(model.circles[static_cast<std::size_t>(c)]);
}

double Potentials::index_h(double u, const HypothesisBox& b, bool hi_corner) const
{
    return hi_corner ? grid_.h.model_index(u, b.hi[0], b.hi[1]) : grid_.h.model_index(u, b.lo[0], b.lo[1]);
}

double Potentials::index_v(double u, const HypothesisBox& b, bool hi_corner) const
{
    return hi_corner ? grid_.v.model_index(u, b.hi[2], b.hi[3]) : grid_.v.model_index(u, b.lo[2], b.lo[3]);
}

std::int64_t Potentials::field_count(AccClass c, const Hypothesis& y) const
{
    return acc_.table(c).sum_clamped(y.y[0], y.y[1], y.y[2], y.y[3]);
}

double Potentials::grass_bound(int i, const HypothesisBox& b, bool upper) const
{
    const AccClass cls = (i == kGrassIn || i == kGrassOut) ? AccClass::Grass : AccClass::NonGrass;
    const IntegralTable& t = acc_.table(cls);
    const std::int64_t total = t.total();
    if (total == 0) return 0.0;
    const bool inside = (i == kGrassIn || i == kNonGrassIn);
    // The inside count is largest for the union field and smallest for the
    // intersection field; the outside count is the complement.
    const bool use_union = inside == upper;
    const std::int64_t in = use_union ? t.sum_clamped(b.lo[0], b.hi[1], b.lo[2], b.hi[3])
                                      : t.sum_clamped(b.hi[0], b.lo[1], b.hi[2], b.lo[3]);
    return inside ? ratio(in, total) : ratio(total - in, total);
}

double Potentials::line_bound(int line, const HypothesisBox& b, bool upper) const
{
    const ModelLine& ml = model_.lines[static_cast<std::size_t>(line)];
    const bool vertical = ml.orientation == Orientation::Vertical;
    const IntegralTable& t = acc_.table(vertical ? AccClass::LineV : AccClass::LineH);
    const std::int64_t total = t.total();
    if (total == 0) return 0.0;

    // Position across the line (its ray) and extent along it.
    const double pos_span = vertical ? model_.length : model_.width;
    const double ext_span = vertical ? model_.width : model_.length;
    auto pos = [&](bool hi) { return vertical ? index_v(ml.offset / pos_span, b, hi) : index_h(ml.offset / pos_span, b, hi); };
    auto ext = [&](double u, bool hi) { return vertical ? index_h(u / ext_span, b, hi) : index_v(u / ext_span, b, hi); };

    const int r_min = ifloor(pos(false) + 0.5);
    const int r_max = ifloor(pos(true) + 0.5);
    const CellSpan extent = upper ? outward(ext(ml.lo, false), ext(ml.hi, true)) : outward(ext(ml.lo, true), ext(ml.hi, false));
    const int n_across = vertical ? grid_.n_v() : grid_.n_h();

    auto band_count = [&](int r) {
        const CellSpan band{r - hw_, r + hw_};
        return vertical ? rect_count(t, extent, band) : rect_count(t, band, extent);
    };

    if (extent.lo >= extent.hi) return 0.0;
    if (upper) {
        std::int64_t best = 0;
        for (int r = std::max(r_min, 1 - hw_); r <= std::min(r_max, n_across + hw_ - 1); ++r)
            best = std::max(best, band_count(r));
        return ratio(best, total);
    }
    if (r_min <= -hw_ || r_max >= n_across + hw_) return 0.0;
    std::int64_t worst = std::numeric_limits<std::int64_t>::max();
    for (int r = r_min; r <= r_max; ++r) worst = std::min(worst, band_count(r));
    return ratio(worst, total);
}

double Potentials::circle_bound(int circle, const HypothesisBox& b, bool upper) const
{
    const IntegralTable& t = acc_.table(AccClass::LineNone);
    const std::int64_t total = t.total();
    if (total == 0) return 0.0;
    const CircleRects& cr = circle_rects_[static_cast<std::size_t>(circle)];
    if (cr.outer.empty()) return 0.0;
    const double L = model_.length;
    const double W = model_.width;

    // Largest outer / smallest inner region for the upper bound, the reverse
    // for the lower bound.
    const bool big_outer = upper;
    const CellSpan orows = big_outer ? outward(index_h(cr.outer.y0 / W, b, false), index_h(cr.outer.y1 / W, b, true))
                                     : outward(index_h(cr.outer.y0 / W, b, true), index_h(cr.outer.y1 / W, b, false));
    const CellSpan ocols = big_outer ? outward(index_v(cr.outer.x0 / L, b, false), index_v(cr.outer.x1 / L, b, true))
                                     : outward(index_v(cr.outer.x0 / L, b, true), index_v(cr.outer.x1 / L, b, false));
    std::int64_t outer = rect_count(t, orows, ocols);
    if (outer == 0 || cr.inner.empty()) return ratio(outer, total);

    const bool big_inner = !upper;
    const CellSpan irows = big_inner ? inward(index_h(cr.inner.y0 / W, b, false), index_h(cr.inner.y1 / W, b, true))
                                     : inward(index_h(cr.inner.y0 / W, b, true), index_h(cr.inner.y1 / W, b, false));
    const CellSpan icols = big_inner ? inward(index_v(cr.inner.x0 / L, b, false), index_v(cr.inner.x1 / L, b, true))
                                     : inward(index_v(cr.inner.x0 / L, b, true), index_v(cr.inner.x1 / L, b, false));
    const std::int64_t both = rect_count(t, meet(orows, irows), meet(ocols, icols));
    return ratio(outer - both, total);
}

double Potentials::bound_feature(int i, const HypothesisBox& box, bool upper) const
{
    if (i < kFirstLine) return grass_bound(i, box, upper);
    if (i < kFirstCircle) return line_bound(i - kFirstLine, box, upper);
    return circle_bound(i - kFirstCircle, box, upper);
}

double Potentials::phi_feature(int i, const Hypothesis& y) const
{
    return bound_feature(i, HypothesisBox::singleton(y), true);
}

FeatureVector Potentials::phi(const Hypothesis& y) const
{
    FeatureVector f{};
    for (int i = 0; i < kNumFeatures; ++i) f[static_cast<std::size_t>(i)] = phi_feature(i, y);
    return f;
}

double Potentials::score(const Weights& w, const Hypothesis& y) const
{
    const HypothesisBox box = HypothesisBox::singleton(y);
    double s = 0.0;
    for (int i = 0; i < kNumFeatures; ++i) {
        const double wi = w[static_cast<std::size_t>(i)];
        if (wi != 0.0) s += wi * bound_feature(i, box, true);
    }
    return s;
}

double Potentials::bound(const Weights& w, const HypothesisBox& box) const
{
    double s = 0.0;
    for (int i = 0; i < kNumFeatures; ++i) {
        const double wi = w[static_cast<std::size_t>(i)];
        if (wi != 0.0) s += wi * bound_feature(i, box, wi > 0.0);
    }
    return s;
}

std::array<double, 4> phi_grass(const AccumulatorSet& acc, const Hypothesis& y)
{
    std::array<double, 4> out{};
    const std::int64_t g = acc.table(AccClass::Grass).sum_clamped(y.y[0], y.y[1], y.y[2], y.y[3]);
    const std::int64_t n = acc.table(AccClass::NonGrass).sum_clamped(y.y[0], y.y[1], y.y[2], y.y[3]);
    const std::int64_t gt = acc.total(AccClass::Grass);
    const std::int64_t nt = acc.total(AccClass::NonGrass);
    out[0] = ratio(g, gt);
    out[1] = gt > 0 ? ratio(gt - g, gt) : 0.0;
    out[2] = ratio(n, nt);
    out[3] = nt > 0 ? ratio(nt - n, nt) : 0.0;
    return out;
}

double phi_line(const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model, int line_id,
                const Hypothesis& y)
{
    return Potentials(acc, grid, model).phi_feature(kFirstLine + line_id, y);
}

double phi_circle(const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model, int circle_id,
                  const Hypothesis& y)
{
    return Potentials(acc, grid, model).phi_feature(kFirstCircle + circle_id, y);
}

double score(const Weights& w, const FeatureVector& phi)
{
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] != 0.0) s += w[i] * phi[i];
    return s;
}

double bound_box(const Weights& w, const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model,
                 HypothesisBox box)
{
    if (!box.normalize()) throw EmptyBox("box contains no valid hypothesis");
    return Potentials(acc, grid, model).bound(w, box);
}

nlohmann::json to_json(const FeatureVector& phi) { return nlohmann::json(phi); }

nlohmann::json to_json(const WeightVector& w)
{
    return {{"weights", w.expanded()}, {"tying", to_string(w.tying)}};
}

WeightVector weights_from_json(const nlohmann::json& j)
{
    try {
        const Tying t = tying_from_string(j.value("tying", std::string("untied")));
        const auto full = j.at("weights").get<std::vector<double>>();
        if (full.size() != kNumFeatures) throw InputError("weights must have 24 entries");
        Weights w{};
        std::copy(full.begin(), full.end(), w.begin());
        return WeightVector::from_full(t, w);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad weights JSON: ") + e.what());
    }
}

} // namespace fieldloc
