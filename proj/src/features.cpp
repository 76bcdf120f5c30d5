#include "fieldloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "fieldloc/errors.hpp"

namespace fieldloc {

namespace {

Point2 unit(Point2 p)
{
    const double n = norm(p);
    return {p.x / n, p.y / n};
}

// Perpendicular of d whose dominant component is positive.
Point2 oriented_normal(Point2 d)
{
    Point2 n{-d.y, d.x};
    const double dom = std::abs(n.x) >= std::abs(n.y) ? n.x : n.y;
    if (dom < 0.0) n = -1.0 * n;
    return n;
}

// Values within this distance of a multiple of 0.5 are snapped onto it, so
// rounding error cannot push near-identical indices across a cell boundary.
double snap_half(double f)
{
    const double r = std::round(2.0 * f) / 2.0;
    return std::abs(f - r) < 1e-9 ? r : f;
}

} // namespace

RayFan::RayFan(const VanishingPoint& vp, double param_lo, double param_hi, int count, Point2 axis)
    : vp_(vp), infinite_(vp.is_infinite())
{
    if (count < 2) throw InputError("a ray fan needs at least 2 rays");
    if (!(param_hi > param_lo)) throw InputError("empty ray fan span");
    if (infinite_) {
        n_ = oriented_normal(vp.direction());
    } else {
        origin_ = vp.point();
        b_ = unit(axis);
        n_ = oriented_normal(b_);
    }
    theta0_ = param_lo;
    step_ = (param_hi - param_lo) / (count - 1);
    params_.resize(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) params_[static_cast<std::size_t>(k)] = param_lo + k * step_;
}

double RayFan::param_of(Point2 p) const
{
    if (infinite_) return dot(n_, p);
    const Point2 d = p - origin_;
    return std::atan2(dot(n_, d), dot(b_, d));
}

int RayFan::cell_of(double param) const
{
    const double lo = params_.front();
    const double hi = params_.back();
    const double tol = 1e-9 * (hi - lo);
    if (param < lo) {
        if (param < lo - tol) throw OutOfGrid("parameter below the first ray");
        return 0;
    }
    if (param > hi) {
        if (param > hi + tol) throw OutOfGrid("parameter above the last ray");
        return size() - 1;
    }
    const auto it = std::upper_bound(params_.begin(), params_.end(), param);
    return static_cast<int>(it - params_.begin()) - 1;
}

Vec3 RayFan::line_at(double param) const
{
    if (infinite_) return {n_.x, n_.y, -param};
    const Point2 u = std::cos(param) * b_ + std::sin(param) * n_;
    return join(homogeneous(origin_), homogeneous(origin_ + u));
}

std::pair<double, double> RayFan::pencil_of(const Vec3& x) const
{
    if (infinite_) return {n_.x * x.x() + n_.y * x.y(), x.z()};
    const Point2 d{x.x() - x.z() * origin_.x, x.y() - x.z() * origin_.y};
    return {dot(n_, d), dot(b_, d)};
}

double RayFan::pencil_at(double param) const { return infinite_ ? param : std::tan(param); }
double RayFan::param_at_pencil(double s) const { return infinite_ ? s : std::atan(s); }

double RayFan::model_index(double u, int a, int b) const
{
    const double sa = pencil_at(params_[static_cast<std::size_t>(a)]);
    const double sb = pencil_at(params_[static_cast<std::size_t>(b)]);
    const auto [P, Q] = horizon_;
    const double p = P - sa * Q;
    const double q = Q * (sb - sa);
    const double frac = projective_fraction(u, p, q);
    const double s = sa + frac * (sb - sa);
    return snap_half((param_at_pencil(s) - theta0_) / step_);
}

RayGrid build_ray_grid(const VanishingPoint& vp_h, const VanishingPoint& vp_v, ImageSize image_size,
                       const GridConfig& cfg)
{
    if (cfg.n_h < 2 || cfg.n_v < 2) throw InputError("grid needs at least 2 rays per fan");
    if (image_size.width <= 0 || image_size.height <= 0) throw InputError("empty image");
    const double m = cfg.margin * std::hypot(image_size.width, image_size.height);
    const double x0 = -m, y0 = -m;
    const double x1 = image_size.width - 1 + m, y1 = image_size.height - 1 + m;
    const std::array<Point2, 4> corners{Point2{x0, y0}, Point2{x1, y0}, Point2{x1, y1}, Point2{x0, y1}};
    const Point2 center{(image_size.width - 1) / 2.0, (image_size.height - 1) / 2.0};

    auto make_fan = [&](const VanishingPoint& vp, const VanishingPoint& other, int count) {
        Point2 axis{1.0, 0.0};
        if (!vp.is_infinite()) {
            const Point2 v = vp.point();
            if (v.x >= x0 && v.x <= x1 && v.y >= y0 && v.y <= y1)
                throw VPInsideImage("vanishing point lies inside the expanded image");
            axis = unit(center - v);
            // Re-center the reference direction on the angular span.
            RayFan probe(vp, 0.0, 1.0, 2, axis);
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (const auto& c : corners) {
                lo = std::min(lo, probe.param_of(c));
                hi = std::max(hi, probe.param_of(c));
            }
            const double mid = 0.5 * (lo + hi);
            axis = unit(std::cos(mid) * axis + std::sin(mid) * oriented_normal(axis));
        }
        RayFan probe(vp, 0.0, 1.0, 2, axis);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& c : corners) {
            lo = std::min(lo, probe.param_of(c));
            hi = std::max(hi, probe.param_of(c));
        }
        // Keep the span on the image side of the horizon.
        const auto [P, Q] = probe.pencil_of(other.p);
        if (Q != 0.0) {
            const double hz = vp.is_infinite() ? P / Q : std::atan(P / Q);
            if (hz > lo && hz < hi) {
                const double gap = 1e-3 * (hi - lo);
                if (probe.param_of(center) < hz)
                    hi = hz - gap;
                else
                    lo = hz + gap;
            }
        }
        RayFan fan(vp, lo, hi, count, axis);
        fan.set_horizon(fan.pencil_of(other.p));
        return fan;
    };

    RayGrid g;
    g.image_size = image_size;
    g.h = make_fan(vp_h, vp_v, cfg.n_h);
    g.v = make_fan(vp_v, vp_h, cfg.n_v);
    return g;
}

std::pair<int, int> cell_of_pixel(const RayGrid& grid, Point2 p)
{
    return {grid.h.cell_of(grid.h.param_of(p)), grid.v.cell_of(grid.v.param_of(p))};
}

IntegralTable::IntegralTable(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows + 1) * (cols + 1), 0)
{
}

IntegralTable IntegralTable::from_cells(int rows, int cols, std::span<const std::int64_t> cells)
{
    if (cells.size() != static_cast<std::size_t>(rows) * cols) throw InputError("cell count mismatch");
    IntegralTable t(rows, cols);
    const std::size_t stride = static_cast<std::size_t>(cols) + 1;
    for (int i = 0; i < rows; ++i) {
        std::int64_t row = 0;
        for (int j = 0; j < cols; ++j) {
            row += cells[static_cast<std::size_t>(i) * cols + j];
            t.data_[(i + 1) * stride + j + 1] = t.data_[i * stride + j + 1] + row;
        }
    }
    return t;
}

std::int64_t IntegralTable::region_sum(int i_lo, int i_hi, int j_lo, int j_hi) const
{
    if (i_lo < 0 || j_lo < 0 || i_hi > rows_ || j_hi > cols_ || i_lo > i_hi || j_lo > j_hi)
        throw RegionError("region out of range or inverted");
    return at(i_hi, j_hi) - at(i_lo, j_hi) - at(i_hi, j_lo) + at(i_lo, j_lo);
}

std::int64_t IntegralTable::sum_clamped(int i_lo, int i_hi, int j_lo, int j_hi) const
{
    i_lo = std::max(i_lo, 0);
    j_lo = std::max(j_lo, 0);
    i_hi = std::min(i_hi, rows_);
    j_hi = std::min(j_hi, cols_);
    if (i_lo >= i_hi || j_lo >= j_hi) return 0;
    return at(i_hi, j_hi) - at(i_lo, j_hi) - at(i_hi, j_lo) + at(i_lo, j_lo);
}

std::vector<std::pair<int, int>> segment_pixels(const LineSegment& s, ImageSize size)
{
    std::vector<std::pair<int, int>> out;
    int px = std::numeric_limits<int>::min(), py = px;
    rasterize_segment(s.p1, s.p2, [&](int x, int y) {
        if (x == px && y == py) return;
        px = x;
        py = y;
        if (x >= 0 && y >= 0 && x < size.width && y < size.height) out.emplace_back(x, y);
    });
    return out;
}

AccumulatorSet build_accumulators(const RayGrid& grid, const BitMask& grass, std::span<const LineSegment> segments,
                                  std::span<const VpLabel> labels)
{
    if (!(grass.size == grid.image_size)) throw InputError("mask size does not match the grid");
    if (labels.size() != segments.size()) throw InputError("one label per segment required");
    const int nh = grid.n_h();
    const int nv = grid.n_v();
    const std::size_t ncells = static_cast<std::size_t>(nh) * nv;
    std::array<std::vector<std::int64_t>, kNumAccClasses> cells;
    for (auto& c : cells) c.assign(ncells, 0);

    AccumulatorSet acc;
    auto bin = [&](AccClass cls, int x, int y) {
        try {
            const auto [i, j] = cell_of_pixel(grid, Point2{double(x), double(y)});
            ++cells[static_cast<int>(cls)][static_cast<std::size_t>(i) * nv + j];
        } catch (const OutOfGrid&) {
            ++acc.dropped_pixels;
        }
    };

    const int w = grass.size.width;
    const int h = grass.size.height;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) bin(grass.at(x, y) ? AccClass::Grass : AccClass::NonGrass, x, y);

    for (std::size_t k = 0; k < segments.size(); ++k) {
        const AccClass cls = labels[k] == VpLabel::H   ? AccClass::LineH
                             : labels[k] == VpLabel::V ? AccClass::LineV
                                                       : AccClass::LineNone;
        for (const auto& [x, y] : segment_pixels(segments[k], grass.size)) bin(cls, x, y);
    }

    for (int c = 0; c < kNumAccClasses; ++c)
        acc.tables[static_cast<std::size_t>(c)] = IntegralTable::from_cells(nh, nv, cells[static_cast<std::size_t>(c)]);
    return acc;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::istream& in, int bytes)
{
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = in.get();
        if (c == EOF) throw InputError("truncated accumulator cache");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

constexpr char kMagic[] = "FLAC1";

} // namespace

void save_accumulators(const std::string& path, const AccumulatorSet& acc)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out.write(kMagic, 5);
    put_u32(out, static_cast<std::uint32_t>(acc.n_h()));
    put_u32(out, static_cast<std::uint32_t>(acc.n_v()));
    for (const auto& t : acc.tables)
        for (auto v : t.data()) put_u64(out, static_cast<std::uint64_t>(v));
}

AccumulatorSet load_accumulators(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    char magic[5];
    if (!in.read(magic, 5) || !std::equal(magic, magic + 5, kMagic)) throw InputError("not an accumulator cache");
    const auto nh = static_cast<int>(get_le(in, 4));
    const auto nv = static_cast<int>(get_le(in, 4));
    if (nh <= 0 || nv <= 0 || nh > 1 << 16 || nv > 1 << 16) throw InputError("bad accumulator dimensions");
    AccumulatorSet acc;
    for (auto& t : acc.tables) {
        t = IntegralTable(nh, nv);
        for (auto& v : t.data()) v = static_cast<std::int64_t>(get_le(in, 8));
    }
    return acc;
}

} // namespace fieldloc
