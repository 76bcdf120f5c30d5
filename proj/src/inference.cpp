#include "fieldloc/inference.hpp"

#include <queue>
#include <vector>

#include "fieldloc/errors.hpp"

namespace fieldloc {

std::pair<HypothesisBox, HypothesisBox> branch(const HypothesisBox& box)
{
    int dim = -1;
    int width = 0;
    for (int d = 0; d < 4; ++d) {
        const int w = box.hi[d] - box.lo[d];
        if (w > width) {
            width = w;
            dim = d;
        }
    }
    if (dim < 0) throw CannotBranch("box is a single hypothesis");
    const int mid = box.lo[dim] + width / 2;
    HypothesisBox a = box;
    HypothesisBox b = box;
    a.hi[dim] = mid;
    b.lo[dim] = mid + 1;
    return {a, b};
}

namespace {

struct Node
{
    HypothesisBox box;
    double bound;
    long long seq;
};

// Highest bound first; equal bounds by smallest lower corner, then insertion order.
struct NodeOrder
{
    bool operator()(const Node& a, const Node& b) const
    {
        if (a.bound != b.bound) return a.bound < b.bound;
        if (a.box.lo != b.box.lo) return a.box.lo > b.box.lo;
        return a.seq > b.seq;
    }
};

Hypothesis as_hypothesis(const HypothesisBox& b) { return Hypothesis{b.lo}; }

} // namespace

SearchResult search(const Objective& f, const SearchConfig& cfg)
{
    HypothesisBox root = HypothesisBox::root(f.n_h(), f.n_v());
    if (f.n_h() < 2 || f.n_v() < 2 || !root.normalize()) throw EmptyBox("empty hypothesis space");

    std::priority_queue<Node, std::vector<Node>, NodeOrder> queue;
    long long seq = 0;
    queue.push({root, f.bound(root), seq++});
    SearchResult res;
    while (!queue.empty()) {
        Node top = queue.top();
        if (res.iterations >= cfg.max_iterations) {
            // Out of budget: descend greedily from the most promising box.
            HypothesisBox box = top.box;
            while (!box.is_singleton()) {
                auto [a, b] = branch(box);
                const bool oka = a.normalize();
                const bool okb = b.normalize();
                if (oka && (!okb || f.bound(a) >= f.bound(b)))
                    box = a;
                else
                    box = b;
            }
            res.y = as_hypothesis(box);
            res.score = f.value(res.y);
            res.certified = false;
            return res;
        }
        queue.pop();
        ++res.iterations;
        if (top.box.is_singleton()) {
            res.y = as_hypothesis(top.box);
            res.score = top.bound;
            return res;
        }
        auto [a, b] = branch(top.box);
        if (a.normalize()) queue.push({a, f.bound(a), seq++});
        if (b.normalize()) queue.push({b, f.bound(b), seq++});
    }
    throw EmptyBox("search exhausted without a hypothesis");
}

SearchResult search_exhaustive(const Objective& f)
{
    const int nh = f.n_h();
    const int nv = f.n_v();
    const long double hcount = static_cast<long double>(nh) * (nh - 1) / 2;
    const long double vcount = static_cast<long double>(nv) * (nv - 1) / 2;
    if (hcount * vcount > 1e8L) throw TooLarge("more than 1e8 hypotheses");
    if (hcount <= 0 || vcount <= 0) throw EmptyBox("empty hypothesis space");

    SearchResult res;
    bool first = true;
    Hypothesis y;
    for (y.y[0] = 0; y.y[0] < nh; ++y.y[0])
        for (y.y[1] = y.y[0] + 1; y.y[1] < nh; ++y.y[1])
            for (y.y[2] = 0; y.y[2] < nv; ++y.y[2])
                for (y.y[3] = y.y[2] + 1; y.y[3] < nv; ++y.y[3]) {
                    const double v = f.value(y);
                    ++res.iterations;
                    if (first || v > res.score) {
                        res.score = v;
                        res.y = y;
                        first = false;
                    }
                }
    return res;
}

namespace {

InferenceResult finish(const SearchResult& s, const RayGrid& grid, const FieldModel& model)
{
    InferenceResult r;
    r.y = s.y;
    r.score = s.score;
    r.iterations = s.iterations;
    r.certified = s.certified;
    r.homography = homography_from_hypothesis(s.y, grid, model);
    return r;
}

} // namespace

InferenceResult infer(const Weights& w, const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model,
                      const SearchConfig& cfg)
{
    const Potentials pot(acc, grid, model);
    return finish(search(LinearObjective(pot, w), cfg), grid, model);
}

InferenceResult infer_exhaustive(const Weights& w, const AccumulatorSet& acc, const RayGrid& grid,
                                 const FieldModel& model)
{
    const Potentials pot(acc, grid, model);
    return finish(search_exhaustive(LinearObjective(pot, w)), grid, model);
}

std::array<Point2, 4> hypothesis_corners(const Hypothesis& y, const RayGrid& grid)
{
    const Vec3 l1 = grid.h.ray(y.y[0]);
    const Vec3 l2 = grid.h.ray(y.y[1]);
    const Vec3 l3 = grid.v.ray(y.y[2]);
    const Vec3 l4 = grid.v.ray(y.y[3]);
    auto meet = [](const Vec3& a, const Vec3& b) {
        const Vec3 p = a.cross(b);
        if (std::abs(p.z()) <= 1e-12 * p.head<2>().norm()) throw DegenerateDLT("rays meet at infinity");
        return Point2{p.x() / p.z(), p.y() / p.z()};
    };
    return {meet(l1, l3), meet(l1, l4), meet(l2, l4), meet(l2, l3)};
}

Homography homography_from_hypothesis(const Hypothesis& y, const RayGrid& grid, const FieldModel& model)
{
    const auto img = hypothesis_corners(y, grid);
    const auto mdl = field_corners(model);
    return dlt_homography(img, mdl);
}

nlohmann::json to_json(const InferenceResult& r)
{
    return {{"y", r.y.y},
            {"score", r.score},
            {"iterations", r.iterations},
            {"homography", r.homography.serialized()},
            {"certified", r.certified}};
}

} // namespace fieldloc
