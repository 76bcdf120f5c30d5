#pragma once

#include <utility>

#include "json.hpp"

#include "fieldloc/potentials.hpp"

namespace fieldloc {

/// Function maximized by the search: exact values on hypotheses and
/// admissible, singleton-tight bounds on normalized boxes.
class Objective
{
public:
    virtual ~Objective() = default;
    virtual int n_h() const = 0;
    virtual int n_v() const = 0;
    virtual double value(const Hypothesis& y) const = 0;
    virtual double bound(const HypothesisBox& box) const = 0;
};

/// w . phi(x, y) over one frame.
class LinearObjective : public Objective
{
public:
    LinearObjective(const Potentials& pot, const Weights& w) : pot_(pot), w_(w) {}
    int n_h() const override { return pot_.n_h(); }
    int n_v() const override { return pot_.n_v(); }
    double value(const Hypothesis& y) const override { return pot_.score(w_, y); }
    double bound(const HypothesisBox& box) const override { return pot_.bound(w_, box); }

private:
    const Potentials& pot_;
    Weights w_;
};

struct SearchConfig
{
    long long max_iterations = 10'000'000;
};

struct SearchResult
{
    Hypothesis y;
    double score = 0.0;
    long long iterations = 0;
    bool certified = true; // false if the iteration cap was hit
};

struct InferenceResult
{
    Hypothesis y;
    double score = 0.0;
    long long iterations = 0;
    Homography homography; // image -> model
    bool certified = true;
};

/// Splits the widest interval at its midpoint; the lower half keeps the
/// middle element. Ties go to the lowest dimension. Throws CannotBranch.
std::pair<HypothesisBox, HypothesisBox> branch(const HypothesisBox& box);

/// Best-first branch and bound. Among equal maxima the lexicographically
/// smallest hypothesis is returned.
SearchResult search(const Objective& f, const SearchConfig& cfg = {});
/// Full scan with the same tie-breaking; throws TooLarge above 1e8 hypotheses.
SearchResult search_exhaustive(const Objective& f);

InferenceResult infer(const Weights& w, const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model,
                      const SearchConfig& cfg = {});
InferenceResult infer_exhaustive(const Weights& w, const AccumulatorSet& acc, const RayGrid& grid,
                                 const FieldModel& model);

/// Image corners y1^y3, y1^y4, y2^y4, y2^y3 of the hypothesis.
std::array<Point2, 4> hypothesis_corners(const Hypothesis& y, const RayGrid& grid);
/// Image -> model homography sending the corners to (0,0), (L,0), (L,W), (0,W).
Homography homography_from_hypothesis(const Hypothesis& y, const RayGrid& grid, const FieldModel& model);

nlohmann::json to_json(const InferenceResult& r);

} // namespace fieldloc
