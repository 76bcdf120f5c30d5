#pragma once

#include <array>
#include <compare>
#include <string>
#include <vector>

#include "json.hpp"

#include "fieldloc/features.hpp"
#include "fieldloc/field_model.hpp"

namespace fieldloc {

// Feature layout: grass (4), lines (17), circles (3).
inline constexpr int kGrassIn = 0;
inline constexpr int kGrassOut = 1;
inline constexpr int kNonGrassIn = 2;
inline constexpr int kNonGrassOut = 3;
inline constexpr int kFirstLine = 4;
inline constexpr int kFirstCircle = kFirstLine + kNumLines;
inline constexpr int kNumFeatures = kFirstCircle + kNumCircles;

using FeatureVector = std::array<double, kNumFeatures>;
using Weights = std::array<double, kNumFeatures>;

/// Ray indices: y1 < y2 from the horizontal fan (model y = 0 and y = width),
/// y3 < y4 from the vertical fan (model x = 0 and x = length).
struct Hypothesis
{
    std::array<int, 4> y{0, 1, 0, 1};

    friend auto operator<=>(const Hypothesis&, const Hypothesis&) = default;
    bool valid(int n_h, int n_v) const
    {
        return y[0] >= 0 && y[0] < y[1] && y[1] < n_h && y[2] >= 0 && y[2] < y[3] && y[3] < n_v;
    }
};

/// Product of four inclusive integer intervals.
struct HypothesisBox
{
    std::array<int, 4> lo{};
    std::array<int, 4> hi{};

    static HypothesisBox root(int n_h, int n_v) { return {{0, 1, 0, 1}, {n_h - 2, n_h - 1, n_v - 2, n_v - 1}}; }
    static HypothesisBox singleton(const Hypothesis& h) { return {h.y, h.y}; }

    bool is_singleton() const { return lo == hi; }
    /// Shrinks the box to the hypotheses with y1 < y2 and y3 < y4; false if none remain.
    bool normalize();
    long double count() const; // raw product of interval sizes
    bool contains(const Hypothesis& h) const;
    friend bool operator==(const HypothesisBox&, const HypothesisBox&) = default;
};

enum class Tying { G, GL, GLC, GVerLHorLC, Untied };

const char* to_string(Tying t);
Tying tying_from_string(const std::string& s);
int num_params(Tying t);
/// Parameter index shared by feature i under the scheme, or -1 if the
/// feature is not used.
int param_of_feature(Tying t, int feature);

struct WeightVector
{
    Tying tying = Tying::GVerLHorLC;
    std::vector<double> params;

    WeightVector() : params(static_cast<std::size_t>(num_params(tying)), 0.0) {}
    WeightVector(Tying t, std::vector<double> p);
    static WeightVector from_full(Tying t, const Weights& w); // averages tied entries

    Weights expanded() const;
};

/// Sums of tied features, one per parameter.
std::vector<double> group_features(Tying t, const FeatureVector& phi);

/// Potentials and their box bounds over one frame's accumulators. The
/// accumulators and grid are referenced and must outlive this object.
class Potentials
{
public:
    Potentials(const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model, int band_half_width = 1);

    int n_h() const { return grid_.n_h(); }
    int n_v() const { return grid_.n_v(); }
    const AccumulatorSet& accumulators() const { return acc_; }
    const RayGrid& grid() const { return grid_; }
    const FieldModel& model() const { return model_; }

    FeatureVector phi(const Hypothesis& y) const;
    double phi_feature(int i, const Hypothesis& y) const;
    /// Upper (upper == true) or lower bound of feature i over a normalized box.
    double bound_feature(int i, const HypothesisBox& box, bool upper) const;

    /// sum_i w_i phi_i, accumulated in feature order, zero weights skipped.
    double score(const Weights& w, const Hypothesis& y) const;
    /// Admissible bound with the same accumulation order; equals score() on
    /// singletons. The box must be normalized.
    double bound(const Weights& w, const HypothesisBox& box) const;

    /// Cell rectangle of the field region: rows [y1, y2), cols [y3, y4).
    std::int64_t field_count(AccClass c, const Hypothesis& y) const;

private:
    double grass_bound(int i, const HypothesisBox& box, bool upper) const;
    double line_bound(int line, const HypothesisBox& box, bool upper) const;
    double circle_bound(int circle, const HypothesisBox& box, bool upper) const;
    // Fractional index of model fraction u on the h (rows) or v (cols) fan,
    // minimized (lo corner of the box) or maximized (hi corner).
    double index_h(double u, const HypothesisBox& b, bool hi_corner) const;
    double index_v(double u, const HypothesisBox& b, bool hi_corner) const;

    const AccumulatorSet& acc_;
    const RayGrid& grid_;
    FieldModel model_;
    int hw_;
    std::array<CircleRects, kNumCircles> circle_rects_;
};

// Free-function forms of the potentials.
std::array<double, 4> phi_grass(const AccumulatorSet& acc, const Hypothesis& y);
double phi_line(const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model, int line_id,
                const Hypothesis& y);
double phi_circle(const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model, int circle_id,
                  const Hypothesis& y);
double score(const Weights& w, const FeatureVector& phi);
/// Throws EmptyBox if the box holds no valid hypothesis.
double bound_box(const Weights& w, const AccumulatorSet& acc, const RayGrid& grid, const FieldModel& model,
                 HypothesisBox box);

nlohmann::json to_json(const FeatureVector& phi);
nlohmann::json to_json(const WeightVector& w);
WeightVector weights_from_json(const nlohmann::json& j);

} // namespace fieldloc
