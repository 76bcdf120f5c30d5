#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fieldloc/inference.hpp"

namespace fieldloc {

/// One training pair: the precomputed frame (grid and accumulators) and the
/// ground-truth hypothesis on that grid.
struct TrainingExample
{
    std::string id;
    RayGrid grid;
    AccumulatorSet acc;
    Hypothesis y_gt;
    // Integral tables over the gt cell mask: cells inside F_{y_gt} and the rest.
    IntegralTable field_cells;
    IntegralTable nonfield_cells;

    int n_h() const { return grid.n_h(); }
    int n_v() const { return grid.n_v(); }
    std::int64_t cell_count() const { return static_cast<std::int64_t>(n_h()) * n_v(); }
};

/// Builds the gt cell mask tables; throws InputError if y_gt is invalid.
TrainingExample make_example(std::string id, RayGrid grid, AccumulatorSet acc, const Hypothesis& y_gt);

/// Fraction of grid cells on which F_y and F_{y_gt} disagree.
double loss(const TrainingExample& ex, const Hypothesis& y);
/// Upper bound of the loss over a normalized box, exact on singletons.
double loss_bound(const TrainingExample& ex, const HypothesisBox& box);

/// Delta(y_gt, y) + w . phi(x, y).
class LossAugmentedObjective : public Objective
{
public:
    LossAugmentedObjective(const Potentials& pot, const Weights& w, const TrainingExample& ex)
        : pot_(pot), w_(w), ex_(ex)
    {
    }
    int n_h() const override { return pot_.n_h(); }
    int n_v() const override { return pot_.n_v(); }
    double value(const Hypothesis& y) const override { return loss(ex_, y) + pot_.score(w_, y); }
    double bound(const HypothesisBox& box) const override { return loss_bound(ex_, box) + pot_.bound(w_, box); }

private:
    const Potentials& pot_;
    Weights w_;
    const TrainingExample& ex_;
};

SearchResult loss_augmented_infer(const Weights& w, const TrainingExample& ex, const FieldModel& model = standard_field(),
                                  int band_half_width = 1, const SearchConfig& cfg = {});

struct TrainConfig
{
    double C = 1.0;
    double eps = 1e-3;
    int max_rounds = 200;
    Tying tying = Tying::GVerLHorLC;
    int band_half_width = 1;
    SearchConfig search;
    double feature_scale = 1.0; // multiplies every grouped feature inside training
    double qp_tolerance = 1e-6; // relative duality gap
    long long qp_max_sweeps = 200'000;
};

TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainRound
{
    double objective = 0.0;  // restricted QP optimum after the round
    double primal = 0.0;     // full objective at the weights used in the round
    int added = 0;           // constraints added
    int total = 0;           // working-set size
    double max_violation = 0.0;
};

struct TrainResult
{
    WeightVector w;
    std::vector<TrainRound> rounds;
    bool converged = false;
};

/// n-slack margin-rescaling cutting plane. Throws TrainingError if the
/// restricted QP does not converge. The returned weights apply to features
/// multiplied by cfg.feature_scale.
TrainResult train(std::span<const TrainingExample> examples, const TrainConfig& cfg,
                  const FieldModel& model = standard_field());

nlohmann::json model_to_json(const TrainResult& r, const TrainConfig& cfg);
void save_model(const std::string& path, const TrainResult& r, const TrainConfig& cfg);
/// Reads the weights of a model file (or a bare {weights, tying} object).
WeightVector load_model(const std::string& path);

} // namespace fieldloc
