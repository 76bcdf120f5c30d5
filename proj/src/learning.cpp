#include "fieldloc/learning.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "fieldloc/errors.hpp"

namespace fieldloc {

TrainingExample make_example(std::string id, RayGrid grid, AccumulatorSet acc, const Hypothesis& y_gt)
{
    const int nh = grid.n_h(), nv = grid.n_v();
    if (!y_gt.valid(nh, nv)) throw InputError("ground-truth hypothesis outside the grid for " + id);
    if (acc.n_h() != nh || acc.n_v() != nv) throw InputError("accumulators do not match the grid for " + id);
    std::vector<std::int64_t> field(static_cast<std::size_t>(nh) * nv, 0), rest(field.size(), 0);
    for (int i = 0; i < nh; ++i)
        for (int j = 0; j < nv; ++j) {
            const bool in = i >= y_gt.y[0] && i < y_gt.y[1] && j >= y_gt.y[2] && j < y_gt.y[3];
            (in ? field : rest)[static_cast<std::size_t>(i) * nv + j] = 1;
        }
    TrainingExample ex;
    ex.id = std::move(id);
    ex.grid = std::move(grid);
    ex.acc = std::move(acc);
    ex.y_gt = y_gt;
    ex.field_cells = IntegralTable::from_cells(nh, nv, field);
    ex.nonfield_cells = IntegralTable::from_cells(nh, nv, rest);
    return ex;
}

namespace {

// Disagreeing cells: gt field cells left out plus non-field cells taken in.
double loss_from_counts(const TrainingExample& ex, std::int64_t field_in, std::int64_t nonfield_in)
{
    const std::int64_t missed = ex.field_cells.total() - field_in;
    return static_cast<double>(missed + nonfield_in) / static_cast<double>(ex.cell_count());
}

} // namespace

double loss(const TrainingExample& ex, const Hypothesis& y)
{
    const auto& v = y.y;
    return loss_from_counts(ex, ex.field_cells.sum_clamped(v[0], v[1], v[2], v[3]),
                            ex.nonfield_cells.sum_clamped(v[0], v[1], v[2], v[3]));
}

double loss_bound(const TrainingExample& ex, const HypothesisBox& b)
{
    // Fewest gt cells from the smallest field of the box, most non-field cells
    // from the largest.
    const std::int64_t field_min = ex.field_cells.sum_clamped(b.hi[0], b.lo[1], b.hi[2], b.lo[3]);
    const std::int64_t nonfield_max = ex.nonfield_cells.sum_clamped(b.lo[0], b.hi[1], b.lo[2], b.hi[3]);
    return loss_from_counts(ex, field_min, nonfield_max);
}

SearchResult loss_augmented_infer(const Weights& w, const TrainingExample& ex, const FieldModel& model,
                                  int band_half_width, const SearchConfig& cfg)
{
    const Potentials pot(ex.acc, ex.grid, model, band_half_width);
    return search(LossAugmentedObjective(pot, w, ex), cfg);
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
    TrainConfig c;
    try {
        if (j.contains("C")) c.C = j.at("C").get<double>();
        if (j.contains("eps")) c.eps = j.at("eps").get<double>();
        if (j.contains("max_rounds")) c.max_rounds = j.at("max_rounds").get<int>();
        if (j.contains("tying")) c.tying = tying_from_string(j.at("tying").get<std::string>());
        if (j.contains("band_half_width")) c.band_half_width = j.at("band_half_width").get<int>();
        if (j.contains("max_iterations")) c.search.max_iterations = j.at("max_iterations").get<long long>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad training config: ") + e.what());
    }
    if (!(c.C > 0.0) || !(c.eps > 0.0) || c.max_rounds <= 0) throw InputError("C, eps and max_rounds must be positive");
    if (c.band_half_width < 0) throw InputError("band_half_width must be non-negative");
    return c;
}

namespace {

struct Constraint
{
    std::size_t example;
    Hypothesis y;
    double delta;
    std::vector<double> dpsi; // psi(y_gt) - psi(y)
    double norm2;
};

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Dual coordinate ascent on the restricted n-slack QP
//   min 1/2 |w|^2 + (C/N) sum_n xi_n  s.t.  w . dpsi_k >= delta_k - xi_{n(k)}, xi >= 0.
// alpha and w are warm-started; returns the primal objective at the end.
class RestrictedQP
{
public:
    RestrictedQP(std::size_t n_examples, int n_params, double c)
        : cap_(c / static_cast<double>(n_examples)), used_(n_examples, 0.0), w_(static_cast<std::size_t>(n_params), 0.0),
          by_example_(n_examples)
    {
    }

    void add(Constraint k)
    {
        by_example_[k.example].push_back(cons_.size());
        cons_.push_back(std::move(k));
        alpha_.push_back(0.0);
    }
    const std::vector<Constraint>& constraints() const { return cons_; }
    bool has(std::size_t n, const Hypothesis& y) const
    {
        return std::ranges::any_of(by_example_[n], [&](std::size_t k) { return cons_[k].y == y; });
    }
    const std::vector<double>& w() const { return w_; }

    double slack(std::size_t n) const
    {
        double xi = 0.0;
        for (std::size_t k : by_example_[n]) xi = std::max(xi, cons_[k].delta - dot(w_, cons_[k].dpsi));
        return xi;
    }

    double primal() const
    {
        double s = 0.0;
        for (std::size_t n = 0; n < used_.size(); ++n) s += slack(n);
        return 0.5 * dot(w_, w_) + cap_ * s;
    }

    double dual() const
    {
        double s = 0.0;
        for (std::size_t k = 0; k < cons_.size(); ++k) s += alpha_[k] * cons_[k].delta;
        return s - 0.5 * dot(w_, w_);
    }

    double solve(double tol, long long max_sweeps)
    {
        double p = primal(), d = dual();
        for (long long sweep = 0; sweep < max_sweeps; ++sweep) {
            if (p - d <= tol * std::max(1.0, std::abs(p))) return p;
            for (std::size_t k = 0; k < cons_.size(); ++k) {
                const Constraint& c = cons_[k];
                const double room = cap_ - (used_[c.example] - alpha_[k]);
                const double grad = c.delta - dot(w_, c.dpsi);
                double next;
                if (c.norm2 > 0.0)
                    next = std::clamp(alpha_[k] + grad / c.norm2, 0.0, std::max(room, 0.0));
                else
                    next = grad > 0.0 ? std::max(room, 0.0) : 0.0;
                const double step = next - alpha_[k];
                if (step != 0.0) {
                    move(k, step);
                } else if (grad > 0.0 && room <= alpha_[k]) {
                    // Cap reached: shift mass from the weakest active constraint of the same example.
                    pair_step(k, grad);
                }
            }
            p = primal();
            d = dual();
        }
        if (p - d > 100.0 * tol * std::max(1.0, std::abs(p)))
            throw TrainingError("restricted QP did not converge: primal " + std::to_string(p) + ", dual " +
                                std::to_string(d) + ", " + std::to_string(cons_.size()) + " constraints");
        return p;
    }

private:
    void move(std::size_t k, double step)
    {
        const Constraint& c = cons_[k];
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] += step * c.dpsi[i];
        alpha_[k] += step;
        used_[c.example] += step;
    }

    void pair_step(std::size_t k, double grad_k)
    {
        const Constraint& c = cons_[k];
        std::size_t best = cons_.size();
        double best_grad = grad_k;
        for (std::size_t j : by_example_[c.example]) {
            if (j == k || alpha_[j] <= 0.0) continue;
            const double g = cons_[j].delta - dot(w_, cons_[j].dpsi);
            if (g < best_grad) {
                best_grad = g;
                best = j;
            }
        }
        if (best == cons_.size()) return;
        const Constraint& o = cons_[best];
        double d2 = 0.0;
        for (std::size_t i = 0; i < w_.size(); ++i) d2 += (c.dpsi[i] - o.dpsi[i]) * (c.dpsi[i] - o.dpsi[i]);
        const double t = d2 > 0.0 ? std::min(alpha_[best], (grad_k - best_grad) / d2) : alpha_[best];
        if (!(t > 0.0)) return;
        move(best, -t);
        move(k, t);
    }

    double cap_;
    std::vector<double> used_;
    std::vector<double> w_;
    std::vector<Constraint> cons_;
    std::vector<double> alpha_;
    std::vector<std::vector<std::size_t>> by_example_;
};

} // namespace

TrainResult train(std::span<const TrainingExample> examples, const TrainConfig& cfg, const FieldModel& model)
{
    if (examples.empty()) throw TrainingError("no training examples");
    if (!(cfg.C > 0.0)) throw TrainingError("C must be positive");
    const int n_params = num_params(cfg.tying);
    const std::size_t n = examples.size();

    if (!(cfg.feature_scale > 0.0)) throw TrainingError("feature_scale must be positive");
    auto features = [&](const Potentials& pot, const Hypothesis& y) {
        auto psi = group_features(cfg.tying, pot.phi(y));
        for (double& v : psi) v *= cfg.feature_scale;
        return psi;
    };
    std::vector<std::vector<double>> psi_gt(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Potentials pot(examples[i].acc, examples[i].grid, model, cfg.band_half_width);
        psi_gt[i] = features(pot, examples[i].y_gt);
    }

    RestrictedQP qp(n, n_params, cfg.C);
    TrainResult out;
    for (int round = 0; round < cfg.max_rounds; ++round) {
        std::vector<double> scaled = qp.w();
        for (double& v : scaled) v *= cfg.feature_scale;
        const Weights w = WeightVector(cfg.tying, scaled).expanded();

        // Loss-augmented inference for every example; independent, so run in parallel.
        std::vector<SearchResult> found(n);
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t i = next++; i < n; i = next++)
                found[i] = loss_augmented_infer(w, examples[i], model, cfg.band_half_width, cfg.search);
        };
        {
            const unsigned threads =
                std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), static_cast<unsigned>(n)));
            std::vector<std::jthread> pool;
            for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
            worker();
        }

        TrainRound rec;
        double hinge = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const TrainingExample& ex = examples[i];
            const Potentials pot(ex.acc, ex.grid, model, cfg.band_half_width);
            const std::vector<double> psi = features(pot, found[i].y);
            Constraint c{i, found[i].y, loss(ex, found[i].y), {}, 0.0};
            c.dpsi.resize(psi.size());
            for (std::size_t k = 0; k < psi.size(); ++k) c.dpsi[k] = psi_gt[i][k] - psi[k];
            c.norm2 = dot(c.dpsi, c.dpsi);
            const double margin_loss = c.delta - dot(qp.w(), c.dpsi);
            hinge += std::max(0.0, margin_loss);
            const double violation = margin_loss - qp.slack(i);
            rec.max_violation = std::max(rec.max_violation, violation);
            if (violation <= cfg.eps) continue;
            if (qp.has(i, c.y)) continue;
            qp.add(std::move(c));
            ++rec.added;
        }
        rec.primal = 0.5 * dot(qp.w(), qp.w()) + cfg.C / static_cast<double>(n) * hinge;
        rec.total = static_cast<int>(qp.constraints().size());
        if (rec.added == 0) {
            rec.objective = out.rounds.empty() ? qp.primal() : out.rounds.back().objective;
            out.rounds.push_back(rec);
            out.converged = true;
            break;
        }
        rec.objective = qp.solve(cfg.qp_tolerance, cfg.qp_max_sweeps);
        out.rounds.push_back(rec);
    }
    out.w = WeightVector(cfg.tying, qp.w());
    return out;
}

nlohmann::json model_to_json(const TrainResult& r, const TrainConfig& cfg)
{
    nlohmann::json j = to_json(r.w);
    j["config"] = {{"C", cfg.C}, {"eps", cfg.eps}};
    j["provenance"] = {{"rounds", r.rounds.size()},
                       {"final_objective", r.rounds.empty() ? 0.0 : r.rounds.back().objective},
                       {"converged", r.converged}};
    return j;
}

void save_model(const std::string& path, const TrainResult& r, const TrainConfig& cfg)
{
    std::ofstream out(path);
    if (!out) throw InputError("cannot write model file " + path);
    out << model_to_json(r, cfg).dump(2) << '\n';
}

WeightVector load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("bad model file " + path + ": " + e.what());
    }
    return weights_from_json(j);
}

} // namespace fieldloc
