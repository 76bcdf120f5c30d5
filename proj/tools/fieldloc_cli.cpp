#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"

#include "fieldloc/dataset_eval.hpp"
#include "fieldloc/errors.hpp"
#include "fieldloc/learning.hpp"

using namespace fieldloc;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitVp = 3;
constexpr int kExitUncertified = 4;

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("bad JSON in " + path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << j.dump(2) << '\n';
}

PipelineConfig pipeline(int grid)
{
    PipelineConfig pc;
    pc.grid.n_h = pc.grid.n_v = grid;
    return pc;
}

int localize(const std::string& frame_path, const std::string& weights_path, int grid, const std::string& overlay)
{
    const Frame f = load_frame(frame_path);
    const Weights w = load_model(weights_path).expanded();
    const PipelineConfig pc = pipeline(grid);
    const PreparedFrame p = prepare_frame(f, pc);
    const InferenceResult r = infer(w, p.acc, p.grid, standard_field(), pc.search);
    nlohmann::json j = to_json(r);
    j["id"] = f.record.id;
    j["fallback_used"] = p.vps.fallback_used;
    if (f.record.gt_homography) j["iou"] = iou(r.homography, *f.record.gt_homography, standard_field(), f.grass.size);
    std::cout << j.dump(2) << '\n';
    if (!overlay.empty()) {
        std::vector<VpLabel> labels(f.segments.size(), VpLabel::None);
        for (std::size_t i = 0; i < f.segments.size(); ++i) labels[i] = p.vps.labels[i];
        write_png(overlay, render_overlay(f, labels, r.homography));
    }
    return r.certified ? 0 : kExitUncertified;
}

int train_cmd(const std::string& manifest, std::vector<double> cs, const std::string& validation,
              const std::string& out, const std::string& config, int grid)
{
    TrainConfig tc = config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(config));
    const PipelineConfig pc = pipeline(grid);
    std::vector<TrainingExample> examples;
    for (const Frame& f : load_manifest(manifest)) {
        try {
            examples.push_back(training_example(f, pc));
        } catch (const VPEstimationFailed& e) {
            std::cerr << "skipping " << f.record.id << ": " << e.what() << '\n';
        } catch (const VPInsideImage& e) {
            std::cerr << "skipping " << f.record.id << ": " << e.what() << '\n';
        }
    }
    if (examples.empty()) throw InputError("no usable training frames");
    for (double c : cs)
        if (!(c > 0.0)) throw InputError("C must be positive");

    TrainResult result;
    if (cs.size() > 1) {
        if (validation.empty()) throw InputError("several values of C need --validation");
        const CSelection sel = select_c(examples, load_manifest(validation), cs, tc, pc);
        for (auto [c, score] : sel.scores) std::cerr << "C=" << c << " validation mean IOU " << score << '\n';
        tc.C = sel.C;
        result = sel.result;
    } else {
        if (!cs.empty()) tc.C = cs.front();
        result = train(examples, tc);
    }
    for (std::size_t k = 0; k < result.rounds.size(); ++k) {
        const TrainRound& r = result.rounds[k];
        std::cerr << "round " << k << ": objective " << r.objective << ", added " << r.added << ", total "
                  << r.total << '\n';
    }
    save_model(out, result, tc);
    std::cerr << "C=" << tc.C << (result.converged ? ", converged" : ", not converged") << '\n';
    return 0;
}

int eval_cmd(const std::string& manifest, const std::string& weights, const std::string& report, int grid,
             const std::string& nn_train)
{
    const std::vector<Frame> frames = load_manifest(manifest);
    const EvalReport rep = evaluate(frames, load_model(weights).expanded(), pipeline(grid));
    nlohmann::json j = to_json(rep);
    if (!nn_train.empty()) {
        const std::vector<Frame> train = load_manifest(nn_train);
        const NearestNeighbour nn(train);
        for (auto [mode, name] : {std::pair{NNMode::GrassIou, "nn_grass"}, std::pair{NNMode::EdgeDistance, "nn_edge"}}) {
            std::vector<double> ious;
            for (std::size_t k = 0; k < frames.size(); ++k) {
                if (!rep.rows[k].ok || !frames[k].record.gt_homography) continue;
                ious.push_back(iou(nn.predict(frames[k], mode), *frames[k].record.gt_homography, standard_field(),
                                   frames[k].grass.size));
            }
            double s = 0.0;
            for (double v : ious) s += v;
            j[name] = {{"mean_iou", ious.empty() ? 0.0 : s / static_cast<double>(ious.size())},
                       {"median_iou", median(ious)}};
        }
    }
    if (!report.empty()) write_json_file(report, j);
    std::printf("frames %zu, excluded %d, mean IOU %.4f, median IOU %.4f, median iterations %.0f\n",
                frames.size(), rep.excluded, rep.mean_iou, rep.median_iou, rep.median_iterations);
    return 0;
}

int synth_cmd(const std::string& config, int count, const std::string& out)
{
    const SynthConfig cfg = config.empty() ? SynthConfig{} : synth_config_from_json(read_json_file(config));
    if (count <= 0) throw InputError("count must be positive");
    save_frames(out, synth_frames(cfg, count));
    std::printf("wrote %d frames to %s\n", count, out.c_str());
    return 0;
}

int oracle_check(int trials, int grid, std::uint64_t seed)
{
    if (trials <= 0 || grid < 2) throw InputError("need trials > 0 and grid >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    int agree = 0;
    for (int t = 0; t < trials; ++t) {
        // Random grid around a perspective view and random per-cell counts.
        const VanishingPoint vh = VanishingPoint::finite({2000.0 * (unit(rng) < 0 ? -1 : 1) + 500.0 * unit(rng), 20.0 * unit(rng)});
        const VanishingPoint vv = VanishingPoint::finite({320.0 + 200.0 * unit(rng), -1200.0 + 400.0 * unit(rng)});
        GridConfig gc;
        gc.n_h = gc.n_v = grid;
        const RayGrid g = build_ray_grid(vh, vv, {640, 360}, gc);
        AccumulatorSet acc;
        std::vector<std::int64_t> cells(static_cast<std::size_t>(grid) * grid);
        for (auto& table : acc.tables) {
            for (auto& c : cells) c = std::uniform_int_distribution<int>(0, 20)(rng);
            table = IntegralTable::from_cells(grid, grid, cells);
        }
        Weights w{};
        for (double& x : w) x = unit(rng);
        const InferenceResult a = infer(w, acc, g, standard_field());
        const InferenceResult b = infer_exhaustive(w, acc, g, standard_field());
        const bool same = a.y == b.y && a.score == b.score;
        agree += same;
        if (!same) std::fprintf(stderr, "trial %d: search %.17g vs exhaustive %.17g\n", t, a.score, b.score);
    }
    std::printf("%d/%d trials agree\n", agree, trials);
    return agree == trials ? 0 : kExitUncertified;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Soccer field localization by branch and bound over vanishing-point rays"};
    app.require_subcommand(1);

    std::string frame, weights, overlay, manifest, out, report, config, validation, nn_train;
    std::vector<double> cs;
    int grid = 256, count = 10, trials = 100, oracle_grid = 8;
    std::uint64_t seed = 1;

    auto* loc = app.add_subcommand("localize", "Localize the field in one frame");
    loc->add_option("--frame", frame, "Frame record JSON")->required();
    loc->add_option("--weights", weights, "Model or weight file")->required();
    loc->add_option("--grid", grid, "Rays per vanishing point");
    loc->add_option("--overlay", overlay, "Write an overlay PNG");

    auto* tr = app.add_subcommand("train", "Train weights with the structured SVM");
    tr->add_option("--manifest", manifest, "Training manifest")->required();
    tr->add_option("--C", cs, "Regularization; several values select on --validation");
    tr->add_option("--validation", validation, "Validation manifest for selecting C");
    tr->add_option("--config", config, "Training config JSON");
    tr->add_option("--out", out, "Output model file")->required();
    tr->add_option("--grid", grid, "Rays per vanishing point");

    auto* ev = app.add_subcommand("eval", "Evaluate weights on a manifest");
    ev->add_option("--manifest", manifest, "Test manifest")->required();
    ev->add_option("--weights", weights, "Model or weight file")->required();
    ev->add_option("--report", report, "Write the JSON report here");
    ev->add_option("--grid", grid, "Rays per vanishing point");
    ev->add_option("--nn-train", nn_train, "Training manifest for the nearest-neighbour baselines");

    auto* sy = app.add_subcommand("synth", "Generate synthetic frames");
    sy->add_option("--config", config, "Synthesis config JSON");
    sy->add_option("--count", count, "Number of frames");
    sy->add_option("--out", out, "Output directory")->required();

    auto* oc = app.add_subcommand("oracle-check", "Compare branch and bound against exhaustive search");
    oc->add_option("--trials", trials, "Number of random instances");
    oc->add_option("--grid", oracle_grid, "Rays per vanishing point");
    oc->add_option("--seed", seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*loc) return localize(frame, weights, grid, overlay);
        if (*tr) return train_cmd(manifest, cs, validation, out, config, grid);
        if (*ev) return eval_cmd(manifest, weights, report, grid, nn_train);
        if (*sy) return synth_cmd(config, count, out);
        if (*oc) return oracle_check(trials, oracle_grid, seed);
    } catch (const VPEstimationFailed& e) {
        std::cerr << e.what() << '\n';
        return kExitVp;
    } catch (const VPInsideImage& e) {
        std::cerr << e.what() << '\n';
        return kExitVp;
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    return 0;
}
