#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fieldloc/features.hpp"
#include "fieldloc/inference.hpp"
#include "fieldloc/learning.hpp"
#include "fieldloc/vp_estimation.hpp"

namespace fieldloc {

struct FrameRecord
{
    std::string id;
    ImageSize image_size;
    std::string grass_mask; // path, relative to the manifest directory
    std::string segments;   // path, relative to the manifest directory
    std::optional<Homography> gt_homography; // image -> model
    std::optional<Hypothesis> gt_hypothesis;
    std::optional<int> gt_grid_n; // grid size gt_hypothesis refers to
};

/// A frame with its inputs loaded.
struct Frame
{
    FrameRecord record;
    BitMask grass;
    std::vector<LineSegment> segments;
    std::vector<VpLabel> gt_labels; // from the generator; empty for real data
};

nlohmann::json to_json(const FrameRecord& r);
FrameRecord frame_record_from_json(const nlohmann::json& j);

/// Reads {"frames": [...]} and loads every referenced file.
std::vector<Frame> load_manifest(const std::string& path);
/// Loads a single frame record file (same schema as a manifest entry).
Frame load_frame(const std::string& path);
/// Writes masks, segment files, one record file per frame (`<id>.json`) and
/// the manifest into `dir`.
void save_frames(const std::string& dir, const std::vector<Frame>& frames, const std::string& manifest_name = "manifest.json");

struct SynthConfig
{
    std::uint64_t seed = 1;
    ImageSize image_size{640, 360};

    // Camera: behind the near touchline, looking at a point on the field.
    double distance_min = 5.0, distance_max = 30.0; // metres behind the touchline
    double height_min = 25.0, height_max = 50.0;
    double cam_x_min = 35.0, cam_x_max = 70.0;
    double target_x_min = 15.0, target_x_max = 90.0;
    double target_y_min = 15.0, target_y_max = 50.0; // model y of the look-at point
    double hfov_min_deg = 45.0, hfov_max_deg = 75.0;
    double max_yaw_deg = 30.0;
    int min_lines_per_direction = 3; // model lines with >= 100 px in view, per vanishing point
    bool center_view = false;       // aim at the center circle with a narrow view
    bool require_full_field = false; // all four field corners inside the image
    double full_field_border_px = 24.0;

    double noise_sigma = 0.0;     // endpoint jitter, px
    double outlier_fraction = 0.0; // fraction of emitted segments that are clutter
    double dropout = 0.0;          // probability of dropping a segment piece
    double split_probability = 0.8; // chance of fragmenting a line into pieces
    double apron_m = 2.0;          // grass beyond the field boundary
    int blobs = 0;                 // non-grass blobs (players) drawn on the field
    int snap_grid = 0;             // if > 0, snap the field to rays of this grid
    double margin = 0.25;
    double min_grass_fraction = 0.4;
    int max_draws = 1000;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);

/// One labeled synthetic frame; throws SynthFailed if no camera satisfies
/// the constraints after max_draws attempts.
Frame synth_frame(const SynthConfig& cfg, const FieldModel& model = standard_field(), const std::string& id = "synth");

/// Frames synth_frame(cfg with seed = cfg.seed + k) for k = 0..count-1.
std::vector<Frame> synth_frames(const SynthConfig& cfg, int count, const FieldModel& model = standard_field(),
                                const std::string& prefix = "f");

/// Grid rays nearest to the true field boundary of a homography (image -> model).
Hypothesis snap_hypothesis(const Homography& image_to_model, const RayGrid& grid, const FieldModel& model);

using Polygon = std::vector<Point2>;

double polygon_area(const Polygon& p);
/// Sutherland-Hodgman clip of `subject` against a convex polygon.
Polygon clip_polygon(const Polygon& subject, const Polygon& convex_clip);
/// Image polygon of the field rectangle under an image -> model homography,
/// clipped to the image frame [0, W] x [0, H].
Polygon projected_field(const Homography& image_to_model, const FieldModel& model, ImageSize size);
double polygon_iou(const Polygon& a, const Polygon& b);
/// Image-space IOU of the two projected field rectangles; throws UndefinedIOU.
double iou(const Homography& h_pred, const Homography& h_gt, const FieldModel& model, ImageSize size);

struct PipelineConfig
{
    VPConfig vp;
    GridConfig grid;
    SearchConfig search;
    int band_half_width = 1;
};

/// Everything computed from one frame before inference.
struct PreparedFrame
{
    VPResult vps;
    RayGrid grid;
    AccumulatorSet acc;
    std::vector<LineSegment> segments; // segments that passed the filters
    std::vector<VpLabel> labels;
};

/// Vanishing points, ray grid and accumulators; throws VPEstimationFailed
/// or VPInsideImage.
PreparedFrame prepare_frame(const Frame& f, const PipelineConfig& cfg, const FieldModel& model = standard_field());

/// Prepared frame with its ground truth snapped to the estimated grid.
/// Throws InputError if the frame has no ground-truth homography.
TrainingExample training_example(const Frame& f, const PipelineConfig& cfg, const FieldModel& model = standard_field());

enum class NNMode { GrassIou, EdgeDistance };

/// Nearest-neighbour baselines over a training set with ground truth.
class NearestNeighbour
{
public:
    explicit NearestNeighbour(const std::vector<Frame>& train);
    /// Index of the retrieved training frame.
    std::size_t retrieve(const Frame& test, NNMode mode) const;
    Homography predict(const Frame& test, NNMode mode) const;

private:
    const std::vector<Frame>& train_;
    std::vector<std::vector<float>> distance_maps_; // per training frame, Euclidean
};

/// Pixels of all segments (used for the edge baseline).
BitMask edge_mask(const Frame& f);
Homography nn_baseline(const Frame& test, const std::vector<Frame>& train, NNMode mode);

struct EvalRow
{
    std::string id;
    bool ok = false;
    std::string error; // set when the frame was excluded
    double iou = 0.0;
    long long iterations = 0;
    double seconds = 0.0;
    bool certified = false;
    bool fallback_used = false;
    Hypothesis y;
};

struct EvalReport
{
    std::vector<EvalRow> rows;
    int excluded = 0;
    double mean_iou = 0.0, median_iou = 0.0;
    double mean_iterations = 0.0, median_iterations = 0.0;
    double median_seconds = 0.0;
};

double median(std::vector<double> v);

EvalReport evaluate(const std::vector<Frame>& frames, const Weights& w, const PipelineConfig& cfg = {},
                    const FieldModel& model = standard_field());
nlohmann::json to_json(const EvalReport& r);

struct CSelection
{
    double C = 0.0;
    TrainResult result;                           // model trained with the chosen C
    std::vector<std::pair<double, double>> scores; // (C, validation mean IOU)
};

/// Trains once per candidate C and keeps the one with the best validation
/// mean IOU (the smallest C on ties).
CSelection select_c(std::span<const TrainingExample> train_set, const std::vector<Frame>& validation,
                    std::span<const double> candidates, TrainConfig cfg, const PipelineConfig& pipeline = {},
                    const FieldModel& model = standard_field());

/// Mask, segments (colored by label) and the model drawn with an image ->
/// model homography.
RgbImage render_overlay(const Frame& f, const std::vector<VpLabel>& labels, const Homography& image_to_model,
                        const FieldModel& model = standard_field());

} // namespace fieldloc
