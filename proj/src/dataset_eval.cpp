#include "fieldloc/dataset_eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <thread>

#include "fieldloc/errors.hpp"

namespace fieldloc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Records and manifests

nlohmann::json to_json(const FrameRecord& r)
{
    nlohmann::json j{{"id", r.id},
                     {"image_size", {r.image_size.width, r.image_size.height}},
                     {"grass_mask", r.grass_mask},
                     {"segments", r.segments}};
    if (r.gt_homography) j["gt_homography"] = r.gt_homography->serialized();
    if (r.gt_hypothesis) j["gt_hypothesis"] = r.gt_hypothesis->y;
    if (r.gt_grid_n) j["gt_grid_n"] = *r.gt_grid_n;
    return j;
}

FrameRecord frame_record_from_json(const nlohmann::json& j)
{
    try {
        FrameRecord r;
        r.id = j.at("id").get<std::string>();
        const auto sz = j.at("image_size").get<std::vector<int>>();
        if (sz.size() != 2 || sz[0] <= 0 || sz[1] <= 0) throw InputError("image_size must be [w, h]");
        r.image_size = {sz[0], sz[1]};
        r.grass_mask = j.at("grass_mask").get<std::string>();
        r.segments = j.at("segments").get<std::string>();
        if (j.contains("gt_homography")) {
            const auto h = j.at("gt_homography").get<std::vector<double>>();
            if (h.size() != 9) throw InputError("gt_homography needs 9 entries");
            r.gt_homography = Homography::from_row_major(h);
        }
        if (j.contains("gt_hypothesis")) {
            const auto y = j.at("gt_hypothesis").get<std::vector<int>>();
            if (y.size() != 4) throw InputError("gt_hypothesis needs 4 entries");
            r.gt_hypothesis = Hypothesis{{y[0], y[1], y[2], y[3]}};
        }
        if (j.contains("gt_grid_n")) r.gt_grid_n = j.at("gt_grid_n").get<int>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad frame record: ") + e.what());
    }
}

namespace {

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("bad JSON in " + path + ": " + e.what());
    }
}

Frame load_record(const FrameRecord& rec, const fs::path& base)
{
    Frame f;
    f.record = rec;
    f.grass = read_mask((base / rec.grass_mask).string());
    if (!(f.grass.size == rec.image_size)) throw InputError("mask size does not match image_size for " + rec.id);
    const nlohmann::json segs = read_json((base / rec.segments).string());
    f.segments = segments_from_json(segs);
    for (const auto& s : segs)
        if (s.contains("vp")) f.gt_labels.push_back(vp_label_from_string(s.at("vp").get<std::string>()));
    if (f.gt_labels.size() != f.segments.size()) f.gt_labels.clear();
    return f;
}

} // namespace

std::vector<Frame> load_manifest(const std::string& path)
{
    const nlohmann::json j = read_json(path);
    if (!j.contains("frames") || !j.at("frames").is_array()) throw InputError("manifest needs a frames array");
    const fs::path base = fs::path(path).parent_path();
    std::vector<Frame> frames;
    for (const auto& item : j.at("frames")) frames.push_back(load_record(frame_record_from_json(item), base));
    return frames;
}

Frame load_frame(const std::string& path)
{
    return load_record(frame_record_from_json(read_json(path)), fs::path(path).parent_path());
}

void save_frames(const std::string& dir, const std::vector<Frame>& frames, const std::string& manifest_name)
{
    fs::create_directories(dir);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : frames) {
        FrameRecord rec = f.record;
        rec.grass_mask = f.record.id + "_mask.png";
        rec.segments = f.record.id + "_segments.json";
        write_mask((fs::path(dir) / rec.grass_mask).string(), f.grass);
        std::ofstream seg((fs::path(dir) / rec.segments).string());
        if (!seg) throw InputError("cannot write into " + dir);
        seg << segments_to_json(f.segments, f.gt_labels).dump(1) << '\n';
        std::ofstream single((fs::path(dir) / (f.record.id + ".json")).string());
        single << to_json(rec).dump(1) << '\n';
        list.push_back(to_json(rec));
    }
    std::ofstream out((fs::path(dir) / manifest_name).string());
    if (!out) throw InputError("cannot write manifest into " + dir);
    out << nlohmann::json{{"frames", list}}.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic frames

SynthConfig synth_config_from_json(const nlohmann::json& j)
{
    SynthConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        get("seed", c.seed);
        if (j.contains("image_size")) {
            const auto s = j.at("image_size").get<std::vector<int>>();
            if (s.size() != 2) throw InputError("image_size must be [w, h]");
            c.image_size = {s[0], s[1]};
        }
        get("distance_min", c.distance_min);
        get("distance_max", c.distance_max);
        get("height_min", c.height_min);
        get("height_max", c.height_max);
        get("cam_x_min", c.cam_x_min);
        get("cam_x_max", c.cam_x_max);
        get("target_x_min", c.target_x_min);
        get("target_x_max", c.target_x_max);
        get("target_y_min", c.target_y_min);
        get("target_y_max", c.target_y_max);
        get("hfov_min_deg", c.hfov_min_deg);
        get("hfov_max_deg", c.hfov_max_deg);
        get("max_yaw_deg", c.max_yaw_deg);
        get("min_lines_per_direction", c.min_lines_per_direction);
        get("center_view", c.center_view);
        get("require_full_field", c.require_full_field);
        get("full_field_border_px", c.full_field_border_px);
        get("noise_sigma", c.noise_sigma);
        get("outlier_fraction", c.outlier_fraction);
        get("dropout", c.dropout);
        get("split_probability", c.split_probability);
        get("apron_m", c.apron_m);
        get("blobs", c.blobs);
        get("snap_grid", c.snap_grid);
        get("margin", c.margin);
        get("min_grass_fraction", c.min_grass_fraction);
        get("max_draws", c.max_draws);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad synth config: ") + e.what());
    }
    for (double f : {c.outlier_fraction, c.dropout, c.split_probability, c.min_grass_fraction})
        if (f < 0.0 || f > 1.0) throw InputError("synth fractions must lie in [0, 1]");
    if (c.outlier_fraction >= 1.0) throw InputError("outlier_fraction must be < 1");
    return c;
}

namespace {

struct Camera
{
    Mat3 model_to_image;
    Eigen::Matrix3d rotation; // rows: right, down, forward (world frame)
    Eigen::Matrix3d k;
};

// World frame: X = model x, Y = width - model y, Z up. The camera stands
// behind the model touchline y = width, so model y = 0 is the far side and
// model x grows to the right of the image.
Camera make_camera(double cam_x, double dist, double height, Point2 target_model, double hfov_deg, ImageSize size,
                   const FieldModel& model)
{
    const Eigen::Vector3d c(cam_x, -dist, height);
    const Eigen::Vector3d t(target_model.x, model.width - target_model.y, 0.0);
    const Eigen::Vector3d fwd = (t - c).normalized();
    const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
    const Eigen::Vector3d down = fwd.cross(right);
    Camera cam;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = fwd;
    const double f = (size.width / 2.0) / std::tan(hfov_deg * std::numbers::pi / 360.0);
    cam.k << f, 0, (size.width - 1) / 2.0, 0, f, (size.height - 1) / 2.0, 0, 0, 1;
    const Eigen::Vector3d tr = -cam.rotation * c;
    Mat3 world;
    world.col(0) = cam.rotation.col(0);
    world.col(1) = cam.rotation.col(1);
    world.col(2) = tr;
    Mat3 m2w;
    m2w << 1, 0, 0, 0, -1, model.width, 0, 0, 1;
    cam.model_to_image = cam.k * world * m2w;
    return cam;
}

// Liang-Barsky clip of segment a-b to the rectangle; false if nothing remains.
bool clip_to_rect(Point2& a, Point2& b, double x0, double y0, double x1, double y1)
{
    double t0 = 0.0, t1 = 1.0;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {a.x - x0, x1 - a.x, a.y - y0, y1 - a.y};
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double r = q[i] / p[i];
        if (p[i] < 0.0)
            t0 = std::max(t0, r);
        else
            t1 = std::min(t1, r);
        if (t0 > t1) return false;
    }
    const Point2 a0 = a;
    a = a0 + t0 * Point2{dx, dy};
    b = a0 + t1 * Point2{dx, dy};
    return true;
}

// Clips model segment a-b to the part imaged in front of the camera (w > eps).
bool clip_in_front(const Mat3& h, Point2& a, Point2& b)
{
    const double wa = h(2, 0) * a.x + h(2, 1) * a.y + h(2, 2);
    const double wb = h(2, 0) * b.x + h(2, 1) * b.y + h(2, 2);
    const double eps = 1e-6 * (std::abs(wa) + std::abs(wb));
    if (wa <= eps && wb <= eps) return false;
    if (wa > eps && wb > eps) return true;
    const double t = (eps - wa) / (wb - wa);
    const Point2 m = a + t * (b - a);
    if (wa <= eps)
        a = m;
    else
        b = m;
    return true;
}

Point2 project(const Mat3& h, Point2 p)
{
    const Vec3 v = h * Vec3{p.x, p.y, 1.0};
    return {v.x() / v.z(), v.y() / v.z()};
}

bool inside_expanded(const VanishingPoint& vp, ImageSize size, double margin)
{
    if (vp.is_infinite()) return false;
    const double m = margin * std::hypot(size.width, size.height);
    const Point2 p = vp.point();
    return p.x >= -m && p.y >= -m && p.x <= size.width - 1 + m && p.y <= size.height - 1 + m;
}

struct SegmentSink
{
    std::mt19937_64& rng;
    const SynthConfig& cfg;
    ImageSize size;
    std::vector<LineSegment> segments;
    std::vector<VpLabel> labels;
    int visible_h = 0, visible_v = 0; // model lines with at least 100 px in view

    Point2 jitter(Point2 p)
    {
        if (cfg.noise_sigma <= 0.0) return p;
        std::normal_distribution<double> n(0.0, cfg.noise_sigma);
        return {p.x + n(rng), p.y + n(rng)};
    }

    void emit(Point2 a, Point2 b, VpLabel label, bool allow_split)
    {
        if (!clip_to_rect(a, b, 0.0, 0.0, size.width - 1.0, size.height - 1.0)) return;
        const double len = norm(b - a);
        if (len < 1.0) return;
        if (len >= 100.0) {
            visible_h += label == VpLabel::H;
            visible_v += label == VpLabel::V;
        }
        std::uniform_real_distribution<double> u(0.0, 1.0);
        // Fragment the way a segment detector would: pieces of 80-250 px
        // separated by small gaps.
        std::vector<std::pair<double, double>> pieces;
        if (allow_split && u(rng) < cfg.split_probability) {
            double t = 0.0;
            while (t < 1.0) {
                const double t1 = std::min(1.0, t + (80.0 + 170.0 * u(rng)) / len);
                pieces.emplace_back(t, t1);
                t = t1 + (2.0 + 4.0 * u(rng)) / len;
            }
        } else {
            pieces.emplace_back(0.0, 1.0);
        }
        for (const auto& [t0, t1] : pieces) {
            if (u(rng) < cfg.dropout) continue;
            LineSegment s{jitter(a + t0 * (b - a)), jitter(a + t1 * (b - a)), 0.0};
            s.strength = s.length();
            segments.push_back(s);
            labels.push_back(label);
        }
    }
};

} // namespace

Hypothesis snap_hypothesis(const Homography& image_to_model, const RayGrid& grid, const FieldModel& model)
{
    const Mat3 h = image_to_model.inverse().matrix();
    auto nearest = [](const RayFan& fan, double p) {
        const auto& ps = fan.params();
        const auto it = std::lower_bound(ps.begin(), ps.end(), p);
        if (it == ps.begin()) return 0;
        if (it == ps.end()) return fan.size() - 1;
        const int k = static_cast<int>(it - ps.begin());
        return (p - ps[k - 1] <= ps[k] - p) ? k - 1 : k;
    };
    // A point on each boundary line; its ray parameter identifies the line.
    auto param = [&](const RayFan& fan, Point2 model_pt) { return fan.param_of(project(h, model_pt)); };
    const double L = model.length, W = model.width;
    Hypothesis y{{nearest(grid.h, param(grid.h, {L / 2, 0})), nearest(grid.h, param(grid.h, {L / 2, W})),
                  nearest(grid.v, param(grid.v, {0, W / 2})), nearest(grid.v, param(grid.v, {L, W / 2}))}};
    if (y.y[0] > y.y[1]) std::swap(y.y[0], y.y[1]);
    if (y.y[2] > y.y[3]) std::swap(y.y[2], y.y[3]);
    if (y.y[0] == y.y[1]) y.y[1] < grid.n_h() - 1 ? ++y.y[1] : --y.y[0];
    if (y.y[2] == y.y[3]) y.y[3] < grid.n_v() - 1 ? ++y.y[3] : --y.y[2];
    return y;
}

Frame synth_frame(const SynthConfig& cfg, const FieldModel& model, const std::string& id)
{
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto between = [&](double a, double b) { return a + (b - a) * u(rng); };
    const ImageSize size = cfg.image_size;
    const double L = model.length, W = model.width;

    for (int draw = 0; draw < cfg.max_draws; ++draw) {
        double cam_x, dist, height, hfov;
        Point2 target;
        if (cfg.center_view) {
            // Far, narrow view: both touchlines but only the halfway line across.
            cam_x = between(L / 2 - 6, L / 2 + 6);
            dist = between(60.0, 75.0);
            height = between(35.0, 65.0);
            target = {L / 2 + between(-2, 2), W / 2 + between(-2, 2)};
            hfov = between(30.0, 40.0);
        } else {
            cam_x = between(cfg.cam_x_min, cfg.cam_x_max);
            dist = between(cfg.distance_min, cfg.distance_max);
            height = between(cfg.height_min, cfg.height_max);
            target = {between(cfg.target_x_min, cfg.target_x_max), between(cfg.target_y_min, cfg.target_y_max)};
            hfov = between(cfg.hfov_min_deg, cfg.hfov_max_deg);
        }
        const double yaw = std::atan2(std::abs(target.x - cam_x), dist + model.width - target.y) * 180.0 / std::numbers::pi;
        if (yaw > cfg.max_yaw_deg) continue;
        const Camera cam = make_camera(cam_x, dist, height, target, hfov, size, model);
        Mat3 m2i = cam.model_to_image;

        // Whole image below the horizon.
        bool ground = true;
        const Eigen::Matrix3d kinv = cam.k.inverse();
        for (Point2 q : {Point2{0, 0}, Point2{double(size.width - 1), 0}}) {
            const Eigen::Vector3d d = cam.rotation.transpose() * (kinv * Eigen::Vector3d(q.x, q.y, 1.0));
            ground = ground && d.z() < -1e-3 * d.norm();
        }
        if (!ground) continue;

        VanishingPoint vp_h(m2i * Vec3{1, 0, 0});
        VanishingPoint vp_v(m2i * Vec3{0, 1, 0});
        // Extra clearance so estimated vanishing points stay outside the grid span.
        if (inside_expanded(vp_h, size, 1.5 * cfg.margin) || inside_expanded(vp_v, size, 1.5 * cfg.margin)) continue;

        // Canonical orientation: model 0 on the smaller ray parameter of each fan.
        RayGrid probe;
        try {
            probe = build_ray_grid(vp_h, vp_v, size, GridConfig{8, 8, cfg.margin});
        } catch (const Error&) {
            continue;
        }
        Mat3 flip = Mat3::Identity();
        const Point2 c00 = project(m2i, {L / 2, W / 2});
        const Point2 cx = project(m2i, {L / 2 + 1, W / 2});
        const Point2 cy = project(m2i, {L / 2, W / 2 + 1});
        if (probe.v.param_of(cx) < probe.v.param_of(c00)) {
            flip(0, 0) = -1;
            flip(0, 2) = L;
        }
        if (probe.h.param_of(cy) < probe.h.param_of(c00)) {
            flip(1, 1) = -1;
            flip(1, 2) = W;
        }
        m2i = m2i * flip;

        std::optional<Hypothesis> gt_y;
        if (cfg.snap_grid > 0) {
            try {
                const RayGrid grid = build_ray_grid(vp_h, vp_v, size, GridConfig{cfg.snap_grid, cfg.snap_grid, cfg.margin});
                const Hypothesis y = snap_hypothesis(Homography(m2i).inverse(), grid, model);
                if (!y.valid(grid.n_h(), grid.n_v())) continue;
                m2i = homography_from_hypothesis(y, grid, model).inverse().matrix();
                gt_y = y;
            } catch (const Error&) {
                continue;
            }
        }
        const Homography h_mi(m2i);
        const Mat3 i2m = h_mi.inverse().matrix();

        // Field corners: in front of the camera, optionally all inside the image.
        bool corners_ok = true;
        for (const Point2& c : field_corners(model)) {
            const Vec3 p = m2i * Vec3{c.x, c.y, 1.0};
            if (p.z() <= 0) {
                corners_ok = false;
                break;
            }
            if (cfg.require_full_field) {
                const double b = cfg.full_field_border_px;
                const Point2 q{p.x() / p.z(), p.y() / p.z()};
                corners_ok = corners_ok && q.x >= b && q.y >= b && q.x <= size.width - 1 - b &&
                             q.y <= size.height - 1 - b;
            }
        }
        if (!corners_ok) continue;

        // Grass mask: field plus apron, half-open on the far sides.
        BitMask grass(size);
        const double a = cfg.apron_m;
        for (int py = 0; py < size.height; ++py)
            for (int px = 0; px < size.width; ++px) {
                const Vec3 m = i2m * Vec3{double(px), double(py), 1.0};
                if (m.z() == 0.0) continue;
                const double mx = m.x() / m.z(), my = m.y() / m.z();
                const Vec3 back = m2i * Vec3{mx, my, 1.0};
                if (back.z() <= 0.0) continue;
                if (mx >= -a && mx < L + a && my >= -a && my < W + a) grass.at(px, py) = 1;
            }
        for (int b = 0; b < cfg.blobs; ++b) {
            const int cx0 = static_cast<int>(between(0, size.width - 1));
            const int cy0 = static_cast<int>(between(0, size.height - 1));
            if (!grass.at(cx0, cy0)) continue;
            const double rx = between(2, 6), ry = between(5, 14);
            for (int py = std::max(0, int(cy0 - ry)); py <= std::min(size.height - 1, int(cy0 + ry)); ++py)
                for (int px = std::max(0, int(cx0 - rx)); px <= std::min(size.width - 1, int(cx0 + rx)); ++px) {
                    const double dx = (px - cx0) / rx, dy = (py - cy0) / ry;
                    if (dx * dx + dy * dy <= 1.0) grass.at(px, py) = 0;
                }
        }
        if (static_cast<double>(grass.count()) < cfg.min_grass_fraction * static_cast<double>(size.pixels()))
            continue;

        SegmentSink sink{rng, cfg, size, {}, {}};
        for (const auto& ml : model.lines) {
            Point2 p = ml.orientation == Orientation::Vertical ? Point2{ml.offset, ml.lo} : Point2{ml.lo, ml.offset};
            Point2 q = ml.orientation == Orientation::Vertical ? Point2{ml.offset, ml.hi} : Point2{ml.hi, ml.offset};
            if (!clip_in_front(m2i, p, q)) continue;
            sink.emit(project(m2i, p), project(m2i, q),
                      ml.orientation == Orientation::Vertical ? VpLabel::V : VpLabel::H, !cfg.center_view);
        }
        for (const auto& c : model.circles) {
            for (int k = 0; k < 36; ++k) {
                const double t0 = k * std::numbers::pi / 18.0, t1 = (k + 1) * std::numbers::pi / 18.0;
                const Point2 p = c.center + c.radius * Point2{std::cos(t0), std::sin(t0)};
                const Point2 q = c.center + c.radius * Point2{std::cos(t1), std::sin(t1)};
                if (c.visible_region) {
                    const Rect& r = *c.visible_region;
                    auto in = [&](Point2 z) { return z.x >= r.x0 && z.x <= r.x1 && z.y >= r.y0 && z.y <= r.y1; };
                    if (!in(p) || !in(q)) continue;
                }
                Point2 pp = p, qq = q;
                if (!clip_in_front(m2i, pp, qq)) continue;
                sink.emit(project(m2i, pp), project(m2i, qq), VpLabel::None, false);
            }
        }
        // Center views keep only the halfway line in the vertical direction.
        if (cfg.center_view ? (sink.visible_h < 2 || sink.visible_v != 1)
                            : (sink.visible_h < cfg.min_lines_per_direction ||
                               sink.visible_v < cfg.min_lines_per_direction))
            continue;
        const std::size_t n_true = sink.segments.size();
        const int n_out = static_cast<int>(
            std::lround(cfg.outlier_fraction * static_cast<double>(n_true) / (1.0 - cfg.outlier_fraction)));
        for (int k = 0, tries = 0; k < n_out && tries < 100 * (n_out + 1); ++tries) {
            const Point2 mid{between(0, size.width - 1), between(0, size.height - 1)};
            if (!grass.at(static_cast<int>(mid.x), static_cast<int>(mid.y))) continue;
            const double ang = between(0, std::numbers::pi);
            const double len = between(10, 60);
            const Point2 d{0.5 * len * std::cos(ang), 0.5 * len * std::sin(ang)};
            Point2 p = mid - d, q = mid + d;
            if (!clip_to_rect(p, q, 0, 0, size.width - 1, size.height - 1)) continue;
            LineSegment s{p, q, 0.0};
            s.strength = s.length();
            sink.segments.push_back(s);
            sink.labels.push_back(VpLabel::None);
            ++k;
        }

        // Deterministic shuffle so list order carries no information.
        std::vector<std::size_t> order(sink.segments.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        Frame f;
        f.record.id = id;
        f.record.image_size = size;
        f.record.gt_homography = h_mi.inverse();
        if (gt_y) {
            f.record.gt_hypothesis = gt_y;
            f.record.gt_grid_n = cfg.snap_grid;
        }
        f.grass = std::move(grass);
        for (auto i : order) {
            f.segments.push_back(sink.segments[i]);
            f.gt_labels.push_back(sink.labels[i]);
        }
        return f;
    }
    throw SynthFailed("no admissible camera after " + std::to_string(cfg.max_draws) + " draws");
}

std::vector<Frame> synth_frames(const SynthConfig& cfg, int count, const FieldModel& model, const std::string& prefix)
{
    std::vector<Frame> out;
    for (int k = 0; k < count; ++k) {
        SynthConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(k);
        char name[32];
        std::snprintf(name, sizeof name, "%s%04d", prefix.c_str(), k);
        out.push_back(synth_frame(c, model, name));
    }
    return out;
}

// ---------------------------------------------------------------------------
// IOU

double polygon_area(const Polygon& p)
{
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) a += cross(p[i], p[(i + 1) % p.size()]);
    return 0.5 * std::abs(a);
}

namespace {

double signed_area(const Polygon& p)
{
    double a = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) a += cross(p[i], p[(i + 1) % p.size()]);
    return 0.5 * a;
}

// Keeps the part of `poly` where f(p) >= 0 for an affine function f.
template <typename Fn>
Polygon clip_half_plane(const Polygon& poly, Fn&& f)
{
    Polygon out;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Point2 a = poly[i];
        const Point2 b = poly[(i + 1) % poly.size()];
        const double fa = f(a), fb = f(b);
        if (fa >= 0) out.push_back(a);
        if ((fa >= 0) != (fb >= 0)) out.push_back(a + (fa / (fa - fb)) * (b - a));
    }
    return out;
}

} // namespace

Polygon clip_polygon(const Polygon& subject, const Polygon& convex_clip)
{
    if (subject.empty() || convex_clip.size() < 3) return {};
    const double orient = signed_area(convex_clip) >= 0 ? 1.0 : -1.0;
    Polygon out = subject;
    for (std::size_t i = 0; i < convex_clip.size() && !out.empty(); ++i) {
        const Point2 a = convex_clip[i];
        const Point2 e = convex_clip[(i + 1) % convex_clip.size()] - a;
        out = clip_half_plane(out, [&](Point2 p) { return orient * cross(e, p - a); });
    }
    return out;
}

Polygon projected_field(const Homography& image_to_model, const FieldModel& model, ImageSize size)
{
    const Mat3 i2m = image_to_model.matrix();
    const Mat3 m2i = image_to_model.inverse().matrix();
    // Side of the vanishing line that is actually imaged: the preimage of the image center.
    const Vec3 mc = i2m * Vec3{size.width / 2.0, size.height / 2.0, 1.0};
    if (mc.z() == 0.0) throw UndefinedIOU("image center maps to infinity");
    const double side = (m2i.row(2).dot(mc / mc.z())) >= 0 ? 1.0 : -1.0;
    const double scale = m2i.row(2).head<2>().norm() * (model.length + model.width) + std::abs(m2i(2, 2));
    const double eps = 1e-9 * scale;

    Polygon rect;
    for (const Point2& c : field_corners(model)) rect.push_back(c);
    rect = clip_half_plane(rect, [&](Point2 p) { return side * (m2i(2, 0) * p.x + m2i(2, 1) * p.y + m2i(2, 2)) - eps; });
    Polygon img;
    for (const Point2& p : rect) img.push_back(project(m2i, p));
    const Polygon frame{{0, 0}, {double(size.width), 0}, {double(size.width), double(size.height)}, {0, double(size.height)}};
    return clip_polygon(img, frame);
}

double polygon_iou(const Polygon& a, const Polygon& b)
{
    const double aa = polygon_area(a);
    const double ab = polygon_area(b);
    const double inter = b.size() >= 3 ? polygon_area(clip_polygon(a, b)) : 0.0;
    const double uni = aa + ab - inter;
    if (!(uni > 0.0)) throw UndefinedIOU("empty union");
    return std::clamp(inter / uni, 0.0, 1.0);
}

double iou(const Homography& h_pred, const Homography& h_gt, const FieldModel& model, ImageSize size)
{
    return polygon_iou(projected_field(h_pred, model, size), projected_field(h_gt, model, size));
}

// ---------------------------------------------------------------------------
// Pipeline

PreparedFrame prepare_frame(const Frame& f, const PipelineConfig& cfg, const FieldModel& model)
{
    PreparedFrame p;
    p.vps = estimate_vps(f.segments, f.grass, cfg.vp, model);
    p.grid = build_ray_grid(p.vps.vp_h, p.vps.vp_v, f.grass.size, cfg.grid);
    for (std::size_t i = 0; i < f.segments.size(); ++i) {
        if (!p.vps.used[i]) continue;
        p.segments.push_back(f.segments[i]);
        p.labels.push_back(p.vps.labels[i]);
    }
    p.acc = build_accumulators(p.grid, f.grass, p.segments, p.labels);
    return p;
}

TrainingExample training_example(const Frame& f, const PipelineConfig& cfg, const FieldModel& model)
{
    if (!f.record.gt_homography) throw InputError("frame without ground truth: " + f.record.id);
    PreparedFrame p = prepare_frame(f, cfg, model);
    const Hypothesis y = snap_hypothesis(*f.record.gt_homography, p.grid, model);
    return make_example(f.record.id, std::move(p.grid), std::move(p.acc), y);
}

// ---------------------------------------------------------------------------
// Nearest-neighbour baselines

BitMask edge_mask(const Frame& f)
{
    BitMask m(f.grass.size);
    for (const auto& s : f.segments)
        for (auto [x, y] : segment_pixels(s, m.size)) m.at(x, y) = 1;
    return m;
}

NearestNeighbour::NearestNeighbour(const std::vector<Frame>& train) : train_(train)
{
    if (train.empty()) throw InputError("empty nearest-neighbour training set");
    for (const auto& f : train)
        if (!f.record.gt_homography) throw InputError("training frame without ground truth: " + f.record.id);
}

std::size_t NearestNeighbour::retrieve(const Frame& test, NNMode mode) const
{
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    if (mode == NNMode::GrassIou) {
        for (std::size_t k = 0; k < train_.size(); ++k) {
            const BitMask& m = train_[k].grass;
            if (!(m.size == test.grass.size)) continue;
            long long inter = 0, uni = 0;
            for (std::size_t i = 0; i < m.data.size(); ++i) {
                inter += (m.data[i] && test.grass.data[i]);
                uni += (m.data[i] || test.grass.data[i]);
            }
            const double s = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
            if (s > best_score) {
                best_score = s;
                best = k;
            }
        }
        return best;
    }
    auto& maps = const_cast<std::vector<std::vector<float>>&>(distance_maps_);
    if (maps.empty()) {
        maps.resize(train_.size());
        for (std::size_t k = 0; k < train_.size(); ++k) {
            const auto d2 = distance_transform(edge_mask(train_[k]));
            maps[k].resize(d2.size());
            for (std::size_t i = 0; i < d2.size(); ++i) maps[k][i] = static_cast<float>(std::sqrt(d2[i]));
        }
    }
    std::vector<std::size_t> pixels;
    const BitMask edges = edge_mask(test);
    for (std::size_t i = 0; i < edges.data.size(); ++i)
        if (edges.data[i]) pixels.push_back(i);
    for (std::size_t k = 0; k < train_.size(); ++k) {
        if (!(train_[k].grass.size == test.grass.size) || pixels.empty()) continue;
        double sum = 0.0;
        for (auto i : pixels) sum += maps[k][i];
        const double s = -sum / static_cast<double>(pixels.size());
        if (s > best_score) {
            best_score = s;
            best = k;
        }
    }
    return best;
}

Homography NearestNeighbour::predict(const Frame& test, NNMode mode) const
{
    return *train_[retrieve(test, mode)].record.gt_homography;
}

Homography nn_baseline(const Frame& test, const std::vector<Frame>& train, NNMode mode)
{
    return NearestNeighbour(train).predict(test, mode);
}

// ---------------------------------------------------------------------------
// Evaluation

double median(std::vector<double> v)
{
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

EvalReport evaluate(const std::vector<Frame>& frames, const Weights& w, const PipelineConfig& cfg,
                    const FieldModel& model)
{
    EvalReport rep;
    rep.rows.resize(frames.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < frames.size(); i = next++) {
            const Frame& f = frames[i];
            EvalRow& row = rep.rows[i];
            row.id = f.record.id;
            try {
                const PreparedFrame p = prepare_frame(f, cfg, model);
                row.fallback_used = p.vps.fallback_used;
                const Potentials pot(p.acc, p.grid, model, cfg.band_half_width);
                const auto t0 = std::chrono::steady_clock::now();
                const SearchResult s = search(LinearObjective(pot, w), cfg.search);
                row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                row.iterations = s.iterations;
                row.certified = s.certified;
                row.y = s.y;
                const Homography h = homography_from_hypothesis(s.y, p.grid, model);
                if (f.record.gt_homography) row.iou = iou(h, *f.record.gt_homography, model, f.grass.size);
                row.ok = true;
            } catch (const VPEstimationFailed& e) {
                row.error = e.what();
            } catch (const VPInsideImage& e) {
                row.error = e.what();
            } catch (const Error& e) {
                // Degenerate predictions count as complete misses, not exclusions.
                row.ok = true;
                row.iou = 0.0;
                row.error = e.what();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                               static_cast<unsigned>(frames.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
        worker();
    }
    std::vector<double> ious, its, secs;
    for (const auto& r : rep.rows) {
        if (!r.ok) {
            ++rep.excluded;
            continue;
        }
        ious.push_back(r.iou);
        its.push_back(static_cast<double>(r.iterations));
        secs.push_back(r.seconds);
    }
    if (!ious.empty()) {
        double s = 0, t = 0;
        for (double v : ious) s += v;
        for (double v : its) t += v;
        rep.mean_iou = s / static_cast<double>(ious.size());
        rep.mean_iterations = t / static_cast<double>(its.size());
    }
    rep.median_iou = median(ious);
    rep.median_iterations = median(its);
    rep.median_seconds = median(secs);
    return rep;
}

nlohmann::json to_json(const EvalReport& r)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json j{{"id", row.id}, {"ok", row.ok}};
        if (!row.error.empty()) j["error"] = row.error;
        if (row.ok) {
            j["iou"] = row.iou;
            j["iterations"] = row.iterations;
            j["seconds"] = row.seconds;
            j["certified"] = row.certified;
            j["fallback_used"] = row.fallback_used;
            j["y"] = row.y.y;
        }
        rows.push_back(std::move(j));
    }
    return {{"mean_iou", r.mean_iou},
            {"median_iou", r.median_iou},
            {"mean_iterations", r.mean_iterations},
            {"median_iterations", r.median_iterations},
            {"median_seconds", r.median_seconds},
            {"excluded", r.excluded},
            {"frames", rows}};
}

CSelection select_c(std::span<const TrainingExample> train_set, const std::vector<Frame>& validation,
                    std::span<const double> candidates, TrainConfig cfg, const PipelineConfig& pipeline,
                    const FieldModel& model)
{
    if (candidates.empty()) throw InputError("no candidate values of C");
    CSelection out;
    double best = -1.0;
    std::vector<double> cs(candidates.begin(), candidates.end());
    std::sort(cs.begin(), cs.end());
    for (double c : cs) {
        cfg.C = c;
        TrainResult r = train(train_set, cfg, model);
        const EvalReport rep = evaluate(validation, r.w.expanded(), pipeline, model);
        out.scores.emplace_back(c, rep.mean_iou);
        if (rep.mean_iou > best) {
            best = rep.mean_iou;
            out.C = c;
            out.result = std::move(r);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overlay

RgbImage render_overlay(const Frame& f, const std::vector<VpLabel>& labels, const Homography& image_to_model,
                        const FieldModel& model)
{
    RgbImage img(f.grass.size);
    for (int y = 0; y < img.size.height; ++y)
        for (int x = 0; x < img.size.width; ++x) {
            if (f.grass.at(x, y))
                img.set(x, y, 40, 110, 40);
            else
                img.set(x, y, 70, 70, 70);
        }
    for (std::size_t i = 0; i < f.segments.size(); ++i) {
        const VpLabel l = i < labels.size() ? labels[i] : VpLabel::None;
        const auto c = l == VpLabel::H ? std::array<std::uint8_t, 3>{230, 60, 60}
                       : l == VpLabel::V ? std::array<std::uint8_t, 3>{70, 120, 240}
                                         : std::array<std::uint8_t, 3>{240, 220, 60};
        draw_line(img, f.segments[i].p1, f.segments[i].p2, 1, c[0], c[1], c[2]);
    }
    const Mat3 m2i = image_to_model.inverse().matrix();
    auto model_segment = [&](Point2 a, Point2 b) {
        if (!clip_in_front(m2i, a, b)) return;
        draw_line(img, project(m2i, a), project(m2i, b), 2, 255, 255, 255);
    };
    for (const auto& ml : model.lines) {
        if (ml.orientation == Orientation::Vertical)
            model_segment({ml.offset, ml.lo}, {ml.offset, ml.hi});
        else
            model_segment({ml.lo, ml.offset}, {ml.hi, ml.offset});
    }
    for (const auto& c : model.circles)
        for (int k = 0; k < 72; ++k) {
            const double t0 = k * std::numbers::pi / 36.0, t1 = (k + 1) * std::numbers::pi / 36.0;
            const Point2 p = c.center + c.radius * Point2{std::cos(t0), std::sin(t0)};
            const Point2 q = c.center + c.radius * Point2{std::cos(t1), std::sin(t1)};
            if (c.visible_region) {
                const Rect& r = *c.visible_region;
                if (p.x < r.x0 || p.x > r.x1 || q.x < r.x0 || q.x > r.x1) continue;
            }
            model_segment(p, q);
        }
    return img;
}

} // namespace fieldloc
