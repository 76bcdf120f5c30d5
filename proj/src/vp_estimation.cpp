#include "fieldloc/vp_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "fieldloc/errors.hpp"

namespace fieldloc {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

// Canonical segment order (strength descending, then coordinates) so results
// do not depend on input order.
std::vector<std::size_t> canonical_order(std::span<const LineSegment> s, std::span<const std::size_t> subset)
{
    std::vector<std::size_t> idx(subset.begin(), subset.end());
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = s[a];
        const auto& y = s[b];
        if (x.strength != y.strength) return x.strength > y.strength;
        if (x.p1.x != y.p1.x) return x.p1.x < y.p1.x;
        if (x.p1.y != y.p1.y) return x.p1.y < y.p1.y;
        if (x.p2.x != y.p2.x) return x.p2.x < y.p2.x;
        if (x.p2.y != y.p2.y) return x.p2.y < y.p2.y;
        return a < b;
    });
    return idx;
}

std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

double horizontalness(std::span<const LineSegment> s, const std::vector<std::size_t>& idx)
{
    double num = 0.0;
    double den = 0.0;
    for (auto i : idx) {
        const Point2 d = s[i].p2 - s[i].p1;
        const double len = norm(d);
        if (len == 0.0) continue;
        num += s[i].strength * std::abs(d.x) / len;
        den += s[i].strength;
    }
    return den > 0.0 ? num / den : 0.0;
}

bool inside_image(const VanishingPoint& v, ImageSize size, double margin = 0.0)
{
    if (v.is_infinite()) return false;
    const Point2 p = v.point();
    const double m = margin * std::hypot(size.width, size.height);
    return p.x >= -m && p.y >= -m && p.x <= size.width - 1 + m && p.y <= size.height - 1 + m;
}

double ellipse_distance(const Ellipse& e, Point2 p)
{
    const Point2 d = p - e.center;
    const Point2 M = e.major_dir();
    const Point2 m = e.minor_dir();
    const double u = dot(d, M);
    const double v = dot(d, m);
    const double a2 = e.semi_major * e.semi_major;
    const double b2 = e.semi_minor * e.semi_minor;
    const double f = u * u / a2 + v * v / b2 - 1.0;
    const double g = 2.0 * std::hypot(u / a2, v / b2);
    return g > 0.0 ? std::abs(f) / g : std::numeric_limits<double>::infinity();
}

Ellipse ransac_ellipse(std::span<const LineSegment> s, const std::vector<std::size_t>& idx, ImageSize size)
{
    if (idx.size() < 3) throw EllipseFitFailed("fewer than 3 non-vp segments");
    constexpr double kInlierPx = 3.0;
    const double diag = std::hypot(size.width, size.height);
    std::mt19937 rng(7);
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);

    auto inliers_of = [&](const Ellipse& e) {
        std::vector<std::size_t> in;
        for (auto i : idx)
            if (ellipse_distance(e, s[i].p1) < kInlierPx && ellipse_distance(e, s[i].p2) < kInlierPx) in.push_back(i);
        return in;
    };
    auto plausible = [&](const Ellipse& e) {
        return e.center.x >= 0 && e.center.y >= 0 && e.center.x < size.width && e.center.y < size.height &&
               e.semi_minor > 3.0 && e.semi_major < diag;
    };

    std::vector<std::size_t> best;
    double best_strength = 0.0;
    const int iterations = idx.size() <= 12 ? 220 : 400;
    for (int it = 0; it < iterations; ++it) {
        std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || b == c || a == c) continue;
        const std::array<Point2, 6> pts{s[idx[a]].p1, s[idx[a]].p2, s[idx[b]].p1,
                                        s[idx[b]].p2, s[idx[c]].p1, s[idx[c]].p2};
        Ellipse e;
        try {
            e = fit_ellipse(pts);
        } catch (const EllipseFitFailed&) {
            continue;
        }
        if (!plausible(e)) continue;
        auto in = inliers_of(e);
        double strength = 0.0;
        for (auto i : in) strength += s[i].strength;
        if (strength > best_strength) {
            best_strength = strength;
            best = std::move(in);
        }
    }
    if (best.size() < 3) throw EllipseFitFailed("no consistent ellipse among non-vp segments");
    std::vector<Point2> pts;
    for (auto i : best) {
        pts.push_back(s[i].p1);
        pts.push_back(s[i].p2);
    }
    Ellipse e = fit_ellipse(pts);
    if (!plausible(e)) throw EllipseFitFailed("refit ellipse implausible");
    return e;
}

// Point of line `l` closest to the (possibly infinite) point `prior`.
VanishingPoint project_onto_line(const Vec3& l, const VanishingPoint& prior)
{
    const Vec3 dir_inf{l.y(), -l.x(), 0.0};
    if (prior.is_infinite()) return VanishingPoint(dir_inf);
    const Point2 p = prior.point();
    // Perpendicular through p, intersected with l.
    const Vec3 perp = join(homogeneous(p), Vec3{p.x + l.x(), p.y + l.y(), 1.0});
    const Vec3 q = l.cross(perp);
    if (q.norm() == 0.0) return VanishingPoint(dir_inf);
    return VanishingPoint(q);
}

} // namespace

const char* to_string(VpLabel l)
{
    switch (l) {
    case VpLabel::H: return "H";
    case VpLabel::V: return "V";
    case VpLabel::None: return "none";
    }
    return "none";
}

VpLabel vp_label_from_string(const std::string& s)
{
    if (s == "H" || s == "h") return VpLabel::H;
    if (s == "V" || s == "v") return VpLabel::V;
    return VpLabel::None;
}

Point2 Ellipse::major_dir() const { return {std::cos(angle), std::sin(angle)}; }
Point2 Ellipse::minor_dir() const { return {-std::sin(angle), std::cos(angle)}; }

double segment_vp_angle_deg(const LineSegment& s, const VanishingPoint& vp)
{
    const Point2 d = s.p2 - s.p1;
    const Point2 mid = s.midpoint();
    const Vec3& v = vp.p;
    const Point2 t{v.x() - v.z() * mid.x, v.y() - v.z() * mid.y};
    const double nd = norm(d);
    const double nt = norm(t);
    if (nd == 0.0 || nt == 0.0) return 90.0;
    return std::atan2(std::abs(cross(d, t)), std::abs(dot(d, t))) * kDeg;
}

std::vector<VanishingPoint> candidate_vps(std::span<const LineSegment> segments, int max_pairs)
{
    const auto order = canonical_order(segments, all_indices(segments.size()));
    std::size_t k = order.size();
    while (k > 1 && static_cast<long long>(k) * static_cast<long long>(k - 1) / 2 > max_pairs) --k;
    std::vector<Vec3> lines;
    lines.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        Vec3 l = segments[order[i]].line();
        lines.push_back(l / l.norm());
    }
    std::vector<VanishingPoint> out;
    out.reserve(k * (k - 1) / 2);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const Vec3 v = lines[i].cross(lines[j]);
            if (v.norm() < 1e-14) continue;
            out.emplace_back(v);
        }
    return out;
}

VoteResult vote_vp(std::span<const LineSegment> segments, std::span<const VanishingPoint> candidates,
                   const VPConfig& cfg)
{
    if (candidates.empty()) throw VPEstimationFailed("no candidate vanishing points");
    const auto order = canonical_order(segments, all_indices(segments.size()));
    const double two_sigma2 = 2.0 * cfg.sigma_deg * cfg.sigma_deg;

    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        double score = 0.0;
        for (auto i : order) {
            const double a = segment_vp_angle_deg(segments[i], candidates[c]);
            if (a < cfg.theta_tol_deg) score += segments[i].strength * std::exp(-a * a / two_sigma2);
        }
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    VoteResult r{candidates[best], best_score, {}};
    for (std::size_t i = 0; i < segments.size(); ++i)
        if (segment_vp_angle_deg(segments[i], r.vp) < cfg.theta_tol_deg) r.inliers.push_back(i);
    return r;
}

VanishingPoint refine_vp(std::span<const LineSegment> segments, const VanishingPoint& initial, const VPConfig& cfg)
{
    if (segments.size() < 2) return initial;
    // Condition coordinates around the segment midpoints.
    Point2 c{};
    for (const auto& s : segments) c = c + s.midpoint();
    c = (1.0 / static_cast<double>(segments.size())) * c;
    double spread = 0.0;
    for (const auto& s : segments) spread += norm(s.midpoint() - c);
    spread = std::max(spread / static_cast<double>(segments.size()), 1.0);
    Mat3 t;
    t << 1.0 / spread, 0, -c.x / spread, 0, 1.0 / spread, -c.y / spread, 0, 0, 1;
    const Mat3 t_inv_t = t.inverse().transpose();

    std::vector<Vec3> lines;
    for (const auto& s : segments) {
        Vec3 l = t_inv_t * s.line();
        const double n = std::hypot(l.x(), l.y());
        lines.push_back(n > 0.0 ? Vec3(l / n) : Vec3::Zero());
    }

    VanishingPoint v = initial;
    for (int iter = 0; iter < 10; ++iter) {
        std::vector<double> angles;
        angles.reserve(segments.size());
        for (const auto& s : segments) angles.push_back(segment_vp_angle_deg(s, v));
        std::vector<double> sorted = angles;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
        const double scale = std::max(1.4826 * sorted[sorted.size() / 2], 1e-7);
        const double cutoff = std::min(4.685 * scale, cfg.theta_tol_deg);

        Mat3 a = Mat3::Zero();
        int used = 0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            if (angles[i] >= cutoff) continue;
            const double r = angles[i] / cutoff;
            const double w = segments[i].strength * (1.0 - r * r) * (1.0 - r * r);
            a += w * lines[i] * lines[i].transpose();
            ++used;
        }
        if (used < 2) break;
        Eigen::SelfAdjointEigenSolver<Mat3> es(a);
        const Vec3 vn = es.eigenvectors().col(0);
        const Vec3 next = t.inverse() * vn;
        if (next.norm() == 0.0) break;
        VanishingPoint nv(next);
        const bool converged = std::abs(std::abs(nv.p.dot(v.p)) - 1.0) < 1e-15;
        v = nv;
        if (converged) break;
    }
    return v;
}

VPResult estimate_vps(std::span<const LineSegment> segments, const BitMask& grass_mask, const VPConfig& cfg,
                      const FieldModel& model)
{
    if (segments.size() < 2) throw VPEstimationFailed("need at least 2 segments");
    const ImageSize size = grass_mask.size;
    const BitMask near_grass = dilate(grass_mask, cfg.grass_tolerance_px);

    VPResult res;
    res.labels.assign(segments.size(), VpLabel::None);
    res.used.assign(segments.size(), false);
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        if (s.length() < cfg.min_length) continue;
        long total = 0;
        long off = 0;
        rasterize_segment(s.p1, s.p2, [&](int x, int y) {
            ++total;
            if (!near_grass.in_bounds(x, y) || !near_grass.at(x, y)) ++off;
        });
        if (total == 0 || static_cast<double>(off) > cfg.max_off_grass * static_cast<double>(total)) continue;
        res.used[i] = true;
        usable.push_back(i);
    }
    if (usable.size() < 2) throw VPEstimationFailed("fewer than 2 usable segments");

    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<LineSegment> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(segments[i]);
        return out;
    };
    auto outside_candidates = [&](std::span<const LineSegment> segs) {
        auto all = candidate_vps(segs, cfg.max_pairs);
        std::vector<VanishingPoint> out;
        out.reserve(all.size());
        for (const auto& v : all)
            if (!inside_image(v, size, cfg.exclusion_margin)) out.push_back(v);
        return out;
    };
    auto inliers_among = [&](const std::vector<std::size_t>& idx, const VanishingPoint& v) {
        std::vector<std::size_t> in;
        for (auto i : idx)
            if (segment_vp_angle_deg(segments[i], v) < cfg.theta_tol_deg) in.push_back(i);
        return in;
    };
    auto find_vp = [&](const std::vector<std::size_t>& idx) -> std::optional<VanishingPoint> {
        const auto segs = gather(idx);
        const auto cands = outside_candidates(segs);
        if (cands.empty()) return std::nullopt;
        VoteResult vote = vote_vp(segs, cands, cfg);
        std::vector<LineSegment> in;
        for (auto i : vote.inliers) in.push_back(segs[i]);
        return refine_vp(in, vote.vp, cfg);
    };

    const auto first = find_vp(canonical_order(segments, usable));
    if (!first) throw VPEstimationFailed("no vanishing point candidates");
    const auto in1 = inliers_among(usable, *first);
    std::vector<std::size_t> rest;
    for (auto i : usable)
        if (std::find(in1.begin(), in1.end(), i) == in1.end()) rest.push_back(i);

    std::optional<VanishingPoint> second;
    if (rest.size() >= 2) second = find_vp(canonical_order(segments, rest));

    // Pieces of a single image line do not locate a vanishing point along it,
    // so support made of collinear segments counts as one.
    auto effective_support = [&](VpLabel l) {
        std::vector<std::size_t> in;
        for (auto i : usable)
            if (res.labels[i] == l) in.push_back(i);
        if (in.size() < 2) return static_cast<int>(in.size());
        const auto order = canonical_order(segments, in);
        Vec3 line = segments[order.front()].line();
        line /= std::hypot(line.x(), line.y());
        for (auto i : order) {
            const auto& s = segments[i];
            if (std::abs(line.dot(homogeneous(s.p1))) > cfg.collinear_tol_px ||
                std::abs(line.dot(homogeneous(s.p2))) > cfg.collinear_tol_px)
                return static_cast<int>(in.size());
        }
        return 1;
    };
    auto label_with = [&](const VanishingPoint& vh, const std::optional<VanishingPoint>& vv) {
        std::fill(res.labels.begin(), res.labels.end(), VpLabel::None);
        for (auto i : usable) {
            const double ah = segment_vp_angle_deg(segments[i], vh);
            const double av = vv ? segment_vp_angle_deg(segments[i], *vv) : 180.0;
            if (std::min(ah, av) >= cfg.theta_tol_deg) continue;
            res.labels[i] = ah <= av ? VpLabel::H : VpLabel::V;
        }
        res.support_h = effective_support(VpLabel::H);
        res.support_v = effective_support(VpLabel::V);
    };

    // Decide which of the two is the horizontal (touchline) vanishing point.
    VanishingPoint vh = *first;
    std::optional<VanishingPoint> vv = second;
    if (second) {
        const auto in2 = inliers_among(rest, *second);
        if (horizontalness(segments, in2) > horizontalness(segments, in1)) {
            vh = *second;
            vv = first;
        }
    } else if (horizontalness(segments, in1) < std::sqrt(0.5)) {
        throw VPEstimationFailed("only a vertical vanishing point was found");
    }
    label_with(vh, vv);
    if (res.support_h < cfg.min_support) throw VPEstimationFailed("insufficient support for vp_h");

    if (!vv || res.support_v < cfg.min_support) {
        // Ellipse fallback for the vertical vanishing point.
        label_with(vh, std::nullopt);
        std::vector<std::size_t> none;
        for (auto i : usable)
            if (res.labels[i] == VpLabel::None) none.push_back(i);
        VanishingPoint approx;
        try {
            const Ellipse e = ransac_ellipse(segments, canonical_order(segments, none), size);
            std::vector<LineSegment> h_segments;
            for (auto i : usable)
                if (res.labels[i] == VpLabel::H) h_segments.push_back(segments[i]);
            try {
                approx = vp_from_conjugate_diameter(e, vh, grass_mask, h_segments, model);
            } catch (const FallbackFailed&) {
                approx = vp_from_ellipse(e, grass_mask, model);
            }
        } catch (const EllipseFitFailed& e) {
            throw VPEstimationFailed(std::string("fallback failed: ") + e.what());
        } catch (const FallbackFailed& e) {
            throw VPEstimationFailed(std::string("fallback failed: ") + e.what());
        } catch (const DegenerateDLT& e) {
            throw VPEstimationFailed(std::string("fallback failed: ") + e.what());
        }
        // Snap onto the few vertical segments that agree with the estimate.
        std::vector<std::size_t> support;
        for (auto i : none)
            if (segment_vp_angle_deg(segments[i], approx) < cfg.fallback_tol_deg) support.push_back(i);
        // A center-circle ellipse comes with the halfway line; without one the
        // ellipse is most likely something else.
        if (support.empty()) throw VPEstimationFailed("fallback failed: no segment agrees with the ellipse estimate");
        support = canonical_order(segments, support);
        const Vec3 l = segments[support.front()].line();
        approx = project_onto_line(l / l.norm(), approx);
        vv = approx;
        res.fallback_used = true;
        label_with(vh, vv);
    }
    res.vp_h = vh;
    res.vp_v = *vv;
    return res;
}

Ellipse fit_ellipse(std::span<const Point2> points)
{
    if (points.size() < 6) throw EllipseFitFailed("need at least 6 points");
    Point2 c{};
    for (const auto& p : points) c = c + p;
    c = (1.0 / static_cast<double>(points.size())) * c;
    double scale = 0.0;
    for (const auto& p : points) scale = std::max(scale, norm(p - c));
    if (scale <= 0.0) throw EllipseFitFailed("coincident points");

    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd d1(n, 3), d2(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = (points[static_cast<std::size_t>(i)].x - c.x) / scale;
        const double y = (points[static_cast<std::size_t>(i)].y - c.y) / scale;
        d1.row(i) << x * x, x * y, y * y;
        d2.row(i) << x, y, 1.0;
    }
    const Mat3 s1 = d1.transpose() * d1;
    const Mat3 s2 = d1.transpose() * d2;
    const Mat3 s3 = d2.transpose() * d2;
    Eigen::FullPivLU<Mat3> lu(s3);
    if (lu.rank() < 3 || std::abs(s3.determinant()) < 1e-12 * std::pow(s3.norm(), 3))
        throw EllipseFitFailed("degenerate point scatter");
    const Mat3 t = -lu.solve(s2.transpose());
    Mat3 m = s1 + s2 * t;
    Mat3 m2;
    m2.row(0) = m.row(2) / 2.0;
    m2.row(1) = -m.row(1);
    m2.row(2) = m.row(0) / 2.0;

    Eigen::EigenSolver<Mat3> es(m2);
    Vec3 a1 = Vec3::Zero();
    bool found = false;
    double best_cond = 0.0;
    for (int k = 0; k < 3; ++k) {
        if (std::abs(es.eigenvalues()(k).imag()) > 1e-9 * std::max(1.0, std::abs(es.eigenvalues()(k).real())))
            continue;
        const Vec3 v = es.eigenvectors().col(k).real();
        const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
        if (cond > best_cond) {
            best_cond = cond;
            a1 = v;
            found = true;
        }
    }
    if (!found) throw EllipseFitFailed("no elliptical solution");
    const Vec3 a2 = t * a1;
    Eigen::Matrix<double, 6, 1> q;
    q << a1, a2;
    q.normalize();

    // Algebraic residual in normalized coordinates.
    double rss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = d1.row(i).dot(q.head<3>()) + d2.row(i).dot(q.tail<3>());
        rss += r * r;
    }

    // Back to pixel coordinates: x_n = (x - c) / scale.
    // Sign so that the quadratic part is positive definite.
    if (q(0) + q(2) < 0.0) q = -q;
    const double A = q(0), B = q(1), C = q(2), D = q(3), E = q(4), F = q(5);
    Eigen::Matrix2d mm;
    mm << A, B / 2.0, B / 2.0, C;
    Eigen::Vector2d rhs(-D / 2.0, -E / 2.0);
    const Eigen::Vector2d ctr = mm.fullPivLu().solve(rhs);
    const double qc = A * ctr.x() * ctr.x() + B * ctr.x() * ctr.y() + C * ctr.y() * ctr.y() + D * ctr.x() +
                      E * ctr.y() + F;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es2(mm);
    const double l0 = es2.eigenvalues()(0);
    const double l1 = es2.eigenvalues()(1);
    if (!(-qc / l0 > 0.0 && -qc / l1 > 0.0)) throw EllipseFitFailed("imaginary ellipse");

    Ellipse e;
    e.center = {c.x + scale * ctr.x(), c.y + scale * ctr.y()};
    // Smaller eigenvalue -> longer axis.
    e.semi_major = scale * std::sqrt(-qc / l0);
    e.semi_minor = scale * std::sqrt(-qc / l1);
    const Eigen::Vector2d major = es2.eigenvectors().col(0);
    e.angle = std::atan2(major.y(), major.x());
    e.rms_residual = std::sqrt(rss / static_cast<double>(n));
    if (!std::isfinite(e.semi_major) || !std::isfinite(e.semi_minor))
        throw EllipseFitFailed("non-finite ellipse");
    return e;
}

namespace {

// Last grass -> non-grass transition along start + t * dir (t >= t0) before
// leaving the image, provided no grass follows it. Blobs on the field are
// skipped this way.
std::optional<double> grass_exit(const BitMask& grass_mask, Point2 start, Point2 dir, double t0)
{
    bool prev = true;
    std::optional<double> last;
    for (double t = t0;; t += 0.5) {
        const Point2 p = start + t * dir;
        const int x = static_cast<int>(std::lround(p.x));
        const int y = static_cast<int>(std::lround(p.y));
        if (!grass_mask.in_bounds(x, y)) return prev ? std::nullopt : last;
        const bool g = grass_mask.at(x, y) != 0;
        if (prev && !g) last = t - 0.25;
        prev = g;
    }
}

Mat3 ellipse_conic(const Ellipse& e)
{
    const Point2 M = e.major_dir();
    const Point2 m = e.minor_dir();
    Eigen::Matrix2d q = Eigen::Vector2d(M.x, M.y) * Eigen::Vector2d(M.x, M.y).transpose() / (e.semi_major * e.semi_major) +
                        Eigen::Vector2d(m.x, m.y) * Eigen::Vector2d(m.x, m.y).transpose() / (e.semi_minor * e.semi_minor);
    const Eigen::Vector2d c(e.center.x, e.center.y);
    Mat3 conic;
    conic.topLeftCorner<2, 2>() = q;
    conic.topRightCorner<2, 1>() = -q * c;
    conic.bottomLeftCorner<1, 2>() = (-q * c).transpose();
    conic(2, 2) = c.dot(q * c) - 1.0;
    return conic;
}

} // namespace

VanishingPoint vp_from_ellipse(const Ellipse& e, const BitMask& grass_mask, const FieldModel& model)
{
    Point2 major = e.major_dir();
    if (major.x < 0.0 || (major.x == 0.0 && major.y < 0.0)) major = -1.0 * major;
    Point2 up = e.minor_dir();
    if (up.y > 0.0 || (up.y == 0.0 && up.x > 0.0)) up = -1.0 * up;

    const ModelCircle& circle = model.circles[0];
    const Point2 mc = circle.center;
    const double r = circle.radius;
    std::vector<Point2> model_pts{{mc.x + r, mc.y}, {mc.x - r, mc.y}, {mc.x, mc.y - r}, {mc.x, mc.y + r}};
    std::vector<Point2> image_pts{e.center + e.semi_major * major, e.center - e.semi_major * major,
                                  e.center + e.semi_minor * up, e.center - e.semi_minor * up};
    if (auto t = grass_exit(grass_mask, e.center, up, e.semi_minor)) {
        model_pts.push_back({mc.x, 0.0});
        image_pts.push_back(e.center + *t * up);
    } else if (auto t2 = grass_exit(grass_mask, e.center, -1.0 * up, e.semi_minor)) {
        model_pts.push_back({mc.x, model.width});
        image_pts.push_back(e.center - *t2 * up);
    } else {
        throw FallbackFailed("minor axis never leaves the grass");
    }
    const Homography h = dlt_homography(model_pts, image_pts);
    return VanishingPoint(h.apply(Vec3{0.0, 1.0, 0.0}));
}

VanishingPoint vp_from_conjugate_diameter(const Ellipse& e, const VanishingPoint& vp_h, const BitMask& grass_mask,
                                          std::span<const LineSegment> touchline_candidates, const FieldModel& model)
{
    // The polar of vp_h is the image of the circle's diameter along the
    // vertical direction, i.e. the halfway line.
    const Mat3 conic = ellipse_conic(e);
    const Vec3 l = conic * vp_h.p;
    const double ln = std::hypot(l.x(), l.y());
    if (ln == 0.0) throw FallbackFailed("polar of vp_h is the line at infinity");
    const Point2 n{l.x() / ln, l.y() / ln};
    const double off = l.z() / ln;
    const Point2 p0 = e.center - (dot(n, e.center) + off) * n;
    Point2 d{-n.y, n.x};
    if (d.y > 0.0 || (d.y == 0.0 && d.x > 0.0)) d = -1.0 * d; // image-up first

    // Where the polar meets the ellipse: images of the circle points on the diameter.
    const Eigen::Matrix2d q = conic.topLeftCorner<2, 2>();
    const Eigen::Vector2d dv(d.x, d.y), w(p0.x - e.center.x, p0.y - e.center.y);
    const double qa = dv.dot(q * dv), qb = dv.dot(q * w), qc = w.dot(q * w) - 1.0;
    const double disc = qb * qb - qa * qc;
    if (!(disc > 0.0) || qa <= 0.0) throw FallbackFailed("polar of vp_h misses the ellipse");
    const double t_far = (-qb + std::sqrt(disc)) / qa; // further along d (up)
    const double t_near = (-qb - std::sqrt(disc)) / qa;

    const double r = model.circles[0].radius;
    const double cy = model.circles[0].center.y;
    double t_line;
    double y_line;
    if (auto t = grass_exit(grass_mask, p0, d, t_far)) {
        t_line = *t;
        y_line = 0.0;
    } else if (auto t2 = grass_exit(grass_mask, p0, -1.0 * d, -t_near)) {
        t_line = -*t2;
        y_line = model.width;
    } else {
        throw FallbackFailed("halfway line never leaves the grass");
    }
    // Prefer an actual touchline segment close to the grass boundary.
    constexpr double kSnapPx = 15.0;
    double best = kSnapPx;
    for (const auto& s : touchline_candidates) {
        const Vec3 x = s.line().cross(l);
        if (x.z() == 0.0) continue;
        const Point2 xp{x.x() / x.z(), x.y() / x.z()};
        const double t = dot(xp - p0, d);
        const double gap = std::abs(t - t_line);
        if (gap < best) {
            best = gap;
            t_line = t;
        }
    }

    // 1D projective map from model y to the line parameter t; vp_v is the
    // image of y = infinity.
    Eigen::Matrix<double, 3, 4> a;
    const std::array<std::pair<double, double>, 3> corr{{{cy - r, t_far}, {cy + r, t_near}, {y_line, t_line}}};
    const double ys = model.width;
    for (int i = 0; i < 3; ++i) {
        const auto [y, t] = corr[static_cast<std::size_t>(i)];
        a.row(i) << y / ys, 1.0, -t * y / ys, -t;
    }
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(a, Eigen::ComputeFullV);
    const Eigen::Vector4d h = svd.matrixV().col(3);
    const double alpha = h(0), gamma = h(2);
    return VanishingPoint(Vec3{p0.x * gamma + alpha * d.x, p0.y * gamma + alpha * d.y, gamma});
}

std::vector<LineSegment> segments_from_json(const nlohmann::json& j)
{
    if (!j.is_array()) throw InputError("segments JSON must be an array");
    std::vector<LineSegment> out;
    out.reserve(j.size());
    for (const auto& item : j) {
        LineSegment s;
        s.p1 = {item.at("x1").get<double>(), item.at("y1").get<double>()};
        s.p2 = {item.at("x2").get<double>(), item.at("y2").get<double>()};
        s.strength = item.contains("strength") ? item.at("strength").get<double>() : s.length();
        if (s.strength < 0.0) throw InputError("negative segment strength");
        out.push_back(s);
    }
    return out;
}

std::vector<LineSegment> load_segments(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open segments file " + path);
    try {
        nlohmann::json j;
        in >> j;
        return segments_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad segments file: ") + e.what());
    }
}

nlohmann::json segments_to_json(std::span<const LineSegment> segments, std::span<const VpLabel> labels)
{
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        nlohmann::json item{{"x1", s.p1.x}, {"y1", s.p1.y}, {"x2", s.p2.x}, {"y2", s.p2.y}, {"strength", s.strength}};
        if (!labels.empty()) item["vp"] = to_string(labels[i]);
        j.push_back(std::move(item));
    }
    return j;
}

} // namespace fieldloc
