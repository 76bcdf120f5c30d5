#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fieldloc/field_model.hpp"
#include "fieldloc/geometry.hpp"
#include "fieldloc/image.hpp"

namespace fieldloc {

struct LineSegment
{
    Point2 p1;
    Point2 p2;
    double strength = 0.0;

    double length() const { return norm(p2 - p1); }
    Point2 midpoint() const { return 0.5 * (p1 + p2); }
    Vec3 line() const { return join(homogeneous(p1), homogeneous(p2)); }
};

enum class VpLabel { H, V, None };

const char* to_string(VpLabel l);
VpLabel vp_label_from_string(const std::string& s);

struct VPConfig
{
    double theta_tol_deg = 2.0;
    double sigma_deg = 1.0;
    double min_length = 8.0;
    double max_off_grass = 0.6;
    int grass_tolerance_px = 3; // pixels this close to grass count as on-grass
    int min_support = 3;
    int max_pairs = 20000;
    double fallback_tol_deg = 5.0;
    // Candidates inside the image expanded by this fraction of its diagonal
    // are not considered (the ray grid cannot be built around them).
    double exclusion_margin = 0.25;
    double collinear_tol_px = 3.0; // support lying on one image line counts once
};

struct VPResult
{
    VanishingPoint vp_h;
    VanishingPoint vp_v;
    std::vector<VpLabel> labels; // one per input segment
    std::vector<bool> used;      // passed the length / on-grass filters
    bool fallback_used = false;
    int support_h = 0; // inlier count, or 1 if all inliers lie on one image line
    int support_v = 0;
};

struct VoteResult
{
    VanishingPoint vp;
    double score = 0.0;
    std::vector<std::size_t> inliers; // indices into the segment list
};

struct Ellipse
{
    Point2 center;
    double semi_major = 0.0;
    double semi_minor = 0.0;
    double angle = 0.0; // direction of the major axis, radians
    double rms_residual = 0.0;

    Point2 major_dir() const;
    Point2 minor_dir() const;
};

/// Angle in degrees between a segment and the line joining its midpoint to `vp`.
double segment_vp_angle_deg(const LineSegment& s, const VanishingPoint& vp);

/// Pairwise intersections of the segments' supporting lines. At most
/// `max_pairs` pairs are used, taken from the strongest segments.
std::vector<VanishingPoint> candidate_vps(std::span<const LineSegment> segments, int max_pairs);

/// Candidate maximizing sum(strength * exp(-angle^2 / 2 sigma^2)) over
/// segments within the angular tolerance.
VoteResult vote_vp(std::span<const LineSegment> segments, std::span<const VanishingPoint> candidates,
                   const VPConfig& cfg = {});

/// Robust least-squares vanishing point of a set of segments (Tukey-weighted).
VanishingPoint refine_vp(std::span<const LineSegment> segments, const VanishingPoint& initial,
                         const VPConfig& cfg = {});

VPResult estimate_vps(std::span<const LineSegment> segments, const BitMask& grass_mask,
                      const VPConfig& cfg = {}, const FieldModel& model = standard_field());

/// Direct least-squares ellipse fit under 4ac - b^2 = 1, solved in the
/// numerically stable block-reduced form.
Ellipse fit_ellipse(std::span<const Point2> points);

/// Approximate vertical vanishing point from the imaged center circle and the
/// grass boundary crossed by the ellipse's minor axis.
VanishingPoint vp_from_ellipse(const Ellipse& e, const BitMask& grass_mask, const FieldModel& model);

/// Vertical vanishing point from the imaged center circle once vp_h is known.
/// The polar of vp_h is the imaged halfway line; its two ellipse crossings and
/// the touchline point where it leaves the grass fix a 1D projective map whose
/// point at infinity is vp_v. A touchline segment within 15 px of the grass
/// boundary replaces the boundary point. Throws FallbackFailed.
VanishingPoint vp_from_conjugate_diameter(const Ellipse& e, const VanishingPoint& vp_h, const BitMask& grass_mask,
                                          std::span<const LineSegment> touchline_candidates,
                                          const FieldModel& model = standard_field());

std::vector<LineSegment> segments_from_json(const nlohmann::json& j);
std::vector<LineSegment> load_segments(const std::string& path);
nlohmann::json segments_to_json(std::span<const LineSegment> segments, std::span<const VpLabel> labels = {});

} // namespace fieldloc
