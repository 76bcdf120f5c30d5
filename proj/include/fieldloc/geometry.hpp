#pragma once

#include <array>
#include <span>

#include <Eigen/Dense>

namespace fieldloc {

struct Point2
{
    double x = 0.0;
    double y = 0.0;

    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
double norm(Point2 p);

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Vec3 homogeneous(Point2 p) { return {p.x, p.y, 1.0}; }

/// Homogeneous line through two points, or point where two lines meet.
inline Vec3 join(const Vec3& a, const Vec3& b) { return a.cross(b); }

/// Planar projective transform. Stored with unit Frobenius norm; the
/// m[2][2] = 1 form is produced only by `serialized()`.
class Homography
{
public:
    Homography();
    explicit Homography(const Mat3& m);

    static Homography identity() { return Homography(); }

    const Mat3& matrix() const { return m_; }
    Homography inverse() const;
    Homography operator*(const Homography& rhs) const;

    Vec3 apply(const Vec3& p) const { return m_ * p; }

    /// Row-major, scaled so m[2][2] = 1 when |m[2][2]| > 1e-9.
    std::array<double, 9> serialized() const;
    static Homography from_row_major(std::span<const double> v);

private:
    Mat3 m_;
};

/// A vanishing point in homogeneous form; w == 0 is a point at infinity.
struct VanishingPoint
{
    Vec3 p{0.0, 0.0, 1.0};

    VanishingPoint() = default;
    explicit VanishingPoint(const Vec3& v);
    static VanishingPoint finite(Point2 q) { return VanishingPoint(homogeneous(q)); }
    static VanishingPoint at_infinity(Point2 dir) { return VanishingPoint(Vec3{dir.x, dir.y, 0.0}); }

    bool is_infinite() const;
    Point2 point() const; // throws PointAtInfinity when infinite
    /// Unit direction towards the point at infinity (only meaningful if infinite).
    Point2 direction() const;
};

/// Cross ratio (AC*BD)/(BC*AD) of four collinear points, signed distances
/// measured along the dominant axis of the supporting line.
double cross_ratio(Point2 a, Point2 b, Point2 c, Point2 d);

/// Cross ratio of four positions on a parametrized line.
double cross_ratio_1d(double a, double b, double c, double d);

/// DLT from exactly four (or more, least squares) correspondences,
/// mapping `from[i]` to `to[i]`.
Homography dlt_homography(std::span<const Point2> from, std::span<const Point2> to);

Point2 apply_homography(const Homography& h, Point2 p);

/// 1D projective map on [0,1] fixing 0 and 1 and sending the model point at
/// infinity to the fractional position p/q (q == 0 means affine). Returns
/// the image fraction of model fraction `u`.
double projective_fraction(double u, double p, double q);

/// Position of model coordinate `t` (0..span_len) on the image segment
/// [anchor_lo, anchor_hi], given that the model point at infinity of that
/// line is imaged at `vp`. Returned as a fraction of the anchor segment.
double project_model_coordinate(double t, Point2 anchor_lo, Point2 anchor_hi, double span_len,
                                const VanishingPoint& vp);

/// Smallest angle in degrees between the lines through `origin` towards
/// `a` and `b` (directions taken modulo 180 degrees).
double angular_error_deg(const VanishingPoint& a, const VanishingPoint& b, Point2 origin);

} // namespace fieldloc
