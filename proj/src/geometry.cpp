#include "fieldloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "fieldloc/errors.hpp"

namespace fieldloc {

double norm(Point2 p) { return std::hypot(p.x, p.y); }

namespace {

Mat3 normalized(const Mat3& m)
{
    const double n = m.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateDLT("zero or non-finite matrix");
    Mat3 out = m / n;
    if (std::abs(out.determinant()) <= 1e-12) throw DegenerateDLT("singular homography");
    return out;
}

// Similarity normalizing a point set to centroid 0 and mean distance sqrt(2).
Mat3 conditioner(std::span<const Point2> pts)
{
    Point2 c{};
    for (const auto& p : pts) c = c + p;
    c = (1.0 / static_cast<double>(pts.size())) * c;
    double mean = 0.0;
    for (const auto& p : pts) mean += norm(p - c);
    mean /= static_cast<double>(pts.size());
    if (mean <= 0.0) throw DegenerateDLT("coincident points");
    const double s = std::numbers::sqrt2 / mean;
    Mat3 t;
    t << s, 0, -s * c.x, 0, s, -s * c.y, 0, 0, 1;
    return t;
}

bool any_three_collinear(std::span<const Point2> p)
{
    const std::size_t n = p.size();
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) scale = std::max(scale, norm(p[i] - p[j]));
    if (scale == 0.0) return true;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                const double area = std::abs(cross(p[j] - p[i], p[k] - p[i]));
                if (area <= 1e-10 * scale * scale) return true;
            }
    return false;
}

} // namespace

Homography::Homography() : m_(Mat3::Identity() / std::sqrt(3.0)) {}

Homography::Homography(const Mat3& m) : m_(normalized(m)) {}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Homography Homography::operator*(const Homography& rhs) const { return Homography(m_ * rhs.m_); }

std::array<double, 9> Homography::serialized() const
{
    Mat3 m = m_;
    if (std::abs(m(2, 2)) > 1e-9) m /= m(2, 2);
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(3 * r + c)] = m(r, c);
    return out;
}

Homography Homography::from_row_major(std::span<const double> v)
{
    if (v.size() != 9) throw InputError("homography needs 9 entries");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = v[static_cast<std::size_t>(3 * r + c)];
    return Homography(m);
}

VanishingPoint::VanishingPoint(const Vec3& v)
{
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateFrame("zero vanishing point");
    p = v / n;
    // Canonical sign: positive w, or positive dominant direction component at infinity.
    if (p.z() < 0.0 || (p.z() == 0.0 && (std::abs(p.x()) >= std::abs(p.y()) ? p.x() : p.y()) < 0.0))
        p = -p;
}

bool VanishingPoint::is_infinite() const
{
    return std::abs(p.z()) <= 1e-12 * std::hypot(p.x(), p.y());
}

Point2 VanishingPoint::point() const
{
    if (is_infinite()) throw PointAtInfinity("vanishing point is at infinity");
    return {p.x() / p.z(), p.y() / p.z()};
}

Point2 VanishingPoint::direction() const
{
    const double n = std::hypot(p.x(), p.y());
    return {p.x() / n, p.y() / n};
}

double cross_ratio_1d(double a, double b, double c, double d)
{
    const double bc = c - b;
    const double ad = d - a;
    const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d), 1.0});
    if (std::abs(bc) < 1e-12 * scale || std::abs(ad) < 1e-12 * scale)
        throw DegenerateCrossRatio("coincident points");
    return ((c - a) * (d - b)) / (bc * ad);
}

double cross_ratio(Point2 a, Point2 b, Point2 c, Point2 d)
{
    const std::array<Point2, 4> pts{a, b, c, d};
    // Supporting direction from the farthest pair.
    Point2 dir{};
    double best = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) {
            const double len = norm(pts[j] - pts[i]);
            if (len > best) {
                best = len;
                dir = (1.0 / len) * (pts[j] - pts[i]);
            }
        }
    if (best == 0.0) throw DegenerateCrossRatio("all points coincide");
    for (const auto& p : pts)
        if (std::abs(cross(dir, p - a)) > 1e-6 * std::max(best, 1.0))
            throw CollinearityError("points are not collinear");
    auto coord = [&](Point2 p) { return std::abs(dir.x) >= std::abs(dir.y) ? p.x : p.y; };
    return cross_ratio_1d(coord(a), coord(b), coord(c), coord(d));
}

Homography dlt_homography(std::span<const Point2> from, std::span<const Point2> to)
{
    if (from.size() != to.size() || from.size() < 4)
        throw DegenerateDLT("need at least 4 correspondences");
    if (from.size() == 4 && (any_three_collinear(from) || any_three_collinear(to)))
        throw DegenerateDLT("three collinear points");

    const Mat3 tf = conditioner(from);
    const Mat3 tt = conditioner(to);
    const auto n = static_cast<Eigen::Index>(from.size());
    Eigen::MatrixXd a(2 * n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 p = tf * homogeneous(from[static_cast<std::size_t>(i)]);
        const Vec3 q = tt * homogeneous(to[static_cast<std::size_t>(i)]);
        a.row(2 * i) << 0, 0, 0, -q.z() * p.transpose(), q.y() * p.transpose();
        a.row(2 * i + 1) << q.z() * p.transpose(), 0, 0, 0, -q.x() * p.transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    return Homography(tt.inverse() * hn * tf);
}

Point2 apply_homography(const Homography& h, Point2 p)
{
    const Vec3 q = h.apply(homogeneous(p));
    const double scale = std::max(std::abs(q.x()), std::abs(q.y()));
    if (std::abs(q.z()) <= 1e-12 * std::max(scale, 1e-300) || q.z() == 0.0)
        throw PointAtInfinity("point maps to infinity");
    return {q.x() / q.z(), q.y() / q.z()};
}

double projective_fraction(double u, double p, double q)
{
    if (q == 0.0) return u;
    const double den = q * u + p - q;
    if (den == 0.0) throw DegenerateFrame("model point maps to infinity");
    return p * u / den;
}

double project_model_coordinate(double t, Point2 anchor_lo, Point2 anchor_hi, double span_len,
                                const VanishingPoint& vp)
{
    if (!(span_len > 0.0)) throw DegenerateFrame("non-positive span length");
    const Point2 ab = anchor_hi - anchor_lo;
    const double len2 = dot(ab, ab);
    if (len2 <= 0.0) throw DegenerateFrame("coincident anchors");

    // Position of the vanishing point along the anchor line, as p/q.
    const Vec3& v = vp.p;
    const Point2 vxy{v.x() - v.z() * anchor_lo.x, v.y() - v.z() * anchor_lo.y};
    const double off_line = std::abs(cross(ab, vxy)) / std::sqrt(len2);
    if (off_line > 1e-6 * std::max(norm(vxy), 1e-300) * std::max(1.0, std::sqrt(len2)))
        throw DegenerateFrame("vanishing point not on the anchor line");
    const double p = dot(vxy, ab);
    const double q = v.z() * len2;
    if (q != 0.0) {
        const double frac_vp = p / q;
        if (frac_vp >= 0.0 && frac_vp <= 1.0)
            throw DegenerateFrame("vanishing point between anchors");
    }
    return projective_fraction(t / span_len, p, q);
}

double angular_error_deg(const VanishingPoint& a, const VanishingPoint& b, Point2 origin)
{
    auto dir = [&](const VanishingPoint& v) {
        const Vec3& h = v.p;
        return Point2{h.x() - h.z() * origin.x, h.y() - h.z() * origin.y};
    };
    const Point2 da = dir(a);
    const Point2 db = dir(b);
    const double ang = std::atan2(std::abs(cross(da, db)), std::abs(dot(da, db)));
    return ang * 180.0 / std::numbers::pi;
}

} // namespace fieldloc
