#include "doctest.h"

#include "fieldloc/errors.hpp"
#include "fieldloc/geometry.hpp"
#include "test_util.hpp"

using namespace fieldloc;
using testutil::uniform;

namespace {

Point2 on_line(Point2 origin, Point2 dir, double t) { return origin + t * dir; }

} // namespace

TEST_CASE("cross ratio of known positions")
{
    const Point2 o{3, -1};
    const Point2 d{0.6, 0.8};
    CHECK(cross_ratio(on_line(o, d, 0), on_line(o, d, 2), on_line(o, d, 3), on_line(o, d, 6)) ==
          doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cross_ratio(on_line(o, d, 0), on_line(o, d, 1), on_line(o, d, 2), on_line(o, d, 3)) ==
          doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(cross_ratio_1d(0, 2, 3, 6) == doctest::Approx(2.0));
}

TEST_CASE("cross ratio errors")
{
    CHECK_THROWS_AS(cross_ratio({0, 0}, {1, 0}, {2, 0}, {3, 1}), CollinearityError);
    CHECK_THROWS_AS(cross_ratio({0, 0}, {1, 0}, {1, 0}, {3, 0}), DegenerateCrossRatio);
}

TEST_CASE("cross ratio is invariant under random projective maps of the line")
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        // 1D map x -> (a x + b) / (c x + d), positive denominator on the samples.
        const double a = uniform(rng, 0.5, 3), b = uniform(rng, -5, 5), c = uniform(rng, -0.05, 0.05), d = 1.0;
        double x[4];
        for (auto& v : x) v = uniform(rng, 0, 10);
        std::sort(x, x + 4);
        if (x[1] - x[0] < 1e-3 || x[2] - x[1] < 1e-3 || x[3] - x[2] < 1e-3) continue;
        const Point2 o{uniform(rng, -50, 50), uniform(rng, -50, 50)};
        const double ang = uniform(rng, 0, 3.14159);
        const Point2 dir{std::cos(ang), std::sin(ang)};
        auto map = [&](double v) { return (a * v + b) / (c * v + d); };
        const double before = cross_ratio(on_line(o, dir, x[0]), on_line(o, dir, x[1]), on_line(o, dir, x[2]),
                                          on_line(o, dir, x[3]));
        const double after = cross_ratio(on_line(o, dir, map(x[0])), on_line(o, dir, map(x[1])),
                                         on_line(o, dir, map(x[2])), on_line(o, dir, map(x[3])));
        CHECK(std::abs(before - after) <= 1e-9 * std::max(1.0, std::abs(before)));
    }
}

TEST_CASE("dlt identity and translation")
{
    const std::array<Point2, 4> sq{Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
    const Homography id = dlt_homography(sq, sq);
    const auto s = id.serialized();
    const double expect[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) CHECK(s[i] == doctest::Approx(expect[i]).epsilon(1e-10));

    std::array<Point2, 4> moved;
    for (int i = 0; i < 4; ++i) moved[i] = sq[i] + Point2{5, 7};
    const auto t = dlt_homography(sq, moved).serialized();
    const double expect_t[9] = {1, 0, 5, 0, 1, 7, 0, 0, 1};
    for (int i = 0; i < 9; ++i) CHECK(t[i] == doctest::Approx(expect_t[i]).epsilon(1e-10));
}

TEST_CASE("dlt recovers a random homography")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Homography h = testutil::random_field_homography(rng);
        const auto model = field_corners(standard_field());
        std::array<Point2, 4> img;
        for (int i = 0; i < 4; ++i) img[i] = apply_homography(h, model[i]);
        const Homography est = dlt_homography(model, img);
        for (int i = 0; i < 4; ++i) {
            const Point2 p = apply_homography(est, model[i]);
            CHECK(norm(p - img[i]) < 1e-8);
        }
        const auto a = h.serialized();
        const auto b = est.serialized();
        for (int i = 0; i < 9; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-8 * std::max(1.0, std::abs(a[i])));
    }
}

TEST_CASE("dlt rejects collinear configurations")
{
    const std::array<Point2, 4> bad{Point2{0, 0}, Point2{1, 1}, Point2{2, 2}, Point2{0, 1}};
    const std::array<Point2, 4> sq{Point2{0, 0}, Point2{1, 0}, Point2{1, 1}, Point2{0, 1}};
    CHECK_THROWS_AS(dlt_homography(bad, sq), DegenerateDLT);
    CHECK_THROWS_AS(dlt_homography(sq, bad), DegenerateDLT);
}

TEST_CASE("apply_homography")
{
    CHECK(apply_homography(Homography::identity(), {3, 4}) == Point2{3, 4});
    Mat3 s = Mat3::Identity();
    s(0, 0) = s(1, 1) = 2;
    const Point2 p = apply_homography(Homography(s), {1, 1});
    CHECK(p.x == doctest::Approx(2));
    CHECK(p.y == doctest::Approx(2));

    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
        const Homography h = testutil::random_field_homography(rng);
        const Point2 q{uniform(rng, 0, 105), uniform(rng, 0, 68)};
        const Point2 back = apply_homography(h.inverse(), apply_homography(h, q));
        CHECK(norm(back - q) < 1e-9);
    }
    Mat3 proj = Mat3::Identity();
    proj(2, 0) = 1;
    proj(2, 2) = 0;
    proj(0, 2) = 1;
    CHECK_THROWS_AS(apply_homography(Homography(proj), {0, 5}), PointAtInfinity);
}

TEST_CASE("project_model_coordinate frame endpoints and affine midpoint")
{
    const VanishingPoint inf = VanishingPoint::at_infinity({1, 0});
    CHECK(project_model_coordinate(0, {0, 0}, {10, 0}, 105, inf) == 0.0);
    CHECK(project_model_coordinate(105, {0, 0}, {10, 0}, 105, inf) == doctest::Approx(1.0));
    CHECK(project_model_coordinate(52.5, {0, 0}, {10, 0}, 105, inf) == doctest::Approx(0.5));
    const VanishingPoint far = VanishingPoint::finite({200, 0});
    CHECK(project_model_coordinate(0, {0, 0}, {10, 0}, 105, far) == 0.0);
    CHECK(project_model_coordinate(105, {0, 0}, {10, 0}, 105, far) == doctest::Approx(1.0));
    CHECK_THROWS_AS(project_model_coordinate(10, {0, 0}, {10, 0}, 105, VanishingPoint::finite({5, 3})),
                    DegenerateFrame);
}

TEST_CASE("project_model_coordinate matches the full homography")
{
    std::mt19937_64 rng(21);
    const double L = 105.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Homography h = testutil::random_field_homography(rng);
        const double y = uniform(rng, 0, 68);
        const Point2 a = apply_homography(h, {0, y});
        const Point2 b = apply_homography(h, {L, y});
        const VanishingPoint vp(h.apply(Vec3{1, 0, 0}));
        const double t = uniform(rng, 0, L);
        const Point2 p = apply_homography(h, {t, y});
        const double oracle = dot(p - a, b - a) / dot(b - a, b - a);
        const double got = project_model_coordinate(t, a, b, L, vp);
        CHECK(std::abs(got - oracle) * norm(b - a) < 1e-6 * norm(b - a) + 1e-12);
    }
}

TEST_CASE("project_model_coordinate is monotone in t")
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Homography h = testutil::random_field_homography(rng);
        const Point2 a = apply_homography(h, {0, 0});
        const Point2 b = apply_homography(h, {105, 0});
        const VanishingPoint vp(h.apply(Vec3{1, 0, 0}));
        double prev = -1.0;
        for (double t = 0; t <= 105.0; t += 1.5) {
            const double f = project_model_coordinate(t, a, b, 105, vp);
            CHECK(f > prev);
            prev = f;
        }
    }
}

TEST_CASE("angular error between vanishing points")
{
    const Point2 c{0, 0};
    CHECK(angular_error_deg(VanishingPoint::finite({100, 0}), VanishingPoint::finite({-100, 0}), c) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(angular_error_deg(VanishingPoint::finite({100, 0}), VanishingPoint::at_infinity({0, 1}), c) ==
          doctest::Approx(90.0));
    CHECK(angular_error_deg(VanishingPoint::finite({100, 100}), VanishingPoint::at_infinity({1, 0}), c) ==
          doctest::Approx(45.0));
}

TEST_CASE("homography serialization")
{
    Mat3 m;
    m << 2, 0, 4, 0, 2, 6, 0, 0, 2;
    const auto s = Homography(m).serialized();
    CHECK(s[8] == 1.0);
    CHECK(s[2] == doctest::Approx(2.0));
    const auto back = Homography::from_row_major(s).serialized();
    for (int i = 0; i < 9; ++i) CHECK(back[i] == doctest::Approx(s[i]));
    Mat3 singular = Mat3::Zero();
    singular(0, 0) = 1;
    CHECK_THROWS_AS(Homography{singular}, DegenerateDLT);
}
