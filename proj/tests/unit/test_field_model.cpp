#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "fieldloc/field_model.hpp"

using namespace fieldloc;

TEST_CASE("standard field line counts and halfway line")
{
    const FieldModel m = standard_field();
    const auto vert = std::count_if(m.lines.begin(), m.lines.end(),
                                    [](const ModelLine& l) { return l.orientation == Orientation::Vertical; });
    CHECK(vert == 7);
    CHECK(m.lines.size() - vert == 10);
    const auto half = std::find_if(m.lines.begin(), m.lines.end(), [](const ModelLine& l) {
        return l.orientation == Orientation::Vertical && l.offset == 52.5;
    });
    REQUIRE(half != m.lines.end());
    CHECK(half->lo == 0.0);
    CHECK(half->hi == 68.0);
    for (const auto& l : m.lines) CHECK(l.lo < l.hi);
}

TEST_CASE("circle rectangles")
{
    const FieldModel m = standard_field();
    const CircleRects c = circle_rects(m.circles[0]);
    CHECK(c.outer.x1 - c.outer.x0 == doctest::Approx(18.3));
    CHECK(c.outer.y1 - c.outer.y0 == doctest::Approx(18.3));
    CHECK((c.outer.x0 + c.outer.x1) / 2 == doctest::Approx(52.5));
    CHECK((c.outer.y0 + c.outer.y1) / 2 == doctest::Approx(34));
    CHECK(c.inner.x1 - c.inner.x0 == doctest::Approx(9.15 * std::sqrt(2.0)));
    CHECK(c.outer.contains(c.inner));

    const CircleRects unit = circle_rects(ModelCircle{0, {0, 0}, 1.0, std::nullopt});
    CHECK(unit.inner.x0 == doctest::Approx(-std::sqrt(0.5)));
    CHECK(unit.inner.y1 == doctest::Approx(std::sqrt(0.5)));
    CHECK(unit.outer.x0 == -1.0);
    CHECK(unit.outer.y1 == 1.0);

    const CircleRects left = circle_rects(m.circles[1]);
    CHECK(left.outer.x0 == doctest::Approx(16.5));
    CHECK(left.outer.x1 == doctest::Approx(20.15));
    CHECK(left.inner.x0 == doctest::Approx(16.5));
    CHECK(left.inner.x1 == doctest::Approx(11 + 9.15 * std::sqrt(0.5)));
    CHECK(left.outer.contains(left.inner));
    const CircleRects right = circle_rects(m.circles[2]);
    CHECK(right.outer.x0 == doctest::Approx(105 - 20.15));
    CHECK(right.outer.x1 == doctest::Approx(88.5));
}

TEST_CASE("model is mirror symmetric about the halfway line")
{
    const FieldModel m = standard_field();
    for (const auto& l : m.lines) {
        // Reflection x -> L - x.
        ModelLine r = l;
        if (l.orientation == Orientation::Vertical) {
            r.offset = m.length - l.offset;
        } else {
            r.lo = m.length - l.hi;
            r.hi = m.length - l.lo;
        }
        const bool found = std::any_of(m.lines.begin(), m.lines.end(), [&](const ModelLine& o) {
            return o.orientation == r.orientation && std::abs(o.offset - r.offset) < 1e-9 &&
                   std::abs(o.lo - r.lo) < 1e-9 && std::abs(o.hi - r.hi) < 1e-9;
        });
        CHECK(found);
    }
    CHECK(m.circles[1].center.x == doctest::Approx(m.length - m.circles[2].center.x));
    CHECK(m.circles[1].radius == m.circles[2].radius);
}

TEST_CASE("line endpoints lie on the boundary or on another line")
{
    const FieldModel m = standard_field();
    auto on_other = [&](const ModelLine& self, double x, double y) {
        if (x == 0 || x == m.length || y == 0 || y == m.width) return true;
        for (const auto& o : m.lines) {
            if (o.id == self.id) continue;
            if (o.orientation == Orientation::Vertical && std::abs(o.offset - x) < 1e-9 && y >= o.lo && y <= o.hi)
                return true;
            if (o.orientation == Orientation::Horizontal && std::abs(o.offset - y) < 1e-9 && x >= o.lo && x <= o.hi)
                return true;
        }
        return false;
    };
    for (const auto& l : m.lines) {
        if (l.orientation == Orientation::Vertical) {
            CHECK(on_other(l, l.offset, l.lo));
            CHECK(on_other(l, l.offset, l.hi));
        } else {
            CHECK(on_other(l, l.lo, l.offset));
            CHECK(on_other(l, l.hi, l.offset));
        }
    }
}

TEST_CASE("dimensions from json")
{
    auto d = dimensions_from_json(nlohmann::json{{"length", 100.0}, {"width", 64.0}});
    CHECK(d.length == 100.0);
    CHECK(d.width == 64.0);
    CHECK(d.circle_radius == 9.15);
    const FieldModel m = FieldModel::from_dimensions(d);
    CHECK(m.lines[6].offset == 100.0);
}
