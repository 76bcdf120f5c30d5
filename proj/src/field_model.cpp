#include "fieldloc/field_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "fieldloc/errors.hpp"

namespace fieldloc {

Rect Rect::intersect(const Rect& r) const
{
    return {std::max(x0, r.x0), std::max(y0, r.y0), std::min(x1, r.x1), std::min(y1, r.y1)};
}

FieldModel FieldModel::from_dimensions(const FieldDimensions& d)
{
    if (!(d.length > 0 && d.width > 0 && d.circle_radius > 0))
        throw InputError("field dimensions must be positive");
    if (2 * d.penalty_depth >= d.length || d.penalty_width >= d.width || d.goal_depth >= d.penalty_depth ||
        d.goal_width >= d.penalty_width)
        throw InputError("inconsistent penalty/goal area dimensions");

    FieldModel m;
    m.dims = d;
    m.length = d.length;
    m.width = d.width;
    const double L = d.length;
    const double W = d.width;
    const double cy = W / 2.0;
    const double pw = d.penalty_width / 2.0;
    const double gw = d.goal_width / 2.0;

    using O = Orientation;
    m.lines = {{
        {0, O::Vertical, 0.0, 0.0, W},
        {1, O::Vertical, d.goal_depth, cy - gw, cy + gw},
        {2, O::Vertical, d.penalty_depth, cy - pw, cy + pw},
        {3, O::Vertical, L / 2.0, 0.0, W},
        {4, O::Vertical, L - d.penalty_depth, cy - pw, cy + pw},
        {5, O::Vertical, L - d.goal_depth, cy - gw, cy + gw},
        {6, O::Vertical, L, 0.0, W},
        {7, O::Horizontal, 0.0, 0.0, L},
        {8, O::Horizontal, W, 0.0, L},
        {9, O::Horizontal, cy - pw, 0.0, d.penalty_depth},
        {10, O::Horizontal, cy + pw, 0.0, d.penalty_depth},
        {11, O::Horizontal, cy - pw, L - d.penalty_depth, L},
        {12, O::Horizontal, cy + pw, L - d.penalty_depth, L},
        {13, O::Horizontal, cy - gw, 0.0, d.goal_depth},
        {14, O::Horizontal, cy + gw, 0.0, d.goal_depth},
        {15, O::Horizontal, cy - gw, L - d.goal_depth, L},
        {16, O::Horizontal, cy + gw, L - d.goal_depth, L},
    }};

    const double r = d.circle_radius;
    m.circles[0] = {0, {L / 2.0, cy}, r, std::nullopt};
    m.circles[1] = {1, {d.penalty_mark, cy}, r, Rect{d.penalty_depth, 0.0, L, W}};
    m.circles[2] = {2, {L - d.penalty_mark, cy}, r, Rect{0.0, 0.0, L - d.penalty_depth, W}};
    return m;
}

FieldModel standard_field() { return FieldModel::from_dimensions(FieldDimensions{}); }

CircleRects circle_rects(const ModelCircle& c)
{
    const double hi = c.radius * std::numbers::sqrt2 / 2.0;
    const double ho = c.radius;
    CircleRects out{
        {c.center.x - hi, c.center.y - hi, c.center.x + hi, c.center.y + hi},
        {c.center.x - ho, c.center.y - ho, c.center.x + ho, c.center.y + ho},
    };
    if (c.visible_region) {
        out.inner = out.inner.intersect(*c.visible_region);
        out.outer = out.outer.intersect(*c.visible_region);
    }
    return out;
}

FieldDimensions dimensions_from_json(const nlohmann::json& j)
{
    FieldDimensions d;
    d.length = j.value("length", d.length);
    d.width = j.value("width", d.width);
    d.penalty_depth = j.value("penalty_depth", d.penalty_depth);
    d.penalty_width = j.value("penalty_width", d.penalty_width);
    d.goal_depth = j.value("goal_depth", d.goal_depth);
    d.goal_width = j.value("goal_width", d.goal_width);
    d.circle_radius = j.value("circle_radius", d.circle_radius);
    d.penalty_mark = j.value("penalty_mark", d.penalty_mark);
    return d;
}

FieldModel load_field_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad model file: ") + e.what());
    }
    return FieldModel::from_dimensions(dimensions_from_json(j));
}

std::array<Point2, 4> field_corners(const FieldModel& m)
{
    return {Point2{0.0, 0.0}, Point2{m.length, 0.0}, Point2{m.length, m.width}, Point2{0.0, m.width}};
}

} // namespace fieldloc
