#pragma once

#include <array>
#include <optional>
#include <string>

#include "json.hpp"

#include "fieldloc/geometry.hpp"

namespace fieldloc {

// Model coordinates: x runs along the touchlines (0..length), y along the
// goallines (0..width). "Vertical" lines are parallel to the goallines
// (constant x); "horizontal" lines are parallel to the touchlines.
enum class Orientation { Vertical, Horizontal };

struct ModelLine
{
    int id = 0;
    Orientation orientation = Orientation::Vertical;
    double offset = 0.0; // x for vertical lines, y for horizontal lines
    double lo = 0.0;     // extent along the line
    double hi = 0.0;
};

struct Rect
{
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    bool empty() const { return !(x0 < x1 && y0 < y1); }
    bool contains(const Rect& r) const
    {
        return r.x0 >= x0 && r.x1 <= x1 && r.y0 >= y0 && r.y1 <= y1;
    }
    Rect intersect(const Rect& r) const;
};

struct ModelCircle
{
    int id = 0;
    Point2 center;
    double radius = 0.0;
    /// Arcs are clipped to this rectangle (the part outside the penalty area).
    std::optional<Rect> visible_region;
};

struct CircleRects
{
    Rect inner;
    Rect outer;
};

struct FieldDimensions
{
    double length = 105.0;
    double width = 68.0;
    double penalty_depth = 16.5;
    double penalty_width = 40.32;
    double goal_depth = 5.5;
    double goal_width = 18.32;
    double circle_radius = 9.15;
    double penalty_mark = 11.0;
};

inline constexpr int kNumLines = 17;
inline constexpr int kNumCircles = 3;

struct FieldModel
{
    FieldDimensions dims;
    double length = 0.0;
    double width = 0.0;
    std::array<ModelLine, kNumLines> lines;
    std::array<ModelCircle, kNumCircles> circles;

    static FieldModel from_dimensions(const FieldDimensions& d);
};

FieldModel standard_field();

CircleRects circle_rects(const ModelCircle& c);

FieldDimensions dimensions_from_json(const nlohmann::json& j);
FieldModel load_field_model(const std::string& path);

/// Model rectangle corners in the order (0,0), (L,0), (L,W), (0,W).
std::array<Point2, 4> field_corners(const FieldModel& m);

} // namespace fieldloc
