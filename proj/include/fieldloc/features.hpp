#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fieldloc/geometry.hpp"
#include "fieldloc/image.hpp"
#include "fieldloc/vp_estimation.hpp"

namespace fieldloc {

/// A fan of rays through one vanishing point, uniformly spaced in angle
/// (finite vp) or in perpendicular intercept (vp at infinity).
///
/// Cell k covers parameters [params[k], params[k+1]); the last cell only
/// holds points exactly on the last ray.
class RayFan
{
public:
    RayFan() = default;
    RayFan(const VanishingPoint& vp, double param_lo, double param_hi, int count, Point2 axis);

    const VanishingPoint& vp() const { return vp_; }
    int size() const { return static_cast<int>(params_.size()); }
    const std::vector<double>& params() const { return params_; }
    double step() const { return step_; }

    double param_of(Point2 p) const;
    /// Throws OutOfGrid outside [params.front(), params.back()].
    int cell_of(double param) const;
    /// Homogeneous image line of the ray with the given parameter.
    Vec3 line_at(double param) const;
    Vec3 ray(int k) const { return line_at(params_[static_cast<std::size_t>(k)]); }

    /// Pencil coordinate (tangent of the angle, or the intercept) of the ray
    /// through the homogeneous point x, as a ratio first / second.
    std::pair<double, double> pencil_of(const Vec3& x) const;

    /// Sets the pencil coordinate of the ray imaging the model point at
    /// infinity of the lines crossing this fan (the horizon).
    void set_horizon(std::pair<double, double> pq) { horizon_ = pq; }

    /// Fractional ray index of the model line at fraction u of the span
    /// mapped to rays a (u = 0) and b (u = 1).
    double model_index(double u, int a, int b) const;

private:
    double pencil_at(double param) const;
    double param_at_pencil(double s) const;

    VanishingPoint vp_;
    bool infinite_ = true;
    Point2 origin_;
    Point2 b_{1.0, 0.0}; // reference direction (finite fans)
    Point2 n_{0.0, 1.0}; // normal: parameter grows along it
    double theta0_ = 0.0;
    double step_ = 1.0;
    std::vector<double> params_;
    std::pair<double, double> horizon_{1.0, 0.0};
};

struct GridConfig
{
    int n_h = 256;
    int n_v = 256;
    double margin = 0.25; // fraction of the image diagonal
};

/// Two ray fans; h-cells index rows, v-cells index columns.
struct RayGrid
{
    RayFan h;
    RayFan v;
    ImageSize image_size;

    int n_h() const { return h.size(); }
    int n_v() const { return v.size(); }
};

RayGrid build_ray_grid(const VanishingPoint& vp_h, const VanishingPoint& vp_v, ImageSize image_size,
                       const GridConfig& cfg = {});

std::pair<int, int> cell_of_pixel(const RayGrid& grid, Point2 p);

/// Summed-area table over an rows x cols grid of cell counts.
class IntegralTable
{
public:
    IntegralTable() = default;
    IntegralTable(int rows, int cols);
    /// Builds the table from per-cell counts (row-major, rows x cols).
    static IntegralTable from_cells(int rows, int cols, std::span<const std::int64_t> cells);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::int64_t at(int i, int j) const { return data_[static_cast<std::size_t>(i) * (cols_ + 1) + j]; }
    std::int64_t total() const { return at(rows_, cols_); }
    const std::vector<std::int64_t>& data() const { return data_; }
    std::vector<std::int64_t>& data() { return data_; }

    /// Sum over cells [i_lo, i_hi) x [j_lo, j_hi). Throws RegionError.
    std::int64_t region_sum(int i_lo, int i_hi, int j_lo, int j_hi) const;
    /// Same, without range checks; empty or inverted ranges give 0.
    std::int64_t sum_clamped(int i_lo, int i_hi, int j_lo, int j_hi) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<std::int64_t> data_;
};

enum class AccClass { Grass = 0, NonGrass = 1, LineH = 2, LineV = 3, LineNone = 4 };
inline constexpr int kNumAccClasses = 5;

struct AccumulatorSet
{
    std::array<IntegralTable, kNumAccClasses> tables;
    long long dropped_pixels = 0; // pixels outside the ray grid

    const IntegralTable& table(AccClass c) const { return tables[static_cast<int>(c)]; }
    std::int64_t total(AccClass c) const { return table(c).total(); }
    int n_h() const { return tables[0].rows(); }
    int n_v() const { return tables[0].cols(); }
};

AccumulatorSet build_accumulators(const RayGrid& grid, const BitMask& grass, std::span<const LineSegment> segments,
                                  std::span<const VpLabel> labels);

/// Pixels of a segment as counted by the accumulators (deduplicated
/// consecutive visits, restricted to the image).
std::vector<std::pair<int, int>> segment_pixels(const LineSegment& s, ImageSize size);

void save_accumulators(const std::string& path, const AccumulatorSet& acc);
AccumulatorSet load_accumulators(const std::string& path);

} // namespace fieldloc
