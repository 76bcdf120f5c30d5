#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fieldloc/geometry.hpp"

namespace fieldloc {

struct ImageSize
{
    int width = 0;
    int height = 0;

    long long pixels() const { return static_cast<long long>(width) * height; }
    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Binary mask, one byte per pixel (0 or 1), row-major.
struct BitMask
{
    ImageSize size;
    std::vector<std::uint8_t> data;

    BitMask() = default;
    BitMask(ImageSize s, std::uint8_t fill = 0)
        : size(s), data(static_cast<std::size_t>(s.pixels()), fill)
    {
    }

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < size.width && y < size.height; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * size.width + x]; }
    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * size.width + x]; }
    long long count() const;
};

struct RgbImage
{
    ImageSize size;
    std::vector<std::uint8_t> data; // interleaved RGB

    explicit RgbImage(ImageSize s) : size(s), data(static_cast<std::size_t>(s.pixels()) * 3, 0) {}
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Reads an 8-bit grayscale PGM (P5/P2) or PNG; nonzero pixels become 1.
BitMask read_mask(const std::string& path);
/// Writes 0/255 grayscale; format chosen by extension (.png or .pgm).
void write_mask(const std::string& path, const BitMask& mask);
void write_png(const std::string& path, const RgbImage& img);

/// Pixels visited by integer stepping from a to b (one per 1 px step).
template <typename Fn>
void rasterize_segment(Point2 a, Point2 b, Fn&& visit);

/// Grass mask from an RGB image by a simple hue/saturation threshold.
BitMask threshold_grass(const RgbImage& img);

/// Dilates a mask with a square structuring element of the given radius.
BitMask dilate(const BitMask& mask, int radius);

/// Exact squared Euclidean distance transform to the nonzero pixels.
std::vector<double> distance_transform(const BitMask& features);

void draw_line(RgbImage& img, Point2 a, Point2 b, int thickness, std::uint8_t r, std::uint8_t g,
               std::uint8_t bl);

// ---------------------------------------------------------------------------

template <typename Fn>
void rasterize_segment(Point2 a, Point2 b, Fn&& visit)
{
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const auto steps = static_cast<long>(std::ceil(std::max(std::abs(dx), std::abs(dy))));
    if (steps == 0) {
        visit(static_cast<int>(std::lround(a.x)), static_cast<int>(std::lround(a.y)));
        return;
    }
    for (long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(steps);
        visit(static_cast<int>(std::lround(a.x + t * dx)), static_cast<int>(std::lround(a.y + t * dy)));
    }
}

} // namespace fieldloc
