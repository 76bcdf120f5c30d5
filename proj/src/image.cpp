#include "fieldloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <png.h>

#include "fieldloc/errors.hpp"

namespace fieldloc {

long long BitMask::count() const
{
    return std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; });
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    if (x < 0 || y < 0 || x >= size.width || y >= size.height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * size.width + x) * 3;
    data[i] = r;
    data[i + 1] = g;
    data[i + 2] = b;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                                                    [](char a, char b) { return std::tolower(a) == b; });
}

BitMask read_pgm(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open mask " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw InputError("not a PGM file: " + path);
    auto next_int = [&]() {
        int v = 0;
        while (in >> std::ws && in.peek() == '#') in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
        if (!(in >> v)) throw InputError("truncated PGM header: " + path);
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw InputError("unsupported PGM: " + path);
    BitMask m(ImageSize{w, h});
    if (magic == "P5") {
        in.get();
        std::vector<char> buf(static_cast<std::size_t>(w) * h);
        if (!in.read(buf.data(), static_cast<std::streamsize>(buf.size())))
            throw InputError("truncated PGM data: " + path);
        for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] != 0 ? 1 : 0;
    } else {
        for (auto& v : m.data) v = next_int() != 0 ? 1 : 0;
    }
    return m;
}

void write_pgm(const std::string& path, const BitMask& mask)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << "P5\n" << mask.size.width << ' ' << mask.size.height << "\n255\n";
    std::vector<char> buf(mask.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] ? static_cast<char>(255) : 0;
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

BitMask read_png_mask(const std::string& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw InputError("cannot read PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw InputError("cannot decode PNG " + path + ": " + image.message);
    }
    BitMask m(ImageSize{static_cast<int>(image.width), static_cast<int>(image.height)});
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = buf[i] != 0 ? 1 : 0;
    return m;
}

void write_png_raw(const std::string& path, int w, int h, std::uint32_t format, const std::uint8_t* px)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = format;
    if (!png_image_write_to_file(&image, path.c_str(), 0, px, 0, nullptr))
        throw InputError("cannot write PNG " + path + ": " + image.message);
}

} // namespace

BitMask read_mask(const std::string& path)
{
    if (ends_with(path, ".png")) return read_png_mask(path);
    return read_pgm(path);
}

void write_mask(const std::string& path, const BitMask& mask)
{
    if (ends_with(path, ".png")) {
        std::vector<std::uint8_t> buf(mask.data.size());
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] ? 255 : 0;
        write_png_raw(path, mask.size.width, mask.size.height, PNG_FORMAT_GRAY, buf.data());
        return;
    }
    write_pgm(path, mask);
}

void write_png(const std::string& path, const RgbImage& img)
{
    write_png_raw(path, img.size.width, img.size.height, PNG_FORMAT_RGB, img.data.data());
}

BitMask threshold_grass(const RgbImage& img)
{
    BitMask m(img.size);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const int r = img.data[3 * i];
        const int g = img.data[3 * i + 1];
        const int b = img.data[3 * i + 2];
        // Green dominant and not too dark.
        m.data[i] = (g > 40 && g > r + 10 && g > b + 10) ? 1 : 0;
    }
    return m;
}

BitMask dilate(const BitMask& mask, int radius)
{
    if (radius <= 0) return mask;
    const int w = mask.size.width;
    const int h = mask.size.height;
    // Separable max filter.
    BitMask tmp(mask.size);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius) && !v; ++k) v = mask.at(k, y);
            tmp.at(x, y) = v;
        }
    BitMask out(mask.size);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius) && !v; ++k) v = tmp.at(x, k);
            out.at(x, y) = v;
        }
    return out;
}

namespace {

// 1D squared distance transform of a sampled function (lower envelope of
// parabolas rooted at the finite samples).
void dt_1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == inf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -inf;
            z[1] = inf;
            continue;
        }
        double s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (k > 0 && s <= z[k]) {
            --k;
            s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[q] = inf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double dq = q - v[j];
        d[q] = dq * dq + f[v[j]];
    }
}

} // namespace

std::vector<double> distance_transform(const BitMask& features)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    const int w = features.size.width;
    const int h = features.size.height;
    std::vector<double> grid(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = features.data[i] ? 0.0 : inf;

    const int n = std::max(w, h);
    std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
        dt_1d(f.data(), h, d.data(), v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
        dt_1d(f.data(), w, d.data(), v, z);
        for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
    }
    return grid;
}

void draw_line(RgbImage& img, Point2 a, Point2 b, int thickness, std::uint8_t r, std::uint8_t g,
               std::uint8_t bl)
{
    const int rad = std::max(0, thickness / 2);
    rasterize_segment(a, b, [&](int x, int y) {
        for (int dy = -rad; dy <= rad - (thickness % 2 == 0 ? 1 : 0); ++dy)
            for (int dx = -rad; dx <= rad - (thickness % 2 == 0 ? 1 : 0); ++dx) img.set(x + dx, y + dy, r, g, bl);
    });
}

} // namespace fieldloc
