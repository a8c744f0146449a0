#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace splatfont {

/// Row-major H x W x C image of doubles.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool empty() const { return data.empty(); }
};

/// Binary foreground mask, 1 = foreground.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v != 0;
        return n;
    }
};

/// Output of the rasterizer: composited RGB plus accumulated opacity.
struct RenderedImage {
    Image pixels; // H x W x 3
    Image alpha;  // H x W x 1

    int width() const { return pixels.width; }
    int height() const { return pixels.height; }
};

/// 1-pixel dilation with an 8-neighbourhood.
Mask dilate(const Mask& m, int radius = 1);

/// IoU of two same-sized masks; 0 when both are empty.
double mask_iou(const Mask& a, const Mask& b);

/// Pixels whose alpha is at least `threshold`.
Mask alpha_mask(const RenderedImage& img, double threshold = 0.5);

double mean_squared_error(const Image& a, const Image& b);

} // namespace splatfont
