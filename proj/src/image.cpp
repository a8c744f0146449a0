#include "splatfont/image.hpp"

#include "splatfont/error.hpp"

#include <algorithm>

namespace splatfont {

Mask dilate(const Mask& m, int radius) {
    Mask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx >= 0 && ny >= 0 && nx < m.width && ny < m.height) out.set(nx, ny, true);
                }
            }
        }
    }
    return out;
}

double mask_iou(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeMismatch("mask sizes differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool pa = a.data[i] != 0, pb = b.data[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask alpha_mask(const RenderedImage& img, double threshold) {
    Mask m(img.alpha.width, img.alpha.height);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = img.alpha.data[i] >= threshold;
    return m;
}

double mean_squared_error(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("image shapes differ");
    if (a.data.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

} // namespace splatfont
