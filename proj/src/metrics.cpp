#include "splatfont/metrics.hpp"

#include "splatfont/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splatfont {

std::vector<Camera> turntable_cameras(int views, int size, double elevation_deg, double radius) {
    std::vector<Camera> cams;
    for (int i = 0; i < views; ++i)
        cams.push_back(orbit_camera(360.0 * i / views, elevation_deg, radius, size, size));
    return cams;
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("ssim inputs differ in shape");
    constexpr int radius = 5;
    constexpr double sigma = 1.5;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double kernel[2 * radius + 1];
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) ksum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& k : kernel) k /= ksum;

    const int w = a.width, h = a.height;
    // Separable blur with clamped borders.
    auto blur = [&](const std::vector<double>& src) {
        std::vector<double> tmp(src.size()), out(src.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * src[y * w + std::clamp(x + k, 0, w - 1)];
                tmp[y * w + x] = s;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k) s += kernel[k + radius] * tmp[std::clamp(y + k, 0, h - 1) * w + x];
                out[y * w + x] = s;
            }
        return out;
    };

    double total = 0.0;
    const std::size_t n = a.pixel_count();
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.data[i * a.channels + c];
            y[i] = b.data[i * b.channels + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = blur(x), my = blur(y), sxx = blur(xx), syy = blur(yy), sxy = blur(xy);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
            acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += acc / static_cast<double>(n);
    }
    return total / a.channels;
}

nlohmann::json ViewConsistencyReport::to_json() const {
    return {{"views", views}, {"pair_mse", pair_mse}, {"pair_ssim", pair_ssim}, {"mean_mse", mean_mse},
            {"mean_ssim", mean_ssim}};
}

ViewConsistencyReport view_consistency(const std::vector<Image>& renders) {
    if (renders.size() < 2) throw Error("view consistency needs at least two views");
    ViewConsistencyReport rep;
    rep.views = static_cast<int>(renders.size());
    const std::size_t pairs = renders.size() == 2 ? 1 : renders.size();
    for (std::size_t i = 0; i < pairs; ++i) {
        const Image& a = renders[i];
        const Image& b = renders[(i + 1) % renders.size()];
        rep.pair_mse.push_back(mean_squared_error(a, b));
        rep.pair_ssim.push_back(ssim(a, b));
    }
    rep.mean_mse = std::accumulate(rep.pair_mse.begin(), rep.pair_mse.end(), 0.0) / pairs;
    rep.mean_ssim = std::accumulate(rep.pair_ssim.begin(), rep.pair_ssim.end(), 0.0) / pairs;
    return rep;
}

ViewConsistencyReport view_consistency(const GaussianCloud& cloud, int views, int size, const RenderOptions& opts,
                                       double elevation_deg) {
    std::vector<Image> renders;
    for (const Camera& cam : turntable_cameras(views, size, elevation_deg))
        renders.push_back(render(cloud, cam, std::nullopt, opts).pixels);
    return view_consistency(renders);
}

double silhouette_iou(const GaussianCloud& cloud, const Mask& mask, const RenderOptions& opts, double alpha_threshold) {
    const Camera cam = front_camera(mask.width, mask.height);
    const RenderedImage img = render(cloud, cam, std::nullopt, opts);
    return mask_iou(alpha_mask(img, alpha_threshold), mask);
}

} // namespace splatfont
