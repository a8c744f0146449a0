#pragma once

#include "splatfont/camera.hpp"
#include "splatfont/gaussian.hpp"
#include "splatfont/image.hpp"
#include "splatfont/render.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace splatfont {

inline constexpr double kTurntableElevation = 10.0;
inline constexpr double kSilhouetteAlpha = 0.5;

/// `views` cameras at equally spaced azimuths starting from 0 degrees.
std::vector<Camera> turntable_cameras(int views, int size, double elevation_deg = kTurntableElevation,
                                      double radius = 2.5);

/// Mean SSIM over channels, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03.
double ssim(const Image& a, const Image& b);

/// Adjacent-view agreement over a turntable. Pairs are (i, i+1) and, for three
/// or more views, the closing pair (V-1, 0).
struct ViewConsistencyReport {
    int views = 0;
    std::vector<double> pair_mse;
    std::vector<double> pair_ssim;
    double mean_mse = 0.0;
    double mean_ssim = 0.0;

    nlohmann::json to_json() const;
};

ViewConsistencyReport view_consistency(const GaussianCloud& cloud, int views, int size, const RenderOptions& opts = {},
                                       double elevation_deg = kTurntableElevation);
ViewConsistencyReport view_consistency(const std::vector<Image>& renders);

/// IoU between the front-view silhouette (alpha >= threshold) and `mask`.
double silhouette_iou(const GaussianCloud& cloud, const Mask& mask, const RenderOptions& opts = {},
                      double alpha_threshold = kSilhouetteAlpha);

} // namespace splatfont
