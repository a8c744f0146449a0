#pragma once

#include "splatfont/camera.hpp"
#include "splatfont/gaussian.hpp"
#include "splatfont/glyph2cloud.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace splatfont {

inline constexpr double kDefaultDcaBeta = 0.02;
inline constexpr double kDefaultDcaDelta = 1e-8;

/// Per-pixel component labels on the front-view plane. Labels are the
/// component_id values of the heatmaps the map was built from.
struct ComponentLabelMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels; // row-major
    double beta = kDefaultDcaBeta;
    double delta = kDefaultDcaDelta;
    std::vector<Vec2> centroids;    // one per heatmap, pixel coordinates
    std::vector<int> component_ids; // parallel to centroids

    int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

/// Heatmap-weighted mean pixel position (x, y). Throws ZeroMass.
Vec2 centroid(const ComponentHeatmap& h);

/// label(p) = argmax_m log(H_m(p) + delta) - beta * |p - centroid_m|.
/// Ties go to the earliest heatmap in the list.
ComponentLabelMap build_label_map(std::span<const ComponentHeatmap> heatmaps, double beta = kDefaultDcaBeta,
                                  double delta = kDefaultDcaDelta);

/// Relabels each Gaussian from the label under its projected centre (rounded,
/// clamped to the image). Gaussians behind the front camera keep their label.
/// Returns how many labels changed.
std::size_t assign_gaussians(GaussianCloud& cloud, const ComponentLabelMap& labelmap, const Camera& front_cam);

/// Indexed PNG; palette entry i colours component_ids[i].
void write_label_map_png(const std::filesystem::path& path, const ComponentLabelMap& labelmap);

} // namespace splatfont
