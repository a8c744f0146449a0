#include "splatfont/dca.hpp"

#include "splatfont/error.hpp"
#include "splatfont/image_io.hpp"
#include "splatfont/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace splatfont {

Vec2 centroid(const ComponentHeatmap& h) {
    double mass = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < h.height(); ++y) {
        for (int x = 0; x < h.width(); ++x) {
            const double v = h.at(x, y);
            mass += v;
            sx += v * x;
            sy += v * y;
        }
    }
    if (!(mass > 0.0)) throw ZeroMass("heatmap for component " + std::to_string(h.component_id) + " sums to zero");
    return Vec2(sx / mass, sy / mass);
}

ComponentLabelMap build_label_map(std::span<const ComponentHeatmap> heatmaps, double beta, double delta) {
    if (heatmaps.empty()) throw Error("label map needs at least one heatmap");
    if (!(delta > 0.0)) throw Error("delta must be positive");
    if (!(beta >= 0.0)) throw Error("beta must be non-negative");
    const int w = heatmaps.front().width(), h = heatmaps.front().height();
    for (const auto& hm : heatmaps)
        if (hm.width() != w || hm.height() != h) throw ShapeMismatch("heatmaps differ in resolution");

    ComponentLabelMap out;
    out.width = w;
    out.height = h;
    out.beta = beta;
    out.delta = delta;
    out.labels.assign(static_cast<std::size_t>(w) * h, heatmaps.front().component_id);
    for (const auto& hm : heatmaps) {
        out.centroids.push_back(centroid(hm));
        out.component_ids.push_back(hm.component_id);
    }

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_m = 0;
            for (std::size_t m = 0; m < heatmaps.size(); ++m) {
                const double dist = (Vec2(x, y) - out.centroids[m]).norm();
                const double score = std::log(heatmaps[m].at(x, y) + delta) - beta * dist;
                if (score > best) {
                    best = score;
                    best_m = m;
                }
            }
            out.labels[static_cast<std::size_t>(y) * w + x] = out.component_ids[best_m];
        }
    }
    return out;
}

std::size_t assign_gaussians(GaussianCloud& cloud, const ComponentLabelMap& labelmap, const Camera& front_cam) {
    if (front_cam.width != labelmap.width || front_cam.height != labelmap.height)
        throw ShapeMismatch("label map resolution must match the front camera image size");
    std::size_t changed = 0;
    for (auto& g : cloud.gaussians) {
        const Vec3 t = front_cam.to_camera(g.position);
        if (!(t.z() > ProjectOptions{}.near)) continue;
        const double u = front_cam.focal * t.x() / t.z() + front_cam.principal_point.x();
        const double v = front_cam.focal * t.y() / t.z() + front_cam.principal_point.y();
        const int px = static_cast<int>(std::clamp(std::round(u), 0.0, static_cast<double>(labelmap.width - 1)));
        const int py = static_cast<int>(std::clamp(std::round(v), 0.0, static_cast<double>(labelmap.height - 1)));
        const int label = labelmap.at(px, py);
        if (g.component_id != label) ++changed;
        g.component_id = label;
        cloud.num_components = std::max(cloud.num_components, label + 1);
    }
    return changed;
}

void write_label_map_png(const std::filesystem::path& path, const ComponentLabelMap& labelmap) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 8> kColors = {{{230, 25, 75},
                                                                           {60, 180, 75},
                                                                           {0, 130, 200},
                                                                           {255, 225, 25},
                                                                           {145, 30, 180},
                                                                           {245, 130, 48},
                                                                           {70, 240, 240},
                                                                           {128, 128, 128}}};
    std::vector<std::array<std::uint8_t, 3>> palette;
    for (std::size_t i = 0; i < labelmap.component_ids.size(); ++i) palette.push_back(kColors[i % kColors.size()]);
    std::vector<std::uint8_t> idx(labelmap.labels.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto it = std::find(labelmap.component_ids.begin(), labelmap.component_ids.end(), labelmap.labels[i]);
        idx[i] = static_cast<std::uint8_t>(it - labelmap.component_ids.begin());
    }
    write_indexed_png(path, labelmap.width, labelmap.height, idx, palette);
}

} // namespace splatfont
