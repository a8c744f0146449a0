#pragma once

#include "splatfont/gaussian.hpp"
#include "splatfont/image.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splatfont {

enum class GlyphKind { Printed, Stylized };

/// A 2D glyph raster: the printed input or a stylized rendition of it.
struct GlyphImage {
    Image pixels;
    GlyphKind kind = GlyphKind::Printed;
    std::string glyph_id;
};

/// Default 2D-stage resolution.
inline constexpr int kGlyphResolution = 768;

/// Non-negative per-pixel foreground evidence for one component.
struct ComponentHeatmap {
    Image values; // H x W x 1
    int component_id = 1;

    int width() const { return values.width; }
    int height() const { return values.height; }
    double at(int x, int y) const { return values.at(x, y); }
    /// Throws Error on a multi-channel, non-finite or negative heatmap.
    void validate() const;
};

struct LatentTensor {
    std::vector<double> values;
    std::vector<std::size_t> shape;
    int timestep = 0;
};

/// Latent injection schedule: blend weights `alpha` (one value or one per
/// element) applied for timesteps T down to T-K.
struct BlendSchedule {
    std::vector<double> alpha{0.7};
    int K = 300;
    int T = 1000;

    static BlendSchedule with_defaults(int total_steps);
    bool in_window(int t) const { return t >= T - K && t <= T; }
    void validate() const;
};

/// alpha * zs + (1 - alpha) * zp inside the injection window; outside it the
/// driving latent zp is returned untouched.
LatentTensor blend_latents(const LatentTensor& zs, const LatentTensor& zp, const BlendSchedule& sched, int t);

/// Mean absolute difference over all elements.
double shape_loss(const GlyphImage& decoded, const GlyphImage& printed);

/// Foreground where h >= tau * max(h). An all-zero heatmap gives an empty mask.
Mask threshold_heatmap(const ComponentHeatmap& h, double tau = 0.5);

/// Segmentation stand-in for light-background images: 1 - luminance, clamped to [0,1].
ComponentHeatmap fallback_segment(const GlyphImage& img, int component_id = 1);

/// `n` points drawn uniformly over the foreground by rejection sampling.
/// Points are in continuous pixel-edge coordinates (pixel (x,y) covers
/// [x,x+1) x [y,y+1)) and lie strictly inside a foreground pixel.
std::vector<Vec2> sample_foreground(const Mask& mask, std::size_t n, std::uint64_t seed);

/// Canonical glyph-to-world mapping: the image spans [-1,1]^2 on the z=0 plane, +y up.
Vec2 pixel_to_world(const Vec2& uv, int width, int height);
Vec2 world_to_pixel(const Vec2& xy, int width, int height);

double mean_nearest_neighbor_distance(std::span<const Vec3> points);

inline constexpr double kInitialOpacity = 0.1;

/// Lifts sampled pixels into an extruded slab of isotropic Gaussians coloured
/// from `stylized`; z is uniform in [-depth/2, depth/2].
GaussianCloud lift_to_cloud(std::span<const Vec2> points, const GlyphImage& stylized, double depth, int component_id,
                            std::uint64_t seed);

} // namespace splatfont
