#pragma once

#include "splatfont/camera.hpp"
#include "splatfont/gaussian.hpp"
#include "splatfont/image.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace splatfont {

/// Screen-space footprint of a Gaussian.
struct Projection {
    Vec2 mean;   // pixel-centre coordinates
    Mat2 cov;    // includes the anti-aliasing floor
    double depth; // view-space z
};

struct ProjectOptions {
    double near = 0.01;
    double cov_floor = 0.3; // pixel^2 added to the diagonal
};

/// EWA projection: cov2d = J W Sigma W^T J^T + floor * I. Throws BehindCamera.
Projection project(const Gaussian3D& g, const Camera& cam, const ProjectOptions& opts = {});
std::optional<Projection> try_project(const Gaussian3D& g, const Camera& cam, const ProjectOptions& opts = {});

/// Stable ascending view-space depth order; equal depths keep storage order.
std::vector<std::size_t> depth_sort(const GaussianCloud& cloud, const Camera& cam);

enum class Rasterizer {
    Reference, // every pixel visits every visible splat
    Tiled,     // 16x16 tiles, splats binned by their contributing footprint
};

inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr int kTileSize = 8;

struct RenderOptions {
    Vec3 background{1.0, 1.0, 1.0};
    Rasterizer rasterizer = Rasterizer::Tiled;
    ProjectOptions projection{};
};

/// Screen-space mean gradients, as used for densification statistics.
struct ScreenGrad {
    std::vector<Vec2> mean2d;           // dL/d(pixel-space mean), per Gaussian
    std::vector<std::uint8_t> visible; // 1 if the Gaussian was projected in this view
};

/// Intermediates kept from a forward pass for the matching backward pass.
class ForwardState {
public:
    bool valid() const { return valid_; }

private:
    friend RenderedImage render(const GaussianCloud&, const Camera&, std::optional<int>, const RenderOptions&,
                                ForwardState*);
    friend CloudGrad render_backward(const GaussianCloud&, const Camera&, std::optional<int>, const Image&,
                                     const ForwardState&, ScreenGrad*);

    struct Splat {
        std::size_t index; // into cloud.gaussians
        Vec2 mean;
        Mat2 cov;
        Mat2 conic; // inverse of cov
        Vec3 color;
        double opacity;
        double q_cut; // alpha' < kMinAlpha for any q beyond this
    };
    struct Region {
        int x0, y0, x1, y1;                // pixel rect, exclusive upper bounds
        std::vector<std::uint32_t> splats; // into `splats`, front to back
    };

    bool valid_ = false;
    std::uint64_t fingerprint_ = 0;
    std::size_t cloud_size_ = 0;
    Camera camera_{};
    std::optional<int> subset_;
    RenderOptions options_{};
    std::vector<Splat> splats_;
    std::vector<Region> regions_;
    std::vector<double> final_transmittance_; // H x W
};

/// Front-to-back alpha compositing of the (optionally component-filtered)
/// cloud. Effective alpha is sigmoid(opacity_logit) * exp(-0.5 d^T cov^-1 d),
/// clamped to kMaxAlpha; contributions below kMinAlpha are skipped.
RenderedImage render(const GaussianCloud& cloud, const Camera& cam, std::optional<int> subset = std::nullopt,
                     const RenderOptions& opts = {}, ForwardState* state = nullptr);

/// Gradient of sum(grad_pixels * pixels) with respect to every Gaussian's
/// parameters. `state` must come from render() on the same cloud, camera and
/// subset; otherwise StaleForward is thrown. Culled or filtered Gaussians get zeros.
CloudGrad render_backward(const GaussianCloud& cloud, const Camera& cam, std::optional<int> subset,
                          const Image& grad_pixels, const ForwardState& state, ScreenGrad* screen = nullptr);

} // namespace splatfont
