#include "splatfont/render.hpp"

#include "splatfont/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace splatfont {

namespace {

Mat23 ewa_jacobian(const Vec3& t, double focal) {
    const double iz = 1.0 / t.z();
    Mat23 j;
    j << focal * iz, 0.0, -focal * t.x() * iz * iz, 0.0, focal * iz, -focal * t.y() * iz * iz;
    return j;
}

// Per-pixel bookkeeping for the 2D parameters of one splat entry in one region.
struct SplatGrad2D {
    double mean[2] = {0.0, 0.0};
    double conic[3] = {0.0, 0.0, 0.0}; // dL/dA00, dL/dA01 (per off-diagonal entry), dL/dA11
    double color[3] = {0.0, 0.0, 0.0};
    double opacity = 0.0;
};

} // namespace

std::optional<Projection> try_project(const Gaussian3D& g, const Camera& cam, const ProjectOptions& opts) {
    const Vec3 t = cam.to_camera(g.position);
    if (!(t.z() > opts.near)) return std::nullopt;
    const Mat23 j = ewa_jacobian(t, cam.focal);
    const Mat3 view_cov = cam.rotation * g.covariance() * cam.rotation.transpose();
    Projection p;
    p.mean = Vec2(cam.focal * t.x() / t.z() + cam.principal_point.x(),
                  cam.focal * t.y() / t.z() + cam.principal_point.y());
    p.cov = j * view_cov * j.transpose();
    p.cov(0, 1) = p.cov(1, 0) = 0.5 * (p.cov(0, 1) + p.cov(1, 0));
    p.cov(0, 0) += opts.cov_floor;
    p.cov(1, 1) += opts.cov_floor;
    p.depth = t.z();
    return p;
}

Projection project(const Gaussian3D& g, const Camera& cam, const ProjectOptions& opts) {
    auto p = try_project(g, cam, opts);
    if (!p) throw BehindCamera("view-space depth " + std::to_string(cam.to_camera(g.position).z()) +
                               " <= near plane " + std::to_string(opts.near));
    return *p;
}

std::vector<std::size_t> depth_sort(const GaussianCloud& cloud, const Camera& cam) {
    std::vector<double> depth(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) depth[i] = cam.to_camera(cloud.gaussians[i].position).z();
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
    return order;
}

RenderedImage render(const GaussianCloud& cloud, const Camera& cam, std::optional<int> subset,
                     const RenderOptions& opts, ForwardState* state) {
    cam.validate();
    const int w = cam.width, h = cam.height;

    // Project, cull, and order splats front to back.
    std::vector<ForwardState::Splat> splats;
    splats.reserve(cloud.size());
    for (std::size_t i : depth_sort(cloud, cam)) {
        const Gaussian3D& g = cloud.gaussians[i];
        if (subset && g.component_id != *subset) continue;
        const auto p = try_project(g, cam, opts.projection);
        if (!p) continue;
        const double det = p->cov.determinant();
        if (!(det > 0.0) || !std::isfinite(det))
            throw DegenerateCovariance("gaussian " + std::to_string(i) + " has cov2d determinant " + std::to_string(det));
        const double op = g.opacity();
        // Margin keeps the cheap test strictly conservative against the exp() comparison.
        const double q_cut = op < kMinAlpha ? -1.0 : 2.0 * std::log(op / kMinAlpha) * (1.0 + 1e-12) + 1e-9;
        splats.push_back({i, p->mean, p->cov, p->cov.inverse(), g.color, op, q_cut});
    }

    std::vector<ForwardState::Region> regions;
    if (opts.rasterizer == Rasterizer::Reference) {
        std::vector<std::uint32_t> all(splats.size());
        std::iota(all.begin(), all.end(), 0u);
        regions.reserve(static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y) regions.push_back({0, y, w, y + 1, all});
    } else {
        const int tiles_x = (w + kTileSize - 1) / kTileSize;
        const int tiles_y = (h + kTileSize - 1) / kTileSize;
        regions.resize(static_cast<std::size_t>(tiles_x) * tiles_y);
        for (int ty = 0; ty < tiles_y; ++ty) {
            for (int tx = 0; tx < tiles_x; ++tx) {
                auto& r = regions[static_cast<std::size_t>(ty) * tiles_x + tx];
                r.x0 = tx * kTileSize;
                r.y0 = ty * kTileSize;
                r.x1 = std::min(w, r.x0 + kTileSize);
                r.y1 = std::min(h, r.y0 + kTileSize);
            }
        }
        for (std::uint32_t s = 0; s < splats.size(); ++s) {
            const auto& sp = splats[s];
            // alpha' >= kMinAlpha  <=>  d^T conic d <= 2 ln(opacity / kMinAlpha)
            if (sp.opacity < kMinAlpha) continue;
            const double q_max = 2.0 * std::log(sp.opacity / kMinAlpha);
            const double ex = std::sqrt(q_max * sp.cov(0, 0)) + 1.0;
            const double ey = std::sqrt(q_max * sp.cov(1, 1)) + 1.0;
            const double fx0 = std::floor(sp.mean.x() - ex), fx1 = std::ceil(sp.mean.x() + ex);
            const double fy0 = std::floor(sp.mean.y() - ey), fy1 = std::ceil(sp.mean.y() + ey);
            if (fx1 < 0.0 || fy1 < 0.0 || fx0 >= w || fy0 >= h) continue;
            const int tx0 = static_cast<int>(std::max(0.0, fx0)) / kTileSize;
            const int ty0 = static_cast<int>(std::max(0.0, fy0)) / kTileSize;
            const int tx1 = static_cast<int>(std::min<double>(w - 1, fx1)) / kTileSize;
            const int ty1 = static_cast<int>(std::min<double>(h - 1, fy1)) / kTileSize;
            for (int ty = ty0; ty <= ty1; ++ty)
                for (int tx = tx0; tx <= tx1; ++tx)
                    regions[static_cast<std::size_t>(ty) * tiles_x + tx].splats.push_back(s);
        }
    }

    RenderedImage out{Image(w, h, 3), Image(w, h, 1)};
    std::vector<double> final_t(static_cast<std::size_t>(w) * h, 1.0);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
        const auto& r = regions[ri];
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                double t = 1.0;
                double c[3] = {0.0, 0.0, 0.0};
                for (std::uint32_t s : r.splats) {
                    const auto& sp = splats[s];
                    const double dx = x - sp.mean.x(), dy = y - sp.mean.y();
                    const double q = sp.conic(0, 0) * dx * dx + 2.0 * sp.conic(0, 1) * dx * dy + sp.conic(1, 1) * dy * dy;
                    if (q > sp.q_cut) continue;
                    double a = sp.opacity * std::exp(-0.5 * q);
                    if (a < kMinAlpha) continue;
                    a = std::min(kMaxAlpha, a);
                    for (int k = 0; k < 3; ++k) c[k] += sp.color[k] * a * t;
                    t *= 1.0 - a;
                }
                for (int k = 0; k < 3; ++k) out.pixels.at(x, y, k) = c[k] + t * opts.background[k];
                out.alpha.at(x, y) = 1.0 - t;
                final_t[static_cast<std::size_t>(y) * w + x] = t;
            }
        }
    }

    if (state) {
        state->valid_ = true;
        state->fingerprint_ = cloud.fingerprint();
        state->cloud_size_ = cloud.size();
        state->camera_ = cam;
        state->subset_ = subset;
        state->options_ = opts;
        state->splats_ = std::move(splats);
        state->regions_ = std::move(regions);
        state->final_transmittance_ = std::move(final_t);
    }
    return out;
}

CloudGrad render_backward(const GaussianCloud& cloud, const Camera& cam, std::optional<int> subset,
                          const Image& grad_pixels, const ForwardState& state, ScreenGrad* screen) {
    if (!state.valid_) throw StaleForward("no forward pass recorded");
    if (state.cloud_size_ != cloud.size() || !(state.camera_ == cam) || state.subset_ != subset ||
        state.fingerprint_ != cloud.fingerprint())
        throw StaleForward("forward state does not match this cloud, camera and subset");
    const int w = cam.width, h = cam.height;
    if (grad_pixels.width != w || grad_pixels.height != h || grad_pixels.channels != 3)
        throw ShapeMismatch("grad_pixels must be " + std::to_string(h) + "x" + std::to_string(w) + "x3");

    const auto& splats = state.splats_;
    const auto& regions = state.regions_;
    const Vec3& bg = state.options_.background;

    // Pass 1: per region, accumulate 2D gradients for each splat entry.
    std::vector<std::vector<SplatGrad2D>> region_grads(regions.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
        const auto& r = regions[ri];
        auto& acc = region_grads[ri];
        acc.assign(r.splats.size(), SplatGrad2D{});
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                const double g[3] = {grad_pixels.at(x, y, 0), grad_pixels.at(x, y, 1), grad_pixels.at(x, y, 2)};
                if (g[0] == 0.0 && g[1] == 0.0 && g[2] == 0.0) continue;
                double t = state.final_transmittance_[static_cast<std::size_t>(y) * w + x];
                // Colour contributed by everything behind the current splat, background included.
                double behind[3] = {t * bg[0], t * bg[1], t * bg[2]};
                for (std::size_t e = r.splats.size(); e-- > 0;) {
                    const auto& sp = splats[r.splats[e]];
                    const double dx = x - sp.mean.x(), dy = y - sp.mean.y();
                    const double q = sp.conic(0, 0) * dx * dx + 2.0 * sp.conic(0, 1) * dx * dy + sp.conic(1, 1) * dy * dy;
                    if (q > sp.q_cut) continue;
                    const double kernel = std::exp(-0.5 * q);
                    const double raw = sp.opacity * kernel;
                    if (raw < kMinAlpha) continue;
                    const bool clamped = raw > kMaxAlpha;
                    const double a = clamped ? kMaxAlpha : raw;
                    const double t_i = t / (1.0 - a);

                    auto& sg = acc[e];
                    double dl_da = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        sg.color[k] += g[k] * a * t_i;
                        dl_da += g[k] * (sp.color[k] * t_i - behind[k] / (1.0 - a));
                        behind[k] += sp.color[k] * a * t_i;
                    }
                    t = t_i;
                    if (clamped) continue;

                    sg.opacity += dl_da * kernel;
                    const double dl_dq = -0.5 * raw * dl_da;
                    // q = d^T A d, d = pixel - mean
                    sg.mean[0] -= dl_dq * 2.0 * (sp.conic(0, 0) * dx + sp.conic(0, 1) * dy);
                    sg.mean[1] -= dl_dq * 2.0 * (sp.conic(0, 1) * dx + sp.conic(1, 1) * dy);
                    sg.conic[0] += dl_dq * dx * dx;
                    sg.conic[1] += dl_dq * dx * dy;
                    sg.conic[2] += dl_dq * dy * dy;
                }
            }
        }
    }

    // Reduce in region order so results do not depend on scheduling.
    std::vector<SplatGrad2D> splat_grads(splats.size());
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
        const auto& r = regions[ri];
        for (std::size_t e = 0; e < r.splats.size(); ++e) {
            const auto& src = region_grads[ri][e];
            auto& dst = splat_grads[r.splats[e]];
            for (int k = 0; k < 2; ++k) dst.mean[k] += src.mean[k];
            for (int k = 0; k < 3; ++k) dst.conic[k] += src.conic[k];
            for (int k = 0; k < 3; ++k) dst.color[k] += src.color[k];
            dst.opacity += src.opacity;
        }
    }

    // Pass 2: chain 2D gradients through the projection onto 3D parameters.
    CloudGrad out(cloud.size());
    if (screen) {
        screen->mean2d.assign(cloud.size(), Vec2::Zero());
        screen->visible.assign(cloud.size(), 0);
        for (std::size_t s = 0; s < splats.size(); ++s) {
            screen->mean2d[splats[s].index] = Vec2(splat_grads[s].mean[0], splat_grads[s].mean[1]);
            screen->visible[splats[s].index] = 1;
        }
    }
    const Mat3& view = cam.rotation;
#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < splats.size(); ++s) {
        const auto& sp = splats[s];
        const auto& sg = splat_grads[s];
        const Gaussian3D& gs = cloud.gaussians[sp.index];
        GaussianGrad& dst = out[sp.index];

        dst.color = Vec3(sg.color[0], sg.color[1], sg.color[2]);
        dst.opacity_logit = sg.opacity * sp.opacity * (1.0 - sp.opacity);

        // Conic -> 2D covariance: dL/dSigma = -A (dL/dA) A.
        Mat2 g_conic;
        g_conic << sg.conic[0], sg.conic[1], sg.conic[1], sg.conic[2];
        const Mat2 g_cov2 = -sp.conic * g_conic * sp.conic;

        const Vec3 t = cam.to_camera(gs.position);
        const double f = cam.focal, iz = 1.0 / t.z();
        const Mat23 j = ewa_jacobian(t, f);
        const Mat3 rot = gs.rotation_matrix();
        const Vec3 scale = gs.scale();
        const Mat3 m = rot * scale.asDiagonal();
        const Mat3 cov3 = m * m.transpose();
        const Mat3 view_cov = view * cov3 * view.transpose();

        // cov2 = J V J^T
        const Mat3 g_view_cov = j.transpose() * g_cov2 * j;
        const Mat23 g_j = 2.0 * g_cov2 * j * view_cov;
        const Mat3 g_cov3 = view.transpose() * g_view_cov * view;
        // cov3 = M M^T, M = R S
        const Mat3 g_m = 2.0 * g_cov3 * m;
        const Mat3 g_rot = g_m * scale.asDiagonal();
        const Vec3 g_scale = (rot.transpose() * g_m).diagonal();
        dst.log_scale = g_scale.cwiseProduct(scale);

        const Vec4 qn = gs.rotation.normalized();
        const Vec4 g_qn = rotation_grad_to_quat(qn, g_rot);
        dst.rotation = (g_qn - qn * qn.dot(g_qn)) / gs.rotation.norm();

        // Mean: through the projected centre and through J's dependence on t.
        Vec3 g_t;
        g_t.x() = sg.mean[0] * f * iz;
        g_t.y() = sg.mean[1] * f * iz;
        g_t.z() = -(sg.mean[0] * f * t.x() + sg.mean[1] * f * t.y()) * iz * iz;
        const double iz2 = iz * iz, iz3 = iz2 * iz;
        g_t.x() += g_j(0, 2) * (-f * iz2);
        g_t.y() += g_j(1, 2) * (-f * iz2);
        g_t.z() += (g_j(0, 0) + g_j(1, 1)) * (-f * iz2) + g_j(0, 2) * (2.0 * f * t.x() * iz3) +
                   g_j(1, 2) * (2.0 * f * t.y() * iz3);
        dst.position = view.transpose() * g_t;
    }
    return out;
}

} // namespace splatfont
