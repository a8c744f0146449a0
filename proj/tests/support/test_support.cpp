#include "test_support.hpp"

#include "splatfont/image_io.hpp"
#include "splatfont/render.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <unistd.h>

namespace splatfont::testing {

OracleImage brute_force_render(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                               std::optional<int> subset) {
    struct Splat {
        std::size_t index;
        double depth;
        double mx, my;
        double a, b, c; // inverse covariance [[a, b], [b, c]]
        double opacity;
        Vec3 color;
    };
    std::vector<Splat> splats;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian3D& g = cloud.gaussians[i];
        if (subset && g.component_id != *subset) continue;
        const Vec3 t = cam.rotation * g.position + cam.translation;
        if (t.z() <= 0.01) continue;
        const Eigen::Quaterniond q(g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3]);
        const Mat3 r = q.normalized().toRotationMatrix();
        const Vec3 s = g.log_scale.array().exp();
        const Mat3 sigma = r * s.cwiseAbs2().asDiagonal() * r.transpose();
        const double f = cam.focal, z = t.z();
        Mat23 j;
        j << f / z, 0.0, -f * t.x() / (z * z), 0.0, f / z, -f * t.y() / (z * z);
        const Mat3 w_sigma = cam.rotation * sigma * cam.rotation.transpose();
        const Mat2 cov = j * w_sigma * j.transpose();
        const double c00 = cov(0, 0) + 0.3, c11 = cov(1, 1) + 0.3, c01 = 0.5 * (cov(0, 1) + cov(1, 0));
        const double det = c00 * c11 - c01 * c01;
        splats.push_back({i, z, f * t.x() / z + cam.principal_point.x(), f * t.y() / z + cam.principal_point.y(),
                          c11 / det, -c01 / det, c00 / det, 1.0 / (1.0 + std::exp(-g.opacity_logit)), g.color});
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Splat& l, const Splat& r) { return l.depth < r.depth; });

    OracleImage out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1), 1469598103934665603ull};
    auto mix = [&](std::uint64_t v) {
        out.pattern ^= v;
        out.pattern *= 1099511628211ull;
    };
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Vec3 color = Vec3::Zero();
            double transmittance = 1.0;
            for (const Splat& s : splats) {
                const double dx = x - s.mx, dy = y - s.my;
                const double power = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
                double alpha = s.opacity * std::exp(-0.5 * power);
                if (alpha < 1.0 / 255.0) continue;
                const bool clamped = alpha > 0.99;
                if (clamped) alpha = 0.99;
                mix(s.index * 2 + (clamped ? 1 : 0));
                color += s.color * alpha * transmittance;
                transmittance *= 1.0 - alpha;
            }
            mix(0xFFFFFFFFull);
            color += transmittance * background;
            for (int k = 0; k < 3; ++k) out.pixels.at(x, y, k) = color[k];
            out.alpha.at(x, y) = 1.0 - transmittance;
        }
    }
    return out;
}

Scene random_scene(std::mt19937_64& rng, const SceneOptions& o) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
    auto uint = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

    Scene scene;
    const int w = uint(o.min_size, o.max_size), h = uint(o.min_size, o.max_size);
    scene.camera = orbit_camera(uni(0.0, 360.0), uni(-30.0, 45.0), uni(2.5, 4.0), w, h);
    scene.camera.focal *= uni(0.7, 1.5);
    scene.camera.principal_point += Vec2(uni(-2.0, 2.0), uni(-2.0, 2.0));

    std::normal_distribution<double> n01(0.0, 1.0);
    const int n = uint(o.min_gaussians, o.max_gaussians);
    for (int i = 0; i < n; ++i) {
        Gaussian3D g;
        g.position = Vec3(uni(-o.spread, o.spread), uni(-o.spread, o.spread), uni(-o.spread, o.spread));
        g.log_scale = Vec3(uni(o.min_log_scale, o.max_log_scale), uni(o.min_log_scale, o.max_log_scale),
                           uni(o.min_log_scale, o.max_log_scale));
        g.rotation = Vec4(n01(rng), n01(rng), n01(rng), n01(rng));
        g.rotation *= uni(0.5, 2.0) / g.rotation.norm(); // deliberately unnormalised
        g.color = Vec3(u01(rng), u01(rng), u01(rng));
        g.opacity_logit = uni(-2.5, 4.0);
        g.component_id = uint(1, 3);
        scene.cloud.gaussians.push_back(g);
    }
    scene.cloud.num_components = 4;
    if (o.allow_behind && u01(rng) < 0.2) {
        Gaussian3D g = scene.cloud.gaussians.front();
        const Vec3 c = scene.camera.center();
        g.position = c + 0.5 * c.normalized();
        scene.cloud.gaussians.push_back(g);
    }
    return scene;
}

namespace {

Mask rect(int size, double x0, double y0, double x1, double y1) {
    Mask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size, v = (y + 0.5) / size;
            if (u >= x0 && u < x1 && v >= y0 && v < y1) m.set(x, y, true);
        }
    return m;
}

Mask ring(int size, double cx, double cy, double r0, double r1) {
    Mask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size - cx, v = (y + 0.5) / size - cy;
            const double d = std::sqrt(u * u + v * v);
            if (d >= r0 && d < r1) m.set(x, y, true);
        }
    return m;
}

Mask triangle(int size, double cx, double top, double bottom, double half_width) {
    Mask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double u = (x + 0.5) / size, v = (y + 0.5) / size;
            if (v < top || v >= bottom) continue;
            const double hw = half_width * (v - top) / (bottom - top);
            if (std::abs(u - cx) <= hw) m.set(x, y, true);
        }
    return m;
}

// Removes from `m` every pixel already set in `taken`.
Mask minus(Mask m, const Mask& taken) {
    for (std::size_t i = 0; i < m.data.size(); ++i)
        if (taken.data[i]) m.data[i] = 0;
    return m;
}

} // namespace

std::vector<Mask> glyph_components(const std::string& name, int size) {
    if (name == "T") {
        const Mask bar = rect(size, 0.15, 0.15, 0.85, 0.32);
        return {bar, minus(rect(size, 0.41, 0.32, 0.59, 0.85), bar)};
    }
    if (name == "H") {
        const Mask left = rect(size, 0.18, 0.15, 0.34, 0.85);
        const Mask right = rect(size, 0.66, 0.15, 0.82, 0.85);
        return {left, right, rect(size, 0.34, 0.43, 0.66, 0.57)};
    }
    if (name == "O") return {ring(size, 0.5, 0.5, 0.2, 0.36)};
    if (name == "8") {
        const Mask top = ring(size, 0.5, 0.32, 0.08, 0.19);
        return {top, minus(ring(size, 0.5, 0.67, 0.1, 0.21), top)};
    }
    if (name == "3c") {
        return {ring(size, 0.27, 0.3, 0.0, 0.15), rect(size, 0.58, 0.16, 0.86, 0.44),
                triangle(size, 0.5, 0.55, 0.88, 0.22)};
    }
    throw std::invalid_argument("unknown glyph " + name);
}

Mask union_of(const std::vector<Mask>& parts) {
    Mask m(parts.front().width, parts.front().height);
    for (const Mask& p : parts)
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] |= p.data[i];
    return m;
}

Image mask_to_image(const Mask& m, const Vec3& ink) {
    Image img(m.width, m.height, 3, 1.0);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y))
                for (int k = 0; k < 3; ++k) img.at(x, y, k) = ink[k];
    return img;
}

Image mask_to_heatmap(const Mask& m) {
    Image img(m.width, m.height, 1);
    for (std::size_t i = 0; i < m.data.size(); ++i) img.data[i] = m.data[i] ? 1.0 : 0.0;
    return img;
}

std::filesystem::path write_glyph_fixture(const std::filesystem::path& dir, const std::string& glyph, int size,
                                          const nlohmann::json& patch) {
    static const double colors[3][3] = {{1, 0, 0}, {0, 0, 1}, {0, 1, 0}};
    const auto parts = glyph_components(glyph, size);
    std::filesystem::create_directories(dir);
    write_png(dir / "glyph.png", mask_to_image(union_of(parts)));
    nlohmann::json cfg = {{"glyph", "glyph.png"}, {"prompt", "a glyph " + glyph}, {"out", "out"}, {"seed", 7}};
    for (std::size_t m = 0; m < parts.size(); ++m) {
        const std::string name = "h" + std::to_string(m + 1) + ".hmap";
        write_hmap(dir / name, mask_to_heatmap(parts[m]));
        const auto& c = colors[m % 3];
        cfg["components"].push_back({{"prompt", "part " + std::to_string(m + 1)},
                                     {"heatmap", name},
                                     {"target_color", {c[0], c[1], c[2]}}});
    }
    cfg.merge_patch(patch);
    const auto path = dir / "config.json";
    std::ofstream(path) << cfg.dump(2) << "\n";
    return path;
}

ComponentHeatmap random_blob_heatmap(int w, int h, std::mt19937_64& rng, int id) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ComponentHeatmap hm{Image(w, h, 1), id};
    const int blobs = 1 + static_cast<int>(u(rng) * 3);
    for (int b = 0; b < blobs; ++b) {
        const double cx = u(rng) * w, cy = u(rng) * h, s = 2.0 + u(rng) * w / 4.0, amp = 0.2 + u(rng);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                hm.values.at(x, y) += amp * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
    }
    return hm;
}

std::vector<int> literal_label_map(const std::vector<ComponentHeatmap>& hs, double beta, double delta) {
    const int w = hs[0].width(), h = hs[0].height();
    std::vector<double> cx, cy;
    for (const auto& hm : hs) {
        double m = 0, sx = 0, sy = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                m += hm.at(x, y);
                sx += hm.at(x, y) * x;
                sy += hm.at(x, y) * y;
            }
        cx.push_back(sx / m);
        cy.push_back(sy / m);
    }
    std::vector<int> labels;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = 0;
            double best_score = -std::numeric_limits<double>::infinity();
            for (std::size_t m = 0; m < hs.size(); ++m) {
                const double dx = x - cx[m], dy = y - cy[m];
                const double score = std::log(hs[m].at(x, y) + delta) - beta * std::sqrt(dx * dx + dy * dy);
                if (score > best_score) {
                    best_score = score;
                    best = hs[m].component_id;
                }
            }
            labels.push_back(best);
        }
    return labels;
}

GradCheck check_gradients(const Scene& scene, const Image& weights, double eps, double rel, double floor) {
    static const char* names[kParamsPerGaussian] = {"pos.x",   "pos.y",   "pos.z",   "log_scale.x", "log_scale.y",
                                                    "log_scale.z", "rot.w", "rot.x",   "rot.y",      "rot.z",
                                                    "color.r", "color.g", "color.b", "opacity_logit"};
    RenderOptions opts;
    opts.rasterizer = Rasterizer::Reference;
    ForwardState state;
    render(scene.cloud, scene.camera, std::nullopt, opts, &state);
    const CloudGrad grad = render_backward(scene.cloud, scene.camera, std::nullopt, weights, state);

    auto loss = [&](const GaussianCloud& c, std::uint64_t& pattern) {
        const OracleImage img = brute_force_render(c, scene.camera, opts.background);
        pattern = img.pattern;
        double l = 0.0;
        for (std::size_t i = 0; i < img.pixels.data.size(); ++i) l += weights.data[i] * img.pixels.data[i];
        return l;
    };
    std::uint64_t base_pattern = 0;
    loss(scene.cloud, base_pattern);

    GradCheck out;
    GaussianCloud probe = scene.cloud;
    double params[kParamsPerGaussian], analytic[kParamsPerGaussian];
    for (std::size_t gi = 0; gi < scene.cloud.size(); ++gi) {
        pack_params(scene.cloud.gaussians[gi], params);
        pack_grad(grad[gi], analytic);
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            double shifted[kParamsPerGaussian];
            std::copy(params, params + kParamsPerGaussian, shifted);
            std::uint64_t p_plus = 0, p_minus = 0;
            shifted[k] = params[k] + eps;
            unpack_params(shifted, probe.gaussians[gi]);
            const double lp = loss(probe, p_plus);
            shifted[k] = params[k] - eps;
            unpack_params(shifted, probe.gaussians[gi]);
            const double lm = loss(probe, p_minus);
            probe.gaussians[gi] = scene.cloud.gaussians[gi];
            if (p_plus != base_pattern || p_minus != base_pattern) {
                out.stable = false;
                return out;
            }
            const double fd = (lp - lm) / (2.0 * eps);
            ++out.checked;
            const double diff = std::abs(fd - analytic[k]);
            const double scale = std::max(std::abs(fd), std::abs(analytic[k]));
            if (diff > floor && scale > 0.0) out.worst_rel = std::max(out.worst_rel, diff / scale);
            if (!close_rel(fd, analytic[k], rel, floor)) {
                if (out.failed++ == 0) {
                    std::ostringstream os;
                    os << "gaussian " << gi << " " << names[k] << ": analytic " << analytic[k] << " fd " << fd;
                    out.first_failure = os.str();
                }
            }
        }
    }
    return out;
}

std::filesystem::path scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = std::filesystem::temp_directory_path() /
                     ("splatfont_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

bool close_rel(double a, double b, double rel, double floor) {
    const double diff = std::abs(a - b);
    if (diff <= floor) return true;
    return diff <= rel * std::max(std::abs(a), std::abs(b));
}

} // namespace splatfont::testing
