#include "splatfont/glyph2cloud.hpp"

#include "splatfont/error.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace splatfont {

void ComponentHeatmap::validate() const {
    if (values.channels != 1) throw Error("heatmap must be single-channel");
    for (double v : values.data)
        if (!std::isfinite(v) || v < 0.0) throw Error("heatmap values must be finite and non-negative");
}

BlendSchedule BlendSchedule::with_defaults(int total_steps) {
    BlendSchedule s;
    s.T = total_steps;
    s.K = static_cast<int>(std::floor(0.3 * total_steps));
    return s;
}

void BlendSchedule::validate() const {
    if (T < 0 || K < 0 || K > T) throw Error("blend schedule needs 0 <= K <= T");
    if (alpha.empty()) throw Error("blend schedule alpha is empty");
    for (double a : alpha)
        if (!(a >= 0.0 && a <= 1.0)) throw Error("blend alpha must lie in [0,1]");
}

LatentTensor blend_latents(const LatentTensor& zs, const LatentTensor& zp, const BlendSchedule& sched, int t) {
    sched.validate();
    if (zs.shape != zp.shape || zs.values.size() != zp.values.size())
        throw ShapeMismatch("shape and driving latents differ in shape");
    if (zs.timestep != t || zp.timestep != t) throw ShapeMismatch("latent timesteps do not match t");
    if (t < 0 || t > sched.T) throw Error("timestep outside [0, T]");
    if (sched.alpha.size() != 1 && sched.alpha.size() != zs.values.size())
        throw ShapeMismatch("per-element alpha must match the latent size");
    if (!sched.in_window(t)) return zp;

    LatentTensor out = zp;
    const bool scalar = sched.alpha.size() == 1;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double a = scalar ? sched.alpha[0] : sched.alpha[i];
        out.values[i] = a * zs.values[i] + (1.0 - a) * zp.values[i];
    }
    return out;
}

double shape_loss(const GlyphImage& decoded, const GlyphImage& printed) {
    if (!decoded.pixels.same_shape(printed.pixels)) throw ShapeMismatch("decoded and printed glyphs differ in shape");
    if (decoded.pixels.data.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < decoded.pixels.data.size(); ++i)
        s += std::abs(decoded.pixels.data[i] - printed.pixels.data[i]);
    return s / static_cast<double>(decoded.pixels.data.size());
}

Mask threshold_heatmap(const ComponentHeatmap& h, double tau) {
    Mask m(h.width(), h.height());
    const double peak = h.values.data.empty() ? 0.0 : *std::max_element(h.values.data.begin(), h.values.data.end());
    if (!(peak > 0.0)) return m;
    const double cut = tau * peak;
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = h.values.data[i] >= cut;
    return m;
}

ComponentHeatmap fallback_segment(const GlyphImage& img, int component_id) {
    const Image& px = img.pixels;
    ComponentHeatmap heat{Image(px.width, px.height, 1), component_id};
    for (std::size_t i = 0; i < px.pixel_count(); ++i) {
        const double* p = px.data.data() + i * px.channels;
        const double lum = px.channels >= 3 ? 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2] : p[0];
        heat.values.data[i] = std::clamp(1.0 - lum, 0.0, 1.0);
    }
    return heat;
}

std::vector<Vec2> sample_foreground(const Mask& mask, std::size_t n, std::uint64_t seed) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0) throw EmptyMask("mask has no foreground pixels");
    if (n == 0) throw Error("sample count must be >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(x0, x1 + 1.0), uy(y0, y1 + 1.0);
    std::vector<Vec2> pts;
    pts.reserve(n);
    while (pts.size() < n) {
        const double u = ux(rng), v = uy(rng);
        const int px = static_cast<int>(u), py = static_cast<int>(v);
        if (px > x1 || py > y1) continue;
        if (u == px || v == py) continue; // on a pixel edge
        if (mask.at(px, py)) pts.emplace_back(u, v);
    }
    return pts;
}

Vec2 pixel_to_world(const Vec2& uv, int width, int height) {
    return Vec2(2.0 * uv.x() / width - 1.0, 1.0 - 2.0 * uv.y() / height);
}

Vec2 world_to_pixel(const Vec2& xy, int width, int height) {
    return Vec2(0.5 * (xy.x() + 1.0) * width, 0.5 * (1.0 - xy.y()) * height);
}

double mean_nearest_neighbor_distance(std::span<const Vec3> points) {
    namespace bg = boost::geometry;
    namespace bgi = boost::geometry::index;
    using Point = bg::model::point<double, 3, bg::cs::cartesian>;
    using Entry = std::pair<Point, std::size_t>;
    if (points.size() < 2) return 0.0;

    std::vector<Entry> entries;
    entries.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        entries.emplace_back(Point(points[i].x(), points[i].y(), points[i].z()), i);
    const bgi::rtree<Entry, bgi::quadratic<16>> tree(entries.begin(), entries.end());

    double total = 0.0;
    std::vector<Entry> hits;
    for (const auto& e : entries) {
        hits.clear();
        tree.query(bgi::nearest(e.first, 1) && bgi::satisfies([&](const Entry& o) { return o.second != e.second; }),
                   std::back_inserter(hits));
        if (!hits.empty()) total += bg::distance(e.first, hits.front().first);
    }
    return total / static_cast<double>(points.size());
}

GaussianCloud lift_to_cloud(std::span<const Vec2> points, const GlyphImage& stylized, double depth, int component_id,
                            std::uint64_t seed) {
    if (!(depth > 0.0)) throw Error("extrusion depth must be positive");
    const Image& img = stylized.pixels;
    if (img.empty()) throw Error("stylized image is empty");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uz(-0.5 * depth, 0.5 * depth);

    std::vector<Vec3> pos;
    pos.reserve(points.size());
    for (const Vec2& uv : points) {
        const Vec2 xy = pixel_to_world(uv, img.width, img.height);
        pos.emplace_back(xy.x(), xy.y(), uz(rng));
    }
    double nn = mean_nearest_neighbor_distance(pos);
    if (!(nn > 0.0)) nn = 2.0 / img.width;
    const double log_scale = std::log(nn);

    GaussianCloud cloud;
    cloud.num_components = std::max(1, component_id + 1);
    cloud.gaussians.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const int px = std::clamp(static_cast<int>(points[i].x()), 0, img.width - 1);
        const int py = std::clamp(static_cast<int>(points[i].y()), 0, img.height - 1);
        Gaussian3D g;
        g.position = pos[i];
        g.log_scale = Vec3::Constant(log_scale);
        g.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
        if (img.channels >= 3) g.color = Vec3(img.at(px, py, 0), img.at(px, py, 1), img.at(px, py, 2));
        else g.color = Vec3::Constant(img.at(px, py, 0));
        g.opacity_logit = logit(kInitialOpacity);
        g.component_id = component_id;
        cloud.gaussians.push_back(g);
    }
    return cloud;
}

} // namespace splatfont
