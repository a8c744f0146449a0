#include "splatfont/gaussian.hpp"

#include "splatfont/error.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace splatfont {

Mat3 Gaussian3D::covariance() const {
    const Mat3 m = rotation_matrix() * scale().asDiagonal();
    return m * m.transpose();
}

void GaussianCloud::validate() const {
    if (num_components < 1) throw Error("num_components must be >= 1");
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const int c = gaussians[i].component_id;
        if (c != kUnassigned && (c < 0 || c >= num_components))
            throw Error("gaussian " + std::to_string(i) + " has component_id " + std::to_string(c) +
                        " outside [0, " + std::to_string(num_components) + ")");
    }
}

std::size_t GaussianCloud::count_component(int component_id) const {
    return static_cast<std::size_t>(std::count_if(gaussians.begin(), gaussians.end(), [&](const auto& g) {
        return g.component_id == component_id;
    }));
}

void GaussianCloud::append(const GaussianCloud& other) {
    gaussians.insert(gaussians.end(), other.gaussians.begin(), other.gaussians.end());
    num_components = std::max(num_components, other.num_components);
}

void GaussianCloud::quantize_to_float() {
    auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    for (auto& g : gaussians) {
        g.position = g.position.unaryExpr(f32);
        g.log_scale = g.log_scale.unaryExpr(f32);
        g.rotation = g.rotation.unaryExpr(f32);
        g.color = g.color.unaryExpr(f32);
        g.opacity_logit = f32(g.opacity_logit);
    }
}

std::uint64_t GaussianCloud::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    double buf[kParamsPerGaussian];
    for (const auto& g : gaussians) {
        pack_params(g, buf);
        mix(buf, sizeof(buf));
        mix(&g.component_id, sizeof(g.component_id));
    }
    mix(&num_components, sizeof(num_components));
    return h;
}

GaussianGrad& GaussianGrad::operator+=(const GaussianGrad& o) {
    position += o.position;
    log_scale += o.log_scale;
    rotation += o.rotation;
    color += o.color;
    opacity_logit += o.opacity_logit;
    return *this;
}

GaussianGrad& GaussianGrad::operator*=(double s) {
    position *= s;
    log_scale *= s;
    rotation *= s;
    color *= s;
    opacity_logit *= s;
    return *this;
}

bool GaussianGrad::is_zero() const {
    return position.isZero(0.0) && log_scale.isZero(0.0) && rotation.isZero(0.0) && color.isZero(0.0) &&
           opacity_logit == 0.0;
}

// Layout: position(3) log_scale(3) rotation(4) color(3) opacity_logit(1).
void pack_params(const Gaussian3D& g, double* out) {
    for (int i = 0; i < 3; ++i) {
        out[i] = g.position[i];
        out[3 + i] = g.log_scale[i];
        out[10 + i] = g.color[i];
    }
    for (int i = 0; i < 4; ++i) out[6 + i] = g.rotation[i];
    out[13] = g.opacity_logit;
}

void unpack_params(const double* in, Gaussian3D& g) {
    for (int i = 0; i < 3; ++i) {
        g.position[i] = in[i];
        g.log_scale[i] = in[3 + i];
        g.color[i] = in[10 + i];
    }
    for (int i = 0; i < 4; ++i) g.rotation[i] = in[6 + i];
    g.opacity_logit = in[13];
}

void pack_grad(const GaussianGrad& g, double* out) {
    for (int i = 0; i < 3; ++i) {
        out[i] = g.position[i];
        out[3 + i] = g.log_scale[i];
        out[10 + i] = g.color[i];
    }
    for (int i = 0; i < 4; ++i) out[6 + i] = g.rotation[i];
    out[13] = g.opacity_logit;
}

} // namespace splatfont
