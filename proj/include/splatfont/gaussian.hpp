#pragma once

#include "splatfont/math.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace splatfont {

inline constexpr int kUnassigned = -1;

/// One anisotropic 3D Gaussian. Covariance is R diag(exp(log_scale))^2 R^T.
struct Gaussian3D {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation{1.0, 0.0, 0.0, 0.0}; // (w, x, y, z)
    Vec3 color{0.5, 0.5, 0.5};
    double opacity_logit = 0.0;
    int component_id = kUnassigned;

    double opacity() const { return sigmoid(opacity_logit); }
    Vec3 scale() const { return log_scale.array().exp(); }
    Mat3 rotation_matrix() const { return quat_to_rotation(rotation.normalized()); }
    Mat3 covariance() const;
};

/// Ordered Gaussian set. Component 0 is the global composition, so valid
/// per-Gaussian labels are 1..num_components-1 (or kUnassigned).
struct GaussianCloud {
    std::vector<Gaussian3D> gaussians;
    int num_components = 1;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    /// Throws Error when a label is out of range.
    void validate() const;
    std::size_t count_component(int component_id) const;
    /// Appends `other` and widens num_components as needed.
    void append(const GaussianCloud& other);
    /// Rounds every parameter through float32, matching what PLY storage keeps.
    void quantize_to_float();
    /// FNV-1a over the parameter bytes; used to detect stale forward state.
    std::uint64_t fingerprint() const;
};

/// Per-Gaussian gradient in the same layout as the parameters.
struct GaussianGrad {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    Vec3 color = Vec3::Zero();
    double opacity_logit = 0.0;

    GaussianGrad& operator+=(const GaussianGrad& o);
    GaussianGrad& operator*=(double s);
    bool is_zero() const;
};

using CloudGrad = std::vector<GaussianGrad>;

/// Number of scalar parameters per Gaussian in the flat layout below.
inline constexpr int kParamsPerGaussian = 14;

void pack_params(const Gaussian3D& g, double* out);
void unpack_params(const double* in, Gaussian3D& g);
void pack_grad(const GaussianGrad& g, double* out);

} // namespace splatfont
