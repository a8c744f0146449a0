#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>

namespace splatfont {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of a unit quaternion stored as (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back onto the (w, x, y, z) components of the quaternion that built R.
inline Vec4 rotation_grad_to_quat(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 out;
    out[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    out[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                    z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
    out[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                    w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
    out[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                    y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return out;
}

} // namespace splatfont
