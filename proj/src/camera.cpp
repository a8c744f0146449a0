#include "splatfont/camera.hpp"

#include "splatfont/error.hpp"

#include <numbers>

namespace splatfont {

void Camera::validate() const {
    if (!((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6))
        throw Error("camera rotation is not orthonormal");
    if (!(focal > 0.0)) throw Error("camera focal must be positive");
    if (width <= 0 || height <= 0) throw Error("camera image size must be positive");
}

bool Camera::operator==(const Camera& o) const {
    return rotation == o.rotation && translation == o.translation && focal == o.focal &&
           principal_point == o.principal_point && width == o.width && height == o.height;
}

Camera look_at(const Vec3& eye, const Vec3& target, double focal, int width, int height) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 up(0.0, 1.0, 0.0);
    if (std::abs(forward.dot(up)) > 1.0 - 1e-9) up = Vec3(0.0, 0.0, -1.0);
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);

    Camera cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = forward.transpose();
    cam.translation = -cam.rotation * eye;
    cam.focal = focal;
    cam.principal_point = Vec2(0.5 * (width - 1), 0.5 * (height - 1));
    cam.width = width;
    cam.height = height;
    return cam;
}

Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, int width, int height) {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    const Vec3 eye(radius * std::cos(el) * std::sin(az), radius * std::sin(el), radius * std::cos(el) * std::cos(az));
    return look_at(eye, Vec3::Zero(), canonical_focal(width, radius), width, height);
}

Camera front_camera(int width, int height, double distance) {
    Camera cam;
    cam.rotation = Vec3(1.0, -1.0, -1.0).asDiagonal();
    cam.translation = Vec3(0.0, 0.0, distance);
    cam.focal = canonical_focal(width, distance);
    cam.principal_point = Vec2(0.5 * (width - 1), 0.5 * (height - 1));
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace splatfont
