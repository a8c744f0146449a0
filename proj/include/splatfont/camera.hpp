#pragma once

#include "splatfont/math.hpp"

namespace splatfont {

/// Pinhole camera, world-to-camera x_cam = rotation * x_world + translation.
/// Camera axes follow the OpenCV convention (x right, y down, z forward).
/// Pixel (px, py) has its centre at image coordinate (px, py).
struct Camera {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double focal = 1.0;
    Vec2 principal_point = Vec2::Zero();
    int width = 1;
    int height = 1;

    /// Throws Error if the rotation is not orthonormal (1e-6) or the intrinsics are invalid.
    void validate() const;
    Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }
    bool operator==(const Camera& o) const;
};

/// Camera at `eye` looking at `target`; world +y is up.
Camera look_at(const Vec3& eye, const Vec3& target, double focal, int width, int height);

/// Camera on a sphere of `radius` around the origin. Azimuth 0 looks down -z
/// from +z; positive elevation raises the camera above the glyph plane.
Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, int width, int height);

/// Canonical front view of the glyph plane: world [-1,1]^2 at z=0 maps onto
/// the full image, pixel edges to pixel edges.
Camera front_camera(int width, int height, double distance = 10.0);

/// Focal length (pixels) that maps the half-span of 1 world unit at `distance` to half the image width.
inline double canonical_focal(int width, double distance) { return 0.5 * width * distance; }

} // namespace splatfont
