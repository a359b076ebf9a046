// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"

#include <sstream>

namespace splatcore {

/// Rigid transform mapping camera coordinates into world coordinates.
struct RigidPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidPose identity() { return {}; }

    static RigidPose from_matrix(const Mat4 &m) {
        RigidPose pose;
        pose.rotation = m.topLeftCorner<3, 3>();
        pose.translation = m.topRightCorner<3, 1>();
        return pose;
    }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }
};

inline bool is_rotation(const Mat3 &r, double tol = 1e-6) {
    if (!r.allFinite()) {
        return false;
    }
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

inline void validate_pose(const RigidPose &pose) {
    require(is_rotation(pose.rotation), ErrorKind::invalid_argument,
            "pose rotation is not orthonormal with determinant +1");
    require(pose.translation.allFinite(), ErrorKind::non_finite, "pose translation is not finite");
}

/// a * b: apply b first, then a.
inline RigidPose compose(const RigidPose &a, const RigidPose &b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidPose invert_pose(const RigidPose &pose) {
    const Mat3 rt = pose.rotation.transpose();
    return {rt, -(rt * pose.translation)};
}

/// Pinhole camera, zero skew. `pose` is world-from-camera, so the camera
/// center is `pose.translation` and the camera looks down its local +z.
struct Camera {
    Mat3 intrinsics = Mat3::Identity();
    RigidPose pose;
    int width = 0;
    int height = 0;
    double near = 0.01;
    double far = 100.0;

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }
    Vec3 center() const { return pose.translation; }

    Vec3 to_camera(const Vec3 &p_world) const {
        return pose.rotation.transpose() * (p_world - pose.translation);
    }

    static Camera pinhole(double fx, double fy, double cx, double cy, int width, int height,
                          const RigidPose &pose = {}, double near = 0.01, double far = 100.0) {
        Camera cam;
        cam.intrinsics << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
        cam.pose = pose;
        cam.width = width;
        cam.height = height;
        cam.near = near;
        cam.far = far;
        return cam;
    }

    friend bool operator==(const Camera &a, const Camera &b) {
        return a.intrinsics == b.intrinsics && a.pose.rotation == b.pose.rotation &&
               a.pose.translation == b.pose.translation && a.width == b.width &&
               a.height == b.height && a.near == b.near && a.far == b.far;
    }
};

inline void validate_camera(const Camera &cam) {
    const Mat3 &k = cam.intrinsics;
    require(k.allFinite(), ErrorKind::non_finite, "intrinsics are not finite");
    require(k(0, 0) > 0 && k(1, 1) > 0, ErrorKind::invalid_argument,
            "intrinsics need positive fx and fy");
    require(k(0, 1) == 0.0 && k(1, 0) == 0.0 && k(2, 0) == 0.0 && k(2, 1) == 0.0 && k(2, 2) == 1.0,
            ErrorKind::invalid_argument, "intrinsics must be a zero-skew pinhole matrix");
    require(cam.width > 0 && cam.height > 0, ErrorKind::invalid_argument,
            "image size must be positive");
    require(cam.near > 0 && cam.near < cam.far, ErrorKind::invalid_argument,
            "clip planes need 0 < near < far");
    validate_pose(cam.pose);
}

struct Projection {
    Vec2 pixel;
    double depth = 0.0;
};

/// Continuous pixel coordinates; no bounds test. Throws on points lying in
/// the camera plane.
inline Projection project(const Camera &cam, const Vec3 &point_world) {
    const Vec3 pc = cam.to_camera(point_world);
    if (std::abs(pc.z()) < 1e-12) {
        std::ostringstream msg;
        msg << "point projects from the camera plane (depth " << pc.z() << ")";
        throw Error(ErrorKind::degenerate_projection, msg.str());
    }
    return {Vec2(cam.fx() * pc.x() / pc.z() + cam.cx(), cam.fy() * pc.y() / pc.z() + cam.cy()),
            pc.z()};
}

inline Vec3 unproject(const Camera &cam, const Vec2 &pixel, double depth) {
    require(depth > 0 && std::isfinite(depth), ErrorKind::invalid_argument,
            "unproject needs a positive depth");
    const Vec3 pc((pixel.x() - cam.cx()) / cam.fx() * depth,
                  (pixel.y() - cam.cy()) / cam.fy() * depth, depth);
    return cam.pose.apply(pc);
}

/// Center of pixel (x, y) in continuous image coordinates.
inline Vec2 pixel_center(int x, int y) { return {x + 0.5, y + 0.5}; }

/// World-from-camera pose whose +z axis points from `eye` to `target`,
/// with image-down (+y) roughly along `down`.
inline RigidPose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &down = Vec3(0, 1, 0)) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = down.cross(z);
    require(x.norm() > 1e-9, ErrorKind::invalid_argument, "look_at direction is parallel to down");
    x.normalize();
    const Vec3 y = z.cross(x);
    RigidPose pose;
    pose.rotation.col(0) = x;
    pose.rotation.col(1) = y;
    pose.rotation.col(2) = z;
    pose.translation = eye;
    return pose;
}

/// Re-expresses `cam` with `reference` (world-from-reference) as the new
/// world frame.
inline Camera relative_to(const Camera &cam, const RigidPose &reference) {
    Camera out = cam;
    out.pose = compose(invert_pose(reference), cam.pose);
    return out;
}

} // namespace splatcore
