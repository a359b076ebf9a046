// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#include "splatcore/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

namespace splatcore {
namespace {

Camera unit_camera() { return Camera::pinhole(100, 100, 50, 50, 100, 100); }

RigidPose random_pose(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    RigidPose p;
    p.rotation = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    p.translation = Vec3(n(rng), n(rng), n(rng));
    return p;
}

TEST(Project, PointOnAxisLandsOnPrincipalPoint) {
    const Projection p = project(unit_camera(), Vec3(0, 0, 1));
    EXPECT_DOUBLE_EQ(p.pixel.x(), 50.0);
    EXPECT_DOUBLE_EQ(p.pixel.y(), 50.0);
    EXPECT_DOUBLE_EQ(p.depth, 1.0);
}

TEST(Project, LateralOffset) {
    const Projection p = project(unit_camera(), Vec3(0.1, 0, 1));
    EXPECT_NEAR(p.pixel.x(), 60.0, 1e-12);
    EXPECT_NEAR(p.pixel.y(), 50.0, 1e-12);
}

TEST(Project, PointInCameraPlaneThrows) {
    try {
        project(unit_camera(), Vec3(1, 0, 0));
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_projection);
    }
}

TEST(Project, UnprojectRoundTrip) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        Camera cam = unit_camera();
        cam.pose = random_pose(rng);
        const Vec2 px(100 * u(rng), 100 * u(rng));
        const double d = 0.1 + 10 * u(rng);
        const Projection p = project(cam, unproject(cam, px, d));
        EXPECT_NEAR((p.pixel - px).norm(), 0.0, 1e-9);
        EXPECT_NEAR(p.depth, d, 1e-9);
    }
}

TEST(Project, UnprojectRejectsNonPositiveDepth) {
    EXPECT_THROW(unproject(unit_camera(), Vec2(1, 1), 0.0), Error);
    EXPECT_THROW(unproject(unit_camera(), Vec2(1, 1), -1.0), Error);
}

TEST(Pose, InvertTranslation) {
    RigidPose t;
    t.translation = Vec3(1, -2, 3);
    const RigidPose inv = invert_pose(t);
    EXPECT_TRUE(inv.rotation.isIdentity());
    EXPECT_EQ(inv.translation, Vec3(-1, 2, -3));
}

TEST(Pose, ComposeWithInverseIsIdentity) {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
        const RigidPose p = random_pose(rng);
        const RigidPose i = compose(p, invert_pose(p));
        EXPECT_LT((i.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Pose, ComposeMatchesMatrixProduct) {
    std::mt19937_64 rng(3);
    const RigidPose a = random_pose(rng), b = random_pose(rng);
    EXPECT_LT((compose(a, b).matrix() - a.matrix() * b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Camera, ValidationRejectsBadInput) {
    Camera cam = unit_camera();
    cam.intrinsics(0, 0) = 0;
    EXPECT_THROW(validate_camera(cam), Error);
    cam = unit_camera();
    cam.pose.rotation(0, 0) = 2;
    EXPECT_THROW(validate_camera(cam), Error);
    cam = unit_camera();
    cam.near = 5;
    cam.far = 1;
    EXPECT_THROW(validate_camera(cam), Error);
    EXPECT_NO_THROW(validate_camera(unit_camera()));
}

TEST(Camera, LookAtFacesTarget) {
    const Vec3 eye(1, 0.2, -3), target(0, 0, 0);
    Camera cam = unit_camera();
    cam.pose = look_at(eye, target);
    EXPECT_TRUE(is_rotation(cam.pose.rotation, 1e-12));
    const Projection p = project(cam, target);
    EXPECT_NEAR(p.pixel.x(), 50.0, 1e-9);
    EXPECT_NEAR(p.pixel.y(), 50.0, 1e-9);
    EXPECT_NEAR(p.depth, (target - eye).norm(), 1e-12);
}

TEST(Camera, RelativeToPreservesProjections) {
    std::mt19937_64 rng(4);
    Camera cam = unit_camera();
    cam.pose = random_pose(rng);
    const RigidPose ref = random_pose(rng);
    const Camera rel = relative_to(cam, ref);
    const Vec3 x = cam.pose.apply(Vec3(0.1, -0.2, 2.0));
    const Projection a = project(cam, x);
    const Projection b = project(rel, invert_pose(ref).apply(x));
    EXPECT_NEAR((a.pixel - b.pixel).norm(), 0.0, 1e-9);
    EXPECT_NEAR(a.depth, b.depth, 1e-12);
}

} // namespace
} // namespace splatcore
