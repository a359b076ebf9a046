// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#include "support/checks.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

namespace splatcore {
namespace {

GaussianCloud single(const Vec3 &mean, double scale, double opacity, const Vec3 &rgb) {
    GaussianCloud c;
    const std::array<double, 3> sh{(rgb[0] - 0.5) / kShC0, (rgb[1] - 0.5) / kShC0, (rgb[2] - 0.5) / kShC0};
    c.push_back(mean, Vec4(1, 0, 0, 0), Vec3::Constant(scale), opacity, sh);
    return c;
}

TEST(ProjectGaussian, IsotropicOnAxis) {
    const Camera cam = Camera::pinhole(100, 100, 50, 50, 100, 100);
    const auto g = project_gaussian(single(Vec3(0, 0, 1), 0.01, 0.5, Vec3::Constant(0.5)), 0, cam);
    ASSERT_TRUE(g.has_value());
    EXPECT_NEAR((g->mean2d - Vec2(50, 50)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(g->cov2d(0, 0), 1.3, 1e-12);
    EXPECT_NEAR(g->cov2d(1, 1), 1.3, 1e-12);
    EXPECT_NEAR(g->cov2d(0, 1), 0.0, 1e-12);
    EXPECT_EQ(g->depth, 1.0);
    EXPECT_EQ(g->source_index, 0);
}

TEST(ProjectGaussian, CullsOutsideDepthRangeAndImage) {
    const Camera cam = Camera::pinhole(100, 100, 50, 50, 100, 100);
    EXPECT_FALSE(project_gaussian(single(Vec3(0, 0, -1), 0.01, 0.5, Vec3::Zero()), 0, cam));
    EXPECT_FALSE(project_gaussian(single(Vec3(0, 0, 200), 0.01, 0.5, Vec3::Zero()), 0, cam));
    EXPECT_FALSE(project_gaussian(single(Vec3(5, 0, 1), 0.01, 0.5, Vec3::Zero()), 0, cam));
}

TEST(ProjectGaussian, RandomCloudProperties) {
    std::mt19937_64 rng(20);
    const GaussianCloud cloud = oracle::random_cloud(rng, 200, 2);
    const Camera cam = oracle::front_camera(64, 48, 60);
    int projected = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto g = project_gaussian(cloud, i, cam);
        if (!g) continue;
        ++projected;
        EXPECT_LT((g->mean2d - project(cam, cloud.means[i]).pixel).norm(), 1e-9);
        Eigen::SelfAdjointEigenSolver<Mat2> es(g->cov2d);
        EXPECT_GE(es.eigenvalues().minCoeff(), kLowPassVariance - 1e-12);
        EXPECT_GE(g->depth, cam.near);
        EXPECT_LE(g->depth, cam.far);
        EXPECT_NEAR((g->color - oracle::sh_color(cloud.sh_of(i), (cloud.means[i] - cam.center()).normalized(), 2)).norm(),
                    0.0, 1e-12);
    }
    EXPECT_GT(projected, 100);
}

TEST(Render, EmptyCloudIsBlack) {
    const RenderOutput r = render(GaussianCloud{}, oracle::front_camera(20, 10, 20));
    for (std::size_t p = 0; p < r.color.size(); ++p) {
        EXPECT_EQ(r.color[p], Vec3::Zero());
        EXPECT_EQ(r.alpha[p], 0.0);
        EXPECT_EQ(r.depth[p], 0.0);
    }
}

TEST(Render, OpaqueGaussianAtPixelCenter) {
    const Camera cam = Camera::pinhole(100, 100, 16.5, 16.5, 33, 33);
    const Vec3 rgb(0.7, 0.4, 0.2);
    const RenderOutput r = render(single(Vec3(0, 0, 2), 0.2, 0.9999, rgb), cam, {Precision::f64, false});
    EXPECT_NEAR(r.alpha(16, 16), kMaxWeight, 1e-12);
    EXPECT_NEAR((r.color(16, 16) - kMaxWeight * rgb).norm(), 0.0, 1e-12);
    EXPECT_NEAR(r.depth(16, 16), 2.0, 1e-12);
}

TEST(Render, OutputsBoundedAndFinite) {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 10; ++k) {
        GaussianCloud c = oracle::random_cloud(rng, 64, 1, 1.0, 5.0, 1.0, 0.05, 0.5);
        for (double &v : c.sh) v *= 3.0;
        const RenderOutput r = render(c, oracle::front_camera(40, 30, 40));
        for (std::size_t p = 0; p < r.color.size(); ++p) {
            EXPECT_TRUE(r.color[p].allFinite());
            EXPECT_GE(r.color[p].minCoeff(), 0.0);
            EXPECT_LE(r.color[p].maxCoeff(), 1.0);
            EXPECT_GE(r.alpha[p], 0.0);
            EXPECT_LE(r.alpha[p], 1.0);
            EXPECT_TRUE(std::isfinite(r.depth[p]));
        }
    }
}

TEST(Render, MatchesNaiveOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        EXPECT_LE(oracle::naive_difference(seed, 16), 1e-6) << "seed " << seed;
    }
}

TEST(Render, MatchesNaiveOracleAcrossTiles) {
    std::mt19937_64 rng(22);
    const GaussianCloud cloud = oracle::random_cloud(rng, 80, 0, 2.0, 6.0, 1.5);
    const Camera cam = Camera::pinhole(50, 50, 27.0, 21.0, 53, 41);
    const RenderOutput r = render(cloud, cam, {Precision::f64, false});
    const oracle::NaiveImage ref = oracle::naive_render(cloud, cam);
    for (std::size_t p = 0; p < r.color.size(); ++p) {
        EXPECT_LE((r.color[p] - ref.color[p]).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Render, SinglePrecisionCloseToDouble) {
    std::mt19937_64 rng(23);
    const GaussianCloud cloud = oracle::random_cloud(rng, 30, 1);
    const Camera cam = oracle::front_camera(32, 32, 40);
    const RenderOutput a = render(cloud, cam, {Precision::f32, false});
    const RenderOutput b = render(cloud, cam, {Precision::f64, false});
    for (std::size_t p = 0; p < a.color.size(); ++p) {
        EXPECT_LE((a.color[p] - b.color[p]).cwiseAbs().maxCoeff(), 1e-4);
    }
}

TEST(Render, AddingAGaussianNeverLowersAlpha) {
    std::mt19937_64 rng(24);
    for (int k = 0; k < 20; ++k) {
        GaussianCloud c = oracle::random_cloud(rng, 12, 0);
        const Camera cam = oracle::front_camera(24, 24, 30);
        const RenderOutput before = render(c, cam, {Precision::f64, false});
        const GaussianCloud extra = oracle::random_cloud(rng, 1, 0);
        c.push_back(extra.means[0], extra.rotations[0], extra.scales[0], extra.opacities[0], extra.sh_of(0));
        const RenderOutput after = render(c, cam, {Precision::f64, false});
        for (std::size_t p = 0; p < before.alpha.size(); ++p) {
            EXPECT_GE(after.alpha[p], before.alpha[p] - kMinTransmittance);
        }
    }
}

TEST(Render, DeterministicAcrossWorkerCounts) {
    std::mt19937_64 rng(25);
    const GaussianCloud cloud = oracle::random_cloud(rng, 300, 1, 2.0, 5.0, 1.5);
    const Camera cam = oracle::front_camera(70, 50, 60);
    Image grad(70, 50);
    for (auto &g : grad) g = Vec3(0.3, -0.2, 0.1);

    auto run = [&](const char *threads) {
        setenv("SPLATCORE_THREADS", threads, 1);
        RenderOutput r = render(cloud, cam, {Precision::f32, true});
        CloudGradients g = render_backward(cloud, cam, grad, r.aux);
        unsetenv("SPLATCORE_THREADS");
        return std::make_pair(std::move(r), std::move(g));
    };
    const auto [r1, g1] = run("1");
    const auto [r2, g2] = run("4");
    const auto [r3, g3] = run("4");
    for (std::size_t p = 0; p < r1.color.size(); ++p) {
        EXPECT_EQ(r1.color[p], r2.color[p]);
        EXPECT_EQ(r2.color[p], r3.color[p]);
        EXPECT_EQ(r1.depth[p], r2.depth[p]);
    }
    EXPECT_EQ(r1.signature, r2.signature);
    EXPECT_EQ(g1.means, g2.means);
    EXPECT_EQ(g1.rotations, g2.rotations);
    EXPECT_EQ(g1.scales, g3.scales);
    EXPECT_EQ(g1.opacities, g2.opacities);
    EXPECT_EQ(g1.sh, g2.sh);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
    std::mt19937_64 rng(26);
    const GaussianCloud cloud = oracle::random_cloud(rng, 10, 1);
    const Camera cam = oracle::front_camera(16, 16, 20);
    const RenderOutput r = render(cloud, cam);
    const CloudGradients g = render_backward(cloud, cam, Image(16, 16, Vec3::Zero()), r.aux);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        EXPECT_EQ(g.means[i], Vec3::Zero());
        EXPECT_EQ(g.rotations[i], Vec4::Zero());
        EXPECT_EQ(g.scales[i], Vec3::Zero());
        EXPECT_EQ(g.opacities[i], 0.0);
    }
    for (double v : g.sh) EXPECT_EQ(v, 0.0);
}

TEST(RenderBackward, SingleGaussianOpacity) {
    const Camera cam = Camera::pinhole(40, 40, 8, 8, 16, 16);
    const Vec3 rgb(0.6, 0.3, 0.8);
    const GaussianCloud cloud = single(Vec3(0.02, -0.01, 2), 0.08, 0.6, rgb);
    const auto splats = oracle::project_all(cloud, cam);
    ASSERT_EQ(splats.size(), 1u);
    const oracle::Splat2d &s = splats[0];
    const RenderOutput r = render(cloud, cam, {Precision::f64, false});
    const Vec3 up(0.5, -1.0, 2.0);
    for (int y : {5, 8, 10}) {
        for (int x : {6, 8, 9}) {
            Image grad(16, 16, Vec3::Zero());
            grad(x, y) = up;
            const CloudGradients g = render_backward(cloud, cam, grad, r.aux);
            const double dx = x + 0.5 - s.mx, dy = y + 0.5 - s.my;
            const double gauss = std::exp(-0.5 * (s.ia * dx * dx + 2 * s.ib * dx * dy + s.ic * dy * dy));
            EXPECT_NEAR(g.opacities[0], gauss * rgb.dot(up), 1e-12) << x << "," << y;
        }
    }
}

TEST(RenderBackward, RejectsMismatchedAux) {
    std::mt19937_64 rng(27);
    const GaussianCloud cloud = oracle::random_cloud(rng, 4, 0);
    const Camera cam = oracle::front_camera(16, 16, 20);
    const RenderOutput r = render(cloud, cam);
    EXPECT_THROW(render_backward(cloud, oracle::front_camera(16, 16, 21), Image(16, 16, Vec3::Zero()), r.aux), Error);
    const GaussianCloud other = oracle::random_cloud(rng, 5, 0);
    EXPECT_THROW(render_backward(other, cam, Image(16, 16, Vec3::Zero()), r.aux), Error);
}

TEST(RenderBackward, MatchesFiniteDifferencesOnRawParameters) {
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        const oracle::FdReport rep = oracle::raster_fd_check(seed, 2 + static_cast<int>(seed % 7));
        EXPECT_EQ(rep.failed, 0) << "seed " << seed << " worst " << rep.worst;
        EXPECT_GT(rep.checked, 10 * rep.skipped) << "seed " << seed;
    }
}

TEST(RenderBackward, MatchesFiniteDifferencesOnCloudAttributes) {
    for (std::uint64_t seed = 110; seed < 116; ++seed) {
        const oracle::FdReport rep = oracle::cloud_fd_check(seed, 2 + static_cast<int>(seed % 7));
        EXPECT_EQ(rep.failed, 0) << "seed " << seed << " worst " << rep.worst;
        EXPECT_GT(rep.checked, 10 * rep.skipped) << "seed " << seed;
    }
}

} // namespace
} // namespace splatcore
