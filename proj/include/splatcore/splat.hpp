// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"
#include "splatcore/sh.hpp"

#include <array>
#include <span>
#include <sstream>

namespace splatcore {

/// Per-pixel 3D points with confidences. Confidence is 1 + exp(raw), so it
/// is >= 1 wherever the pixel is valid.
struct PointMap {
    Grid<Vec3> points;
    Grid<double> confidence;
    BoolGrid valid;

    PointMap() = default;
    PointMap(int width, int height)
        : points(width, height, Vec3::Zero()), confidence(width, height, 1.0),
          valid(width, height, 0) {}

    int width() const { return points.width(); }
    int height() const { return points.height(); }

    void check_shape() const {
        require(confidence.same_shape(points) && valid.same_shape(points),
                ErrorKind::dimension_mismatch, "point map grids disagree in size");
    }
};

/// Knobs of the activation layer. Defaults are the documented choices.
struct ActivationConfig {
    int sh_degree = 0;
    double offset_unit = 0.001; // meters per unit of exp(|raw|) - 1
    double offset_max = 0.05;   // meters
    double scale_min = 1e-6;    // additive floor, meters
    double scale_max = 1.0;     // smooth clamp, meters
    double scale_softness = 0.01; // width of the smooth min, meters

    void validate() const {
        require(sh_degree >= 0 && sh_degree <= kMaxShDegree, ErrorKind::invalid_argument,
                "sh_degree must be in [0, 4]");
        require(offset_unit > 0 && offset_max > 0 && scale_min > 0 && scale_max > scale_min &&
                    scale_softness > 0,
                ErrorKind::invalid_argument, "activation bounds must be positive and ordered");
    }
};

/// Channels of one pixel's pre-activation head output.
inline constexpr int kRawOffset = 0;
inline constexpr int kRawRotation = 3;
inline constexpr int kRawScale = 7;
inline constexpr int kRawOpacity = 10;
inline constexpr int kRawColor = 11;

inline constexpr int raw_channel_count(int sh_degree) { return 11 + 3 * sh_coeff_count(sh_degree); }

/// Pre-activation Gaussian parameters, one column per pixel (row-major
/// pixel order). Rows follow the kRaw* layout; color is channel-major.
struct RawGaussianParams {
    int width = 0;
    int height = 0;
    int sh_degree = 0;
    Eigen::MatrixXd values;

    RawGaussianParams() = default;
    RawGaussianParams(int w, int h, int degree)
        : width(w), height(h), sh_degree(degree),
          values(Eigen::MatrixXd::Zero(raw_channel_count(degree), static_cast<Eigen::Index>(w) * h)) {}

    Eigen::Index pixels() const { return values.cols(); }
    int channels() const { return raw_channel_count(sh_degree); }
};

/// Renderable set of 3D Gaussians. Rotations are unit quaternions stored as
/// (w, x, y, z); sh is n x 3 x B, channel-major per Gaussian.
struct GaussianCloud {
    int sh_degree = 0;
    std::vector<Vec3> means;
    std::vector<Vec4> rotations;
    std::vector<Vec3> scales;
    std::vector<double> opacities;
    std::vector<double> sh;

    std::size_t size() const { return means.size(); }
    bool empty() const { return means.empty(); }
    int coeffs_per_channel() const { return sh_coeff_count(sh_degree); }
    std::size_t sh_stride() const { return static_cast<std::size_t>(3 * coeffs_per_channel()); }

    std::span<const double> sh_of(std::size_t i) const {
        return std::span<const double>(sh).subspan(i * sh_stride(), sh_stride());
    }
    std::span<double> sh_of(std::size_t i) {
        return std::span<double>(sh).subspan(i * sh_stride(), sh_stride());
    }

    void reserve(std::size_t n) {
        means.reserve(n);
        rotations.reserve(n);
        scales.reserve(n);
        opacities.reserve(n);
        sh.reserve(n * sh_stride());
    }

    void push_back(const Vec3 &mean, const Vec4 &rotation, const Vec3 &scale, double opacity,
                   std::span<const double> coeffs) {
        means.push_back(mean);
        rotations.push_back(rotation);
        scales.push_back(scale);
        opacities.push_back(opacity);
        sh.insert(sh.end(), coeffs.begin(), coeffs.end());
    }
};

inline void validate_cloud(const GaussianCloud &cloud) {
    const std::size_t n = cloud.size();
    require(cloud.rotations.size() == n && cloud.scales.size() == n && cloud.opacities.size() == n &&
                cloud.sh.size() == n * cloud.sh_stride(),
            ErrorKind::dimension_mismatch, "cloud attribute arrays disagree in length");
    for (std::size_t i = 0; i < n; ++i) {
        require(cloud.means[i].allFinite(), ErrorKind::non_finite, "cloud mean is not finite");
        require(std::abs(cloud.rotations[i].norm() - 1.0) <= 1e-9, ErrorKind::invalid_argument,
                "cloud rotation is not a unit quaternion");
        require(cloud.scales[i].minCoeff() > 0, ErrorKind::invalid_argument,
                "cloud scales must be positive");
        require(cloud.opacities[i] > 0 && cloud.opacities[i] < 1, ErrorKind::invalid_argument,
                "cloud opacities must lie in (0, 1)");
    }
}

// ---------------------------------------------------------------------------
// Covariance

inline Mat3 quaternion_to_rotation(const Vec4 &q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// dL/dq given dL/dR for R = quaternion_to_rotation(q), q treated as free.
inline Vec4 quaternion_to_rotation_backward(const Vec4 &q, const Mat3 &g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

/// Sigma = R diag(s)^2 R^T.
inline Mat3 covariance(const Vec4 &rotation, const Vec3 &scale) {
    require(std::abs(rotation.norm() - 1.0) <= 1e-6, ErrorKind::invalid_argument,
            "covariance needs a unit quaternion");
    require(scale.minCoeff() > 0, ErrorKind::invalid_argument, "covariance needs positive scales");
    const Mat3 r = quaternion_to_rotation(rotation);
    return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

/// Given dL/dSigma (full-matrix convention), accumulate dL/dq and dL/ds.
inline void covariance_backward(const Vec4 &rotation, const Vec3 &scale, const Mat3 &grad_sigma,
                                Vec4 &grad_rotation, Vec3 &grad_scale) {
    const Mat3 r = quaternion_to_rotation(rotation);
    const Vec3 s2 = scale.cwiseProduct(scale);
    const Mat3 sym = grad_sigma + grad_sigma.transpose();
    const Mat3 grad_r = sym * r * s2.asDiagonal();
    grad_rotation += quaternion_to_rotation_backward(rotation, grad_r);
    const Mat3 inner = r.transpose() * grad_sigma * r;
    for (int k = 0; k < 3; ++k) grad_scale[k] += 2.0 * scale[k] * inner(k, k);
}

// ---------------------------------------------------------------------------
// Activations. Each returns the value and its derivative w.r.t. the raw input.

struct ScalarJet {
    double value;
    double derivative;
};

/// Odd exponential: sign(r) (exp|r| - 1) * unit, hard-clamped to +-max.
inline ScalarJet activate_offset(double raw, const ActivationConfig &cfg) {
    const double mag = std::expm1(std::abs(raw)) * cfg.offset_unit;
    if (mag >= cfg.offset_max) {
        return {std::copysign(cfg.offset_max, raw), 0.0};
    }
    return {std::copysign(mag, raw), std::exp(std::abs(raw)) * cfg.offset_unit};
}

/// s_min + exp(raw), passed through a softplus-based smooth min with s_max.
inline ScalarJet activate_scale(double raw, const ActivationConfig &cfg) {
    const double e = std::exp(raw);
    const double u = cfg.scale_min + e;
    const double k = cfg.scale_softness;
    const double t = (cfg.scale_max - u) / k;
    return {cfg.scale_max - k * softplus(t), sigmoid(t) * e};
}

/// Inverse of activate_scale for s in (s_min, s_max).
inline double scale_to_raw(double s, const ActivationConfig &cfg) {
    require(s > cfg.scale_min && s < cfg.scale_max, ErrorKind::invalid_argument,
            "scale outside the activation range");
    const double k = cfg.scale_softness;
    // softplus(t) = (s_max - s) / k  =>  t = log(expm1((s_max - s) / k))
    const double sp = (cfg.scale_max - s) / k;
    const double t = sp > 30 ? sp + std::log1p(-std::exp(-sp)) : std::log(std::expm1(sp));
    const double u = cfg.scale_max - k * t;
    require(u > cfg.scale_min, ErrorKind::invalid_argument, "scale too small to invert");
    return std::log(u - cfg.scale_min);
}

inline ScalarJet activate_opacity(double raw) {
    const double s = sigmoid(raw);
    return {s, s * (1.0 - s)};
}

/// q / |q| and its Jacobian (I - q q^T) / |q|.
struct QuaternionJet {
    Vec4 value;
    Eigen::Matrix4d jacobian;
};

inline QuaternionJet normalize_quaternion(const Vec4 &raw) {
    const double n = raw.norm();
    require(n >= 1e-12 && std::isfinite(n), ErrorKind::invalid_argument,
            "rotation has (near) zero norm");
    const Vec4 q = raw / n;
    return {q, (Eigen::Matrix4d::Identity() - q * q.transpose()) / n};
}

/// Activated per-pixel attributes, one entry per pixel of the raw grid.
struct ActivatedParams {
    int width = 0;
    int height = 0;
    int sh_degree = 0;
    std::vector<Vec3> offsets;
    std::vector<Vec4> rotations;
    std::vector<Vec3> scales;
    std::vector<double> opacities;
    std::vector<double> sh;

    std::size_t sh_stride() const { return static_cast<std::size_t>(3 * sh_coeff_count(sh_degree)); }
    std::span<const double> sh_of(std::size_t p) const {
        return std::span<const double>(sh).subspan(p * sh_stride(), sh_stride());
    }
};

namespace detail {
inline std::string pixel_tag(std::size_t p, int width) {
    std::ostringstream os;
    os << "pixel (" << (p % static_cast<std::size_t>(width)) << ", "
       << (p / static_cast<std::size_t>(width)) << ")";
    return os.str();
}
} // namespace detail

/// Applies the activation layer. `pixel_colors` set the DC baseline: the
/// head's color output is a residual on top of it.
inline ActivatedParams activate(const RawGaussianParams &raw, const Image &pixel_colors,
                                const ActivationConfig &cfg) {
    cfg.validate();
    require(raw.sh_degree == cfg.sh_degree, ErrorKind::invalid_argument,
            "raw parameters and config disagree on sh_degree");
    require(raw.values.rows() == raw.channels() &&
                raw.values.cols() == static_cast<Eigen::Index>(raw.width) * raw.height,
            ErrorKind::dimension_mismatch, "raw parameter matrix has the wrong shape");
    require(pixel_colors.same_shape(raw.width, raw.height), ErrorKind::dimension_mismatch,
            "pixel colors do not match raw parameter grid");

    const int b = sh_coeff_count(cfg.sh_degree);
    const std::size_t n = static_cast<std::size_t>(raw.pixels());
    ActivatedParams out;
    out.width = raw.width;
    out.height = raw.height;
    out.sh_degree = cfg.sh_degree;
    out.offsets.resize(n);
    out.rotations.resize(n);
    out.scales.resize(n);
    out.opacities.resize(n);
    out.sh.resize(n * static_cast<std::size_t>(3 * b));

    for (std::size_t p = 0; p < n; ++p) {
        const auto col = raw.values.col(static_cast<Eigen::Index>(p));
        if (!col.allFinite()) {
            throw Error(ErrorKind::non_finite, "raw parameters not finite at " + detail::pixel_tag(p, raw.width));
        }
        for (int k = 0; k < 3; ++k) {
            out.offsets[p][k] = activate_offset(col[kRawOffset + k], cfg).value;
            out.scales[p][k] = activate_scale(col[kRawScale + k], cfg).value;
        }
        const Vec4 q_raw = col.segment<4>(kRawRotation);
        const double qn = q_raw.norm();
        if (qn < 1e-12) {
            throw Error(ErrorKind::invalid_argument, "zero-norm rotation at " + detail::pixel_tag(p, raw.width));
        }
        out.rotations[p] = q_raw / qn;
        out.opacities[p] = sigmoid(col[kRawOpacity]);
        double *dst = out.sh.data() + p * static_cast<std::size_t>(3 * b);
        for (int c = 0; c < 3; ++c) {
            for (int k = 0; k < b; ++k) {
                dst[c * b + k] = col[kRawColor + c * b + k];
            }
            dst[c * b] += (pixel_colors[p][c] - 0.5) / kShC0;
        }
    }
    return out;
}

/// Gradients w.r.t. activated attributes, same layout as ActivatedParams.
struct ActivatedGradients {
    std::vector<Vec3> offsets;
    std::vector<Vec4> rotations;
    std::vector<Vec3> scales;
    std::vector<double> opacities;
    std::vector<double> sh;

    explicit ActivatedGradients(std::size_t n = 0, std::size_t sh_stride = 3)
        : offsets(n, Vec3::Zero()), rotations(n, Vec4::Zero()), scales(n, Vec3::Zero()),
          opacities(n, 0.0), sh(n * sh_stride, 0.0) {}
};

/// Chains gradients of activated attributes back to the raw matrix.
inline Eigen::MatrixXd activate_backward(const RawGaussianParams &raw, const ActivatedGradients &grad,
                                         const ActivationConfig &cfg) {
    const int b = sh_coeff_count(cfg.sh_degree);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(raw.values.rows(), raw.values.cols());
    for (Eigen::Index p = 0; p < raw.values.cols(); ++p) {
        const auto col = raw.values.col(p);
        auto g = out.col(p);
        const auto pi = static_cast<std::size_t>(p);
        for (int k = 0; k < 3; ++k) {
            g[kRawOffset + k] = grad.offsets[pi][k] * activate_offset(col[kRawOffset + k], cfg).derivative;
            g[kRawScale + k] = grad.scales[pi][k] * activate_scale(col[kRawScale + k], cfg).derivative;
        }
        const QuaternionJet qj = normalize_quaternion(col.segment<4>(kRawRotation));
        g.segment<4>(kRawRotation) = qj.jacobian.transpose() * grad.rotations[pi];
        g[kRawOpacity] = grad.opacities[pi] * activate_opacity(col[kRawOpacity]).derivative;
        for (int i = 0; i < 3 * b; ++i) {
            g[kRawColor + i] = grad.sh[pi * static_cast<std::size_t>(3 * b) + static_cast<std::size_t>(i)];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cloud construction

/// Where each Gaussian of a built cloud came from.
struct PixelSource {
    int view = 0;
    std::size_t pixel = 0;
};

/// Valid pixels of both views, view 0 row-major then view 1 row-major.
inline std::vector<PixelSource> cloud_sources(std::span<const PointMap> pointmaps) {
    std::vector<PixelSource> out;
    for (std::size_t v = 0; v < pointmaps.size(); ++v) {
        const auto &valid = pointmaps[v].valid;
        for (std::size_t p = 0; p < valid.size(); ++p) {
            if (valid[p]) out.push_back({static_cast<int>(v), p});
        }
    }
    return out;
}

/// One Gaussian per valid pixel of each view: mean = point + offset, all
/// attributes in the point maps' frame (the first camera's).
inline GaussianCloud build_cloud(std::span<const PointMap> pointmaps,
                                 std::span<const RawGaussianParams> raw,
                                 std::span<const Image> images, const ActivationConfig &cfg) {
    require(pointmaps.size() == raw.size() && raw.size() == images.size(),
            ErrorKind::dimension_mismatch, "build_cloud needs one raw grid and image per point map");
    GaussianCloud cloud;
    cloud.sh_degree = cfg.sh_degree;
    for (std::size_t v = 0; v < pointmaps.size(); ++v) {
        const PointMap &pm = pointmaps[v];
        pm.check_shape();
        require(raw[v].width == pm.width() && raw[v].height == pm.height() &&
                    images[v].same_shape(pm.points),
                ErrorKind::dimension_mismatch, "view inputs disagree in size");
        ActivatedParams act;
        try {
            act = activate(raw[v], images[v], cfg);
        } catch (const Error &e) {
            throw Error(e.kind(), "view " + std::to_string(v) + ": " + e.what());
        }
        for (std::size_t p = 0; p < pm.valid.size(); ++p) {
            if (!pm.valid[p]) continue;
            cloud.push_back(pm.points[p] + act.offsets[p], act.rotations[p], act.scales[p],
                            act.opacities[p], act.sh_of(p));
        }
    }
    return cloud;
}

/// Gradients with the same layout as a GaussianCloud.
struct CloudGradients {
    std::vector<Vec3> means;
    std::vector<Vec4> rotations;
    std::vector<Vec3> scales;
    std::vector<double> opacities;
    std::vector<double> sh;

    CloudGradients() = default;
    explicit CloudGradients(const GaussianCloud &cloud)
        : means(cloud.size(), Vec3::Zero()), rotations(cloud.size(), Vec4::Zero()),
          scales(cloud.size(), Vec3::Zero()), opacities(cloud.size(), 0.0),
          sh(cloud.sh.size(), 0.0) {}

    CloudGradients &operator+=(const CloudGradients &o) {
        for (std::size_t i = 0; i < means.size(); ++i) {
            means[i] += o.means[i];
            rotations[i] += o.rotations[i];
            scales[i] += o.scales[i];
            opacities[i] += o.opacities[i];
        }
        for (std::size_t i = 0; i < sh.size(); ++i) sh[i] += o.sh[i];
        return *this;
    }
};

} // namespace splatcore
