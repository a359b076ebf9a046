// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatcore/common.hpp"

#include <array>
#include <span>

namespace splatcore {

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr int kMaxShDegree = 4;

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

namespace detail {

/// Forward-mode scalar carrying d/dx, d/dy, d/dz. Used to get the basis
/// gradient from the same polynomial code as the basis itself.
struct Dual3 {
    double v = 0.0;
    std::array<double, 3> d{0.0, 0.0, 0.0};

    Dual3() = default;
    Dual3(double value) : v(value) {}
    Dual3(double value, int axis) : v(value) { d[static_cast<std::size_t>(axis)] = 1.0; }

    friend Dual3 operator+(const Dual3 &a, const Dual3 &b) {
        Dual3 r(a.v + b.v);
        for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] + b.d[i];
        return r;
    }
    friend Dual3 operator-(const Dual3 &a, const Dual3 &b) {
        Dual3 r(a.v - b.v);
        for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] - b.d[i];
        return r;
    }
    friend Dual3 operator*(const Dual3 &a, const Dual3 &b) {
        Dual3 r(a.v * b.v);
        for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
        return r;
    }
    friend Dual3 operator*(double s, const Dual3 &a) {
        Dual3 r(s * a.v);
        for (int i = 0; i < 3; ++i) r.d[i] = s * a.d[i];
        return r;
    }
};

inline double value_of(double v) { return v; }
inline double value_of(const Dual3 &v) { return v.v; }

/// Real spherical-harmonic basis in the ordering and sign convention used by
/// common splatting viewers (band by band, m = -l..l). Assumes (x, y, z)
/// is a unit vector.
template <typename T>
void sh_basis(int degree, const T &x, const T &y, const T &z, std::span<T> out) {
    out[0] = T(kShC0);
    if (degree < 1) return;
    constexpr double c1 = 0.4886025119029199;
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
    if (degree < 2) return;
    const T xx = x * x, yy = y * y, zz = z * z;
    const T xy = x * y, yz = y * z, xz = x * z;
    out[4] = 1.0925484305920792 * xy;
    out[5] = -1.0925484305920792 * yz;
    out[6] = 0.31539156525252005 * (2.0 * zz - xx - yy);
    out[7] = -1.0925484305920792 * xz;
    out[8] = 0.5462742152960396 * (xx - yy);
    if (degree < 3) return;
    out[9] = -0.5900435899266435 * y * (3.0 * xx - yy);
    out[10] = 2.890611442640554 * xy * z;
    out[11] = -0.4570457994644658 * y * (4.0 * zz - xx - yy);
    out[12] = 0.3731763325901154 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = -0.4570457994644658 * x * (4.0 * zz - xx - yy);
    out[14] = 1.445305721320277 * z * (xx - yy);
    out[15] = -0.5900435899266435 * x * (xx - 3.0 * yy);
    if (degree < 4) return;
    out[16] = 2.5033429417967046 * xy * (xx - yy);
    out[17] = -1.7701307697799304 * yz * (3.0 * xx - yy);
    out[18] = 0.9461746957575601 * xy * (7.0 * zz - 1.0);
    out[19] = -0.6690465435572892 * yz * (7.0 * zz - 3.0);
    out[20] = 0.10578554691520431 * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = -0.6690465435572892 * xz * (7.0 * zz - 3.0);
    out[22] = 0.47308734787878004 * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = -1.7701307697799304 * xz * (xx - 3.0 * yy);
    out[24] = 0.6258357354491761 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

inline void check_sh_args(std::size_t n_coeffs, int degree) {
    require(degree >= 0 && degree <= kMaxShDegree, ErrorKind::invalid_argument,
            "spherical-harmonic degree must be in [0, 4]");
    require(n_coeffs == static_cast<std::size_t>(3 * sh_coeff_count(degree)),
            ErrorKind::dimension_mismatch, "coefficient count does not match (degree + 1)^2 per channel");
}

} // namespace detail

/// Coefficients are channel-major: coeffs[c * B + k] for channel c, basis k.
struct ShColor {
    Vec3 rgb = Vec3::Zero();
    /// Channels that hit the lower clamp at zero (no gradient flows there).
    std::array<bool, 3> clamped{false, false, false};
};

/// Unchecked evaluation used on hot paths where `dir` is already unit.
inline ShColor eval_sh_unchecked(std::span<const double> coeffs, const Vec3 &dir, int degree) {
    const int b = sh_coeff_count(degree);
    std::array<double, sh_coeff_count(kMaxShDegree)> basis{};
    detail::sh_basis<double>(degree, dir.x(), dir.y(), dir.z(), std::span<double>(basis));
    ShColor out;
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < b; ++k) acc += coeffs[static_cast<std::size_t>(c * b + k)] * basis[k];
        acc += 0.5;
        out.clamped[c] = acc < 0.0;
        out.rgb[c] = out.clamped[c] ? 0.0 : acc;
    }
    return out;
}

inline Vec3 eval_sh(std::span<const double> coeffs, const Vec3 &view_dir, int degree) {
    detail::check_sh_args(coeffs.size(), degree);
    require(std::abs(view_dir.norm() - 1.0) <= 1e-6, ErrorKind::invalid_argument,
            "view direction must be a unit vector");
    return eval_sh_unchecked(coeffs, view_dir, degree).rgb;
}

struct ShGradients {
    std::vector<double> coeffs;
    Vec3 dir = Vec3::Zero();
};

/// Reverse-mode of eval_sh with respect to coefficients and direction
/// (direction treated as a free 3-vector).
inline void eval_sh_backward(std::span<const double> coeffs, const Vec3 &dir, int degree,
                             const Vec3 &grad_rgb, std::span<double> grad_coeffs, Vec3 &grad_dir) {
    const int b = sh_coeff_count(degree);
    std::array<detail::Dual3, sh_coeff_count(kMaxShDegree)> basis{};
    const detail::Dual3 x(dir.x(), 0), y(dir.y(), 1), z(dir.z(), 2);
    detail::sh_basis<detail::Dual3>(degree, x, y, z, std::span<detail::Dual3>(basis));
    grad_dir.setZero();
    for (int c = 0; c < 3; ++c) {
        double acc = 0.5;
        for (int k = 0; k < b; ++k) acc += coeffs[static_cast<std::size_t>(c * b + k)] * basis[k].v;
        if (acc < 0.0) continue;
        const double g = grad_rgb[c];
        for (int k = 0; k < b; ++k) {
            const double ck = coeffs[static_cast<std::size_t>(c * b + k)];
            grad_coeffs[static_cast<std::size_t>(c * b + k)] += g * basis[k].v;
            for (int a = 0; a < 3; ++a) grad_dir[a] += g * ck * basis[k].d[a];
        }
    }
}

inline ShGradients eval_sh_backward(std::span<const double> coeffs, const Vec3 &dir, int degree,
                                    const Vec3 &grad_rgb) {
    detail::check_sh_args(coeffs.size(), degree);
    ShGradients out;
    out.coeffs.assign(coeffs.size(), 0.0);
    eval_sh_backward(coeffs, dir, degree, grad_rgb, std::span<double>(out.coeffs), out.dir);
    return out;
}

} // namespace splatcore
