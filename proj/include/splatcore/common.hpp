// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace splatcore {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

enum class ErrorKind {
    invalid_argument,
    degenerate_projection,
    dimension_mismatch,
    empty_input,
    no_valid_depth,
    non_finite,
    io,
    parse,
    configuration,
};

inline const char *to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::degenerate_projection: return "degenerate_projection";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::no_valid_depth: return "no_valid_depth";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::configuration: return "configuration";
    }
    return "unknown";
}

/// All library failures surface as this exception; `kind()` is stable and
/// safe to branch on, the message is for humans.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string &message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

/// Row-major 2D grid. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Grid {
  public:
    Grid() = default;
    Grid(int width, int height, const T &fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(checked_area(width, height)), fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T &operator()(int x, int y) { return data_[index(x, y)]; }
    const T &operator()(int x, int y) const { return data_[index(x, y)]; }
    T &operator[](std::size_t i) { return data_[i]; }
    const T &operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    bool same_shape(int width, int height) const noexcept {
        return width_ == width && height_ == height;
    }
    template <typename U>
    bool same_shape(const Grid<U> &other) const noexcept {
        return same_shape(other.width(), other.height());
    }

    std::vector<T> &data() noexcept { return data_; }
    const std::vector<T> &data() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    friend bool operator==(const Grid &a, const Grid &b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

  private:
    static long long checked_area(int width, int height) {
        require(width >= 0 && height >= 0, ErrorKind::invalid_argument,
                "grid dimensions must be non-negative");
        return static_cast<long long>(width) * height;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// RGB image with channels in [0, 1].
using Image = Grid<Vec3>;
using DepthMap = Grid<double>;
using BoolGrid = Grid<std::uint8_t>;

inline bool all_finite(const Vec3 &v) { return v.allFinite(); }

/// Worker count: SPLATCORE_THREADS if set and positive, otherwise hardware
/// concurrency.
inline unsigned worker_count() {
    if (const char *env = std::getenv("SPLATCORE_THREADS")) {
        char *end = nullptr;
        const long value = std::strtol(env, &end, 10);
        if (end != env && value > 0) {
            return static_cast<unsigned>(value);
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

/// Calls fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend on the worker count, so callers must write disjoint outputs per
/// index to stay independent of it.
template <typename Fn>
void parallel_for(std::size_t n, Fn &&fn) {
    const std::size_t workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        if (n > 0) {
            fn(std::size_t{0}, n);
        }
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> failures(workers);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) {
            break;
        }
        threads.emplace_back([&, w, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    }
    try {
        fn(std::size_t{0}, std::min(n, chunk));
    } catch (...) {
        failures[0] = std::current_exception();
    }
    for (auto &t : threads) {
        t.join();
    }
    for (auto &f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }
}

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

} // namespace splatcore
