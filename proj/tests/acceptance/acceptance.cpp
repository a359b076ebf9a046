// Copyright Contributors to the splatcore project
// SPDX-License-Identifier: Apache-2.0

// Runs the ten acceptance criteria and prints one line per criterion.
// Exit status is nonzero if any criterion fails.

#include "support/checks.hpp"
#include "support/scenarios.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>

namespace {

using namespace splatcore;
namespace fs = std::filesystem;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Verdict raster_gradients() {
    int failed = 0, checked = 0, skipped = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const int n = 1 + static_cast<int>(seed % 8);
        for (const auto &rep : {oracle::cloud_fd_check(seed, n), oracle::raster_fd_check(seed, n)}) {
            failed += rep.failed;
            checked += rep.checked;
            skipped += rep.skipped;
            worst = std::max(worst, rep.worst);
        }
    }
    return {failed == 0 && checked > 20 * skipped,
            fmt("20 scenes, %d entries checked, %d skipped, %d over 1e-4, worst relative error %.2e", checked, skipped,
                failed, worst)};
}

Verdict compositing_oracle() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        worst = std::max(worst, oracle::naive_difference(1000 + seed, 4 + static_cast<int>(seed % 30)));
    }
    return {worst <= 1e-6, fmt("50 scenes at 32x32, worst channel difference %.2e", worst)};
}

Verdict covisibility_oracle() {
    std::size_t mismatches = 0, self = 0, covisible = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const oracle::CovisibilityReport rep = oracle::covisibility_check(seed);
        mismatches += rep.mismatches;
        self += rep.self_mismatches;
        covisible += rep.covisible;
    }
    return {mismatches == 0 && self == 0 && covisible > 0,
            fmt("20 scenes at 64x64, %zu mismatching pixels, %zu self-mask mismatches, %zu covisible pixels",
                mismatches, self, covisible)};
}

Verdict point_loss_algebra() {
    PointMap pred(1, 1), gt(1, 1);
    pred.points[0] = Vec3(0, 0, 1);
    pred.confidence[0] = 2.0;
    pred.valid[0] = 1;
    gt.points[0] = Vec3(0, 0, 2);
    gt.valid[0] = 1;
    const double value = point_loss(pred, gt, PointLossConfig{0.2, true}).value;
    const double example_err = std::abs(value - (2.0 - 0.2 * std::log(2.0)));

    std::mt19937_64 rng(4);
    int monotone = 0;
    for (int k = 0; k < 1000; ++k) monotone += oracle::point_loss_decreases_along_segment(rng, k % 2 == 0);

    double fd = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        fd = std::max({fd, oracle::point_loss_fd_error(seed, true), oracle::point_loss_fd_error(seed, false)});
    }
    return {example_err <= 1e-9 && monotone == 1000 && fd <= 1e-6,
            fmt("worked example off by %.1e, monotone on %d/1000 draws, worst gradient error %.2e", example_err,
                monotone, fd)};
}

Verdict masking_invariance() {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 100.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    const int trials = 200;
    for (int k = 0; k < trials; ++k) {
        const int w = 4 + static_cast<int>(u(rng) * 20), h = 4 + static_cast<int>(u(rng) * 20);
        const Image r = oracle::random_image(rng, w, h);
        const Image t = oracle::random_image(rng, w, h);
        LossMask m{BoolGrid(w, h, 0)};
        for (std::size_t p = 0; p < m.valid.size(); ++p) m.valid[p] = u(rng) < 0.5;
        m.valid[0] = 1;
        RenderLossConfig cfg;
        if (k % 2) {
            cfg.perceptual = [](const Image &a, const Image &b) {
                PerceptualResult out{0.0, Image(a.width(), a.height(), Vec3::Zero())};
                for (std::size_t p = 0; p < a.size(); ++p) {
                    const Vec3 d = a[p] - b[p];
                    out.value += d.squaredNorm() * (1.0 + 0.1 * static_cast<double>(p % 7));
                    out.grad[p] = 2.0 * d * (1.0 + 0.1 * static_cast<double>(p % 7));
                }
                return out;
            };
        }
        Image perturbed = r;
        for (std::size_t p = 0; p < perturbed.size(); ++p) {
            if (m.valid[p]) continue;
            switch (k % 3) {
            case 0: perturbed[p] = Vec3(g(rng), g(rng), g(rng)); break;
            case 1: perturbed[p] = Vec3::Constant(std::nan("")); break;
            default: perturbed[p] = Vec3::Constant(std::numeric_limits<double>::infinity()); break;
            }
        }
        const RenderLossResult a = masked_render_loss(r, t, m, cfg);
        const RenderLossResult b = masked_render_loss(perturbed, t, m, cfg);
        bool same = a.value == b.value;
        for (std::size_t p = 0; p < r.size(); ++p) same = same && a.grad_color[p] == b.grad_color[p];
        violations += !same;
    }
    return {violations == 0, fmt("%d/%d perturbed trials changed the loss or its gradient", violations, trials)};
}

Verdict toy_training() {
    const oracle::ToyTrainingReport rep = oracle::toy_training();
    const double gain = rep.trained - rep.baseline;
    return {gain >= 6.0 && rep.deterministic,
            fmt("masked PSNR %.2f dB -> %.2f dB (+%.2f dB), rerun %s, %.0f s", rep.baseline, rep.trained, gain,
                rep.deterministic ? "identical" : "DIFFERS", rep.seconds)};
}

Verdict local_minimum() {
    const oracle::LocalMinimumReport rep = oracle::local_minimum();
    return {rep.max_photometric_grad < 1e-8 && rep.supervised_error <= 1e-3 && rep.supervised_steps <= 500,
            fmt("photometric mean gradient %.1e (mean moved to %.3f m off), point-supervised error %.1e m after %d "
                "steps",
                rep.max_photometric_grad, rep.photometric_error, rep.supervised_error, rep.supervised_steps)};
}

Verdict unbounded_scale() {
    const double clamp = ActivationConfig{}.scale_max;
    int hit = 0, bounded = 0;
    std::ostringstream runs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = oracle::occlusion_runs(seed);
        hit += r[0].max_scale >= 0.99 * clamp;
        bounded += r[1].max_scale < 0.5 * clamp;
        runs << fmt(" %.2f/%.2f", r[0].max_scale, r[1].max_scale);
    }
    return {hit >= 8 && bounded >= 8,
            fmt("clamp %.2f; unmasked reached it on %d/10 seeds, masked stayed below half on %d/10; max scale "
                "unmasked/masked:%s",
                clamp, hit, bounded, runs.str().c_str())};
}

Verdict formats(const fs::path &work) {
    fs::create_directories(work);
    double worst = 0.0;
    for (int degree = 0; degree <= 3; ++degree) {
        worst = std::max(worst, oracle::ply_round_trip_error(90 + static_cast<std::uint64_t>(degree), 200, degree, work));
    }
    const fs::path data = SPLATCORE_TEST_DATA;
    write_ply(oracle::load_golden_cloud(data / "golden_cloud.json"), work / "golden.ply");
    const bool golden = oracle::file_bytes(work / "golden.ply") == oracle::file_bytes(data / "golden.ply");
    const std::string cmd = std::string("\"") + SPLATCORE_PYTHON + "\" \"" + SPLATCORE_VALIDATOR + "\" --cli \"" +
                            SPLATCORE_CLI + "\" --schemas \"" + SPLATCORE_SCHEMAS + "\" --work \"" +
                            (work / "schemas").string() + "\"";
    const int rc = std::system(cmd.c_str());
    return {worst <= 1e-6 && golden && rc == 0,
            fmt("PLY round trip worst relative error %.1e, golden bytes %s, schema validation %s", worst,
                golden ? "match" : "DIFFER", rc == 0 ? "passed" : "FAILED")};
}

Verdict metric_sanity() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, oracle::metric_deviation(seed));
    std::mt19937_64 rng(10);
    const Image a = oracle::random_image(rng, 33, 17);
    const double s = ssim(a, a);
    const PsnrResult p = psnr(a, a, LossMask::full(33, 17));
    const bool identical = s == 1.0 && p.full == 99.0 && p.masked && *p.masked == 99.0;
    return {worst <= 1e-9 && identical,
            fmt("worst deviation from the reference metrics %.1e; identical images: SSIM %.12f, PSNR %.1f dB", worst, s,
                p.full)};
}

} // namespace

int main(int argc, char **argv) {
    fs::path work = fs::temp_directory_path() / "splatcore_acceptance";
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc) {
            work = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            only.push_back(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: acceptance [--work DIR] [--only N]...\n");
            return 2;
        }
    }

    const std::vector<std::pair<const char *, std::function<Verdict()>>> criteria = {
        {"rasterizer gradients", raster_gradients},
        {"compositing oracle", compositing_oracle},
        {"covisibility oracle", covisibility_oracle},
        {"point-loss algebra", point_loss_algebra},
        {"masking invariance", masking_invariance},
        {"toy training", toy_training},
        {"local minimum", local_minimum},
        {"unbounded scale", unbounded_scale},
        {"format round trips", [&] { return formats(work); }},
        {"metric sanity", metric_sanity},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception &e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %2d %-22s %s  %s [%.1f s]\n", id, criteria[i].first, v.pass ? "PASS" : "FAIL",
                    v.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !v.pass;
    }
    std::printf("%d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
