#include <doctest.h>

#include <cmath>
#include <limits>

#include "pact/metrics.hpp"
#include "pact/rng.hpp"

#include "support/oracles.hpp"

using namespace pact;
using namespace pact::metrics;

namespace {

ImageGrid grid_of(int n) {
    ImageGrid g;
    g.nx = g.ny = n;
    g.pitch_m = 1e-4;
    return g;
}

ImageField random_positive(int n, std::uint64_t seed) {
    ImageField p(grid_of(n));
    CounterRng rng(seed);
    for (double& v : p.values) v = 0.05 + 0.95 * rng.next_double();
    return p;
}

} // namespace

TEST_CASE("identical inputs give the identity report") {
    ImageField p = random_positive(32, 1);
    MetricReport r = compute_metrics(p, p);
    CHECK(r.ssim == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.rmse == 0.0);
    CHECK(std::isinf(r.psnr_db));
}

TEST_CASE("constructed 0.1-offset case with normalization off") {
    ImageField ref = random_positive(16, 2);
    double peak = *std::max_element(ref.values.begin(), ref.values.end());
    for (double& v : ref.values) v /= peak; // peak-1 reference
    ImageField p = ref;
    for (double& v : p.values) v += 0.1;
    MetricOptions opts;
    opts.peak_normalize = false;
    MetricReport r = compute_metrics(p, ref, opts);
    CHECK(r.rmse == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(r.psnr_db == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("agrees with the independent implementation on random pairs") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const int n = 64;
        ImageField a = random_positive(n, 100 + seed);
        ImageField b = random_positive(n, 200 + seed);
        MetricReport r = compute_metrics(a, b);
        auto ref = oracle::reference_metrics(a.values, b.values, n, true);
        CHECK(std::abs(r.ssim - ref.ssim) < 1e-6);
        CHECK(std::abs(r.psnr_db - ref.psnr) < 1e-6);
        CHECK(std::abs(r.rmse - ref.rmse) < 1e-6);
    }
}

TEST_CASE("ssim is symmetric") {
    ImageField a = random_positive(32, 3);
    ImageField b = random_positive(32, 4);
    const double ab = compute_metrics(a, b).ssim;
    const double ba = compute_metrics(b, a).ssim;
    CHECK(std::abs(ab - ba) < 1e-12);
}

TEST_CASE("growing noise degrades ssim and psnr (majority monotone)") {
    ImageField ref = random_positive(32, 5);
    int ssim_mono = 0, psnr_mono = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        double prev_ssim = 2.0, prev_psnr = 1e9;
        bool s_ok = true, p_ok = true;
        for (int lvl = 1; lvl <= 5; ++lvl) {
            CounterRng rng(900 + seed);
            ImageField noisy = ref;
            const double sd = 0.02 * lvl;
            for (double& v : noisy.values) v += sd * rng.next_gaussian();
            MetricReport r = compute_metrics(noisy, ref);
            if (r.ssim > prev_ssim) s_ok = false;
            if (r.psnr_db > prev_psnr) p_ok = false;
            prev_ssim = r.ssim;
            prev_psnr = r.psnr_db;
        }
        ssim_mono += s_ok;
        psnr_mono += p_ok;
    }
    CHECK(ssim_mono >= 6);
    CHECK(psnr_mono >= 6);
}

TEST_CASE("peak normalization makes metrics scale invariant") {
    ImageField a = random_positive(32, 6);
    ImageField b = random_positive(32, 7);
    MetricReport base = compute_metrics(a, b);
    ImageField a5 = a;
    for (double& v : a5.values) v *= 5.0;
    ImageField b17 = b;
    for (double& v : b17.values) v *= 17.0;
    MetricReport scaled = compute_metrics(a5, b17);
    CHECK(scaled.ssim == doctest::Approx(base.ssim).epsilon(1e-12));
    CHECK(scaled.rmse == doctest::Approx(base.rmse).epsilon(1e-10));
    CHECK(scaled.psnr_db == doctest::Approx(base.psnr_db).epsilon(1e-10));
}

TEST_CASE("shape and zero-reference errors") {
    ImageField a = random_positive(32, 8);
    ImageField small(grid_of(16));
    CHECK_THROWS_AS(compute_metrics(a, small), ShapeMismatch);
    ImageField zero(grid_of(32));
    CHECK_THROWS_AS(compute_metrics(a, zero), ZeroReference);
}
