#include <doctest.h>

#include <cmath>

#include "pact/image_ops.hpp"
#include "pact/rng.hpp"

using namespace pact;
using namespace pact::ops;

namespace {

ImageGrid grid_of(int n) {
    ImageGrid g;
    g.nx = g.ny = n;
    g.pitch_m = 1e-4;
    return g;
}

ImageField random_image(int n, std::uint64_t seed) {
    ImageField p(grid_of(n));
    CounterRng rng(seed);
    for (double& v : p.values) v = rng.next_gaussian();
    return p;
}

} // namespace

TEST_CASE("exact90 rotation is the documented permutation") {
    ImageField p(grid_of(2));
    p.at(0, 0) = 1;
    p.at(0, 1) = 2;
    p.at(1, 0) = 3;
    p.at(1, 1) = 4;
    ImageField r = rotate_image(p, {M_PI / 2.0, Interpolation::Exact90});
    CHECK(r.at(0, 0) == 2);
    CHECK(r.at(0, 1) == 4);
    CHECK(r.at(1, 0) == 1);
    CHECK(r.at(1, 1) == 3);

    SUBCASE("angle zero is the identity, bit exact") {
        ImageField q = random_image(8, 1);
        ImageField id = rotate_image(q, {0.0, Interpolation::Exact90});
        CHECK(id.values == q.values);
    }
    SUBCASE("four quarter turns restore the input bit exactly") {
        ImageField q = random_image(16, 2);
        ImageField cur = q;
        for (int k = 0; k < 4; ++k) cur = rotate_image(cur, {M_PI / 2.0, Interpolation::Exact90});
        CHECK(cur.values == q.values);
    }
    SUBCASE("non-multiple angles are rejected for exact90") {
        CHECK_THROWS_AS(rotate_image(p, {0.3, Interpolation::Exact90}), AngleNotExact);
    }
    SUBCASE("negative and large multiples normalize") {
        ImageField a = rotate_image(p, {-3.0 * M_PI / 2.0, Interpolation::Exact90});
        ImageField b = rotate_image(p, {M_PI / 2.0, Interpolation::Exact90});
        CHECK(a.values == b.values);
    }
}

TEST_CASE("exact90 preserves the norm bit-for-bit under source-order summation") {
    ImageField p = random_image(32, 3);
    const int n = p.nx;
    for (int turns = 1; turns <= 3; ++turns) {
        ImageField r = rotate_image(p, {turns * M_PI / 2.0, Interpolation::Exact90});
        // Visit the same value multiset in the same sequence: source order for
        // p, and the source pixel's destination slot for r.
        std::vector<std::size_t> slot(p.values.size());
        {
            std::vector<double> idx(p.values.size());
            for (std::size_t q = 0; q < idx.size(); ++q) idx[q] = static_cast<double>(q);
            std::vector<double> rot(idx.size());
            rot90_into(idx.data(), rot.data(), n, turns);
            for (std::size_t q = 0; q < rot.size(); ++q)
                slot[static_cast<std::size_t>(rot[q])] = q;
        }
        double na = 0.0, nb = 0.0;
        for (std::size_t q = 0; q < p.values.size(); ++q) {
            na += p.values[q] * p.values[q];
            const double rvq = r.values[slot[q]];
            nb += rvq * rvq;
        }
        CHECK(na == nb);
    }
}

TEST_CASE("bilinear rotation is linear and fills with zero") {
    const double angle = 0.37;
    ImageField a = random_image(16, 4);
    ImageField b = random_image(16, 5);
    ImageField combo = a;
    for (std::size_t q = 0; q < combo.values.size(); ++q)
        combo.values[q] = 2.0 * a.values[q] + b.values[q];

    RotationSpec spec{angle, Interpolation::Bilinear};
    ImageField ra = rotate_image(a, spec);
    ImageField rb = rotate_image(b, spec);
    ImageField rc = rotate_image(combo, spec);
    for (std::size_t q = 0; q < rc.values.size(); ++q)
        CHECK(rc.values[q] ==
              doctest::Approx(2.0 * ra.values[q] + rb.values[q]).epsilon(1e-12));

    SUBCASE("shape preserved, corners fall outside and become zero") {
        ImageField ones(grid_of(16), 1.0);
        ImageField r = rotate_image(ones, {M_PI / 4.0, Interpolation::Bilinear});
        CHECK(r.nx == 16);
        CHECK(r.at(0, 0) == 0.0);
        CHECK(r.at(15, 15) == 0.0);
        CHECK(r.at(8, 8) == doctest::Approx(1.0));
    }
}

TEST_CASE("haar analysis of a constant 2x2 block concentrates in LL") {
    ImageField p(grid_of(2), 1.0);
    WaveletCoeffs c = dwt_forward(p, 1);
    CHECK(c.ll.size() == 1);
    CHECK(c.ll[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(c.levels[0].lh[0] == doctest::Approx(0.0));
    CHECK(c.levels[0].hl[0] == doctest::Approx(0.0));
    CHECK(c.levels[0].hh[0] == doctest::Approx(0.0));
    CHECK(c.l1_norm() == doctest::Approx(2.0).epsilon(1e-15));

    SUBCASE("zero image gives all-zero coefficients") {
        ImageField z(grid_of(8));
        WaveletCoeffs cz = dwt_forward(z, 2);
        CHECK(cz.l1_norm() == 0.0);
    }
}

TEST_CASE("wavelet perfect reconstruction and Parseval") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ImageField p = random_image(16, 100 + seed);
        const int levels = 1 + static_cast<int>(seed % 3);
        WaveletCoeffs c = dwt_forward(p, levels);
        ImageField back = dwt_inverse(c, grid_of(16));
        double np = 0.0, err = 0.0;
        for (std::size_t q = 0; q < p.values.size(); ++q) {
            np += p.values[q] * p.values[q];
            const double d = back.values[q] - p.values[q];
            err += d * d;
        }
        CHECK(std::sqrt(err / np) < 1e-12);
        CHECK(c.l2_norm_sq() == doctest::Approx(np).epsilon(1e-12));
    }

    SUBCASE("subband sizes halve per level") {
        ImageField p = random_image(32, 7);
        WaveletCoeffs c = dwt_forward(p, 3);
        CHECK(c.levels[0].size == 16);
        CHECK(c.levels[1].size == 8);
        CHECK(c.levels[2].size == 4);
        CHECK(c.ll_size == 4);
    }

    SUBCASE("divisibility is enforced") {
        ImageField p = random_image(12, 8);
        CHECK_THROWS_AS(dwt_forward(p, 3), BadShape); // 12 / 8 fails
    }
}

TEST_CASE("tv seminorm values and subgradient") {
    SUBCASE("constant image has zero tv") {
        ImageField p(grid_of(8), 3.25);
        CHECK(tv_seminorm(p) == 0.0);
    }
    SUBCASE("vertical edge image") {
        ImageField p(grid_of(2));
        p.at(0, 0) = 0;
        p.at(0, 1) = 1;
        p.at(1, 0) = 0;
        p.at(1, 1) = 1;
        CHECK(tv_seminorm(p) == 2.0);
    }
    SUBCASE("one-homogeneity with a negative scale") {
        ImageField p = random_image(16, 9);
        ImageField q = p;
        for (double& v : q.values) v *= -3.0;
        CHECK(tv_seminorm(q) == doctest::Approx(3.0 * tv_seminorm(p)).epsilon(1e-12));
    }
    SUBCASE("triangle inequality") {
        for (std::uint64_t s = 0; s < 10; ++s) {
            ImageField a = random_image(12, 200 + s);
            ImageField b = random_image(12, 300 + s);
            ImageField sum = a;
            for (std::size_t q = 0; q < sum.values.size(); ++q) sum.values[q] += b.values[q];
            CHECK(tv_seminorm(sum) <= tv_seminorm(a) + tv_seminorm(b) + 1e-12);
        }
    }
    SUBCASE("subgradient matches a directional finite difference away from kinks") {
        ImageField p = random_image(8, 11); // generic: no zero differences
        ImageField g(grid_of(8));
        tv_seminorm(p, g);
        const double h = 1e-7;
        CounterRng rng(12);
        for (int trial = 0; trial < 5; ++trial) {
            ImageField d(grid_of(8));
            for (double& v : d.values) v = rng.next_gaussian() * h;
            ImageField pp = p;
            for (std::size_t q = 0; q < pp.values.size(); ++q) pp.values[q] += d.values[q];
            double predicted = tv_seminorm(p);
            for (std::size_t q = 0; q < d.values.size(); ++q)
                predicted += g.values[q] * d.values[q];
            CHECK(tv_seminorm(pp) == doctest::Approx(predicted).epsilon(1e-6));
        }
    }
}
