#include "pact/geometry.hpp"

#include <cmath>
#include <cstring>

#include "pact/errors.hpp"
#include "pact/rng.hpp"

namespace pact {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t hash_doubles(std::uint64_t h, const double* v, int n) {
    for (int i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], sizeof(bits));
        h = CounterRng::mix(h ^ bits);
    }
    return h;
}

} // namespace

void RingGeometry::validate() const {
    if (n_elements < 4) throw InvalidConfig("n_elements must be >= 4");
    if (n_samples < 8) throw InvalidConfig("n_samples must be >= 8");
    if (!(radius_m > 0.0)) throw InvalidConfig("radius_m must be > 0");
    if (!(sound_speed_mps > 0.0)) throw InvalidConfig("sound_speed_mps must be > 0");
    if (!(fs_hz > 0.0)) throw InvalidConfig("fs_hz must be > 0");
}

std::uint64_t RingGeometry::fingerprint() const {
    std::uint64_t h = 0x52494E47u; // "RING"
    h = CounterRng::mix(h ^ static_cast<std::uint64_t>(n_elements));
    h = CounterRng::mix(h ^ static_cast<std::uint64_t>(n_samples));
    const double d[4] = {radius_m, fs_hz, sound_speed_mps, t0_s};
    return hash_doubles(h, d, 4);
}

void ImageGrid::validate() const {
    if (nx <= 0 || ny <= 0) throw GridOutsideRing("grid has no pixels");
    if (nx != ny) throw InvalidConfig("grid must be square");
    if (!(pitch_m > 0.0)) throw InvalidConfig("pitch_m must be > 0");
}

std::uint64_t ImageGrid::fingerprint() const {
    std::uint64_t h = 0x47524944u; // "GRID"
    h = CounterRng::mix(h ^ static_cast<std::uint64_t>(nx));
    h = CounterRng::mix(h ^ static_cast<std::uint64_t>(ny));
    return hash_doubles(h, &pitch_m, 1);
}

double ImageGrid::half_diagonal_m() const {
    const double hx = 0.5 * nx * pitch_m;
    const double hy = 0.5 * ny * pitch_m;
    return std::sqrt(hx * hx + hy * hy);
}

void validate_pair(const RingGeometry& g, const ImageGrid& grid) {
    g.validate();
    grid.validate();
    if (!(grid.half_diagonal_m() < g.radius_m))
        throw GridOutsideRing("grid half diagonal must be strictly inside the ring radius");
    const double t_needed = (g.radius_m + grid.half_diagonal_m()) / g.sound_speed_mps;
    const double t_end = g.t0_s + (g.n_samples - 1) / g.fs_hz;
    if (t_end < t_needed)
        throw TimeWindowTooShort("time window ends before the farthest pixel's arrival");
}

std::vector<double> element_xs(const RingGeometry& g) {
    const int n = g.n_elements;
    std::vector<double> xs(n), ys(n);
    if (n % 4 == 0) {
        const int q = n / 4;
        for (int k = 0; k < q; ++k) {
            const double a = kTwoPi * k / n;
            xs[k] = g.radius_m * std::cos(a);
            ys[k] = g.radius_m * std::sin(a);
        }
        for (int k = q; k < n; ++k) {
            xs[k] = -ys[k - q];
            ys[k] = xs[k - q];
        }
    } else {
        for (int k = 0; k < n; ++k) {
            const double a = kTwoPi * k / n;
            xs[k] = g.radius_m * std::cos(a);
        }
    }
    return xs;
}

std::vector<double> element_ys(const RingGeometry& g) {
    const int n = g.n_elements;
    std::vector<double> xs(n), ys(n);
    if (n % 4 == 0) {
        const int q = n / 4;
        for (int k = 0; k < q; ++k) {
            const double a = kTwoPi * k / n;
            xs[k] = g.radius_m * std::cos(a);
            ys[k] = g.radius_m * std::sin(a);
        }
        for (int k = q; k < n; ++k) {
            xs[k] = -ys[k - q];
            ys[k] = xs[k - q];
        }
    } else {
        for (int k = 0; k < n; ++k) {
            const double a = kTwoPi * k / n;
            ys[k] = g.radius_m * std::sin(a);
        }
    }
    return ys;
}

RingGeometry full_scale_geometry() {
    RingGeometry g;
    g.n_elements = 512;
    g.radius_m = 0.05;
    g.fs_hz = 40e6;
    g.n_samples = 2000;
    g.sound_speed_mps = 1513.0;
    g.t0_s = 0.0;
    return g;
}

} // namespace pact
