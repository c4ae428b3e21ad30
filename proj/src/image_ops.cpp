#include "pact/image_ops.hpp"

#include <cmath>
#include <cstring>

namespace pact::ops {

namespace {

constexpr double kHalfPi = 1.5707963267948966192313216916398;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

} // namespace

int quarter_turns(double angle_rad) {
    const double q = angle_rad / kHalfPi;
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-12 / kHalfPi)
        throw AngleNotExact("exact90 rotation requires a multiple of pi/2");
    const long long t = static_cast<long long>(r) % 4;
    return static_cast<int>(t < 0 ? t + 4 : t);
}

void rot90_into(const double* in, double* out, int n, int turns) {
    switch (turns & 3) {
    case 0:
        std::memcpy(out, in, static_cast<std::size_t>(n) * n * sizeof(double));
        break;
    case 1: // counterclockwise: out(r, c) = in(c, n-1-r)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                out[static_cast<std::size_t>(r) * n + c] =
                    in[static_cast<std::size_t>(c) * n + (n - 1 - r)];
        break;
    case 2:
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                out[static_cast<std::size_t>(r) * n + c] =
                    in[static_cast<std::size_t>(n - 1 - r) * n + (n - 1 - c)];
        break;
    case 3: // clockwise: out(r, c) = in(n-1-c, r)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                out[static_cast<std::size_t>(r) * n + c] =
                    in[static_cast<std::size_t>(n - 1 - c) * n + r];
        break;
    }
}

ImageField rotate_image(const ImageField& p, const RotationSpec& spec) {
    if (p.nx != p.ny) throw BadShape("rotation requires a square image");
    ImageField out = p;

    if (spec.interpolation == Interpolation::Exact90) {
        const int turns = quarter_turns(spec.angle_rad);
        rot90_into(p.values.data(), out.values.data(), p.nx, turns);
        return out;
    }

    // Bilinear resampling about the grid center with zero fill outside.
    const int n = p.nx;
    const double c = 0.5 * (n - 1);
    const double ca = std::cos(spec.angle_rad);
    const double sa = std::sin(spec.angle_rad);
    for (int r = 0; r < n; ++r) {
        for (int q = 0; q < n; ++q) {
            // Inverse map: sample the source at the backward-rotated position.
            const double y = r - c;
            const double x = q - c;
            const double sx = ca * x + sa * y + c;
            const double sy = -sa * x + ca * y + c;
            double v = 0.0;
            const double fx = std::floor(sx);
            const double fy = std::floor(sy);
            const int ix = static_cast<int>(fx);
            const int iy = static_cast<int>(fy);
            const double ax = sx - fx;
            const double ay = sy - fy;
            auto sample = [&](int i, int j) -> double {
                if (i < 0 || i >= n || j < 0 || j >= n) return 0.0;
                return p.at(i, j);
            };
            v = (1.0 - ay) * ((1.0 - ax) * sample(iy, ix) + ax * sample(iy, ix + 1)) +
                ay * ((1.0 - ax) * sample(iy + 1, ix) + ax * sample(iy + 1, ix + 1));
            out.at(r, q) = v;
        }
    }
    return out;
}

namespace {

// One Haar analysis sweep on the leading m*m block (stride n).
void haar_level_forward(double* a, int n, int m) {
    const int h = m / 2;
    std::vector<double> tmp(m);
    for (int i = 0; i < m; ++i) { // rows
        double* row = a + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < h; ++j) {
            const double x0 = row[2 * j], x1 = row[2 * j + 1];
            tmp[j] = (x0 + x1) * kInvSqrt2;
            tmp[h + j] = (x0 - x1) * kInvSqrt2;
        }
        std::memcpy(row, tmp.data(), m * sizeof(double));
    }
    for (int j = 0; j < m; ++j) { // columns
        for (int i = 0; i < h; ++i) {
            const double x0 = a[static_cast<std::size_t>(2 * i) * n + j];
            const double x1 = a[static_cast<std::size_t>(2 * i + 1) * n + j];
            tmp[i] = (x0 + x1) * kInvSqrt2;
            tmp[h + i] = (x0 - x1) * kInvSqrt2;
        }
        for (int i = 0; i < m; ++i) a[static_cast<std::size_t>(i) * n + j] = tmp[i];
    }
}

void haar_level_inverse(double* a, int n, int m) {
    const int h = m / 2;
    std::vector<double> tmp(m);
    for (int j = 0; j < m; ++j) { // columns first (reverse of forward)
        for (int i = 0; i < h; ++i) {
            const double s = a[static_cast<std::size_t>(i) * n + j];
            const double d = a[static_cast<std::size_t>(h + i) * n + j];
            tmp[2 * i] = (s + d) * kInvSqrt2;
            tmp[2 * i + 1] = (s - d) * kInvSqrt2;
        }
        for (int i = 0; i < m; ++i) a[static_cast<std::size_t>(i) * n + j] = tmp[i];
    }
    for (int i = 0; i < m; ++i) { // rows
        double* row = a + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < h; ++j) {
            const double s = row[j], d = row[h + j];
            tmp[2 * j] = (s + d) * kInvSqrt2;
            tmp[2 * j + 1] = (s - d) * kInvSqrt2;
        }
        std::memcpy(row, tmp.data(), m * sizeof(double));
    }
}

void check_divisible(int n, int levels) {
    if (levels < 1) throw BadShape("wavelet levels must be >= 1");
    int m = n;
    for (int l = 0; l < levels; ++l) {
        if (m % 2 != 0) throw BadShape("image side not divisible by 2^levels");
        m /= 2;
    }
}

} // namespace

void haar2d_forward_packed(double* a, int n, int levels) {
    check_divisible(n, levels);
    int m = n;
    for (int l = 0; l < levels; ++l) {
        haar_level_forward(a, n, m);
        m /= 2;
    }
}

void haar2d_inverse_packed(double* a, int n, int levels) {
    check_divisible(n, levels);
    int m = n >> levels;
    for (int l = 0; l < levels; ++l) {
        m *= 2;
        haar_level_inverse(a, n, m);
    }
}

WaveletCoeffs dwt_forward(const ImageField& p, int levels) {
    if (p.nx != p.ny) throw BadShape("wavelet transform requires a square image");
    const int n = p.nx;
    check_divisible(n, levels);

    std::vector<double> buf = p.values;
    haar2d_forward_packed(buf.data(), n, levels);

    WaveletCoeffs c;
    c.n_levels = levels;
    int m = n;
    for (int l = 0; l < levels; ++l) {
        const int h = m / 2;
        WaveletCoeffs::LevelBands b;
        b.size = h;
        b.lh.resize(static_cast<std::size_t>(h) * h);
        b.hl.resize(static_cast<std::size_t>(h) * h);
        b.hh.resize(static_cast<std::size_t>(h) * h);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < h; ++j) {
                // Row-detail (vertical frequency) block is the lower-left,
                // column-detail the upper-right, diagonal the lower-right.
                b.hl[static_cast<std::size_t>(i) * h + j] =
                    buf[static_cast<std::size_t>(i) * n + (h + j)];
                b.lh[static_cast<std::size_t>(i) * h + j] =
                    buf[static_cast<std::size_t>(h + i) * n + j];
                b.hh[static_cast<std::size_t>(i) * h + j] =
                    buf[static_cast<std::size_t>(h + i) * n + (h + j)];
            }
        }
        c.levels.push_back(std::move(b));
        m = h;
    }
    c.ll_size = m;
    c.ll.resize(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            c.ll[static_cast<std::size_t>(i) * m + j] = buf[static_cast<std::size_t>(i) * n + j];
    return c;
}

ImageField dwt_inverse(const WaveletCoeffs& c, const ImageGrid& grid) {
    const int n = grid.nx;
    check_divisible(n, c.n_levels);
    if (c.ll_size != (n >> c.n_levels)) throw BadShape("coefficients do not match grid");

    std::vector<double> buf(static_cast<std::size_t>(n) * n, 0.0);
    const int m0 = c.ll_size;
    for (int i = 0; i < m0; ++i)
        for (int j = 0; j < m0; ++j)
            buf[static_cast<std::size_t>(i) * n + j] = c.ll[static_cast<std::size_t>(i) * m0 + j];
    for (int l = 0; l < c.n_levels; ++l) {
        const auto& b = c.levels[l];
        const int h = b.size;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < h; ++j) {
                buf[static_cast<std::size_t>(i) * n + (h + j)] =
                    b.hl[static_cast<std::size_t>(i) * h + j];
                buf[static_cast<std::size_t>(h + i) * n + j] =
                    b.lh[static_cast<std::size_t>(i) * h + j];
                buf[static_cast<std::size_t>(h + i) * n + (h + j)] =
                    b.hh[static_cast<std::size_t>(i) * h + j];
            }
        }
    }
    haar2d_inverse_packed(buf.data(), n, c.n_levels);

    ImageField out(grid);
    out.values = std::move(buf);
    return out;
}

double WaveletCoeffs::l1_norm() const {
    double s = 0.0;
    for (double v : ll) s += std::abs(v);
    for (const auto& b : levels) {
        for (double v : b.lh) s += std::abs(v);
        for (double v : b.hl) s += std::abs(v);
        for (double v : b.hh) s += std::abs(v);
    }
    return s;
}

double WaveletCoeffs::l2_norm_sq() const {
    double s = 0.0;
    for (double v : ll) s += v * v;
    for (const auto& b : levels) {
        for (double v : b.lh) s += v * v;
        for (double v : b.hl) s += v * v;
        for (double v : b.hh) s += v * v;
    }
    return s;
}

double tv_seminorm(const double* p, int nx, int ny, double* subgrad) {
    if (subgrad) std::memset(subgrad, 0, static_cast<std::size_t>(nx) * ny * sizeof(double));
    auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    double tv = 0.0;
    for (int i = 0; i < ny; ++i) {
        const double* row = p + static_cast<std::size_t>(i) * nx;
        for (int j = 0; j + 1 < nx; ++j) {
            const double d = row[j + 1] - row[j];
            tv += std::abs(d);
            if (subgrad) {
                const double s = sgn(d);
                subgrad[static_cast<std::size_t>(i) * nx + j + 1] += s;
                subgrad[static_cast<std::size_t>(i) * nx + j] -= s;
            }
        }
    }
    for (int i = 0; i + 1 < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            const double d = p[static_cast<std::size_t>(i + 1) * nx + j] -
                             p[static_cast<std::size_t>(i) * nx + j];
            tv += std::abs(d);
            if (subgrad) {
                const double s = sgn(d);
                subgrad[static_cast<std::size_t>(i + 1) * nx + j] += s;
                subgrad[static_cast<std::size_t>(i) * nx + j] -= s;
            }
        }
    }
    return tv;
}

double tv_seminorm(const ImageField& p) { return tv_seminorm(p.values.data(), p.nx, p.ny, nullptr); }

double tv_seminorm(const ImageField& p, ImageField& subgrad_out) {
    subgrad_out = p;
    return tv_seminorm(p.values.data(), p.nx, p.ny, subgrad_out.values.data());
}

} // namespace pact::ops
