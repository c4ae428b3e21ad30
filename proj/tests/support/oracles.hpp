#pragma once

// Independent reference implementations used as oracles by the unit tests and
// the acceptance suite. These deliberately share no code with src/.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "pact/geometry.hpp"

namespace pact::oracle {

// Dense time-of-flight operator straight from the physics definition.
inline std::vector<double> dense_operator(const RingGeometry& g, const ImageGrid& grid) {
    const auto ex = element_xs(g);
    const auto ey = element_ys(g);
    const std::size_t rows = static_cast<std::size_t>(g.n_elements) * g.n_samples;
    const std::size_t cols = static_cast<std::size_t>(grid.nx) * grid.ny;
    std::vector<double> A(rows * cols, 0.0);
    for (int e = 0; e < g.n_elements; ++e) {
        for (int i = 0; i < grid.ny; ++i) {
            for (int j = 0; j < grid.nx; ++j) {
                const double dx = grid.x_of(j) - ex[static_cast<std::size_t>(e)];
                const double dy = grid.y_of(i) - ey[static_cast<std::size_t>(e)];
                const double s =
                    (std::sqrt(dx * dx + dy * dy) / g.sound_speed_mps - g.t0_s) * g.fs_hz;
                const auto t0 = static_cast<int>(std::floor(s));
                const double f = s - std::floor(s);
                const std::size_t col = static_cast<std::size_t>(i) * grid.nx + j;
                A[(static_cast<std::size_t>(e) * g.n_samples + t0) * cols + col] +=
                    static_cast<double>(static_cast<float>(1.0 - f));
                A[(static_cast<std::size_t>(e) * g.n_samples + t0 + 1) * cols + col] +=
                    static_cast<double>(static_cast<float>(f));
            }
        }
    }
    return A;
}

struct RefMetrics {
    double ssim, psnr, rmse;
};

// Direct windowed SSIM/PSNR/RMSE with centered moments.
inline RefMetrics reference_metrics(std::vector<double> a, std::vector<double> b, int n,
                                    bool normalize) {
    if (normalize) {
        double pa = *std::max_element(a.begin(), a.end());
        double pb = *std::max_element(b.begin(), b.end());
        if (!(pa > 0.0)) pa = 1.0;
        for (double& v : a) v /= pa;
        for (double& v : b) v /= pb;
    }
    double mse = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) mse += (a[q] - b[q]) * (a[q] - b[q]);
    mse /= static_cast<double>(a.size());

    const int w = 11;
    const double sigma = 1.5;
    std::vector<double> win(static_cast<std::size_t>(w) * w);
    double wsum = 0.0;
    for (int u = 0; u < w; ++u)
        for (int v = 0; v < w; ++v) {
            const double du = u - 5.0, dv = v - 5.0;
            win[static_cast<std::size_t>(u) * w + v] =
                std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
            wsum += win[static_cast<std::size_t>(u) * w + v];
        }
    for (double& v : win) v /= wsum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    int count = 0;
    for (int i = 0; i + w <= n; ++i) {
        for (int j = 0; j + w <= n; ++j) {
            double ma = 0.0, mb = 0.0;
            for (int u = 0; u < w; ++u)
                for (int v = 0; v < w; ++v) {
                    const double wt = win[static_cast<std::size_t>(u) * w + v];
                    ma += wt * a[static_cast<std::size_t>(i + u) * n + (j + v)];
                    mb += wt * b[static_cast<std::size_t>(i + u) * n + (j + v)];
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int u = 0; u < w; ++u)
                for (int v = 0; v < w; ++v) {
                    const double wt = win[static_cast<std::size_t>(u) * w + v];
                    const double da = a[static_cast<std::size_t>(i + u) * n + (j + v)] - ma;
                    const double db = b[static_cast<std::size_t>(i + u) * n + (j + v)] - mb;
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return {total / count,
            mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse),
            std::sqrt(mse)};
}

} // namespace pact::oracle
