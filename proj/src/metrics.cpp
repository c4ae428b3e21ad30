#include "pact/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace pact::metrics {

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(window);
    const double c = 0.5 * (window - 1);
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - c;
        k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian filter, evaluated only where the window is interior.
// Output is (ny-window+1) x (nx-window+1).
std::vector<double> filter_valid(const std::vector<double>& img, int nx, int ny,
                                 const std::vector<double>& k) {
    const int w = static_cast<int>(k.size());
    const int ox = nx - w + 1;
    const int oy = ny - w + 1;
    std::vector<double> rows(static_cast<std::size_t>(ny) * ox);
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < ox; ++j) {
            double acc = 0.0;
            for (int u = 0; u < w; ++u) acc += k[u] * img[static_cast<std::size_t>(i) * nx + j + u];
            rows[static_cast<std::size_t>(i) * ox + j] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oy) * ox);
    for (int i = 0; i < oy; ++i) {
        for (int j = 0; j < ox; ++j) {
            double acc = 0.0;
            for (int u = 0; u < w; ++u) acc += k[u] * rows[static_cast<std::size_t>(i + u) * ox + j];
            out[static_cast<std::size_t>(i) * ox + j] = acc;
        }
    }
    return out;
}

} // namespace

MetricReport compute_metrics(const ImageField& p, const ImageField& ref,
                             const MetricOptions& opts) {
    if (p.nx != ref.nx || p.ny != ref.ny)
        throw ShapeMismatch("metric inputs differ in shape");
    const int nx = p.nx, ny = p.ny;
    if (nx < opts.window || ny < opts.window)
        throw BadShape("image smaller than the SSIM window");

    double ref_peak = -std::numeric_limits<double>::infinity();
    for (double v : ref.values) ref_peak = std::max(ref_peak, v);
    if (ref_peak == 0.0 && *std::min_element(ref.values.begin(), ref.values.end()) == 0.0)
        throw ZeroReference("reference image is identically zero");

    std::vector<double> a = p.values;
    std::vector<double> b = ref.values;
    if (opts.peak_normalize) {
        if (!(ref_peak > 0.0)) throw ZeroReference("reference image has non-positive peak");
        double p_peak = *std::max_element(a.begin(), a.end());
        if (!(p_peak > 0.0)) p_peak = 1.0; // nothing positive to scale to
        for (double& v : a) v /= p_peak;
        for (double& v : b) v /= ref_peak;
    }

    MetricReport r;
    r.normalized = opts.peak_normalize;

    double mse = 0.0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        const double d = a[q] - b[q];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    r.rmse = std::sqrt(mse);
    r.psnr_db = mse == 0.0 ? std::numeric_limits<double>::infinity()
                           : 10.0 * std::log10(opts.dynamic_range * opts.dynamic_range / mse);

    const auto k = gaussian_kernel(opts.window, opts.sigma);
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t q = 0; q < a.size(); ++q) {
        aa[q] = a[q] * a[q];
        bb[q] = b[q] * b[q];
        ab[q] = a[q] * b[q];
    }
    const auto mu_a = filter_valid(a, nx, ny, k);
    const auto mu_b = filter_valid(b, nx, ny, k);
    const auto m_aa = filter_valid(aa, nx, ny, k);
    const auto m_bb = filter_valid(bb, nx, ny, k);
    const auto m_ab = filter_valid(ab, nx, ny, k);

    const double c1 = (opts.k1 * opts.dynamic_range) * (opts.k1 * opts.dynamic_range);
    const double c2 = (opts.k2 * opts.dynamic_range) * (opts.k2 * opts.dynamic_range);

    double ssim_sum = 0.0;
    for (std::size_t q = 0; q < mu_a.size(); ++q) {
        const double ma = mu_a[q], mb = mu_b[q];
        const double va = m_aa[q] - ma * ma;
        const double vb = m_bb[q] - mb * mb;
        const double cov = m_ab[q] - ma * mb;
        const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        ssim_sum += num / den;
    }
    r.ssim = ssim_sum / static_cast<double>(mu_a.size());
    return r;
}

} // namespace pact::metrics
