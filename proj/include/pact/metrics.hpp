#pragma once

#include "pact/field.hpp"

namespace pact::metrics {

struct MetricReport {
    double ssim = 0.0;
    double psnr_db = 0.0; // +inf when rmse == 0
    double rmse = 0.0;
    bool normalized = true;
};

struct MetricOptions {
    // Rescale both images to peak 1 before comparing. Keeps scores invariant
    // to positive scaling of either input.
    bool peak_normalize = true;
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

// SSIM (Gaussian-weighted local statistics over fully interior windows),
// PSNR = 10*log10(L^2 / MSE) and RMSE = sqrt(MSE).
MetricReport compute_metrics(const ImageField& p, const ImageField& ref,
                             const MetricOptions& opts = {});

} // namespace pact::metrics
