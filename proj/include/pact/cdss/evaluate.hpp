#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pact/cdss/mask.hpp"
#include "pact/dataset.hpp"
#include "pact/metrics.hpp"
#include "pact/net/ifunet.hpp"

namespace pact::cdss {

struct EvalOptions {
    std::vector<double> keep_fractions = {0.5};
    std::uint64_t seed = 1;
    bool reference_dense_das = false; // default reference: the true phantom
};

struct EvalRow {
    int slice = 0;
    std::string method;
    int channels_kept = 0;
    double ssim = 0.0, psnr_db = 0.0, rmse = 0.0;
    std::uint64_t mask_seed = 0;
};

struct EvalSummaryRow {
    std::string method;
    int channels_kept = 0;
    double ssim_mean = 0.0, ssim_std = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double rmse_mean = 0.0, rmse_std = 0.0;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    std::vector<EvalSummaryRow> summary;

    std::string csv() const;          // slice_id,method,channels_kept,ssim,psnr_db,rmse
    std::string summary_text() const; // mean +/- std per method and kept count
    const EvalSummaryRow& find(const std::string& method, int channels_kept) const;
};

// Masks each test sinogram with a per-slice recorded seed, reconstructs via
// DAS and via model(gain * DAS), and scores both against the reference.
EvalResult evaluate_model(const SystemMatrix& A, const net::IFUnetParams& params,
                          const net::CheckpointMeta& meta, const Dataset& test,
                          const EvalOptions& opts);

} // namespace pact::cdss
