#include "pact/cdss/evaluate.hpp"

#include <cmath>
#include <cstdio>

#include "pact/recon.hpp"

namespace pact::cdss {

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1)) : 0.0;
}

} // namespace

std::string EvalResult::csv() const {
    std::string out = "slice_id,method,channels_kept,ssim,psnr_db,rmse\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%d,%s,%d,%.6f,%.6f,%.6f\n", r.slice,
                      r.method.c_str(), r.channels_kept, r.ssim, r.psnr_db, r.rmse);
        out += line;
    }
    return out;
}

std::string EvalResult::summary_text() const {
    std::string out = "method,channels_kept,ssim,psnr_db,rmse\n";
    char line[320];
    for (const auto& s : summary) {
        std::snprintf(line, sizeof(line),
                      "%s,%d,%.3f \xC2\xB1 %.3f,%.3f \xC2\xB1 %.3f,%.3f \xC2\xB1 %.3f\n",
                      s.method.c_str(), s.channels_kept, s.ssim_mean, s.ssim_std, s.psnr_mean,
                      s.psnr_std, s.rmse_mean, s.rmse_std);
        out += line;
    }
    return out;
}

const EvalSummaryRow& EvalResult::find(const std::string& method, int channels_kept) const {
    for (const auto& s : summary)
        if (s.method == method && s.channels_kept == channels_kept) return s;
    throw Error("no summary row for " + method + "/" + std::to_string(channels_kept));
}

EvalResult evaluate_model(const SystemMatrix& A, const net::IFUnetParams& params,
                          const net::CheckpointMeta& meta, const Dataset& test,
                          const EvalOptions& opts) {
    if (test.geometry.fingerprint() != A.geom_fp || test.grid.fingerprint() != A.grid_fp)
        throw GeometryMismatch("test dataset does not match the operator");
    if (meta.geometry.fingerprint() != A.geom_fp || meta.grid.fingerprint() != A.grid_fp)
        throw GeometryMismatch("checkpoint does not match the operator");
    if (test.size() == 0) throw InvalidConfig("empty test dataset");

    const int ne = A.geometry.n_elements;
    EvalResult result;
    CounterRng root(opts.seed);

    for (std::size_t fi = 0; fi < opts.keep_fractions.size(); ++fi) {
        const double f = opts.keep_fractions[fi];
        if (!(f > 0.0) || f > 1.0) throw InvalidConfig("keep fraction must lie in (0, 1]");
        const int kept = static_cast<int>(std::round(ne * f));
        if (kept < 1) throw DegenerateMask("keep fraction keeps no channels");

        std::vector<double> ssim_das, psnr_das, rmse_das;
        std::vector<double> ssim_net, psnr_net, rmse_net;

        for (std::size_t i = 0; i < test.size(); ++i) {
            CounterRng slice_rng = root.fork(fi).fork(i);
            const std::uint64_t mask_seed = slice_rng.key();
            ChannelMask m;
            m.masking_ratio = 1.0 - f;
            m.keep = kept == ne ? std::vector<std::uint8_t>(static_cast<std::size_t>(ne), 1)
                                : sample_keep_set(ne, kept, slice_rng);

            const Sinogram& y = test.noisy(i);
            const Sinogram ym = apply_mask(y, m);
            ImageField das_img = das_reconstruct(A.geometry, A.grid, ym,
                                                 {m.keep.data(), m.keep.size()});

            // Model pathway: scale the DAS image by the calibrated gain.
            std::vector<ImageField> batch_in(1, das_img);
            for (double& v : batch_in[0].values) v *= meta.input_gain;
            ImageField net_img =
                net::ifunet_apply(batch_in, params, meta.config)[0];

            ImageField reference;
            if (opts.reference_dense_das) {
                reference = das_reconstruct(A.geometry, A.grid, y);
            } else {
                reference = test.phantom(i);
            }

            const auto m_das = metrics::compute_metrics(das_img, reference);
            const auto m_net = metrics::compute_metrics(net_img, reference);

            result.rows.push_back({static_cast<int>(i), "das", kept, m_das.ssim, m_das.psnr_db,
                                   m_das.rmse, mask_seed});
            result.rows.push_back({static_cast<int>(i), "cdss", kept, m_net.ssim, m_net.psnr_db,
                                   m_net.rmse, mask_seed});
            ssim_das.push_back(m_das.ssim);
            psnr_das.push_back(m_das.psnr_db);
            rmse_das.push_back(m_das.rmse);
            ssim_net.push_back(m_net.ssim);
            psnr_net.push_back(m_net.psnr_db);
            rmse_net.push_back(m_net.rmse);
        }

        auto push_summary = [&](const std::string& method, const std::vector<double>& ssim,
                                const std::vector<double>& psnr, const std::vector<double>& rmse) {
            EvalSummaryRow s;
            s.method = method;
            s.channels_kept = kept;
            mean_std(ssim, s.ssim_mean, s.ssim_std);
            mean_std(psnr, s.psnr_mean, s.psnr_std);
            mean_std(rmse, s.rmse_mean, s.rmse_std);
            result.summary.push_back(std::move(s));
        };
        push_summary("das", ssim_das, psnr_das, rmse_das);
        push_summary("cdss", ssim_net, psnr_net, rmse_net);
    }
    return result;
}

} // namespace pact::cdss
