#include "pact/cdss/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "pact/ad/optim.hpp"
#include "pact/recon.hpp"

namespace pact::cdss {

using ad::Shape;
using ad::Tensor;
using ad::Value;

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "cdss") return TrainMode::Cdss;
    if (s == "supervised") return TrainMode::Supervised;
    if (s == "supervised-masked") return TrainMode::SupervisedMasked;
    throw InvalidConfig("unknown training mode: " + s);
}

std::string to_string(TrainMode m) {
    switch (m) {
    case TrainMode::Cdss: return "cdss";
    case TrainMode::Supervised: return "supervised";
    case TrainMode::SupervisedMasked: return "supervised-masked";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (!(masking_ratio >= 0.0) || masking_ratio >= 1.0)
        throw InvalidConfig("masking_ratio must lie in [0, 1)");
    if (batch_size < 1) throw InvalidConfig("batch size must be >= 1");
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (!(lr > 0.0)) throw InvalidConfig("learning rate must be > 0");
    weights.validate();
}

namespace {

// Training graphs allocate and free multi-megabyte tensors every batch; keep
// those blocks on the heap instead of round-tripping through mmap.
void tune_allocator() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        return true;
    }();
    (void)done;
#endif
}

} // namespace

int worker_threads() {
    const char* env = std::getenv("PACT_THREADS");
    if (!env) return 0;
    return std::max(0, std::atoi(env));
}

bool deterministic_mode() { return worker_threads() == 0; }

double compute_input_gain(const SystemMatrix& A) {
    // Reference image: centered disc covering ~30% of the field of view.
    const int n = A.grid.nx;
    std::vector<double> p0(A.cols, 0.0);
    const double c = 0.5 * (n - 1);
    const double r = 0.3 * (0.5 * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dx = j - c, dy = i - c;
            if (dx * dx + dy * dy <= r * r) p0[static_cast<std::size_t>(i) * n + j] = 1.0;
        }
    std::vector<double> y(A.rows), d(A.cols);
    forward_project_into(A, p0.data(), y.data());
    adjoint_project_into(A, y.data(), d.data());
    const double inv_n = 1.0 / A.geometry.n_elements;
    double dp = 0.0, dd = 0.0;
    for (std::size_t q = 0; q < d.size(); ++q) {
        const double v = d[q] * inv_n;
        dp += v * p0[q];
        dd += v * v;
    }
    if (!(dd > 0.0)) return 1.0;
    return dp / dd;
}

namespace {

Tensor sinogram_batch(const std::vector<const Sinogram*>& ys) {
    const auto B = static_cast<std::int64_t>(ys.size());
    const std::int64_t E = ys[0]->n_elements, T = ys[0]->n_samples;
    Tensor t(Shape{B, 1, E, T});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::size_t q = 0; q < ys[static_cast<std::size_t>(b)]->data.size(); ++q)
            t.v[static_cast<std::size_t>(b) * E * T + q] =
                static_cast<ad::real>(ys[static_cast<std::size_t>(b)]->data[q]);
    return t;
}

Tensor masked_sinogram_batch(const std::vector<const Sinogram*>& ys, const ChannelMask& m) {
    Tensor t = sinogram_batch(ys);
    const std::int64_t E = ys[0]->n_elements, T = ys[0]->n_samples;
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(ys.size()); ++b)
        for (std::int64_t e = 0; e < E; ++e)
            if (!m.keep[static_cast<std::size_t>(e)])
                std::fill_n(t.v.begin() + (b * E + e) * T, T, ad::real(0));
    return t;
}

Tensor image_batch(const std::vector<const ImageField*>& ps) {
    const auto B = static_cast<std::int64_t>(ps.size());
    const std::int64_t n = ps[0]->nx;
    Tensor t(Shape{B, 1, n, n});
    for (std::int64_t b = 0; b < B; ++b)
        for (std::size_t q = 0; q < ps[static_cast<std::size_t>(b)]->values.size(); ++q)
            t.v[static_cast<std::size_t>(b) * n * n + q] =
                static_cast<ad::real>(ps[static_cast<std::size_t>(b)]->values[q]);
    return t;
}

struct BatchPlan {
    std::vector<std::size_t> indices;
};

std::vector<BatchPlan> plan_epoch(std::size_t n_slices, int batch_size, CounterRng& rng) {
    std::vector<std::size_t> order(n_slices);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n_slices; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<BatchPlan> plans;
    for (std::size_t at = 0; at < n_slices; at += static_cast<std::size_t>(batch_size)) {
        BatchPlan p;
        const std::size_t end = std::min(n_slices, at + static_cast<std::size_t>(batch_size));
        p.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
        plans.push_back(std::move(p));
    }
    return plans;
}

std::uint64_t check_mask_complement(const std::vector<const Sinogram*>& ys,
                                    const ChannelMask& m1, const ChannelMask& m2) {
    std::uint64_t violations = 0;
    for (const auto* y : ys) {
        const Sinogram a = apply_mask(*y, m1);
        const Sinogram b = apply_mask(*y, m2);
        for (std::size_t q = 0; q < y->data.size(); ++q)
            if (a.data[q] + b.data[q] != y->data[q]) ++violations;
    }
    return violations;
}

} // namespace

TrainResult train_cdss(const SystemMatrix& A, const Dataset& train, const TrainConfig& cfg) {
    tune_allocator();
    cfg.validate();
    cfg.model.validate(A.grid.nx);
    if (train.size() == 0) throw InvalidConfig("empty training dataset");
    train.reset_phantom_read_count();

    const double gain = compute_input_gain(A);
    const int ne = A.geometry.n_elements;

    TrainResult result;
    result.params = net::init_params(cfg.model, cfg.seed);
    result.meta = {cfg.model, A.geometry, A.grid, gain, "cdss", cfg.seed};

    ad::AdamW opt(result.params.values(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    auto model = [&](const Value& x) { return net::ifunet_forward(x, result.params, cfg.model); };

    CounterRng root(cfg.seed);
    const auto t_start = std::chrono::steady_clock::now();
    double last_wall = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        CounterRng erng = root.fork(0xE0000ull + static_cast<std::uint64_t>(epoch));
        auto plans = plan_epoch(train.size(), cfg.batch_size, erng);

        EpochStats stats;
        stats.epoch = epoch;
        for (const auto& plan : plans) {
            auto [m1, m2] = sample_masks(ne, cfg.masking_ratio, erng);
            const int turns = cfg.rotate_exact90 ? static_cast<int>(erng.next_below(4)) : 0;

            std::vector<const Sinogram*> ys;
            for (auto idx : plan.indices) ys.push_back(&train.noisy(idx));
            if (cfg.instrument_masks) {
                result.mask_violations += check_mask_complement(ys, m1, m2);
                ++result.batches_checked;
            }

            Value y_full = Value::leaf(sinogram_batch(ys), false);
            Value y_s1 = Value::leaf(masked_sinogram_batch(ys, m1), false);
            Value y_s2 = Value::leaf(masked_sinogram_batch(ys, m2), false);

            // One fused pass over [full; kept; complement] inputs.
            const auto bsz = static_cast<std::int64_t>(ys.size());
            Value x_all = ad::concat_batch({ad::das_op(A, y_full, ne, gain),
                                            ad::das_op(A, y_s1, m1.kept_count(), gain),
                                            ad::das_op(A, y_s2, m2.kept_count(), gain)});
            auto recon = ad::split_batch(model(x_all), {bsz, bsz, bsz});
            Value p1 = recon[0], ps1 = recon[1], ps2 = recon[2];

            LossComponents parts;
            Value p1_mic = cfg.stop_grad_p1_in_mic ? ad::stop_gradient(p1) : p1;
            parts.mic = loss_mic(p1_mic, ps1, ps2);
            parts.mdc = loss_mdc(A, p1, ps1, ps2, y_full);
            parts.ei = loss_ei(p1, model, A, gain, turns, cfg.stop_grad_ei_input);
            parts.dwt = loss_dwt(p1, ps1, ps2, cfg.wavelet_levels);
            parts.tv = loss_tv(p1, ps1, ps2);
            Value total = loss_total(parts, cfg.weights); // throws NonFiniteLoss

            opt.zero_grad();
            ad::backward(total);
            opt.step();

            stats.mdc += static_cast<double>(parts.mdc.item());
            stats.mic += static_cast<double>(parts.mic.item());
            stats.ei += static_cast<double>(parts.ei.item());
            stats.dwt += static_cast<double>(parts.dwt.item());
            stats.tv += static_cast<double>(parts.tv.item());
            stats.total += static_cast<double>(total.item());
        }
        const double nb = static_cast<double>(plans.size());
        stats.mdc /= nb;
        stats.mic /= nb;
        stats.ei /= nb;
        stats.dwt /= nb;
        stats.tv /= nb;
        stats.total /= nb;
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        stats.wall_seconds = wall - last_wall;
        last_wall = wall;
        result.history.push_back(stats);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            net::save_checkpoint(cfg.checkpoint_path, result.params, result.meta);
    }

    if (!cfg.checkpoint_path.empty())
        net::save_checkpoint(cfg.checkpoint_path, result.params, result.meta);
    result.phantom_reads = train.phantom_read_count();
    return result;
}

TrainResult train_supervised(const SystemMatrix& A, const Dataset& train,
                             const TrainConfig& cfg) {
    tune_allocator();
    cfg.validate();
    cfg.model.validate(A.grid.nx);
    if (train.size() == 0) throw InvalidConfig("empty training dataset");
    if (cfg.mode == TrainMode::Cdss) throw InvalidConfig("train_supervised needs a supervised mode");

    const double gain = compute_input_gain(A);
    const int ne = A.geometry.n_elements;

    // Labels: DAS from the full (dense) channel set, fixed for the whole run.
    std::vector<ImageField> labels;
    labels.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        ImageField d = das_reconstruct(A.geometry, A.grid, train.noisy(i));
        for (double& v : d.values) v *= gain;
        labels.push_back(std::move(d));
    }

    ChannelMask fixed_mask;
    if (cfg.mode == TrainMode::Supervised) {
        const int k = cfg.even_channels > 0 ? cfg.even_channels
                                            : kept_count_for(ne, cfg.masking_ratio);
        fixed_mask = even_channel_mask(ne, k);
    }

    TrainResult result;
    result.params = net::init_params(cfg.model, cfg.seed);
    result.meta = {cfg.model, A.geometry, A.grid, gain, to_string(cfg.mode), cfg.seed};

    ad::AdamW opt(result.params.values(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

    CounterRng root(cfg.seed);
    const auto t_start = std::chrono::steady_clock::now();
    double last_wall = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        CounterRng erng = root.fork(0xE0000ull + static_cast<std::uint64_t>(epoch));
        auto plans = plan_epoch(train.size(), cfg.batch_size, erng);

        EpochStats stats;
        stats.epoch = epoch;
        for (const auto& plan : plans) {
            ChannelMask mask = fixed_mask;
            if (cfg.mode == TrainMode::SupervisedMasked) {
                const int k = kept_count_for(ne, cfg.masking_ratio);
                if (k == 0) throw DegenerateMask("masking ratio keeps no channels");
                mask.masking_ratio = cfg.masking_ratio;
                mask.keep = sample_keep_set(ne, k, erng);
            }

            std::vector<const Sinogram*> ys;
            std::vector<const ImageField*> labs;
            for (auto idx : plan.indices) {
                ys.push_back(&train.noisy(idx));
                labs.push_back(&labels[idx]);
            }
            Value y_in = Value::leaf(masked_sinogram_batch(ys, mask), false);
            Value target = Value::leaf(image_batch(labs), false);

            Value pred = net::ifunet_forward(ad::das_op(A, y_in, mask.kept_count(), gain),
                                             result.params, cfg.model);
            Value loss =
                ad::scale(ad::l1(ad::sub(pred, target)), 1.0 / static_cast<double>(ys.size()));
            if (!std::isfinite(static_cast<double>(loss.item())))
                throw NonFiniteLoss("supervised L1 loss is non-finite");

            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            stats.total += static_cast<double>(loss.item());
        }
        stats.total /= static_cast<double>(plans.size());
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        stats.wall_seconds = wall - last_wall;
        last_wall = wall;
        result.history.push_back(stats);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            net::save_checkpoint(cfg.checkpoint_path, result.params, result.meta);
    }

    if (!cfg.checkpoint_path.empty())
        net::save_checkpoint(cfg.checkpoint_path, result.params, result.meta);
    result.phantom_reads = train.phantom_read_count();
    return result;
}

std::string history_csv(const std::vector<EpochStats>& history, bool redact_timing) {
    std::string out = "epoch,L_mDC,L_mIC,L_EI,L_DWT,L_TV,total,wall_seconds\n";
    char line[320];
    for (const auto& h : history) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", h.epoch,
                      h.mdc, h.mic, h.ei, h.dwt, h.tv, h.total,
                      redact_timing ? 0.0 : h.wall_seconds);
        out += line;
    }
    return out;
}

} // namespace pact::cdss
