#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pact/cdss/losses.hpp"
#include "pact/cdss/mask.hpp"
#include "pact/dataset.hpp"
#include "pact/net/ifunet.hpp"

namespace pact::cdss {

enum class TrainMode { Cdss, Supervised, SupervisedMasked };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct TrainConfig {
    TrainMode mode = TrainMode::Cdss;
    double masking_ratio = 0.5;
    int batch_size = 32;
    int epochs = 400;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::uint64_t seed = 7;
    bool rotate_exact90 = true; // otherwise bilinear angles (opt-in, not default)
    LossWeights weights;
    int checkpoint_every = 0; // epochs between checkpoints; 0 = final only
    int even_channels = 0;    // supervised mode: fixed evenly spaced subset
    bool stop_grad_p1_in_mic = false;
    bool stop_grad_ei_input = false;
    bool instrument_masks = false; // verify the mask complement identity per batch
    int wavelet_levels = 2;
    std::string checkpoint_path; // empty = no checkpoint written
    net::IFUnetConfig model;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double mdc = 0.0, mic = 0.0, ei = 0.0, dwt = 0.0, tv = 0.0;
    double total = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    net::IFUnetParams params;
    net::CheckpointMeta meta;
    std::vector<EpochStats> history;
    std::uint64_t phantom_reads = 0;    // stays 0 for the self-supervised loop
    std::uint64_t mask_violations = 0;  // instrumented complement-identity failures
    std::uint64_t batches_checked = 0;
};

// Scalar calibration that puts A-dagger(A p) on the scale of p; folded into
// the model input so DAS images arrive with sane magnitudes.
double compute_input_gain(const SystemMatrix& A);

// Serial deterministic mode: PACT_THREADS unset or 0.
int worker_threads();
bool deterministic_mode();

TrainResult train_cdss(const SystemMatrix& A, const Dataset& train, const TrainConfig& cfg);
TrainResult train_supervised(const SystemMatrix& A, const Dataset& train,
                             const TrainConfig& cfg);

// epoch,L_mDC,L_mIC,L_EI,L_DWT,L_TV,total,wall_seconds. In deterministic mode
// wall_seconds is written as 0 so the artifact is byte-reproducible; measured
// times belong in the run log.
std::string history_csv(const std::vector<EpochStats>& history, bool redact_timing);

} // namespace pact::cdss
