#pragma once

#include <functional>

#include "pact/ad/ops.hpp"
#include "pact/system_matrix.hpp"

namespace pact::cdss {

struct LossWeights {
    double mdc = 3.0;
    double mic = 13.0;
    double ei = 6.0;
    double dwt = 0.002;
    double tv = 0.001;

    void validate() const;
};

// All losses sum over pixels/samples and average over the batch axis.

// ||ps1-ps2||_1 + ||p1-ps1||_1 + ||p1-ps2||_1
ad::Value loss_mic(const ad::Value& p1, const ad::Value& ps1, const ad::Value& ps2);

// ||A ps1 - y||^2 + ||A ps2 - y||^2 + ||A p1 - y||^2 against the one full y.
ad::Value loss_mdc(const SystemMatrix& A, const ad::Value& p1, const ad::Value& ps1,
                   const ad::Value& ps2, const ad::Value& y);

// p2 = R_g p1; p3 = model(gain * das(A p2)); returns ||p2 - p3||^2.
ad::Value loss_ei(const ad::Value& p1,
                  const std::function<ad::Value(const ad::Value&)>& model,
                  const SystemMatrix& A, double das_gain, int rotation_turns,
                  bool detach_input = false);

// Wavelet-domain L1 over the three reconstructions.
ad::Value loss_dwt(const ad::Value& p1, const ad::Value& ps1, const ad::Value& ps2,
                   int levels = 2);

// Image-gradient L1 over the three reconstructions.
ad::Value loss_tv(const ad::Value& p1, const ad::Value& ps1, const ad::Value& ps2);

struct LossComponents {
    ad::Value mdc, mic, ei, dwt, tv;
};

// Weighted combination; throws NonFiniteLoss naming the offending term.
ad::Value loss_total(const LossComponents& parts, const LossWeights& w);

} // namespace pact::cdss
