#pragma once

#include <cstdint>
#include <vector>

#include "pact/ad/graph.hpp"

namespace pact::ad {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Decoupled weight decay Adam. Moments live beside the parameters; the decay
// term bypasses the moment estimates entirely.
class AdamW {
public:
    AdamW(std::vector<Value> params, AdamWConfig cfg = {});

    void step();
    void zero_grad() { ad::zero_grad(params_); }
    std::int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    std::vector<Value> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
};

} // namespace pact::ad
