#include "pact/ad/optim.hpp"

#include <cmath>

#include "pact/errors.hpp"

namespace pact::ad {

AdamW::AdamW(std::vector<Value> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw InvalidConfig("AdamW learning rate must be > 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.shape());
        v_.emplace_back(p.shape());
    }
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Node* n = params_[k].node().get();
        n->ensure_grad();
        if (n->grad.shape != n->value.shape)
            throw ShapeMismatch("AdamW: gradient/parameter shape disagreement");
        auto& m = m_[k].v;
        auto& v = v_[k].v;
        auto& p = n->value.v;
        const auto& g = n->grad.v;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<real>(mi);
            v[i] = static_cast<real>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            const double pd = static_cast<double>(p[i]);
            p[i] = static_cast<real>(
                pd - cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pd));
        }
    }
}

} // namespace pact::ad
