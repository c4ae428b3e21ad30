#include "pact/cdss/losses.hpp"

#include <cmath>

namespace pact::cdss {

using ad::Value;

void LossWeights::validate() const {
    for (double v : {mdc, mic, ei, dwt, tv})
        if (!(v >= 0.0) || !std::isfinite(v))
            throw InvalidConfig("loss weights must be finite and non-negative");
}

namespace {

double batch_of(const Value& v) { return static_cast<double>(v.shape().d[0]); }

Value batch_mean(const Value& summed, double batch) {
    return ad::scale(summed, 1.0 / batch);
}

} // namespace

Value loss_mic(const Value& p1, const Value& ps1, const Value& ps2) {
    const double b = batch_of(p1);
    Value t = ad::add(ad::l1(ad::sub(ps1, ps2)),
                      ad::add(ad::l1(ad::sub(p1, ps1)), ad::l1(ad::sub(p1, ps2))));
    return batch_mean(t, b);
}

Value loss_mdc(const SystemMatrix& A, const Value& p1, const Value& ps1, const Value& ps2,
               const Value& y) {
    const double b = batch_of(p1);
    Value r1 = ad::sumsq(ad::sub(ad::forward_project_op(A, ps1), y));
    Value r2 = ad::sumsq(ad::sub(ad::forward_project_op(A, ps2), y));
    Value r3 = ad::sumsq(ad::sub(ad::forward_project_op(A, p1), y));
    return batch_mean(ad::add(r1, ad::add(r2, r3)), b);
}

Value loss_ei(const Value& p1, const std::function<Value(const Value&)>& model,
              const SystemMatrix& A, double das_gain, int rotation_turns, bool detach_input) {
    const double b = batch_of(p1);
    Value base = detach_input ? ad::stop_gradient(p1) : p1;
    Value p2 = ad::rot90(base, rotation_turns);
    Value y2 = ad::forward_project_op(A, p2);
    Value x3 = ad::das_op(A, y2, A.geometry.n_elements, das_gain);
    Value p3 = model(x3);
    return batch_mean(ad::sumsq(ad::sub(p2, p3)), b);
}

Value loss_dwt(const Value& p1, const Value& ps1, const Value& ps2, int levels) {
    const double b = batch_of(p1);
    Value t = ad::add(ad::l1(ad::haar2d(p1, levels)),
                      ad::add(ad::l1(ad::haar2d(ps1, levels)), ad::l1(ad::haar2d(ps2, levels))));
    return batch_mean(t, b);
}

Value loss_tv(const Value& p1, const Value& ps1, const Value& ps2) {
    const double b = batch_of(p1);
    Value t = ad::add(ad::tv(p1), ad::add(ad::tv(ps1), ad::tv(ps2)));
    return batch_mean(t, b);
}

Value loss_total(const LossComponents& parts, const LossWeights& w) {
    w.validate();
    const struct {
        const char* name;
        const Value* v;
    } items[] = {{"mDC", &parts.mdc}, {"mIC", &parts.mic}, {"EI", &parts.ei},
                 {"DWT", &parts.dwt}, {"TV", &parts.tv}};
    for (const auto& it : items)
        if (!std::isfinite(static_cast<double>(it.v->item())))
            throw NonFiniteLoss(std::string("component L_") + it.name + " is non-finite");
    Value total = ad::scale(parts.mdc, w.mdc);
    total = ad::add(total, ad::scale(parts.mic, w.mic));
    total = ad::add(total, ad::scale(parts.ei, w.ei));
    total = ad::add(total, ad::scale(parts.dwt, w.dwt));
    total = ad::add(total, ad::scale(parts.tv, w.tv));
    return total;
}

} // namespace pact::cdss
