#include "pact/ad/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace pact::ad {

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& a : args) w = std::max(w, a.max_rel_err);
    return w;
}

std::string GradCheckReport::str() const {
    std::ostringstream ss;
    for (const auto& a : args)
        ss << a.name << ": max_rel_err=" << a.max_rel_err << " (at " << a.worst_index << ")\n";
    return ss.str();
}

GradCheckReport gradcheck(const std::function<Value(const std::vector<Value>&)>& builder,
                          const std::vector<Tensor>& inputs,
                          const std::vector<std::string>& names, double h) {
    // Analytic gradients once.
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(Value::leaf(t, true));
    Value loss = builder(leaves);
    backward(loss);

    auto eval_at = [&](std::size_t arg, std::int64_t idx, double delta) {
        std::vector<Value> pert;
        pert.reserve(inputs.size());
        for (std::size_t a = 0; a < inputs.size(); ++a) {
            Tensor t = inputs[a];
            if (a == arg) t.v[static_cast<std::size_t>(idx)] += static_cast<real>(delta);
            pert.push_back(Value::leaf(std::move(t), false));
        }
        return static_cast<double>(builder(pert).item());
    };

    GradCheckReport report;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        GradCheckReport::PerArgument pa;
        pa.name = a < names.size() ? names[a] : "arg" + std::to_string(a);
        const Node* n = leaves[a].node().get();
        for (std::int64_t i = 0; i < inputs[a].numel(); ++i) {
            const double analytic =
                n->grad_ready ? static_cast<double>(n->grad.v[static_cast<std::size_t>(i)]) : 0.0;
            const double fp = eval_at(a, i, h);
            const double fm = eval_at(a, i, -h);
            const double numeric = (fp - fm) / (2.0 * h);
            const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            const double rel = std::abs(analytic - numeric) / scale;
            if (rel > pa.max_rel_err) {
                pa.max_rel_err = rel;
                pa.worst_index = i;
            }
        }
        report.args.push_back(std::move(pa));
    }
    return report;
}

} // namespace pact::ad
