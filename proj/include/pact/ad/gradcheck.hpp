#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pact/ad/graph.hpp"

namespace pact::ad {

struct GradCheckReport {
    struct PerArgument {
        std::string name;
        double max_rel_err = 0.0;
        std::int64_t worst_index = -1;
    };
    std::vector<PerArgument> args;

    double worst() const;
    bool pass(double tol) const { return worst() < tol; }
    std::string str() const;
};

// Central-difference comparison of every input gradient. The builder is
// re-invoked for each perturbed input, so it must be a pure function of its
// arguments. Only meaningful in the 64-bit build.
GradCheckReport gradcheck(const std::function<Value(const std::vector<Value>&)>& builder,
                          const std::vector<Tensor>& inputs,
                          const std::vector<std::string>& names = {}, double h = 1e-5);

} // namespace pact::ad
