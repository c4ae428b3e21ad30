#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pact/field.hpp"
#include "pact/rng.hpp"

namespace pact::cdss {

// Per-channel keep/drop vector. masking_ratio is the fraction dropped.
struct ChannelMask {
    std::vector<std::uint8_t> keep;
    double masking_ratio = 0.0;

    int kept_count() const {
        int k = 0;
        for (auto v : keep) k += v != 0;
        return k;
    }
};

// round(n * (1 - ratio)), half away from zero.
int kept_count_for(int n_elements, double masking_ratio);

// k distinct channels chosen uniformly without replacement.
std::vector<std::uint8_t> sample_keep_set(int n_elements, int k, CounterRng& rng);

// Complementary mask pair; throws DegenerateMask when either side keeps
// nothing. Fresh masks are drawn every batch by the training loop.
std::pair<ChannelMask, ChannelMask> sample_masks(int n_elements, double masking_ratio,
                                                 CounterRng& rng);

// Evenly spaced channels {0, n/k, 2n/k, ...}; requires k | n.
ChannelMask even_channel_mask(int n_elements, int k);

Sinogram apply_mask(const Sinogram& y, const ChannelMask& m);

} // namespace pact::cdss
