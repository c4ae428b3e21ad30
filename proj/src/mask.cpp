#include "pact/cdss/mask.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

namespace pact::cdss {

int kept_count_for(int n_elements, double masking_ratio) {
    if (!(masking_ratio >= 0.0) || masking_ratio >= 1.0)
        throw InvalidConfig("masking ratio must lie in [0, 1)");
    return static_cast<int>(std::round(n_elements * (1.0 - masking_ratio)));
}

std::vector<std::uint8_t> sample_keep_set(int n_elements, int k, CounterRng& rng) {
    if (k < 0 || k > n_elements) throw InvalidConfig("kept channel count out of range");
    std::vector<int> idx(static_cast<std::size_t>(n_elements));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
        const auto j = i + static_cast<int>(rng.next_below(
                               static_cast<std::uint64_t>(n_elements - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n_elements), 0);
    for (int i = 0; i < k; ++i) keep[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
    return keep;
}

std::pair<ChannelMask, ChannelMask> sample_masks(int n_elements, double masking_ratio,
                                                 CounterRng& rng) {
    const int k = kept_count_for(n_elements, masking_ratio);
    if (k == 0 || k == n_elements)
        throw DegenerateMask("masking ratio " + std::to_string(masking_ratio) +
                             " leaves one side with zero channels");
    ChannelMask m1, m2;
    m1.masking_ratio = masking_ratio;
    m2.masking_ratio = 1.0 - masking_ratio;
    m1.keep = sample_keep_set(n_elements, k, rng);
    m2.keep.resize(m1.keep.size());
    for (std::size_t i = 0; i < m1.keep.size(); ++i) m2.keep[i] = m1.keep[i] ? 0 : 1;
    return {std::move(m1), std::move(m2)};
}

ChannelMask even_channel_mask(int n_elements, int k) {
    if (k < 1 || k > n_elements || n_elements % k != 0)
        throw InvalidConfig("even channel count must divide n_elements");
    ChannelMask m;
    m.masking_ratio = 1.0 - static_cast<double>(k) / n_elements;
    m.keep.assign(static_cast<std::size_t>(n_elements), 0);
    const int stride = n_elements / k;
    for (int i = 0; i < k; ++i) m.keep[static_cast<std::size_t>(i * stride)] = 1;
    return m;
}

Sinogram apply_mask(const Sinogram& y, const ChannelMask& m) {
    if (m.keep.size() != static_cast<std::size_t>(y.n_elements))
        throw ShapeMismatch("mask length != sinogram channels");
    Sinogram out = y;
    for (int e = 0; e < y.n_elements; ++e) {
        if (!m.keep[static_cast<std::size_t>(e)])
            std::memset(out.data.data() + static_cast<std::size_t>(e) * y.n_samples, 0,
                        static_cast<std::size_t>(y.n_samples) * sizeof(double));
    }
    return out;
}

} // namespace pact::cdss
