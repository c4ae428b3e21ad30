#pragma once

#include <cstdint>
#include <string>

#include "pact/field.hpp"

namespace pact {

enum class PhantomKind { Discs, Rings, BranchingVessels, Mixed };

PhantomKind phantom_kind_from_string(const std::string& s);
std::string to_string(PhantomKind k);

// Synthetic initial-pressure sources. Every shape lies inside the circle
// inscribed in the grid; intensities stay in [0, 1].
struct PhantomSpec {
    PhantomKind kind = PhantomKind::Mixed;
    int min_count = 2;
    int max_count = 6;
    double min_intensity = 0.4;
    double max_intensity = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

ImageField generate_phantom(const PhantomSpec& spec, const ImageGrid& grid);

} // namespace pact
