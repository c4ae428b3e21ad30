#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "pact/field.hpp"
#include "pact/geometry.hpp"
#include "pact/system_matrix.hpp"

namespace pact {

// Delay-and-sum backprojection (the pseudo-inverse A-dagger here). Each pixel
// averages the time-interpolated samples of the valid channels. With no
// explicit mask, a channel is valid unless it is identically zero; an all-zero
// sinogram maps to the all-zero image.
ImageField das_reconstruct(const RingGeometry& geometry, const ImageGrid& grid,
                           const Sinogram& y,
                           std::span<const std::uint8_t> keep = {});

enum class Regularizer { Tv, Wavelet };

struct IterativeOptions {
    Regularizer regularizer = Regularizer::Tv;
    double reg_weight = 5e-4;     // tv default; wavelet default is 2e-4
    int n_steps = 500;
    double step0 = 0.5;
    int wavelet_levels = 2;
    // Channels to keep; when set, dropped channels are excluded from the data
    // term instead of being fit as true zeros.
    std::optional<std::vector<std::uint8_t>> keep;
};

// Relative step size of the halving schedule, before Lipschitz normalization.
double schedule_step(double step0, int iteration);

// Gradient descent on 0.5*||Ap - y||^2 + lambda*R(p). TV enters through its
// subgradient; the wavelet prior through a soft-threshold proximal step on
// orthonormal Haar coefficients. The raw schedule step is divided by a power
// iteration estimate of ||A||^2 so the defaults behave across geometries.
ImageField iterative_reconstruct(const SystemMatrix& A, const Sinogram& y,
                                 const IterativeOptions& opts = {});

} // namespace pact
