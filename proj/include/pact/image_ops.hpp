#pragma once

#include <string>
#include <vector>

#include "pact/field.hpp"

namespace pact::ops {

enum class Interpolation { Exact90, Bilinear };

struct RotationSpec {
    double angle_rad = 0.0;
    Interpolation interpolation = Interpolation::Exact90;
};

// Number of counterclockwise quarter turns for an exact90 angle; throws
// AngleNotExact when the angle is not a multiple of pi/2 within 1e-12.
int quarter_turns(double angle_rad);

ImageField rotate_image(const ImageField& p, const RotationSpec& spec);

// Raw-buffer quarter-turn used by the autodiff op; out and in must not alias.
void rot90_into(const double* in, double* out, int n, int turns);

struct WaveletCoeffs {
    struct LevelBands {
        std::vector<double> lh, hl, hh; // each (n/2^level)^2 at its level
        int size = 0;                   // side length of each band
    };
    std::vector<LevelBands> levels; // levels[0] is the finest
    std::vector<double> ll;         // coarsest approximation
    int ll_size = 0;
    int n_levels = 0;
    std::string family = "haar";

    double l1_norm() const;
    double l2_norm_sq() const;
};

// Orthonormal Haar analysis/synthesis. Requires nx divisible by 2^levels.
WaveletCoeffs dwt_forward(const ImageField& p, int levels);
ImageField dwt_inverse(const WaveletCoeffs& c, const ImageGrid& grid);

// In-place packed Mallat transforms on an n*n buffer; used by the autodiff op
// and the proximal step. Orthonormal, so the inverse is also the transpose.
void haar2d_forward_packed(double* a, int n, int levels);
void haar2d_inverse_packed(double* a, int n, int levels);

// Anisotropic total variation with replicate-edge boundary; the subgradient
// uses sign with sign(0) = 0. subgrad may be null.
double tv_seminorm(const double* p, int nx, int ny, double* subgrad);
double tv_seminorm(const ImageField& p);
double tv_seminorm(const ImageField& p, ImageField& subgrad_out);

} // namespace pact::ops
