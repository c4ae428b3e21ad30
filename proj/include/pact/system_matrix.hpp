#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pact/field.hpp"
#include "pact/geometry.hpp"

namespace pact {

// Row-compressed time-of-flight operator. One row per (element, sample);
// every pixel deposits exactly two temporally interpolated taps per element,
// so nnz = n_elements * n_pixels * 2 and the two taps sum to one exactly.
struct SystemMatrix {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::vector<std::uint64_t> row_offsets; // rows + 1
    std::vector<std::uint32_t> col_indices; // nnz
    std::vector<float> weights;             // nnz

    RingGeometry geometry;
    ImageGrid grid;
    std::uint64_t geom_fp = 0;
    std::uint64_t grid_fp = 0;
    bool amplitude_decay = false;

    std::uint64_t nnz() const { return col_indices.size(); }
};

struct BuildOptions {
    // Optional 1/r amplitude weighting along the flight path; off by default.
    bool amplitude_decay = false;
};

SystemMatrix build_system_matrix(const RingGeometry& geometry, const ImageGrid& grid,
                                 const BuildOptions& opts = {});

Sinogram forward_project(const SystemMatrix& A, const ImageField& p);
ImageField adjoint_project(const SystemMatrix& A, const Sinogram& y);

// Raw-buffer versions used by the training graph (no fingerprint checks).
void forward_project_into(const SystemMatrix& A, const double* image, double* sino);
void adjoint_project_into(const SystemMatrix& A, const double* sino, double* image);

// Largest eigenvalue of A^T A, estimated by power iteration. Deterministic.
double operator_norm_sq(const SystemMatrix& A, int iterations = 30);

void save_system_matrix(const SystemMatrix& A, const std::string& path);
SystemMatrix load_system_matrix(const std::string& path);

} // namespace pact
