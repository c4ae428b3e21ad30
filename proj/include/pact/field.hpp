#pragma once

#include <cstdint>
#include <vector>

#include "pact/errors.hpp"
#include "pact/geometry.hpp"

namespace pact {

// 2D initial-pressure image on a square grid, row-major (i = row = y).
struct ImageField {
    int nx = 0;
    int ny = 0;
    std::uint64_t grid_fp = 0;
    std::vector<double> values; // ny * nx

    ImageField() = default;
    explicit ImageField(const ImageGrid& grid, double fill = 0.0)
        : nx(grid.nx), ny(grid.ny), grid_fp(grid.fingerprint()),
          values(static_cast<std::size_t>(grid.nx) * grid.ny, fill) {}

    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * nx + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * nx + j]; }
    std::size_t size() const { return values.size(); }

    void require_grid(std::uint64_t fp) const {
        if (grid_fp != fp) throw ShapeMismatch("image does not match the expected grid");
    }
};

// channels x time measurement array, row-major (element-major).
struct Sinogram {
    int n_elements = 0;
    int n_samples = 0;
    std::uint64_t geom_fp = 0;
    std::vector<double> data; // n_elements * n_samples

    Sinogram() = default;
    explicit Sinogram(const RingGeometry& g, double fill = 0.0)
        : n_elements(g.n_elements), n_samples(g.n_samples), geom_fp(g.fingerprint()),
          data(static_cast<std::size_t>(g.n_elements) * g.n_samples, fill) {}

    double& at(int e, int t) { return data[static_cast<std::size_t>(e) * n_samples + t]; }
    double at(int e, int t) const { return data[static_cast<std::size_t>(e) * n_samples + t]; }
    std::size_t size() const { return data.size(); }

    void require_geometry(std::uint64_t fp) const {
        if (geom_fp != fp) throw ShapeMismatch("sinogram does not match the expected geometry");
    }
};

} // namespace pact
