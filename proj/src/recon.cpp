#include "pact/recon.hpp"

#include <cmath>
#include <cstring>

#include "pact/image_ops.hpp"

namespace pact {

ImageField das_reconstruct(const RingGeometry& geometry, const ImageGrid& grid,
                           const Sinogram& y, std::span<const std::uint8_t> keep) {
    validate_pair(geometry, grid);
    y.require_geometry(geometry.fingerprint());
    if (!keep.empty() && keep.size() != static_cast<std::size_t>(geometry.n_elements))
        throw ShapeMismatch("mask length != n_elements");

    const int ne = geometry.n_elements;
    const int nt = geometry.n_samples;

    std::vector<std::uint8_t> valid(ne, 0);
    int n_valid = 0;
    for (int e = 0; e < ne; ++e) {
        bool v;
        if (!keep.empty()) {
            v = keep[e] != 0;
        } else {
            v = false;
            const double* ch = y.data.data() + static_cast<std::size_t>(e) * nt;
            for (int t = 0; t < nt; ++t)
                if (ch[t] != 0.0) { v = true; break; }
        }
        valid[e] = v;
        n_valid += v;
    }

    ImageField out(grid);
    if (n_valid == 0) {
        if (keep.empty()) return out; // all-zero sinogram -> all-zero image
        throw AllChannelsMasked("mask keeps no channels");
    }

    const std::vector<double> ex = element_xs(geometry);
    const std::vector<double> ey = element_ys(geometry);
    const double inv_c = 1.0 / geometry.sound_speed_mps;
    const double inv_n = 1.0 / n_valid;

    for (int e = 0; e < ne; ++e) {
        if (!valid[e]) continue;
        const double* ch = y.data.data() + static_cast<std::size_t>(e) * nt;
        for (int i = 0; i < grid.ny; ++i) {
            const double dy = grid.y_of(i) - ey[e];
            double* row = out.values.data() + static_cast<std::size_t>(i) * grid.nx;
            for (int j = 0; j < grid.nx; ++j) {
                const double dx = grid.x_of(j) - ex[e];
                const double d = std::sqrt(dx * dx + dy * dy);
                const double s = (d * inv_c - geometry.t0_s) * geometry.fs_hz;
                if (s < 0.0 || s > nt - 1) continue;
                const double fl = std::floor(s);
                const int t0 = static_cast<int>(fl);
                const double f = s - fl;
                const double hi = (t0 + 1 < nt) ? ch[t0 + 1] : 0.0;
                row[j] += (1.0 - f) * ch[t0] + f * hi;
            }
        }
    }
    for (double& v : out.values) v *= inv_n;
    return out;
}

double schedule_step(double step0, int iteration) {
    return std::ldexp(step0, -(iteration / 100));
}

ImageField iterative_reconstruct(const SystemMatrix& A, const Sinogram& y,
                                 const IterativeOptions& opts) {
    y.require_geometry(A.geom_fp);
    if (opts.n_steps < 1) throw InvalidConfig("n_steps must be >= 1");
    if (!(opts.step0 > 0.0)) throw InvalidConfig("step0 must be > 0");
    if (opts.reg_weight < 0.0) throw InvalidConfig("reg_weight must be >= 0");
    if (opts.keep && opts.keep->size() != static_cast<std::size_t>(A.geometry.n_elements))
        throw ShapeMismatch("mask length != n_elements");

    const std::size_t n_pix = A.cols;
    const std::size_t n_meas = A.rows;
    const int nt = A.geometry.n_samples;
    const int n = A.grid.nx;

    // Row selector for masked channels: dropped rows leave the data term.
    std::vector<std::uint8_t> row_keep;
    if (opts.keep) {
        row_keep.resize(n_meas);
        for (std::uint64_t r = 0; r < n_meas; ++r)
            row_keep[r] = (*opts.keep)[r / nt];
    }

    const double lip = operator_norm_sq(A);
    const double lip_scale = lip > 0.0 ? 1.0 / lip : 1.0;

    std::vector<double> p(n_pix, 0.0), grad(n_pix), residual(n_meas), tvg(n_pix);
    ImageField out(A.grid);

    for (int it = 0; it < opts.n_steps; ++it) {
        forward_project_into(A, p.data(), residual.data());
        double fidelity = 0.0;
        for (std::uint64_t r = 0; r < n_meas; ++r) {
            double d = residual[r] - y.data[r];
            if (!row_keep.empty() && !row_keep[r]) d = 0.0;
            residual[r] = d;
            fidelity += d * d;
        }
        fidelity *= 0.5;
        adjoint_project_into(A, residual.data(), grad.data());

        const double step = schedule_step(opts.step0, it) * lip_scale;
        double objective = fidelity;

        if (opts.regularizer == Regularizer::Tv) {
            const double tv = ops::tv_seminorm(p.data(), n, n, tvg.data());
            objective += opts.reg_weight * tv;
            for (std::size_t q = 0; q < n_pix; ++q)
                p[q] -= step * (grad[q] + opts.reg_weight * tvg[q]);
        } else {
            for (std::size_t q = 0; q < n_pix; ++q) p[q] -= step * grad[q];
            // Proximal shrinkage of the Haar coefficients.
            ops::haar2d_forward_packed(p.data(), n, opts.wavelet_levels);
            const double thr = opts.reg_weight * step;
            double l1 = 0.0;
            for (std::size_t q = 0; q < n_pix; ++q) {
                const double v = p[q];
                l1 += std::abs(v);
                p[q] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
            }
            objective += opts.reg_weight * l1;
            ops::haar2d_inverse_packed(p.data(), n, opts.wavelet_levels);
        }

        if (!std::isfinite(objective))
            throw Divergence("objective became non-finite; step0 too large for this operator");
    }

    out.values = std::move(p);
    for (double v : out.values)
        if (!std::isfinite(v)) throw Divergence("reconstruction contains non-finite values");
    return out;
}

} // namespace pact
