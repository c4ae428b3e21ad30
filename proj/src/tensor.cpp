#include "pact/ad/tensor.hpp"

#include <cstring>
#include <sstream>

namespace pact::ad {

std::string Shape::str() const {
    std::ostringstream ss;
    ss << '(';
    for (int i = 0; i < ndim; ++i) ss << (i ? "," : "") << d[i];
    ss << ')';
    return ss.str();
}

namespace {

constexpr std::int64_t kTileN = 512; // B columns per block; keeps the tile in L2

#if defined(__GNUC__)
typedef real vreal __attribute__((vector_size(32))); // 4 doubles / 8 floats
constexpr std::int64_t kVL = static_cast<std::int64_t>(32 / sizeof(real));

// 4 x (4*VL) register-blocked panel: C[i0..i0+4) x [j0..j0+4*VL) += A * B.
inline void kernel_4x4v(std::int64_t k, const real* __restrict a0, const real* __restrict a1,
                        const real* __restrict a2, const real* __restrict a3,
                        const real* __restrict B, std::int64_t ldb, real* __restrict c0,
                        real* __restrict c1, real* __restrict c2, real* __restrict c3) {
    vreal acc[4][4];
    for (int r = 0; r < 4; ++r)
        for (int v = 0; v < 4; ++v) acc[r][v] = vreal{};
    for (std::int64_t kk = 0; kk < k; ++kk) {
        const real* b = B + kk * ldb;
        vreal b0, b1, b2, b3;
        std::memcpy(&b0, b, sizeof(vreal));
        std::memcpy(&b1, b + kVL, sizeof(vreal));
        std::memcpy(&b2, b + 2 * kVL, sizeof(vreal));
        std::memcpy(&b3, b + 3 * kVL, sizeof(vreal));
        const real av[4] = {a0[kk], a1[kk], a2[kk], a3[kk]};
        for (int r = 0; r < 4; ++r) {
            const vreal s = av[r] - vreal{};
            acc[r][0] += s * b0;
            acc[r][1] += s * b1;
            acc[r][2] += s * b2;
            acc[r][3] += s * b3;
        }
    }
    real* cs[4] = {c0, c1, c2, c3};
    for (int r = 0; r < 4; ++r)
        for (int v = 0; v < 4; ++v) {
            vreal cur;
            std::memcpy(&cur, cs[r] + v * kVL, sizeof(vreal));
            cur += acc[r][v];
            std::memcpy(cs[r] + v * kVL, &cur, sizeof(vreal));
        }
}
#endif

// Fallback axpy row kernel for edge rows/columns.
inline void row_axpy(std::int64_t j0, std::int64_t j1, std::int64_t k, const real* __restrict ai,
                     const real* __restrict B, std::int64_t ldb, real* __restrict ci) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
        const real a = ai[kk];
        if (a == real(0)) continue;
        const real* b = B + kk * ldb;
        for (std::int64_t j = j0; j < j1; ++j) ci[j] += a * b[j];
    }
}

void gemm_nn_core(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
                  real* C) {
#if defined(__GNUC__)
    const std::int64_t panel = 4 * kVL;
    for (std::int64_t j0 = 0; j0 < n; j0 += kTileN) {
        const std::int64_t j1 = std::min(j0 + kTileN, n);
        std::int64_t i = 0;
        for (; i + 4 <= m; i += 4) {
            std::int64_t j = j0;
            for (; j + panel <= j1; j += panel)
                kernel_4x4v(k, A + i * k, A + (i + 1) * k, A + (i + 2) * k, A + (i + 3) * k,
                            B + j, n, C + i * n + j, C + (i + 1) * n + j, C + (i + 2) * n + j,
                            C + (i + 3) * n + j);
            if (j < j1)
                for (int r = 0; r < 4; ++r) row_axpy(j, j1, k, A + (i + r) * k, B, n, C + (i + r) * n);
        }
        for (; i < m; ++i) row_axpy(j0, j1, k, A + i * k, B, n, C + i * n);
    }
#else
    for (std::int64_t j0 = 0; j0 < n; j0 += kTileN) {
        const std::int64_t j1 = std::min(j0 + kTileN, n);
        for (std::int64_t i = 0; i < m; ++i) row_axpy(j0, j1, k, A + i * k, B, n, C + i * n);
    }
#endif
}

} // namespace

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
             real* C, bool accumulate) {
    if (!accumulate) std::memset(C, 0, static_cast<std::size_t>(m) * n * sizeof(real));
    gemm_nn_core(m, n, k, A, B, C);
}

namespace {

// Dot-product panel for C += A * B^T: both operands are row-contiguous over
// the inner dimension, so no transposed copy is needed.
inline real dot_row(std::int64_t k, const real* __restrict a, const real* __restrict b) {
#if defined(__GNUC__)
    vreal acc0{}, acc1{}, acc2{}, acc3{};
    std::int64_t kk = 0;
    for (; kk + 4 * kVL <= k; kk += 4 * kVL) {
        vreal a0, a1, a2, a3, b0, b1, b2, b3;
        std::memcpy(&a0, a + kk, sizeof(vreal));
        std::memcpy(&a1, a + kk + kVL, sizeof(vreal));
        std::memcpy(&a2, a + kk + 2 * kVL, sizeof(vreal));
        std::memcpy(&a3, a + kk + 3 * kVL, sizeof(vreal));
        std::memcpy(&b0, b + kk, sizeof(vreal));
        std::memcpy(&b1, b + kk + kVL, sizeof(vreal));
        std::memcpy(&b2, b + kk + 2 * kVL, sizeof(vreal));
        std::memcpy(&b3, b + kk + 3 * kVL, sizeof(vreal));
        acc0 += a0 * b0;
        acc1 += a1 * b1;
        acc2 += a2 * b2;
        acc3 += a3 * b3;
    }
    acc0 += acc1;
    acc2 += acc3;
    acc0 += acc2;
    real s = 0;
    for (std::int64_t v = 0; v < kVL; ++v) s += acc0[v];
    for (; kk < k; ++kk) s += a[kk] * b[kk];
    return s;
#else
    real s = 0;
    for (std::int64_t kk = 0; kk < k; ++kk) s += a[kk] * b[kk];
    return s;
#endif
}

} // namespace

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
             real* C, bool accumulate) {
    if (!accumulate) std::memset(C, 0, static_cast<std::size_t>(m) * n * sizeof(real));
    for (std::int64_t i = 0; i < m; ++i) {
        const real* ai = A + i * k;
        real* ci = C + i * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += dot_row(k, ai, B + j * k);
    }
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
             real* C, bool accumulate) {
    if (!accumulate) std::memset(C, 0, static_cast<std::size_t>(m) * n * sizeof(real));
    // A is stored (k x m): transpose into row-major (m x k) and reuse the
    // blocked kernel; the copy is negligible next to the multiply.
    std::vector<real> at(static_cast<std::size_t>(m) * k);
    for (std::int64_t kk = 0; kk < k; ++kk)
        for (std::int64_t i = 0; i < m; ++i) at[i * k + kk] = A[kk * m + i];
    gemm_nn_core(m, n, k, at.data(), B, C);
}

} // namespace pact::ad
