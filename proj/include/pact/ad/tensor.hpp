#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace pact::ad {

#ifdef PACT_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif
inline constexpr bool kReal64 = sizeof(real) == 8;

// Dense shape with up to four axes (batch, channel, height, width).
struct Shape {
    int ndim = 0;
    std::array<std::int64_t, 4> d{1, 1, 1, 1};

    Shape() = default;
    Shape(std::initializer_list<std::int64_t> dims) {
        ndim = static_cast<int>(dims.size());
        int i = 0;
        for (auto v : dims) d[i++] = v;
    }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int i = 0; i < ndim; ++i) n *= d[i];
        return n;
    }
    std::int64_t operator[](int i) const { return d[i]; }
    bool operator==(const Shape& o) const { return ndim == o.ndim && d == o.d; }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const;
};

struct Tensor {
    Shape shape;
    std::vector<real> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), v(static_cast<std::size_t>(s.numel()), real(0)) {}
    Tensor(Shape s, real fill) : shape(s), v(static_cast<std::size_t>(s.numel()), fill) {}

    std::int64_t numel() const { return shape.numel(); }
    real* data() { return v.data(); }
    const real* data() const { return v.data(); }

    static Tensor scalar(real x) {
        Tensor t(Shape{1});
        t.v[0] = x;
        return t;
    }
};

// C (+)= A * B with row-major operands; N-tiled axpy kernel.
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
             real* C, bool accumulate);
// C (+)= A * B^T where B is stored (n x k).
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
             real* C, bool accumulate);
// C (+)= A^T * B where A is stored (k x m).
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const real* A, const real* B,
             real* C, bool accumulate);

} // namespace pact::ad
