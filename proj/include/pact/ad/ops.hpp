#pragma once

#include "pact/ad/graph.hpp"

namespace pact {
struct SystemMatrix;
}

namespace pact::ad {

// Elementwise (shapes must match exactly; no broadcasting).
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value abs(const Value& a);
Value relu(const Value& a);
Value gelu(const Value& a); // exact erf form

// Reductions to a scalar.
Value sum(const Value& a);
Value mean(const Value& a);
Value l1(const Value& a);
Value sumsq(const Value& a);

// Batched dense product: a (..., m, k) x b (..., k, n); leading axes equal.
Value matmul(const Value& a, const Value& b);
Value transpose_last2(const Value& a);
Value reshape(const Value& a, Shape s);

// x (B,C,H,W), w (Co,Ci,kh,kw) odd kernels, zero-padded "same", stride 1.
Value conv2d(const Value& x, const Value& w, const Value& bias);
Value avgpool2(const Value& x);
Value maxpool2(const Value& x); // ties resolve to the first index in row-major order
Value upsample2_nearest(const Value& x);

// Normalizes across channels at every (b, h, w) position; affine per channel.
Value layernorm_channels(const Value& x, const Value& gamma, const Value& beta,
                         double eps = 1e-5);
Value softmax_last(const Value& x);

Value concat_channels(const std::vector<Value>& xs);
std::vector<Value> split_channels(const Value& x, const std::vector<std::int64_t>& sizes);

// Same, along the batch axis. Contiguous block moves.
Value concat_batch(const std::vector<Value>& xs);
std::vector<Value> split_batch(const Value& x, const std::vector<std::int64_t>& sizes);

// Spatial quarter-turns of (B,C,H,W), H == W.
Value rot90(const Value& x, int turns);

// Orthonormal Haar analysis, packed layout, per (b, c) slice.
Value haar2d(const Value& x, int levels);

// Anisotropic total variation summed over all slices; scalar output.
Value tv(const Value& x);

Value stop_gradient(const Value& x);

// Physics operators in the graph. The matrix is frozen; gradients flow
// through the image/sinogram argument via the transposed operator.
Value forward_project_op(const SystemMatrix& A, const Value& image);  // (B,1,H,W)->(B,1,E,T)
Value das_op(const SystemMatrix& A, const Value& sino, int n_valid, double gain);

} // namespace pact::ad
