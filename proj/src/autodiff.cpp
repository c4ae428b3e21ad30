#include "pact/ad/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "pact/errors.hpp"
#include "pact/image_ops.hpp"
#include "pact/system_matrix.hpp"

namespace pact::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeMismatch(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

void require_same(const char* op, const Value& a, const Value& b) {
    if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

void require_4d(const char* op, const Value& x) {
    if (x.shape().ndim != 4)
        throw ShapeMismatch(std::string(op) + ": expected a 4-axis tensor, got " +
                            x.shape().str());
}

bool any_requires(const std::vector<NodePtr>& parents) {
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

} // namespace

Value make_op(const char* op, Tensor value, std::vector<NodePtr> parents,
              std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->requires_grad = any_requires(parents);
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return Value(std::move(n));
}

void backward(const Value& loss) {
    if (!loss.valid()) throw NonScalarLoss("backward on an empty value");
    Node* root = loss.node().get();
    if (root->value.numel() != 1)
        throw NonScalarLoss("loss has shape " + root->value.shape.str());
    if (root->backward_spent)
        throw DoubleBackward("backward already ran for this loss");
    root->backward_spent = true;

    // Iterative post-order DFS over parents.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.v[0] = real(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
    }
#ifndef NDEBUG
    for (Node* n : topo)
        if (n->grad_ready)
            for (real g : n->grad.v) assert(std::isfinite(static_cast<double>(g)));
#endif
}

void zero_grad(const std::vector<Value>& params) {
    for (const auto& p : params) {
        Node* n = p.node().get();
        if (n->grad_ready) std::fill(n->grad.v.begin(), n->grad.v.end(), real(0));
    }
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Value unary_op(const char* name, const Value& a, Fwd fwd, Bwd dfdx) {
    Tensor out(a.shape());
    const auto& av = a.tensor().v;
    for (std::size_t i = 0; i < av.size(); ++i) out.v[i] = fwd(av[i]);
    return make_op(name, std::move(out), {a.node()}, [dfdx](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const auto& x = p->value.v;
        for (std::size_t i = 0; i < x.size(); ++i) p->grad.v[i] += self.grad.v[i] * dfdx(x[i]);
    });
}

} // namespace

Value add(const Value& a, const Value& b) {
    require_same("add", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.tensor().v[i] + b.tensor().v[i];
    return make_op("add", std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node* p = self.parents[k].get();
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.v.size(); ++i) p->grad.v[i] += self.grad.v[i];
        }
    });
}

Value sub(const Value& a, const Value& b) {
    require_same("sub", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.tensor().v[i] - b.tensor().v[i];
    return make_op("sub", std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.v.size(); ++i) pa->grad.v[i] += self.grad.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.v.size(); ++i) pb->grad.v[i] -= self.grad.v[i];
        }
    });
}

Value mul(const Value& a, const Value& b) {
    require_same("mul", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.tensor().v[i] * b.tensor().v[i];
    return make_op("mul", std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.v.size(); ++i)
                pa->grad.v[i] += self.grad.v[i] * pb->value.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.v.size(); ++i)
                pb->grad.v[i] += self.grad.v[i] * pa->value.v[i];
        }
    });
}

Value scale(const Value& a, double s) {
    const real rs = static_cast<real>(s);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.tensor().v[i] * rs;
    return make_op("scale", std::move(out), {a.node()}, [rs](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.v.size(); ++i) p->grad.v[i] += self.grad.v[i] * rs;
    });
}

Value abs(const Value& a) {
    return unary_op("abs", a, [](real x) { return std::abs(x); },
                    [](real x) { return x > real(0) ? real(1) : (x < real(0) ? real(-1) : real(0)); });
}

Value relu(const Value& a) {
    return unary_op("relu", a, [](real x) { return x > real(0) ? x : real(0); },
                    [](real x) { return x > real(0) ? real(1) : real(0); });
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
} // namespace

Value gelu(const Value& a) {
    return unary_op(
        "gelu", a,
        [](real x) {
            const double xd = static_cast<double>(x);
            return static_cast<real>(0.5 * xd * (1.0 + std::erf(xd * kInvSqrt2)));
        },
        [](real x) {
            const double xd = static_cast<double>(x);
            const double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
            return static_cast<real>(cdf + xd * pdf);
        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Value sum(const Value& a) {
    double s = 0.0;
    for (real x : a.tensor().v) s += static_cast<double>(x);
    return make_op("sum", Tensor::scalar(static_cast<real>(s)), {a.node()}, [](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const real g = self.grad.v[0];
        for (auto& x : p->grad.v) x += g;
    });
}

Value mean(const Value& a) {
    const double inv_n = 1.0 / static_cast<double>(a.tensor().numel());
    double s = 0.0;
    for (real x : a.tensor().v) s += static_cast<double>(x);
    return make_op("mean", Tensor::scalar(static_cast<real>(s * inv_n)), {a.node()},
                   [inv_n](Node& self) {
                       Node* p = self.parents[0].get();
                       if (!p->requires_grad) return;
                       p->ensure_grad();
                       const real g = self.grad.v[0] * static_cast<real>(inv_n);
                       for (auto& x : p->grad.v) x += g;
                   });
}

Value l1(const Value& a) {
    double s = 0.0;
    for (real x : a.tensor().v) s += std::abs(static_cast<double>(x));
    return make_op("l1", Tensor::scalar(static_cast<real>(s)), {a.node()}, [](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const real g = self.grad.v[0];
        for (std::size_t i = 0; i < p->grad.v.size(); ++i) {
            const real x = p->value.v[i];
            p->grad.v[i] += g * (x > real(0) ? real(1) : (x < real(0) ? real(-1) : real(0)));
        }
    });
}

Value sumsq(const Value& a) {
    double s = 0.0;
    for (real x : a.tensor().v) s += static_cast<double>(x) * static_cast<double>(x);
    return make_op("sumsq", Tensor::scalar(static_cast<real>(s)), {a.node()}, [](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        const real g = self.grad.v[0];
        for (std::size_t i = 0; i < p->grad.v.size(); ++i)
            p->grad.v[i] += g * real(2) * p->value.v[i];
    });
}

// ---------------------------------------------------------------------------
// Dense products and layout ops
// ---------------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.ndim < 2 || sb.ndim != sa.ndim) shape_fail("matmul", sa, sb);
    for (int i = 0; i < sa.ndim - 2; ++i)
        if (sa.d[i] != sb.d[i]) shape_fail("matmul", sa, sb);
    const std::int64_t m = sa.d[sa.ndim - 2];
    const std::int64_t k = sa.d[sa.ndim - 1];
    const std::int64_t n = sb.d[sb.ndim - 1];
    if (sb.d[sb.ndim - 2] != k) shape_fail("matmul", sa, sb);
    std::int64_t batch = 1;
    for (int i = 0; i < sa.ndim - 2; ++i) batch *= sa.d[i];

    Shape so = sa;
    so.d[so.ndim - 1] = n;
    Tensor out(so);
    for (std::int64_t t = 0; t < batch; ++t)
        gemm_nn(m, n, k, a.tensor().data() + t * m * k, b.tensor().data() + t * k * n,
                out.data() + t * m * n, false);

    return make_op("matmul", std::move(out), {a.node(), b.node()},
                   [m, n, k, batch](Node& self) {
                       Node* pa = self.parents[0].get();
                       Node* pb = self.parents[1].get();
                       if (pa->requires_grad) {
                           pa->ensure_grad();
                           for (std::int64_t t = 0; t < batch; ++t)
                               gemm_nt(m, k, n, self.grad.data() + t * m * n,
                                       pb->value.data() + t * k * n,
                                       pa->grad.data() + t * m * k, true);
                       }
                       if (pb->requires_grad) {
                           pb->ensure_grad();
                           for (std::int64_t t = 0; t < batch; ++t)
                               gemm_tn(k, n, m, pa->value.data() + t * m * k,
                                       self.grad.data() + t * m * n,
                                       pb->grad.data() + t * k * n, true);
                       }
                   });
}

namespace {

void transpose_batch(const real* in, real* out, std::int64_t batch, std::int64_t r,
                     std::int64_t c) {
    for (std::int64_t t = 0; t < batch; ++t) {
        const real* src = in + t * r * c;
        real* dst = out + t * r * c;
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    }
}

} // namespace

Value transpose_last2(const Value& a) {
    const Shape& s = a.shape();
    if (s.ndim < 2) throw ShapeMismatch("transpose_last2: need at least 2 axes");
    const std::int64_t r = s.d[s.ndim - 2];
    const std::int64_t c = s.d[s.ndim - 1];
    std::int64_t batch = 1;
    for (int i = 0; i < s.ndim - 2; ++i) batch *= s.d[i];

    Shape so = s;
    std::swap(so.d[so.ndim - 2], so.d[so.ndim - 1]);
    Tensor out(so);
    transpose_batch(a.tensor().data(), out.data(), batch, r, c);
    return make_op("transpose", std::move(out), {a.node()}, [batch, r, c](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        // The gradient flows back through the inverse permutation; accumulate
        // via a scratch buffer since transpose_batch writes, not adds.
        Tensor tmp(p->value.shape);
        transpose_batch(self.grad.data(), tmp.data(), batch, c, r);
        for (std::size_t i = 0; i < tmp.v.size(); ++i) p->grad.v[i] += tmp.v[i];
    });
}

Value reshape(const Value& a, Shape s) {
    if (s.numel() != a.tensor().numel())
        throw ShapeMismatch("reshape: element count changes from " + a.shape().str() + " to " +
                            s.str());
    Tensor out(s);
    out.v = a.tensor().v;
    return make_op("reshape", std::move(out), {a.node()}, [](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.v.size(); ++i) p->grad.v[i] += self.grad.v[i];
    });
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

namespace {

// col is (Ci*kh*kw) x (H*W), zero padding keeps the output the same size.
void im2col(const real* x, std::int64_t ci, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, real* col) {
    const std::int64_t ph = kh / 2, pw = kw / 2;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < ci; ++c) {
        for (std::int64_t u = 0; u < kh; ++u) {
            for (std::int64_t vv = 0; vv < kw; ++vv, ++row) {
                real* dst = col + row * h * w;
                for (std::int64_t i = 0; i < h; ++i) {
                    const std::int64_t si = i + u - ph;
                    if (si < 0 || si >= h) {
                        std::memset(dst + i * w, 0, static_cast<std::size_t>(w) * sizeof(real));
                        continue;
                    }
                    const real* srow = x + (c * h + si) * w;
                    for (std::int64_t j = 0; j < w; ++j) {
                        const std::int64_t sj = j + vv - pw;
                        dst[i * w + j] = (sj < 0 || sj >= w) ? real(0) : srow[sj];
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const real* col, std::int64_t ci, std::int64_t h, std::int64_t w,
                       std::int64_t kh, std::int64_t kw, real* x) {
    const std::int64_t ph = kh / 2, pw = kw / 2;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < ci; ++c) {
        for (std::int64_t u = 0; u < kh; ++u) {
            for (std::int64_t vv = 0; vv < kw; ++vv, ++row) {
                const real* src = col + row * h * w;
                for (std::int64_t i = 0; i < h; ++i) {
                    const std::int64_t si = i + u - ph;
                    if (si < 0 || si >= h) continue;
                    real* xrow = x + (c * h + si) * w;
                    for (std::int64_t j = 0; j < w; ++j) {
                        const std::int64_t sj = j + vv - pw;
                        if (sj >= 0 && sj < w) xrow[sj] += src[i * w + j];
                    }
                }
            }
        }
    }
}

} // namespace

Value conv2d(const Value& x, const Value& w, const Value& bias) {
    require_4d("conv2d", x);
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    if (sw.ndim != 4) throw ShapeMismatch("conv2d: weight must be (Co,Ci,kh,kw)");
    const std::int64_t B = sx.d[0], Ci = sx.d[1], H = sx.d[2], W = sx.d[3];
    const std::int64_t Co = sw.d[0], kh = sw.d[2], kw = sw.d[3];
    if (sw.d[1] != Ci) shape_fail("conv2d", sx, sw);
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeMismatch("conv2d: kernel sides must be odd");
    if (bias.shape() != Shape{Co}) throw ShapeMismatch("conv2d: bias must be (Co)");
    const std::int64_t K = Ci * kh * kw;
    const std::int64_t N = H * W;
    const bool one_by_one = (kh == 1 && kw == 1);

    Tensor out(Shape{B, Co, H, W});
    // The unrolled input patches feed both the forward product and the weight
    // gradient; keeping them alive trades ~K*N reals per item for a rebuild.
    auto cols = std::make_shared<std::vector<std::vector<real>>>();
    if (!one_by_one) cols->resize(static_cast<std::size_t>(B));
    for (std::int64_t b = 0; b < B; ++b) {
        const real* xb = x.tensor().data() + b * Ci * N;
        const real* cptr = xb;
        if (!one_by_one) {
            auto& col = (*cols)[static_cast<std::size_t>(b)];
            col.resize(static_cast<std::size_t>(K) * N);
            im2col(xb, Ci, H, W, kh, kw, col.data());
            cptr = col.data();
        }
        real* ob = out.data() + b * Co * N;
        gemm_nn(Co, N, K, w.tensor().data(), cptr, ob, false);
        for (std::int64_t co = 0; co < Co; ++co) {
            const real bv = bias.tensor().v[static_cast<std::size_t>(co)];
            real* orow = ob + co * N;
            for (std::int64_t q = 0; q < N; ++q) orow[q] += bv;
        }
    }

    return make_op(
        "conv2d", std::move(out), {x.node(), w.node(), bias.node()},
        [B, Ci, Co, H, W, kh, kw, K, N, one_by_one, cols](Node& self) {
            Node* px = self.parents[0].get();
            Node* pw = self.parents[1].get();
            Node* pb = self.parents[2].get();
            std::vector<real> dcol;
            if (px->requires_grad) {
                px->ensure_grad();
                dcol.resize(static_cast<std::size_t>(K) * N);
            }
            if (pw->requires_grad) pw->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b) {
                const real* gout = self.grad.data() + b * Co * N;
                const real* xb = px->value.data() + b * Ci * N;
                if (pw->requires_grad) {
                    const real* cptr =
                        one_by_one ? xb : (*cols)[static_cast<std::size_t>(b)].data();
                    gemm_nt(Co, K, N, gout, cptr, pw->grad.data(), true);
                }
                if (pb->requires_grad) {
                    for (std::int64_t co = 0; co < Co; ++co) {
                        double s = 0.0;
                        const real* grow = gout + co * N;
                        for (std::int64_t q = 0; q < N; ++q) s += static_cast<double>(grow[q]);
                        pb->grad.v[static_cast<std::size_t>(co)] += static_cast<real>(s);
                    }
                }
                if (px->requires_grad) {
                    real* gx = px->grad.data() + b * Ci * N;
                    if (one_by_one) {
                        gemm_tn(K, N, Co, pw->value.data(), gout, gx, true);
                    } else {
                        gemm_tn(K, N, Co, pw->value.data(), gout, dcol.data(), false);
                        col2im_accumulate(dcol.data(), Ci, H, W, kh, kw, gx);
                    }
                }
            }
        });
}

Value avgpool2(const Value& x) {
    require_4d("avgpool2", x);
    const Shape& s = x.shape();
    const std::int64_t B = s.d[0], C = s.d[1], H = s.d[2], W = s.d[3];
    if (H % 2 || W % 2) throw ShapeMismatch("avgpool2: spatial dims must be even");
    const std::int64_t Ho = H / 2, Wo = W / 2;
    Tensor out(Shape{B, C, Ho, Wo});
    const real* xv = x.tensor().data();
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const real* src = xv + bc * H * W;
        real* dst = out.data() + bc * Ho * Wo;
        for (std::int64_t i = 0; i < Ho; ++i)
            for (std::int64_t j = 0; j < Wo; ++j)
                dst[i * Wo + j] = (src[(2 * i) * W + 2 * j] + src[(2 * i) * W + 2 * j + 1] +
                                   src[(2 * i + 1) * W + 2 * j] + src[(2 * i + 1) * W + 2 * j + 1]) *
                                  real(0.25);
    }
    return make_op("avgpool2", std::move(out), {x.node()}, [B, C, H, W, Ho, Wo](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            const real* g = self.grad.data() + bc * Ho * Wo;
            real* gx = p->grad.data() + bc * H * W;
            for (std::int64_t i = 0; i < Ho; ++i)
                for (std::int64_t j = 0; j < Wo; ++j) {
                    const real q = g[i * Wo + j] * real(0.25);
                    gx[(2 * i) * W + 2 * j] += q;
                    gx[(2 * i) * W + 2 * j + 1] += q;
                    gx[(2 * i + 1) * W + 2 * j] += q;
                    gx[(2 * i + 1) * W + 2 * j + 1] += q;
                }
        }
    });
}

Value maxpool2(const Value& x) {
    require_4d("maxpool2", x);
    const Shape& s = x.shape();
    const std::int64_t B = s.d[0], C = s.d[1], H = s.d[2], W = s.d[3];
    if (H % 2 || W % 2) throw ShapeMismatch("maxpool2: spatial dims must be even");
    const std::int64_t Ho = H / 2, Wo = W / 2;
    Tensor out(Shape{B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.v.size());
    const real* xv = x.tensor().data();
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const real* src = xv + bc * H * W;
        real* dst = out.data() + bc * Ho * Wo;
        std::int32_t* am = argmax->data() + bc * Ho * Wo;
        for (std::int64_t i = 0; i < Ho; ++i)
            for (std::int64_t j = 0; j < Wo; ++j) {
                const std::int64_t idx[4] = {(2 * i) * W + 2 * j, (2 * i) * W + 2 * j + 1,
                                             (2 * i + 1) * W + 2 * j, (2 * i + 1) * W + 2 * j + 1};
                std::int64_t best = idx[0];
                real bv = src[idx[0]];
                for (int k = 1; k < 4; ++k)
                    if (src[idx[k]] > bv) { // strict: first index wins ties
                        bv = src[idx[k]];
                        best = idx[k];
                    }
                dst[i * Wo + j] = bv;
                am[i * Wo + j] = static_cast<std::int32_t>(best);
            }
    }
    return make_op("maxpool2", std::move(out), {x.node()}, [B, C, H, W, Ho, Wo, argmax](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            const real* g = self.grad.data() + bc * Ho * Wo;
            real* gx = p->grad.data() + bc * H * W;
            const std::int32_t* am = argmax->data() + bc * Ho * Wo;
            for (std::int64_t q = 0; q < Ho * Wo; ++q) gx[am[q]] += g[q];
        }
    });
}

Value upsample2_nearest(const Value& x) {
    require_4d("upsample2", x);
    const Shape& s = x.shape();
    const std::int64_t B = s.d[0], C = s.d[1], H = s.d[2], W = s.d[3];
    const std::int64_t Ho = H * 2, Wo = W * 2;
    Tensor out(Shape{B, C, Ho, Wo});
    const real* xv = x.tensor().data();
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const real* src = xv + bc * H * W;
        real* dst = out.data() + bc * Ho * Wo;
        for (std::int64_t i = 0; i < H; ++i)
            for (std::int64_t j = 0; j < W; ++j) {
                const real v = src[i * W + j];
                dst[(2 * i) * Wo + 2 * j] = v;
                dst[(2 * i) * Wo + 2 * j + 1] = v;
                dst[(2 * i + 1) * Wo + 2 * j] = v;
                dst[(2 * i + 1) * Wo + 2 * j + 1] = v;
            }
    }
    return make_op("upsample2", std::move(out), {x.node()}, [B, C, H, W, Ho, Wo](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            const real* g = self.grad.data() + bc * Ho * Wo;
            real* gx = p->grad.data() + bc * H * W;
            for (std::int64_t i = 0; i < H; ++i)
                for (std::int64_t j = 0; j < W; ++j)
                    gx[i * W + j] += g[(2 * i) * Wo + 2 * j] + g[(2 * i) * Wo + 2 * j + 1] +
                                     g[(2 * i + 1) * Wo + 2 * j] + g[(2 * i + 1) * Wo + 2 * j + 1];
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and attention primitives
// ---------------------------------------------------------------------------

Value layernorm_channels(const Value& x, const Value& gamma, const Value& beta, double eps) {
    require_4d("layernorm", x);
    const Shape& s = x.shape();
    const std::int64_t B = s.d[0], C = s.d[1], H = s.d[2], W = s.d[3];
    if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
        throw ShapeMismatch("layernorm: affine params must be (C)");
    const std::int64_t P = H * W;

    Tensor out(s);
    auto inv_std = std::make_shared<Tensor>(Shape{B, 1, H, W});
    auto mu = std::make_shared<Tensor>(Shape{B, 1, H, W});
    const real* xv = x.tensor().data();
    const real* gv = gamma.tensor().data();
    const real* bv = beta.tensor().data();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t q = 0; q < P; ++q) {
            double m = 0.0;
            for (std::int64_t c = 0; c < C; ++c) m += xv[(b * C + c) * P + q];
            m /= static_cast<double>(C);
            double var = 0.0;
            for (std::int64_t c = 0; c < C; ++c) {
                const double d = xv[(b * C + c) * P + q] - m;
                var += d * d;
            }
            var /= static_cast<double>(C);
            const double is = 1.0 / std::sqrt(var + eps);
            mu->v[b * P + q] = static_cast<real>(m);
            inv_std->v[b * P + q] = static_cast<real>(is);
            for (std::int64_t c = 0; c < C; ++c) {
                const double xhat = (xv[(b * C + c) * P + q] - m) * is;
                out.v[(b * C + c) * P + q] = static_cast<real>(xhat * gv[c] + bv[c]);
            }
        }
    }

    return make_op(
        "layernorm", std::move(out), {x.node(), gamma.node(), beta.node()},
        [B, C, P, mu, inv_std](Node& self) {
            Node* px = self.parents[0].get();
            Node* pg = self.parents[1].get();
            Node* pb = self.parents[2].get();
            if (px->requires_grad) px->ensure_grad();
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            const real* gv = pg->value.data();
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t q = 0; q < P; ++q) {
                    const double m = mu->v[b * P + q];
                    const double is = inv_std->v[b * P + q];
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (std::int64_t c = 0; c < C; ++c) {
                        const std::size_t idx = (b * C + c) * P + q;
                        const double xhat = (px->value.v[idx] - m) * is;
                        const double dy = self.grad.v[idx];
                        const double dxhat = dy * gv[c];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                        if (pg->requires_grad) pg->grad.v[c] += static_cast<real>(dy * xhat);
                        if (pb->requires_grad) pb->grad.v[c] += static_cast<real>(dy);
                    }
                    if (!px->requires_grad) continue;
                    mean_dxhat /= static_cast<double>(C);
                    mean_dxhat_xhat /= static_cast<double>(C);
                    for (std::int64_t c = 0; c < C; ++c) {
                        const std::size_t idx = (b * C + c) * P + q;
                        const double xhat = (px->value.v[idx] - m) * is;
                        const double dxhat = static_cast<double>(self.grad.v[idx]) * gv[c];
                        px->grad.v[idx] += static_cast<real>(
                            is * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat));
                    }
                }
            }
        });
}

Value softmax_last(const Value& x) {
    const Shape& s = x.shape();
    if (s.ndim < 1) throw ShapeMismatch("softmax: empty shape");
    const std::int64_t n = s.d[s.ndim - 1];
    const std::int64_t rows = s.numel() / n;
    Tensor out(s);
    const real* xv = x.tensor().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const real* src = xv + r * n;
        real* dst = out.data() + r * n;
        real mx = src[0];
        for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, src[i]);
        double z = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double e = std::exp(static_cast<double>(src[i] - mx));
            dst[i] = static_cast<real>(e);
            z += e;
        }
        const real inv = static_cast<real>(1.0 / z);
        for (std::int64_t i = 0; i < n; ++i) dst[i] *= inv;
    }
    return make_op("softmax", std::move(out), {x.node()}, [n, rows](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const real* y = self.value.data() + r * n;
            const real* g = self.grad.data() + r * n;
            real* gx = p->grad.data() + r * n;
            double dot = 0.0;
            for (std::int64_t i = 0; i < n; ++i) dot += static_cast<double>(g[i]) * y[i];
            for (std::int64_t i = 0; i < n; ++i)
                gx[i] += y[i] * (g[i] - static_cast<real>(dot));
        }
    });
}

// ---------------------------------------------------------------------------
// Channel concat / split, rotation, wavelet, TV
// ---------------------------------------------------------------------------

Value concat_channels(const std::vector<Value>& xs) {
    if (xs.empty()) throw ShapeMismatch("concat: no inputs");
    const Shape& s0 = xs[0].shape();
    require_4d("concat", xs[0]);
    std::int64_t c_total = 0;
    for (const auto& x : xs) {
        require_4d("concat", x);
        const Shape& s = x.shape();
        if (s.d[0] != s0.d[0] || s.d[2] != s0.d[2] || s.d[3] != s0.d[3])
            shape_fail("concat", s0, s);
        c_total += s.d[1];
    }
    const std::int64_t B = s0.d[0], P = s0.d[2] * s0.d[3];
    Tensor out(Shape{B, c_total, s0.d[2], s0.d[3]});
    std::vector<NodePtr> parents;
    std::vector<std::int64_t> sizes;
    for (const auto& x : xs) {
        parents.push_back(x.node());
        sizes.push_back(x.shape().d[1]);
    }
    for (std::int64_t b = 0; b < B; ++b) {
        std::int64_t co = 0;
        for (const auto& x : xs) {
            const std::int64_t c = x.shape().d[1];
            std::memcpy(out.data() + (b * c_total + co) * P,
                        x.tensor().data() + b * c * P,
                        static_cast<std::size_t>(c) * P * sizeof(real));
            co += c;
        }
    }
    return make_op("concat", std::move(out), std::move(parents),
                   [B, P, c_total, sizes](Node& self) {
                       for (std::int64_t b = 0; b < B; ++b) {
                           std::int64_t co = 0;
                           for (std::size_t k = 0; k < self.parents.size(); ++k) {
                               Node* p = self.parents[k].get();
                               const std::int64_t c = sizes[k];
                               if (p->requires_grad) {
                                   p->ensure_grad();
                                   const real* g = self.grad.data() + (b * c_total + co) * P;
                                   real* gx = p->grad.data() + b * c * P;
                                   for (std::int64_t i = 0; i < c * P; ++i) gx[i] += g[i];
                               }
                               co += c;
                           }
                       }
                   });
}

std::vector<Value> split_channels(const Value& x, const std::vector<std::int64_t>& sizes) {
    require_4d("split", x);
    const Shape& s = x.shape();
    std::int64_t total = 0;
    for (auto c : sizes) {
        if (c <= 0) throw ShapeMismatch("split: sizes must be positive");
        total += c;
    }
    if (total != s.d[1]) throw ShapeMismatch("split: sizes do not sum to the channel count");
    const std::int64_t B = s.d[0], P = s.d[2] * s.d[3], C = s.d[1];
    std::vector<Value> out;
    std::int64_t co = 0;
    for (auto c : sizes) {
        Tensor t(Shape{B, c, s.d[2], s.d[3]});
        for (std::int64_t b = 0; b < B; ++b)
            std::memcpy(t.data() + b * c * P, x.tensor().data() + (b * C + co) * P,
                        static_cast<std::size_t>(c) * P * sizeof(real));
        const std::int64_t offset = co;
        out.push_back(make_op("split", std::move(t), {x.node()},
                              [B, P, C, c, offset](Node& self) {
                                  Node* p = self.parents[0].get();
                                  if (!p->requires_grad) return;
                                  p->ensure_grad();
                                  for (std::int64_t b = 0; b < B; ++b) {
                                      const real* g = self.grad.data() + b * c * P;
                                      real* gx = p->grad.data() + (b * C + offset) * P;
                                      for (std::int64_t i = 0; i < c * P; ++i) gx[i] += g[i];
                                  }
                              }));
        co += c;
    }
    return out;
}

Value concat_batch(const std::vector<Value>& xs) {
    if (xs.empty()) throw ShapeMismatch("concat_batch: no inputs");
    const Shape& s0 = xs[0].shape();
    std::int64_t b_total = 0;
    std::int64_t item = 1;
    for (int i = 1; i < s0.ndim; ++i) item *= s0.d[i];
    std::vector<NodePtr> parents;
    std::vector<std::int64_t> sizes;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.ndim != s0.ndim) shape_fail("concat_batch", s0, s);
        for (int i = 1; i < s.ndim; ++i)
            if (s.d[i] != s0.d[i]) shape_fail("concat_batch", s0, s);
        b_total += s.d[0];
        parents.push_back(x.node());
        sizes.push_back(s.d[0]);
    }
    Shape so = s0;
    so.d[0] = b_total;
    Tensor out(so);
    std::int64_t at = 0;
    for (const auto& x : xs) {
        std::memcpy(out.data() + at * item, x.tensor().data(),
                    static_cast<std::size_t>(x.shape().d[0] * item) * sizeof(real));
        at += x.shape().d[0];
    }
    return make_op("concat_batch", std::move(out), std::move(parents),
                   [item, sizes](Node& self) {
                       std::int64_t at = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                           Node* p = self.parents[k].get();
                           const std::int64_t span = sizes[k] * item;
                           if (p->requires_grad) {
                               p->ensure_grad();
                               const real* g = self.grad.data() + at;
                               for (std::int64_t i = 0; i < span; ++i) p->grad.v[i] += g[i];
                           }
                           at += span;
                       }
                   });
}

std::vector<Value> split_batch(const Value& x, const std::vector<std::int64_t>& sizes) {
    const Shape& s = x.shape();
    std::int64_t total = 0;
    std::int64_t item = 1;
    for (int i = 1; i < s.ndim; ++i) item *= s.d[i];
    for (auto b : sizes) {
        if (b <= 0) throw ShapeMismatch("split_batch: sizes must be positive");
        total += b;
    }
    if (total != s.d[0]) throw ShapeMismatch("split_batch: sizes do not sum to the batch");
    std::vector<Value> out;
    std::int64_t at = 0;
    for (auto b : sizes) {
        Shape so = s;
        so.d[0] = b;
        Tensor t(so);
        std::memcpy(t.data(), x.tensor().data() + at * item,
                    static_cast<std::size_t>(b * item) * sizeof(real));
        const std::int64_t offset = at * item;
        const std::int64_t span = b * item;
        out.push_back(make_op("split_batch", std::move(t), {x.node()},
                              [offset, span](Node& self) {
                                  Node* p = self.parents[0].get();
                                  if (!p->requires_grad) return;
                                  p->ensure_grad();
                                  real* gx = p->grad.data() + offset;
                                  for (std::int64_t i = 0; i < span; ++i)
                                      gx[i] += self.grad.v[static_cast<std::size_t>(i)];
                              }));
        at += b;
    }
    return out;
}

namespace {

void rot90_real(const real* in, real* out, std::int64_t n, int turns) {
    switch (turns & 3) {
    case 0:
        std::memcpy(out, in, static_cast<std::size_t>(n) * n * sizeof(real));
        break;
    case 1:
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < n; ++c) out[r * n + c] = in[c * n + (n - 1 - r)];
        break;
    case 2:
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < n; ++c) out[r * n + c] = in[(n - 1 - r) * n + (n - 1 - c)];
        break;
    case 3:
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < n; ++c) out[r * n + c] = in[(n - 1 - c) * n + r];
        break;
    }
}

} // namespace

Value rot90(const Value& x, int turns) {
    require_4d("rot90", x);
    const Shape& s = x.shape();
    if (s.d[2] != s.d[3]) throw ShapeMismatch("rot90: spatial dims must be square");
    const std::int64_t n = s.d[2];
    const std::int64_t slices = s.d[0] * s.d[1];
    Tensor out(s);
    for (std::int64_t t = 0; t < slices; ++t)
        rot90_real(x.tensor().data() + t * n * n, out.data() + t * n * n, n, turns);
    const int inv = (4 - (turns & 3)) & 3;
    return make_op("rot90", std::move(out), {x.node()}, [n, slices, inv](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        std::vector<real> tmp(static_cast<std::size_t>(n) * n);
        for (std::int64_t t = 0; t < slices; ++t) {
            rot90_real(self.grad.data() + t * n * n, tmp.data(), n, inv);
            real* gx = p->grad.data() + t * n * n;
            for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        }
    });
}

Value haar2d(const Value& x, int levels) {
    require_4d("haar2d", x);
    const Shape& s = x.shape();
    if (s.d[2] != s.d[3]) throw BadShape("haar2d: spatial dims must be square");
    const std::int64_t n = s.d[2];
    const std::int64_t slices = s.d[0] * s.d[1];
    Tensor out(s);
    std::vector<double> buf(static_cast<std::size_t>(n) * n);
    for (std::int64_t t = 0; t < slices; ++t) {
        const real* src = x.tensor().data() + t * n * n;
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<double>(src[i]);
        ops::haar2d_forward_packed(buf.data(), static_cast<int>(n), levels);
        real* dst = out.data() + t * n * n;
        for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<real>(buf[i]);
    }
    return make_op("haar2d", std::move(out), {x.node()}, [n, slices, levels](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        std::vector<double> buf(static_cast<std::size_t>(n) * n);
        for (std::int64_t t = 0; t < slices; ++t) {
            const real* g = self.grad.data() + t * n * n;
            for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<double>(g[i]);
            // Orthonormal transform: the transpose is the inverse.
            ops::haar2d_inverse_packed(buf.data(), static_cast<int>(n), levels);
            real* gx = p->grad.data() + t * n * n;
            for (std::size_t i = 0; i < buf.size(); ++i) gx[i] += static_cast<real>(buf[i]);
        }
    });
}

Value tv(const Value& x) {
    require_4d("tv", x);
    const Shape& s = x.shape();
    const std::int64_t h = s.d[2], w = s.d[3];
    const std::int64_t slices = s.d[0] * s.d[1];
    std::vector<double> buf(static_cast<std::size_t>(h) * w);
    double total = 0.0;
    for (std::int64_t t = 0; t < slices; ++t) {
        const real* src = x.tensor().data() + t * h * w;
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<double>(src[i]);
        total += ops::tv_seminorm(buf.data(), static_cast<int>(w), static_cast<int>(h), nullptr);
    }
    return make_op("tv", Tensor::scalar(static_cast<real>(total)), {x.node()},
                   [h, w, slices](Node& self) {
                       Node* p = self.parents[0].get();
                       if (!p->requires_grad) return;
                       p->ensure_grad();
                       const real g = self.grad.v[0];
                       std::vector<double> buf(static_cast<std::size_t>(h) * w);
                       std::vector<double> sg(buf.size());
                       for (std::int64_t t = 0; t < slices; ++t) {
                           const real* src = p->value.data() + t * h * w;
                           for (std::size_t i = 0; i < buf.size(); ++i)
                               buf[i] = static_cast<double>(src[i]);
                           ops::tv_seminorm(buf.data(), static_cast<int>(w), static_cast<int>(h),
                                            sg.data());
                           real* gx = p->grad.data() + t * h * w;
                           for (std::size_t i = 0; i < sg.size(); ++i)
                               gx[i] += g * static_cast<real>(sg[i]);
                       }
                   });
}

Value stop_gradient(const Value& x) {
    Tensor out = x.tensor();
    // No parents: the graph ends here on purpose.
    return make_op("stopgrad", std::move(out), {}, nullptr);
}

// ---------------------------------------------------------------------------
// Physics operators
// ---------------------------------------------------------------------------

Value forward_project_op(const SystemMatrix& A, const Value& image) {
    require_4d("forward_project", image);
    const Shape& s = image.shape();
    if (s.d[1] != 1 || static_cast<std::uint64_t>(s.d[2] * s.d[3]) != A.cols)
        throw ShapeMismatch("forward_project: image shape " + s.str() +
                            " does not match the operator grid");
    const std::int64_t B = s.d[0];
    const std::int64_t E = A.geometry.n_elements, T = A.geometry.n_samples;
    Tensor out(Shape{B, 1, E, T});
    std::vector<double> img(A.cols), sino(A.rows);
    for (std::int64_t b = 0; b < B; ++b) {
        const real* src = image.tensor().data() + b * A.cols;
        for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(src[i]);
        forward_project_into(A, img.data(), sino.data());
        real* dst = out.data() + b * A.rows;
        for (std::size_t i = 0; i < sino.size(); ++i) dst[i] = static_cast<real>(sino[i]);
    }
    const SystemMatrix* ap = &A;
    return make_op("forward_project", std::move(out), {image.node()}, [ap, B](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        std::vector<double> sino(ap->rows), img(ap->cols);
        for (std::int64_t b = 0; b < B; ++b) {
            const real* g = self.grad.data() + b * ap->rows;
            for (std::size_t i = 0; i < sino.size(); ++i) sino[i] = static_cast<double>(g[i]);
            adjoint_project_into(*ap, sino.data(), img.data());
            real* gx = p->grad.data() + b * ap->cols;
            for (std::size_t i = 0; i < img.size(); ++i) gx[i] += static_cast<real>(img[i]);
        }
    });
}

Value das_op(const SystemMatrix& A, const Value& sino, int n_valid, double gain) {
    require_4d("das", sino);
    const Shape& s = sino.shape();
    if (s.d[1] != 1 || static_cast<std::uint64_t>(s.d[2] * s.d[3]) != A.rows)
        throw ShapeMismatch("das: sinogram shape " + s.str() + " does not match the operator");
    if (n_valid <= 0) throw AllChannelsMasked("das op needs at least one valid channel");
    const std::int64_t B = s.d[0];
    const double k = gain / static_cast<double>(n_valid);
    const std::int64_t n = A.grid.nx;
    Tensor out(Shape{B, 1, n, n});
    std::vector<double> buf_s(A.rows), buf_i(A.cols);
    for (std::int64_t b = 0; b < B; ++b) {
        const real* src = sino.tensor().data() + b * A.rows;
        for (std::size_t i = 0; i < buf_s.size(); ++i) buf_s[i] = static_cast<double>(src[i]);
        adjoint_project_into(A, buf_s.data(), buf_i.data());
        real* dst = out.data() + b * A.cols;
        for (std::size_t i = 0; i < buf_i.size(); ++i) dst[i] = static_cast<real>(k * buf_i[i]);
    }
    const SystemMatrix* ap = &A;
    return make_op("das", std::move(out), {sino.node()}, [ap, B, k](Node& self) {
        Node* p = self.parents[0].get();
        if (!p->requires_grad) return;
        p->ensure_grad();
        std::vector<double> img(ap->cols), sino_g(ap->rows);
        for (std::int64_t b = 0; b < B; ++b) {
            const real* g = self.grad.data() + b * ap->cols;
            for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(g[i]);
            forward_project_into(*ap, img.data(), sino_g.data());
            real* gx = p->grad.data() + b * ap->rows;
            for (std::size_t i = 0; i < sino_g.size(); ++i)
                gx[i] += static_cast<real>(k * sino_g[i]);
        }
    });
}

} // namespace pact::ad
