#pragma once

// Differentiable op vocabulary over Tensor<S>.  Every op is pure: it reads
// its inputs, produces a fresh tensor, and (when an input is tracked on a
// tape) records a closure that routes output gradients back to the inputs.
// Data movement of any kind (transpose, padding, windowing, pixel shuffle,
// scan ordering) goes through the single `remap` gather op so there is one
// scatter-add backward to get right.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "hcfs/rng.h"
#include "hcfs/tensor.h"

namespace hcfs {

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

inline IndexMap make_index_map(std::vector<int64_t> idx) {
  return std::make_shared<const std::vector<int64_t>>(std::move(idx));
}

namespace detail {

template <class S>
Tape<S>* tape_of(const Tensor<S>& a) {
  return a.tracked() ? a.tape : nullptr;
}

template <class S>
Tape<S>* tape_of(const Tensor<S>& a, const Tensor<S>& b) {
  Tape<S>* ta = tape_of(a);
  Tape<S>* tb = tape_of(b);
  if (ta && tb)
    require<Error>(ta == tb, "operands belong to different tapes");
  return ta ? ta : tb;
}

template <class S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  require<ShapeError>(a.shape == b.shape, op, ": shape mismatch ",
                      shape_str(a.shape), " vs ", shape_str(b.shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops (same shape).

template <class S, class FwdFn, class BackFn>
Tensor<S> binary_op(const char* name, const Tensor<S>& a, const Tensor<S>& b,
                    FwdFn fwd, BackFn back) {
  detail::check_same_shape(name, a, b);
  Tensor<S> out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  for (size_t i = 0; i < a.numel(); ++i) out.data[i] = fwd(a.data[i], b.data[i]);
  Tape<S>* t = detail::tape_of(a, b);
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = a.tracked() ? a.node : -1;
    int bn = b.tracked() ? b.node : -1;
    int on = out.node;
    std::vector<S> av = a.data, bv = b.data;
    t->record([an, bn, on, av = std::move(av), bv = std::move(bv),
               back](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      size_t n = g.size();
      std::vector<S> ga, gb;
      if (an >= 0) ga.resize(n);
      if (bn >= 0) gb.resize(n);
      for (size_t i = 0; i < n; ++i) {
        S da, db;
        back(av[i], bv[i], g[i], da, db);
        if (an >= 0) ga[i] = da;
        if (bn >= 0) gb[i] = db;
      }
      if (an >= 0) tp.accum(an, ga.data(), n);
      if (bn >= 0) tp.accum(bn, gb.data(), n);
    });
  }
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "add", a, b, [](S x, S y) { return x + y; },
      [](S, S, S g, S& da, S& db) {
        da = g;
        db = g;
      });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "sub", a, b, [](S x, S y) { return x - y; },
      [](S, S, S g, S& da, S& db) {
        da = g;
        db = -g;
      });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "mul", a, b, [](S x, S y) { return x * y; },
      [](S x, S y, S g, S& da, S& db) {
        da = g * y;
        db = g * x;
      });
}

template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      "div", a, b, [](S x, S y) { return x / y; },
      [](S x, S y, S g, S& da, S& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

// ---------------------------------------------------------------------------
// Scalar-constant ops.

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& a, double c) {
  Tensor<S> out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  for (size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] * S(c);
  if (Tape<S>* t = detail::tape_of(a)) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = a.node, on = out.node;
    t->record([an, on, c](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> ga(g.size());
      for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * S(c);
      tp.accum(an, ga.data(), ga.size());
    });
  }
  return out;
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, double c) {
  Tensor<S> out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  for (size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + S(c);
  if (Tape<S>* t = detail::tape_of(a)) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = a.node, on = out.node;
    t->record([an, on](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (!g.empty()) tp.accum(an, g.data(), g.size());
    });
  }
  return out;
}

template <class S>
Tensor<S> neg(const Tensor<S>& a) {
  return mul_scalar(a, -1.0);
}

// Detach from the graph: same values, no gradient flow.
template <class S>
Tensor<S> detach(const Tensor<S>& a) {
  Tensor<S> t = a;
  t.tape = nullptr;
  t.node = -1;
  return t;
}

// ---------------------------------------------------------------------------
// Broadcast ops over the trailing axis: x viewed as [R, D], vec is [D].

template <class S>
Tensor<S> row_add(const Tensor<S>& x, const Tensor<S>& vec) {
  int d = vec.dim(0);
  require<ShapeError>(vec.rank() == 1, "row_add: vec must be rank 1");
  require<ShapeError>(x.rank() >= 1 && x.dim(-1) == d,
                      "row_add: trailing axis of ", shape_str(x.shape),
                      " != vec length ", d);
  size_t rows = x.numel() / size_t(d);
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  for (size_t r = 0; r < rows; ++r)
    for (int i = 0; i < d; ++i)
      out.data[r * d + i] = x.data[r * d + i] + vec.data[size_t(i)];
  Tape<S>* t = detail::tape_of(x, vec);
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int xn = x.tracked() ? x.node : -1;
    int vn = vec.tracked() ? vec.node : -1;
    int on = out.node;
    t->record([xn, vn, on, rows, d](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      if (xn >= 0) tp.accum(xn, g.data(), g.size());
      if (vn >= 0) {
        std::vector<S> gv(size_t(d), S(0));
        for (size_t r = 0; r < rows; ++r)
          for (int i = 0; i < d; ++i) gv[size_t(i)] += g[r * d + i];
        tp.accum(vn, gv.data(), gv.size());
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> row_scale(const Tensor<S>& x, const Tensor<S>& vec) {
  int d = vec.dim(0);
  require<ShapeError>(vec.rank() == 1, "row_scale: vec must be rank 1");
  require<ShapeError>(x.rank() >= 1 && x.dim(-1) == d,
                      "row_scale: trailing axis of ", shape_str(x.shape),
                      " != vec length ", d);
  size_t rows = x.numel() / size_t(d);
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  for (size_t r = 0; r < rows; ++r)
    for (int i = 0; i < d; ++i)
      out.data[r * d + i] = x.data[r * d + i] * vec.data[size_t(i)];
  Tape<S>* t = detail::tape_of(x, vec);
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int xn = x.tracked() ? x.node : -1;
    int vn = vec.tracked() ? vec.node : -1;
    int on = out.node;
    std::vector<S> xv = x.data, vv = vec.data;
    t->record([xn, vn, on, rows, d, xv = std::move(xv),
               vv = std::move(vv)](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      if (xn >= 0) {
        std::vector<S> gx(g.size());
        for (size_t r = 0; r < rows; ++r)
          for (int i = 0; i < d; ++i)
            gx[r * d + i] = g[r * d + i] * vv[size_t(i)];
        tp.accum(xn, gx.data(), gx.size());
      }
      if (vn >= 0) {
        std::vector<S> gv(size_t(d), S(0));
        for (size_t r = 0; r < rows; ++r)
          for (int i = 0; i < d; ++i)
            gv[size_t(i)] += g[r * d + i] * xv[r * d + i];
        tp.accum(vn, gv.data(), gv.size());
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

template <class S, class FwdFn, class DerivFn>
Tensor<S> unary_op(const Tensor<S>& a, FwdFn fwd, DerivFn deriv) {
  Tensor<S> out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  for (size_t i = 0; i < a.numel(); ++i) out.data[i] = fwd(a.data[i]);
  if (Tape<S>* t = detail::tape_of(a)) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = a.node, on = out.node;
    std::vector<S> av = a.data, ov = out.data;
    t->record([an, on, av = std::move(av), ov = std::move(ov),
               deriv](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> ga(g.size());
      for (size_t i = 0; i < g.size(); ++i)
        ga[i] = g[i] * deriv(av[i], ov[i]);
      tp.accum(an, ga.data(), ga.size());
    });
  }
  return out;
}

namespace scalar_fn {

template <class S>
S sigmoid(S x) {
  if (x >= S(0)) {
    S e = std::exp(-x);
    return S(1) / (S(1) + e);
  }
  S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
S softplus(S x) {
  if (x > S(20)) return x;
  if (x < S(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <class S>
S gelu(S x) {
  // Exact (erf) form.
  return S(0.5) * x * (S(1) + std::erf(x * S(0.7071067811865475244)));
}

template <class S>
S gelu_deriv(S x) {
  S cdf = S(0.5) * (S(1) + std::erf(x * S(0.7071067811865475244)));
  S pdf = S(0.3989422804014326779) * std::exp(S(-0.5) * x * x);
  return cdf + x * pdf;
}

}  // namespace scalar_fn

template <class S>
Tensor<S> exp_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <class S>
Tensor<S> log_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::log(x); },
                  [](S x, S) { return S(1) / x; });
}

template <class S>
Tensor<S> sqrt_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::sqrt(x); },
                  [](S, S y) { return S(0.5) / y; });
}

template <class S>
Tensor<S> tanh_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::tanh(x); },
                  [](S, S y) { return S(1) - y * y; });
}

template <class S>
Tensor<S> sigmoid_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return scalar_fn::sigmoid(x); },
                  [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Tensor<S> erf_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return std::erf(x); },
                  [](S x, S) {
                    return S(1.1283791670955125739) * std::exp(-x * x);
                  });
}

template <class S>
Tensor<S> softplus_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return scalar_fn::softplus(x); },
                  [](S x, S) { return scalar_fn::sigmoid(x); });
}

template <class S>
Tensor<S> silu_t(const Tensor<S>& a) {
  return unary_op(a,
                  [](S x) { return x * scalar_fn::sigmoid(x); },
                  [](S x, S) {
                    S s = scalar_fn::sigmoid(x);
                    return s * (S(1) + x * (S(1) - s));
                  });
}

template <class S>
Tensor<S> gelu_t(const Tensor<S>& a) {
  return unary_op(a, [](S x) { return scalar_fn::gelu(x); },
                  [](S x, S) { return scalar_fn::gelu_deriv(x); });
}

template <class S>
Tensor<S> leaky_relu_t(const Tensor<S>& a, double slope = 0.01) {
  S sl = S(slope);
  return unary_op(a, [sl](S x) { return x >= S(0) ? x : sl * x; },
                  [sl](S x, S) { return x >= S(0) ? S(1) : sl; });
}

// max(x, c): the subgradient below the floor is 0.
template <class S>
Tensor<S> clamp_min(const Tensor<S>& a, double c) {
  S cc = S(c);
  return unary_op(a, [cc](S x) { return x > cc ? x : cc; },
                  [cc](S x, S) { return x > cc ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// Reductions.

template <class S>
Tensor<S> sum_all(const Tensor<S>& a) {
  Tensor<S> out(std::vector<int>{1});
  S acc = S(0);
  for (S v : a.data) acc += v;
  out.data[0] = acc;
  if (Tape<S>* t = detail::tape_of(a)) {
    out.tape = t;
    out.node = t->add_node(1);
    int an = a.node, on = out.node;
    size_t n = a.numel();
    t->record([an, on, n](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> ga(n, g[0]);
      tp.accum(an, ga.data(), n);
    });
  }
  return out;
}

template <class S>
Tensor<S> mean_all(const Tensor<S>& a) {
  require<ShapeError>(a.numel() > 0, "mean_all of empty tensor");
  return mul_scalar(sum_all(a), 1.0 / double(a.numel()));
}

// ---------------------------------------------------------------------------
// Affine over the trailing axis: x [.., Din] @ w[Dout, Din]^T (+ b[Dout]).

template <class S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* b) {
  require<ShapeError>(w.rank() == 2, "dense: weight must be rank 2, got ",
                      shape_str(w.shape));
  int dout = w.dim(0), din = w.dim(1);
  require<ShapeError>(x.rank() >= 1 && x.dim(-1) == din,
                      "dense: trailing axis of input ", shape_str(x.shape),
                      " != weight in-width ", din);
  if (b) {
    require<ShapeError>(b->rank() == 1 && b->dim(0) == dout,
                        "dense: bias shape ", shape_str(b->shape),
                        " != out-width ", dout);
  }
  size_t rows = x.numel() / size_t(din);
  std::vector<int> osh = x.shape;
  osh.back() = dout;
  Tensor<S> out;
  out.shape = std::move(osh);
  out.data.assign(rows * size_t(dout), S(0));
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.data.data() + r * size_t(din);
    S* yr = out.data.data() + r * size_t(dout);
    for (int o = 0; o < dout; ++o) {
      const S* wr = w.data.data() + size_t(o) * size_t(din);
      S acc = b ? b->data[size_t(o)] : S(0);
      for (int i = 0; i < din; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
  Tape<S>* t = detail::tape_of(x, w);
  if (b && b->tracked()) {
    if (t)
      require<Error>(t == b->tape, "dense: operands belong to different tapes");
    t = b->tape;
  }
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int xn = x.tracked() ? x.node : -1;
    int wn = w.tracked() ? w.node : -1;
    int bn = (b && b->tracked()) ? b->node : -1;
    int on = out.node;
    std::vector<S> xv = x.data, wv = w.data;
    t->record([xn, wn, bn, on, rows, din, dout, xv = std::move(xv),
               wv = std::move(wv)](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      if (xn >= 0) {
        std::vector<S> gx(rows * size_t(din), S(0));
        for (size_t r = 0; r < rows; ++r) {
          const S* gr = g.data() + r * size_t(dout);
          S* gxr = gx.data() + r * size_t(din);
          for (int o = 0; o < dout; ++o) {
            const S* wr = wv.data() + size_t(o) * size_t(din);
            S go = gr[o];
            for (int i = 0; i < din; ++i) gxr[i] += go * wr[i];
          }
        }
        tp.accum(xn, gx.data(), gx.size());
      }
      if (wn >= 0) {
        std::vector<S> gw(size_t(dout) * size_t(din), S(0));
        for (size_t r = 0; r < rows; ++r) {
          const S* gr = g.data() + r * size_t(dout);
          const S* xr = xv.data() + r * size_t(din);
          for (int o = 0; o < dout; ++o) {
            S go = gr[o];
            S* gwr = gw.data() + size_t(o) * size_t(din);
            for (int i = 0; i < din; ++i) gwr[i] += go * xr[i];
          }
        }
        tp.accum(wn, gw.data(), gw.size());
      }
      if (bn >= 0) {
        std::vector<S> gb(size_t(dout), S(0));
        for (size_t r = 0; r < rows; ++r) {
          const S* gr = g.data() + r * size_t(dout);
          for (int o = 0; o < dout; ++o) gb[size_t(o)] += gr[o];
        }
        tp.accum(bn, gb.data(), gb.size());
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  return dense(x, w, &b);
}

template <class S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w) {
  return dense(x, w, static_cast<const Tensor<S>*>(nullptr));
}

// ---------------------------------------------------------------------------
// 2-D matrix product with transpose flags: out = op(a) @ op(b).

namespace detail {

// C[m,n] (+)= op(A) @ op(B); A stored [ar,ac], op(A) is [m,k].
template <class S>
void mm_into(S* c, const S* a, int ar, int ac, bool ta, const S* b, int br,
             int bc, bool tb) {
  int m = ta ? ac : ar;
  int k = ta ? ar : ac;
  int n = tb ? br : bc;
  require<ShapeError>((tb ? bc : br) == k, "matmul: inner extents differ: ", k,
                      " vs ", (tb ? bc : br));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S acc = S(0);
      for (int p = 0; p < k; ++p) {
        S av = ta ? a[size_t(p) * ac + i] : a[size_t(i) * ac + p];
        S bv = tb ? b[size_t(j) * bc + p] : b[size_t(p) * bc + j];
        acc += av * bv;
      }
      c[size_t(i) * n + j] += acc;
    }
}

}  // namespace detail

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b, bool ta = false,
                 bool tb = false) {
  require<ShapeError>(a.rank() == 2 && b.rank() == 2,
                      "matmul: rank-2 tensors required, got ",
                      shape_str(a.shape), " and ", shape_str(b.shape));
  int m = ta ? a.dim(1) : a.dim(0);
  int k = ta ? a.dim(0) : a.dim(1);
  int kb = tb ? b.dim(1) : b.dim(0);
  int n = tb ? b.dim(0) : b.dim(1);
  require<ShapeError>(k == kb, "matmul: inner extents differ: ", k, " vs ", kb);
  Tensor<S> out(std::vector<int>{m, n});
  detail::mm_into(out.data.data(), a.data.data(), a.dim(0), a.dim(1), ta,
                  b.data.data(), b.dim(0), b.dim(1), tb);
  Tape<S>* t = detail::tape_of(a, b);
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = a.tracked() ? a.node : -1;
    int bn = b.tracked() ? b.node : -1;
    int on = out.node;
    std::vector<S> av = a.data, bv = b.data;
    int ar = a.dim(0), ac = a.dim(1), br = b.dim(0), bc = b.dim(1);
    t->record([an, bn, on, av = std::move(av), bv = std::move(bv), ar, ac, br,
               bc, ta, tb, m, n](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      if (an >= 0) {
        std::vector<S> ga(size_t(ar) * size_t(ac), S(0));
        if (!ta)  // gA = G @ op(B)^T
          detail::mm_into(ga.data(), g.data(), m, n, false, bv.data(), br, bc,
                          !tb);
        else  // A stored transposed: gA = op(B) @ G^T
          detail::mm_into(ga.data(), bv.data(), br, bc, tb, g.data(), m, n,
                          true);
        tp.accum(an, ga.data(), ga.size());
      }
      if (bn >= 0) {
        std::vector<S> gb(size_t(br) * size_t(bc), S(0));
        if (!tb)  // gB = op(A)^T @ G
          detail::mm_into(gb.data(), av.data(), ar, ac, !ta, g.data(), m, n,
                          false);
        else  // B stored transposed: gB = G^T @ op(A)
          detail::mm_into(gb.data(), g.data(), m, n, true, av.data(), ar, ac,
                          ta);
        tp.accum(bn, gb.data(), gb.size());
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D convolution.  x: [Cin,H,W] or [B,Cin,H,W]; w: [Cout,Cin/groups,kh,kw];
// optional bias [Cout].  Zero padding, floor output size:
//   H' = (H + 2*pad - kh) / stride + 1.

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* b,
                 int stride, int pad, int groups = 1) {
  require<ShapeError>(w.rank() == 4, "conv2d: weight must be rank 4, got ",
                      shape_str(w.shape));
  require<ShapeError>(x.rank() == 3 || x.rank() == 4,
                      "conv2d: input must be rank 3 or 4, got ",
                      shape_str(x.shape));
  require<Error>(stride >= 1, "conv2d: stride must be >= 1, got ", stride);
  require<Error>(pad >= 0, "conv2d: pad must be >= 0, got ", pad);
  bool batched = x.rank() == 4;
  int nb = batched ? x.dim(0) : 1;
  int cin = x.dim(batched ? 1 : 0);
  int h = x.dim(batched ? 2 : 1);
  int wd = x.dim(batched ? 3 : 2);
  int cout = w.dim(0), wcin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require<ShapeError>(groups >= 1 && cin % groups == 0 && cout % groups == 0,
                      "conv2d: groups=", groups,
                      " must divide input channels (axis ", batched ? 1 : 0,
                      " = ", cin, ") and output channels (weight axis 0 = ",
                      cout, ")");
  require<ShapeError>(wcin == cin / groups, "conv2d: weight axis 1 (= ", wcin,
                      ") != input channel axis (= ", cin, ") / groups (= ",
                      groups, ")");
  if (b)
    require<ShapeError>(b->rank() == 1 && b->dim(0) == cout,
                        "conv2d: bias shape ", shape_str(b->shape),
                        " != out channels ", cout);
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  require<ShapeError>(ho >= 1 && wo >= 1, "conv2d: kernel ", kh, "x", kw,
                      " with pad ", pad, " does not fit input ", h, "x", wd);
  std::vector<int> osh =
      batched ? std::vector<int>{nb, cout, ho, wo} : std::vector<int>{cout, ho, wo};
  Tensor<S> out;
  out.shape = std::move(osh);
  out.data.assign(size_t(nb) * cout * ho * wo, S(0));

  int gin = cin / groups, gout = cout / groups;
  auto run_forward = [&](const std::vector<S>& xv, std::vector<S>& ov) {
    for (int bi = 0; bi < nb; ++bi)
      for (int co = 0; co < cout; ++co) {
        int grp = co / gout;
        S* oplane = ov.data() + (size_t(bi) * cout + co) * size_t(ho) * wo;
        if (b) {
          S bv = b->data[size_t(co)];
          for (int i = 0; i < ho * wo; ++i) oplane[i] = bv;
        }
        for (int ciw = 0; ciw < gin; ++ciw) {
          int ci = grp * gin + ciw;
          const S* iplane =
              xv.data() + (size_t(bi) * cin + ci) * size_t(h) * wd;
          const S* wbase =
              w.data.data() + ((size_t(co) * gin + ciw) * kh) * size_t(kw);
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              S wv = wbase[size_t(ky) * kw + kx];
              if (wv == S(0)) continue;
              int oy_lo = 0;
              if (ky < pad) oy_lo = (pad - ky + stride - 1) / stride;
              int ty = h - 1 + pad - ky;
              if (ty < 0) continue;
              int oy_hi = std::min(ho - 1, ty / stride);
              int ox_lo = 0;
              if (kx < pad) ox_lo = (pad - kx + stride - 1) / stride;
              int tx = wd - 1 + pad - kx;
              if (tx < 0) continue;
              int ox_hi = std::min(wo - 1, tx / stride);
              for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                int iy = oy * stride + ky - pad;
                const S* irow = iplane + size_t(iy) * wd + (kx - pad);
                S* orow = oplane + size_t(oy) * wo;
                if (stride == 1) {
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    orow[ox] += wv * irow[ox];
                } else {
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    orow[ox] += wv * irow[size_t(ox) * stride];
                }
              }
            }
        }
      }
  };
  run_forward(x.data, out.data);

  Tape<S>* t = detail::tape_of(x, w);
  if (b && b->tracked()) {
    if (t)
      require<Error>(t == b->tape, "conv2d: operands belong to different tapes");
    t = b->tape;
  }
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int xn = x.tracked() ? x.node : -1;
    int wn = w.tracked() ? w.node : -1;
    int bn = (b && b->tracked()) ? b->node : -1;
    int on = out.node;
    std::vector<S> xv = x.data, wv = w.data;
    t->record([=, xv = std::move(xv), wv = std::move(wv)](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> gx, gw, gb;
      if (xn >= 0) gx.assign(size_t(nb) * cin * h * wd, S(0));
      if (wn >= 0) gw.assign(size_t(cout) * gin * kh * kw, S(0));
      if (bn >= 0) gb.assign(size_t(cout), S(0));
      for (int bi = 0; bi < nb; ++bi)
        for (int co = 0; co < cout; ++co) {
          int grp = co / gout;
          const S* gplane = g.data() + (size_t(bi) * cout + co) * size_t(ho) * wo;
          if (bn >= 0) {
            S acc = S(0);
            for (int i = 0; i < ho * wo; ++i) acc += gplane[i];
            gb[size_t(co)] += acc;
          }
          for (int ciw = 0; ciw < gin; ++ciw) {
            int ci = grp * gin + ciw;
            const S* iplane =
                xv.data() + (size_t(bi) * cin + ci) * size_t(h) * wd;
            S* gxplane =
                xn >= 0 ? gx.data() + (size_t(bi) * cin + ci) * size_t(h) * wd
                        : nullptr;
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                size_t widx = ((size_t(co) * gin + ciw) * kh + ky) * kw + kx;
                S wval = wv[widx];
                S gwacc = S(0);
                int oy_lo = 0;
                if (ky < pad) oy_lo = (pad - ky + stride - 1) / stride;
                int ty = h - 1 + pad - ky;
                if (ty < 0) continue;
                int oy_hi = std::min(ho - 1, ty / stride);
                int ox_lo = 0;
                if (kx < pad) ox_lo = (pad - kx + stride - 1) / stride;
                int tx = wd - 1 + pad - kx;
                if (tx < 0) continue;
                int ox_hi = std::min(wo - 1, tx / stride);
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  int iy = oy * stride + ky - pad;
                  const S* grow = gplane + size_t(oy) * wo;
                  const S* irow = iplane + size_t(iy) * wd + (kx - pad);
                  S* gxrow =
                      gxplane ? gxplane + size_t(iy) * wd + (kx - pad) : nullptr;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                    S go = grow[ox];
                    size_t off = size_t(ox) * stride;
                    if (wn >= 0) gwacc += go * irow[off];
                    if (gxrow) gxrow[off] += go * wval;
                  }
                }
                if (wn >= 0) gw[widx] += gwacc;
              }
          }
        }
      if (xn >= 0) tp.accum(xn, gx.data(), gx.size());
      if (wn >= 0) tp.accum(wn, gw.data(), gw.size());
      if (bn >= 0) tp.accum(bn, gb.data(), gb.size());
    });
  }
  return out;
}

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride, int pad, int groups = 1) {
  return conv2d(x, w, &b, stride, pad, groups);
}

// ---------------------------------------------------------------------------
// Layer normalization over the trailing axis.

template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain,
                     const Tensor<S>& shift, double eps = 1e-6) {
  int d = gain.dim(0);
  require<ShapeError>(gain.rank() == 1 && shift.rank() == 1 && shift.dim(0) == d,
                      "layer_norm: gain ", shape_str(gain.shape), " and shift ",
                      shape_str(shift.shape), " must both be [D]");
  require<ShapeError>(x.rank() >= 1 && x.dim(-1) == d,
                      "layer_norm: trailing axis of ", shape_str(x.shape),
                      " != ", d);
  size_t rows = x.numel() / size_t(d);
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  std::vector<S> xhat(x.numel()), rstd(rows);
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.data.data() + r * size_t(d);
    S mean = S(0);
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= S(d);
    S var = S(0);
    for (int i = 0; i < d; ++i) {
      S c = xr[i] - mean;
      var += c * c;
    }
    var /= S(d);
    S rs = S(1) / std::sqrt(var + S(eps));
    rstd[r] = rs;
    S* hr = xhat.data() + r * size_t(d);
    S* yr = out.data.data() + r * size_t(d);
    for (int i = 0; i < d; ++i) {
      hr[i] = (xr[i] - mean) * rs;
      yr[i] = hr[i] * gain.data[size_t(i)] + shift.data[size_t(i)];
    }
  }
  Tape<S>* t = detail::tape_of(x, gain);
  if (shift.tracked()) {
    if (t)
      require<Error>(t == shift.tape,
                     "layer_norm: operands belong to different tapes");
    t = shift.tape;
  }
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int xn = x.tracked() ? x.node : -1;
    int gn = gain.tracked() ? gain.node : -1;
    int sn = shift.tracked() ? shift.node : -1;
    int on = out.node;
    std::vector<S> gv = gain.data;
    t->record([xn, gn, sn, on, rows, d, xhat = std::move(xhat),
               rstd = std::move(rstd), gv = std::move(gv)](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> gx, gg, gs;
      if (xn >= 0) gx.resize(g.size());
      if (gn >= 0) gg.assign(size_t(d), S(0));
      if (sn >= 0) gs.assign(size_t(d), S(0));
      for (size_t r = 0; r < rows; ++r) {
        const S* gr = g.data() + r * size_t(d);
        const S* hr = xhat.data() + r * size_t(d);
        if (gn >= 0)
          for (int i = 0; i < d; ++i) gg[size_t(i)] += gr[i] * hr[i];
        if (sn >= 0)
          for (int i = 0; i < d; ++i) gs[size_t(i)] += gr[i];
        if (xn >= 0) {
          S m1 = S(0), m2 = S(0);
          for (int i = 0; i < d; ++i) {
            S dh = gr[i] * gv[size_t(i)];
            m1 += dh;
            m2 += dh * hr[i];
          }
          m1 /= S(d);
          m2 /= S(d);
          S* gxr = gx.data() + r * size_t(d);
          for (int i = 0; i < d; ++i) {
            S dh = gr[i] * gv[size_t(i)];
            gxr[i] = (dh - m1 - hr[i] * m2) * rstd[r];
          }
        }
      }
      if (xn >= 0) tp.accum(xn, gx.data(), gx.size());
      if (gn >= 0) tp.accum(gn, gg.data(), gg.size());
      if (sn >= 0) tp.accum(sn, gs.data(), gs.size());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row softmax over the trailing axis.

template <class S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  require<ShapeError>(x.rank() >= 1, "softmax_rows: rank >= 1 required");
  int d = x.dim(-1);
  size_t rows = x.numel() / size_t(d);
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.data.data() + r * size_t(d);
    S* yr = out.data.data() + r * size_t(d);
    S mx = xr[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
    S z = S(0);
    for (int i = 0; i < d; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      z += yr[i];
    }
    for (int i = 0; i < d; ++i) yr[i] /= z;
  }
  if (Tape<S>* t = detail::tape_of(x)) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int xn = x.node, on = out.node;
    std::vector<S> yv = out.data;
    t->record([xn, on, rows, d, yv = std::move(yv)](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> gx(g.size());
      for (size_t r = 0; r < rows; ++r) {
        const S* gr = g.data() + r * size_t(d);
        const S* yr = yv.data() + r * size_t(d);
        S dot = S(0);
        for (int i = 0; i < d; ++i) dot += gr[i] * yr[i];
        S* gxr = gx.data() + r * size_t(d);
        for (int i = 0; i < d; ++i) gxr[i] = yr[i] * (gr[i] - dot);
      }
      tp.accum(xn, gx.data(), gx.size());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gather remap: out[i] = x[idx[i]].  The one data-movement primitive; its
// backward scatter-adds, which makes duplicated sources (reflect padding)
// come out right automatically.

template <class S>
Tensor<S> remap(const Tensor<S>& x, std::vector<int> out_shape,
                const IndexMap& idx) {
  size_t n = shape_numel(out_shape);
  require<ShapeError>(idx && idx->size() == n, "remap: index map has ",
                      idx ? idx->size() : 0, " entries, output wants ", n);
  size_t xn = x.numel();
  Tensor<S> out;
  out.shape = std::move(out_shape);
  out.data.resize(n);
  const auto& map = *idx;
  for (size_t i = 0; i < n; ++i) {
    int64_t j = map[i];
    require<ShapeError>(j >= 0 && size_t(j) < xn, "remap: index ", j,
                        " out of range [0,", xn, ")");
    out.data[i] = x.data[size_t(j)];
  }
  if (Tape<S>* t = detail::tape_of(x)) {
    out.tape = t;
    out.node = t->add_node(n);
    int an = x.node, on = out.node;
    t->record([an, on, xn, idx](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> gx(xn, S(0));
      const auto& map = *idx;
      for (size_t i = 0; i < g.size(); ++i) gx[size_t(map[i])] += g[i];
      tp.accum(an, gx.data(), gx.size());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Concatenate along axis 0.

template <class S>
Tensor<S> concat0(const std::vector<const Tensor<S>*>& parts) {
  require<ShapeError>(!parts.empty(), "concat0: no inputs");
  std::vector<int> tail(parts[0]->shape.begin() + 1, parts[0]->shape.end());
  int total0 = 0;
  Tape<S>* t = nullptr;
  for (const Tensor<S>* p : parts) {
    require<ShapeError>(p->rank() == parts[0]->rank(),
                        "concat0: rank mismatch ", shape_str(p->shape), " vs ",
                        shape_str(parts[0]->shape));
    std::vector<int> ptail(p->shape.begin() + 1, p->shape.end());
    require<ShapeError>(ptail == tail, "concat0: trailing shape mismatch ",
                        shape_str(p->shape), " vs ", shape_str(parts[0]->shape));
    total0 += p->dim(0);
    if (p->tracked()) {
      if (t)
        require<Error>(t == p->tape, "concat0: inputs from different tapes");
      t = p->tape;
    }
  }
  std::vector<int> osh = parts[0]->shape;
  osh[0] = total0;
  Tensor<S> out;
  out.shape = std::move(osh);
  out.data.resize(shape_numel(out.shape));
  size_t off = 0;
  std::vector<std::pair<size_t, size_t>> spans;  // (offset, count) per part
  for (const Tensor<S>* p : parts) {
    std::copy(p->data.begin(), p->data.end(), out.data.begin() + off);
    spans.emplace_back(off, p->numel());
    off += p->numel();
  }
  if (t) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int on = out.node;
    std::vector<int> nodes;
    for (const Tensor<S>* p : parts) nodes.push_back(p->tracked() ? p->node : -1);
    t->record([on, nodes, spans](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      for (size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k] < 0) continue;
        tp.accum(nodes[k], g.data() + spans[k].first, spans[k].second);
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat0(const Tensor<S>& a, const Tensor<S>& b) {
  return concat0<S>({&a, &b});
}

// ---------------------------------------------------------------------------
// Rounding.

// Round half away from zero: the scalar rule shared by every quantizer here.
template <class S>
S round_away(S v) {
  return S(std::round(double(v)));
}

// Hard rounding: plain values, gradient does not flow.
template <class S>
Tensor<S> round_hard(const Tensor<S>& x) {
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  for (size_t i = 0; i < x.numel(); ++i) out.data[i] = round_away(x.data[i]);
  return out;
}

// Straight-through rounding: forward rounds, backward is the identity.
// Tagged on the tape so finite-difference harnesses can refuse the graph.
template <class S>
Tensor<S> ste_round(const Tensor<S>& x) {
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  for (size_t i = 0; i < x.numel(); ++i) out.data[i] = round_away(x.data[i]);
  if (Tape<S>* t = detail::tape_of(x)) {
    t->note_ste();
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = x.node, on = out.node;
    t->record([an, on](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (!g.empty()) tp.accum(an, g.data(), g.size());
    });
  }
  return out;
}

// Uniform noise tensor in [-0.5, 0.5), untracked.
template <class S>
Tensor<S> uniform_noise(const std::vector<int>& shape, Rng& rng) {
  Tensor<S> t(shape);
  for (auto& v : t.data) v = S(rng.uniform() - 0.5);
  return t;
}

}  // namespace hcfs
