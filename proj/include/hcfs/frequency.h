#pragma once

// Frequency-domain modulation: windows of a feature map are transformed with
// an orthonormal type-II DCT, rescaled coefficient-wise by a learned
// modulation field, and transformed back.

#include <cmath>
#include <vector>

#include "hcfs/nn.h"
#include "hcfs/ops.h"
#include "hcfs/tensor.h"

namespace hcfs {

// ---------------------------------------------------------------------------
// Orthonormal DCT-II basis, computed in double and cast once.
// basis[k*w + j] = s_k cos(pi (2j+1) k / (2w)),  s_0 = sqrt(1/w),
// s_k = sqrt(2/w): rows are orthonormal, so the inverse is the transpose and
// Parseval holds exactly.

template <class S>
std::vector<S> dct_basis(int w) {
  require<ShapeError>(w >= 1, "dct basis needs w >= 1, got ", w);
  std::vector<S> m(size_t(w) * w);
  const double pi = 3.14159265358979323846264338327950288;
  for (int k = 0; k < w; ++k) {
    double s = std::sqrt((k == 0 ? 1.0 : 2.0) / double(w));
    for (int j = 0; j < w; ++j)
      m[size_t(k) * w + j] = S(s * std::cos(pi * (2 * j + 1) * k / (2.0 * w)));
  }
  return m;
}

namespace detail {

// One w x w block: forward Y = M X M^T, inverse Y = M^T X M.
template <class S>
void dct_block(S* out, const S* in, const S* m, int w, bool inverse) {
  std::vector<S> tmp(size_t(w) * w);
  // tmp = op(M) @ X,  op(M) = M^T when inverse.
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) {
      S acc = S(0);
      for (int k = 0; k < w; ++k) {
        S mv = inverse ? m[size_t(k) * w + i] : m[size_t(i) * w + k];
        acc += mv * in[size_t(k) * w + j];
      }
      tmp[size_t(i) * w + j] = acc;
    }
  // out = tmp @ M^T (forward) or tmp @ M (inverse).
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) {
      S acc = S(0);
      for (int k = 0; k < w; ++k) {
        S mv = inverse ? m[size_t(k) * w + j] : m[size_t(j) * w + k];
        acc += tmp[size_t(i) * w + k] * mv;
      }
      out[size_t(i) * w + j] = acc;
    }
}

}  // namespace detail

// Batched 2-D DCT over the trailing two axes ([.., w, w]).  `inverse` applies
// the transpose transform; because the basis is orthonormal the backward pass
// is exactly the opposite-direction transform of the gradient.
template <class S>
Tensor<S> block_dct(const Tensor<S>& x, bool inverse) {
  require<ShapeError>(x.rank() >= 2 && x.dim(-1) == x.dim(-2),
                      "block_dct wants square trailing axes, got ",
                      shape_str(x.shape));
  int w = x.dim(-1);
  size_t blocks = x.numel() / (size_t(w) * w);
  std::vector<S> basis = dct_basis<S>(w);
  Tensor<S> out;
  out.shape = x.shape;
  out.data.resize(x.numel());
  for (size_t b = 0; b < blocks; ++b)
    detail::dct_block(out.data.data() + b * size_t(w) * w,
                      x.data.data() + b * size_t(w) * w, basis.data(), w,
                      inverse);
  if (Tape<S>* t = detail::tape_of(x)) {
    out.tape = t;
    out.node = t->add_node(out.numel());
    int an = x.node, on = out.node;
    t->record([an, on, w, blocks, inverse, basis = std::move(basis)](Tape<S>& tp) {
      const auto& g = tp.grad(on);
      if (g.empty()) return;
      std::vector<S> gx(g.size());
      for (size_t b = 0; b < blocks; ++b)
        detail::dct_block(gx.data() + b * size_t(w) * w,
                          g.data() + b * size_t(w) * w, basis.data(), w,
                          !inverse);
      tp.accum(an, gx.data(), gx.size());
    });
  }
  return out;
}

template <class S>
Tensor<S> dct2(const Tensor<S>& x) {
  return block_dct(x, /*inverse=*/false);
}

template <class S>
Tensor<S> idct2(const Tensor<S>& x) {
  return block_dct(x, /*inverse=*/true);
}

// ---------------------------------------------------------------------------
// Windowing with symmetric reflection padding on the bottom/right.

// Index into [0, e) for any i >= 0: 0,1,..,e-1,e-1,..,0,0,1,.. (period 2e),
// which stays valid for pads larger than the extent (folds repeatedly).
inline int reflect_index(int i, int e) {
  if (e == 1) return 0;
  int p = i % (2 * e);
  return p < e ? p : 2 * e - 1 - p;
}

struct WindowGrid {
  int c = 0, h = 0, w = 0;   // unpadded map
  int win = 0;               // window side
  int hp = 0, wp = 0;        // padded extents (multiples of win)
  int nwy = 0, nwx = 0;      // window counts
  int blocks() const { return nwy * nwx; }
};

inline WindowGrid make_window_grid(int c, int h, int w, int win) {
  require<ShapeError>(win >= 1, "window size must be >= 1, got ", win);
  require<ShapeError>(h >= 1 && w >= 1, "window grid needs h,w >= 1, got ", h,
                      "x", w);
  WindowGrid g;
  g.c = c;
  g.h = h;
  g.w = w;
  g.win = win;
  g.hp = (h + win - 1) / win * win;
  g.wp = (w + win - 1) / win * win;
  g.nwy = g.hp / win;
  g.nwx = g.wp / win;
  return g;
}

// [C,H,W] -> [B,C,win,win] with reflect padding into partial windows.
inline IndexMap window_partition_map(const WindowGrid& g) {
  std::vector<int64_t> idx(size_t(g.blocks()) * g.c * g.win * g.win);
  size_t k = 0;
  for (int by = 0; by < g.nwy; ++by)
    for (int bx = 0; bx < g.nwx; ++bx)
      for (int ch = 0; ch < g.c; ++ch)
        for (int wy = 0; wy < g.win; ++wy)
          for (int wx = 0; wx < g.win; ++wx) {
            int ry = reflect_index(by * g.win + wy, g.h);
            int rx = reflect_index(bx * g.win + wx, g.w);
            idx[k++] = (int64_t(ch) * g.h + ry) * g.w + rx;
          }
  return make_index_map(std::move(idx));
}

// [B,C,win,win] -> [C,H,W]: every original pixel comes from its own window
// slot, padding slots are dropped.  Exact inverse of the partition.
inline IndexMap window_merge_map(const WindowGrid& g) {
  std::vector<int64_t> idx(size_t(g.c) * g.h * g.w);
  size_t k = 0;
  for (int ch = 0; ch < g.c; ++ch)
    for (int y = 0; y < g.h; ++y)
      for (int x = 0; x < g.w; ++x) {
        int by = y / g.win, wy = y % g.win;
        int bx = x / g.win, wx = x % g.win;
        int64_t b = int64_t(by) * g.nwx + bx;
        idx[k++] = ((b * g.c + ch) * g.win + wy) * g.win + wx;
      }
  return make_index_map(std::move(idx));
}

template <class S>
Tensor<S> window_partition(const Tensor<S>& x, const WindowGrid& g) {
  require<ShapeError>(x.rank() == 3 && x.dim(0) == g.c && x.dim(1) == g.h &&
                          x.dim(2) == g.w,
                      "window_partition: map ", shape_str(x.shape),
                      " does not match grid");
  return remap(x, {g.blocks(), g.c, g.win, g.win}, window_partition_map(g));
}

template <class S>
Tensor<S> window_merge(const Tensor<S>& x, const WindowGrid& g) {
  require<ShapeError>(x.rank() == 4 && x.dim(0) == g.blocks() &&
                          x.dim(1) == g.c && x.dim(2) == g.win &&
                          x.dim(3) == g.win,
                      "window_merge: windows ", shape_str(x.shape),
                      " do not match grid");
  return remap(x, {g.c, g.h, g.w}, window_merge_map(g));
}

// ---------------------------------------------------------------------------
// Adaptive frequency modulation block.
//
// Activation path: LN -> Linear(x2) -> GELU -> Linear -> LN (per token).
// Frequency path: window DCT -> depthwise 3x3 over the coefficient grid
// produces a modulation field W -> W * F -> inverse DCT -> merge windows.
// The modulation conv is zero-initialized, so a fresh block is the zero map
// with respect to its residual use.

template <class S>
struct Afmm {
  int c = 0, win = 0;
  ChannelLayerNorm<S> norm_in, norm_out;
  DenseLayer<S> fc1, fc2;
  Conv2dLayer<S> mod_conv;

  Afmm() = default;
  Afmm(int c_, int win_, Rng& rng)
      : c(c_),
        win(win_),
        norm_in(c_),
        norm_out(c_),
        fc1(c_, 2 * c_, rng, Init::kTruncNormal),
        fc2(2 * c_, c_, rng, Init::kTruncNormal),
        mod_conv(c_, c_, 3, 1, 1, rng, Init::kZero, /*groups=*/c_) {}

  // Pointwise activation path, exposed so the unit-modulation identity can
  // be checked against forward().
  Tensor<S> activation(Ctx<S>& ctx, const Tensor<S>& x) {
    int h = x.dim(1), w = x.dim(2);
    Tensor<S> tok = remap(x, {h * w, c}, transpose_chw_to_hwc(c, h, w));
    tok = norm_in.forward_tokens(ctx, tok);
    tok = gelu_t(fc1.forward(ctx, tok));
    tok = fc2.forward(ctx, tok);
    tok = norm_out.forward_tokens(ctx, tok);
    return remap(tok, {c, h, w}, transpose_hwc_to_chw(c, h, w));
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(0) == c, "afmm wants [C,H,W]",
                        " with C=", c, ", got ", shape_str(x.shape));
    Tensor<S> act = activation(ctx, x);
    WindowGrid g = make_window_grid(c, x.dim(1), x.dim(2), win);
    Tensor<S> wins = window_partition(act, g);
    Tensor<S> freq = dct2(wins);
    Tensor<S> modf = mod_conv.forward(ctx, freq);
    Tensor<S> spatial = idct2(mul(modf, freq));
    return window_merge(spatial, g);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    norm_in.collect(prefix + ".norm_in", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
    norm_out.collect(prefix + ".norm_out", out);
    mod_conv.collect(prefix + ".mod_conv", out);
  }
};

}  // namespace hcfs
