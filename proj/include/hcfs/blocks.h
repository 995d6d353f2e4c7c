#pragma once

// Composite blocks of the codec: local residual convolutions, the hybrid
// block that splits channels between a convolutional branch and a scan +
// frequency branch, strided/sub-pixel resampling blocks, windowed attention,
// and the attention + frequency block used in the entropy model.

#include <vector>

#include "hcfs/frequency.h"
#include "hcfs/nn.h"
#include "hcfs/ops.h"
#include "hcfs/ssm.h"

namespace hcfs {

// Channel slice [c0, c1) of a [C,H,W] map.
inline IndexMap channel_slice_map(int /*c*/, int h, int w, int c0, int c1) {
  std::vector<int64_t> idx(size_t(c1 - c0) * h * w);
  size_t k = 0;
  for (int ch = c0; ch < c1; ++ch)
    for (int i = 0; i < h * w; ++i) idx[k++] = int64_t(ch) * h * w + i;
  return make_index_map(std::move(idx));
}

template <class S>
Tensor<S> slice_channels(const Tensor<S>& x, int c0, int c1) {
  require<ShapeError>(x.rank() == 3, "slice_channels wants [C,H,W], got ",
                      shape_str(x.shape));
  require<ShapeError>(0 <= c0 && c0 < c1 && c1 <= x.dim(0),
                      "slice_channels: [", c0, ",", c1, ") out of range for ",
                      x.dim(0), " channels");
  int h = x.dim(1), w = x.dim(2);
  return remap(x, {c1 - c0, h, w}, channel_slice_map(x.dim(0), h, w, c0, c1));
}

// ---------------------------------------------------------------------------
// Two 3x3 convs with a LeakyReLU between, residual.  Second conv is
// zero-initialized so a fresh block is the identity; receptive field 5x5.

template <class S>
struct ResLocal {
  Conv2dLayer<S> conv1, conv2;

  ResLocal() = default;
  ResLocal(int c, Rng& rng)
      : conv1(c, c, 3, 1, 1, rng, Init::kFanIn),
        conv2(c, c, 3, 1, 1, rng, Init::kZero) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> t = leaky_relu_t(conv1.forward(ctx, x));
    return add(x, conv2.forward(ctx, t));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
  }
};

// ---------------------------------------------------------------------------
// Scan stage + frequency stage, each residual:
//   y = x + scan_block(LN(x));  out = y + afmm(y).

template <class S>
struct Vfss {
  ChannelLayerNorm<S> norm;
  VonssBlock<S> scan;
  Afmm<S> afmm;

  Vfss() = default;
  Vfss(int c, int state_dim, int afmm_win, Rng& rng)
      : norm(c), scan(c, state_dim, rng), afmm(c, afmm_win, rng) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> y = add(x, scan.forward(ctx, norm.forward(ctx, x)));
    return add(y, afmm.forward(ctx, y));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    norm.collect(prefix + ".norm", out);
    scan.collect(prefix + ".scan", out);
    afmm.collect(prefix + ".afmm", out);
  }
};

// ---------------------------------------------------------------------------
// Hybrid block: 1x1 conv, split channels in half, local residual convs on one
// half, scan+frequency stages on the other, concat, 1x1 fuse conv
// (zero-initialized), outer residual.

template <class S>
struct Hcfss {
  int c = 0;
  Conv2dLayer<S> split_conv;
  ResLocal<S> local;
  Vfss<S> vfss;
  Conv2dLayer<S> fuse_conv;

  Hcfss() = default;
  Hcfss(int c_, int state_dim, int afmm_win, Rng& rng)
      : c(c_),
        split_conv(c_, c_, 1, 1, 0, rng, Init::kFanIn),
        local(c_ / 2, rng),
        vfss(c_ / 2, state_dim, afmm_win, rng),
        fuse_conv(c_, c_, 1, 1, 0, rng, Init::kZero) {
    require<ShapeError>(c_ % 2 == 0, "hybrid block width must be even, got ",
                        c_);
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(0) == c,
                        "hybrid block wants [C,H,W] with C=", c, ", got ",
                        shape_str(x.shape));
    Tensor<S> t = split_conv.forward(ctx, x);
    Tensor<S> a = slice_channels(t, 0, c / 2);
    Tensor<S> b = slice_channels(t, c / 2, c);
    Tensor<S> la = local.forward(ctx, a);
    Tensor<S> vb = vfss.forward(ctx, b);
    Tensor<S> cat = concat0(la, vb);
    return add(x, fuse_conv.forward(ctx, cat));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    split_conv.collect(prefix + ".split_conv", out);
    local.collect(prefix + ".local", out);
    vfss.collect(prefix + ".vfss", out);
    fuse_conv.collect(prefix + ".fuse_conv", out);
  }
};

// ---------------------------------------------------------------------------
// Resampling residual blocks.

// 2x down: 3x3 stride-2 conv main path, 1x1 stride-2 shortcut.
template <class S>
struct RbsDown {
  Conv2dLayer<S> conv1, conv2, skip;

  RbsDown() = default;
  RbsDown(int cin, int cout, Rng& rng)
      : conv1(cin, cout, 3, 2, 1, rng, Init::kFanIn),
        conv2(cout, cout, 3, 1, 1, rng, Init::kFanIn),
        skip(cin, cout, 1, 2, 0, rng, Init::kFanIn) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
                        "downsampling block needs even spatial axes, got ",
                        shape_str(x.shape));
    Tensor<S> t = conv2.forward(ctx, leaky_relu_t(conv1.forward(ctx, x)));
    return add(t, skip.forward(ctx, x));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
    skip.collect(prefix + ".skip", out);
  }
};

// 2x up: sub-pixel 3x3 main path, sub-pixel 1x1 shortcut.
template <class S>
struct RbuUp {
  SubpelConv<S> up;
  Conv2dLayer<S> conv2;
  SubpelConv<S> skip;

  RbuUp() = default;
  RbuUp(int cin, int cout, Rng& rng)
      : up(cin, cout, 3, 2, rng),
        conv2(cout, cout, 3, 1, 1, rng, Init::kFanIn),
        skip(cin, cout, 1, 2, rng) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> t = conv2.forward(ctx, leaky_relu_t(up.forward(ctx, x)));
    return add(t, skip.forward(ctx, x));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    up.collect(prefix + ".up", out);
    conv2.collect(prefix + ".conv2", out);
    skip.collect(prefix + ".skip", out);
  }
};

// ---------------------------------------------------------------------------
// Non-shifted window attention with learned relative position bias, pre-LN,
// followed by a pre-LN MLP; both sublayers residual.  Output projections are
// zero-initialized, so a fresh block is the identity map.

template <class S>
struct WindowAttention {
  int c = 0, win = 0, heads = 0;
  ChannelLayerNorm<S> norm1, norm2;
  DenseLayer<S> qkv, proj, fc1, fc2;
  Parameter<S> rel_bias;  // [(2w-1)^2, heads]

  WindowAttention() = default;
  WindowAttention(int c_, int win_, int heads_, Rng& rng)
      : c(c_),
        win(win_),
        heads(heads_),
        norm1(c_),
        norm2(c_),
        qkv(c_, 3 * c_, rng, Init::kTruncNormal),
        proj(c_, c_, rng, Init::kZero),
        fc1(c_, 2 * c_, rng, Init::kTruncNormal),
        fc2(2 * c_, c_, rng, Init::kZero) {
    require<ShapeError>(c_ % heads_ == 0, "attention width ", c_,
                        " not divisible by ", heads_, " heads");
    int span = 2 * win_ - 1;
    rel_bias.value = Tensor<S>({span * span, heads_});
    init_tensor(rel_bias.value, Init::kTruncNormal, span * span, rng);
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(0) == c,
                        "window attention wants [C,H,W] with C=", c, ", got ",
                        shape_str(x.shape));
    int h = x.dim(1), w = x.dim(2);
    WindowGrid g = make_window_grid(c, h, w, win);
    int nb = g.blocks(), t = win * win, dh = c / heads;

    // Tokens, window-major then row-major inside the window (reflect pad).
    std::vector<int64_t> gather(size_t(nb) * t * c);
    {
      size_t k = 0;
      for (int by = 0; by < g.nwy; ++by)
        for (int bx = 0; bx < g.nwx; ++bx)
          for (int ty = 0; ty < win; ++ty)
            for (int tx = 0; tx < win; ++tx) {
              int ry = reflect_index(by * win + ty, h);
              int rx = reflect_index(bx * win + tx, w);
              for (int ch = 0; ch < c; ++ch)
                gather[k++] = (int64_t(ch) * h + ry) * w + rx;
            }
    }
    Tensor<S> tokens = remap(x, {nb * t, c}, make_index_map(std::move(gather)));

    Tensor<S> qkv_out = qkv.forward(ctx, norm1.forward_tokens(ctx, tokens));

    // Per-head relative position bias matrices, shared across windows.
    Tensor<S> bias_tab = ctx.use(rel_bias);
    int span = 2 * win - 1;
    std::vector<Tensor<S>> bias(static_cast<size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      std::vector<int64_t> bmap(size_t(t) * t);
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) {
          int dy = (i / win) - (j / win) + win - 1;
          int dx = (i % win) - (j % win) + win - 1;
          bmap[size_t(i) * t + j] = int64_t(dy * span + dx) * heads + hd;
        }
      bias[size_t(hd)] =
          remap(bias_tab, {t, t}, make_index_map(std::move(bmap)));
    }

    double scale = 1.0 / std::sqrt(double(dh));
    std::vector<Tensor<S>> parts;
    parts.reserve(size_t(nb) * heads);
    for (int b = 0; b < nb; ++b)
      for (int hd = 0; hd < heads; ++hd) {
        auto head_map = [&](int section) {
          std::vector<int64_t> m(size_t(t) * dh);
          size_t k = 0;
          for (int tok = 0; tok < t; ++tok)
            for (int e = 0; e < dh; ++e)
              m[k++] = int64_t(b * t + tok) * (3 * c) + section * c + hd * dh + e;
          return make_index_map(std::move(m));
        };
        Tensor<S> q = remap(qkv_out, {t, dh}, head_map(0));
        Tensor<S> kk = remap(qkv_out, {t, dh}, head_map(1));
        Tensor<S> v = remap(qkv_out, {t, dh}, head_map(2));
        Tensor<S> scores =
            add(mul_scalar(matmul(q, kk, false, true), scale), bias[size_t(hd)]);
        parts.push_back(matmul(softmax_rows(scores), v));
      }
    std::vector<const Tensor<S>*> ptrs;
    ptrs.reserve(parts.size());
    for (const auto& p : parts) ptrs.push_back(&p);
    Tensor<S> stacked = concat0(ptrs);  // [nb*heads*t, dh]
    std::vector<int64_t> fold(size_t(nb) * t * c);
    {
      size_t k = 0;
      for (int b = 0; b < nb; ++b)
        for (int tok = 0; tok < t; ++tok)
          for (int ch = 0; ch < c; ++ch) {
            int hd = ch / dh, e = ch % dh;
            fold[k++] = (int64_t(b * heads + hd) * t + tok) * dh + e;
          }
    }
    Tensor<S> attn = remap(stacked, {nb * t, c}, make_index_map(std::move(fold)));
    Tensor<S> x2 = add(tokens, proj.forward(ctx, attn));
    Tensor<S> m = norm2.forward_tokens(ctx, x2);
    m = fc2.forward(ctx, gelu_t(fc1.forward(ctx, m)));
    Tensor<S> x3 = add(x2, m);

    // Back to the map; padded duplicate tokens are dropped.
    std::vector<int64_t> scatter(size_t(c) * h * w);
    {
      size_t k = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            int b = (y / win) * g.nwx + (xx / win);
            int tok = (y % win) * win + (xx % win);
            scatter[k++] = int64_t(b * t + tok) * c + ch;
          }
    }
    return remap(x3, {c, h, w}, make_index_map(std::move(scatter)));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    norm1.collect(prefix + ".norm1", out);
    qkv.collect(prefix + ".qkv", out);
    proj.collect(prefix + ".proj", out);
    add_param(out, prefix, "rel_bias", rel_bias);
    norm2.collect(prefix + ".norm2", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
  }
};

// ---------------------------------------------------------------------------
// Entropy-side block: window attention then frequency modulation, each
// residual (the attention block carries its residuals internally).

template <class S>
struct Fstam {
  WindowAttention<S> attn;
  Afmm<S> afmm;

  Fstam() = default;
  Fstam(int c, int win, int heads, Rng& rng)
      : attn(c, win, heads, rng), afmm(c, win, rng) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> y = attn.forward(ctx, x);
    return add(y, afmm.forward(ctx, y));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    attn.collect(prefix + ".attn", out);
    afmm.collect(prefix + ".afmm", out);
  }
};

}  // namespace hcfs
