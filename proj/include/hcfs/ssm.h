#pragma once

// Selective state-space scan over pixel sequences, plus the omni-directional
// scan orders that feed 2-D feature maps through it.
//
// Continuous model per channel:  h'(t) = a h(t) + b x(t),  y = c h + d x.
// Zero-order hold over a step of size delta gives the discrete recurrence
//   h_t = a_bar h_{t-1} + b_bar x_t,   a_bar = exp(delta a),
//   b_bar = (exp(delta a) - 1) / a * b   (series fallback for tiny delta*a).
// The scan input-conditions delta, b and c per token; a = -exp(log_a) keeps
// every mode strictly stable, so |a_bar| < 1 for any positive delta.

#include <array>
#include <cmath>
#include <vector>

#include "hcfs/nn.h"
#include "hcfs/ops.h"
#include "hcfs/tensor.h"

namespace hcfs {

// ---------------------------------------------------------------------------
// Discretization helper (scalar; shared by the scan op and its tests).

template <class S>
void zoh_discretize(S a, S b, S delta, S& a_bar, S& b_bar) {
  S ad = delta * a;
  a_bar = std::exp(ad);
  if (std::abs(ad) < S(1e-6)) {
    b_bar = delta * b * (S(1) + ad * S(0.5));
  } else {
    b_bar = (a_bar - S(1)) / a * b;
  }
}

// ---------------------------------------------------------------------------
// Fused scan op.
// x [L,C], delta [L,C] (positive), bmat [L,N], cmat [L,N], log_a [C,N],
// d_skip [C]  ->  y [L,C].  All six inputs are differentiable.

template <class S>
Tensor<S> ssm_scan(const Tensor<S>& x, const Tensor<S>& delta,
                   const Tensor<S>& bmat, const Tensor<S>& cmat,
                   const Tensor<S>& log_a, const Tensor<S>& d_skip) {
  require<ShapeError>(x.rank() == 2, "ssm_scan: x must be [L,C], got ",
                      shape_str(x.shape));
  int l = x.dim(0), c = x.dim(1);
  detail::check_same_shape("ssm_scan(delta)", x, delta);
  require<ShapeError>(bmat.rank() == 2 && bmat.dim(0) == l,
                      "ssm_scan: b must be [L,N], got ", shape_str(bmat.shape));
  int n = bmat.dim(1);
  require<ShapeError>(cmat.shape == bmat.shape, "ssm_scan: c shape ",
                      shape_str(cmat.shape), " != b shape ",
                      shape_str(bmat.shape));
  require<ShapeError>(log_a.rank() == 2 && log_a.dim(0) == c &&
                          log_a.dim(1) == n,
                      "ssm_scan: log_a must be [C,N]=[", c, ",", n, "], got ",
                      shape_str(log_a.shape));
  require<ShapeError>(d_skip.rank() == 1 && d_skip.dim(0) == c,
                      "ssm_scan: d must be [C]=[", c, "], got ",
                      shape_str(d_skip.shape));

  Tensor<S> out(std::vector<int>{l, c});
  std::vector<S> h(static_cast<size_t>(n));
  std::vector<S> a(static_cast<size_t>(n));
  for (int ch = 0; ch < c; ++ch) {
    for (int j = 0; j < n; ++j) {
      a[size_t(j)] = -std::exp(log_a.data[size_t(ch) * n + j]);
      h[size_t(j)] = S(0);
    }
    S dv = d_skip.data[size_t(ch)];
    for (int t = 0; t < l; ++t) {
      S dt = delta.data[size_t(t) * c + ch];
      S xv = x.data[size_t(t) * c + ch];
      S acc = S(0);
      for (int j = 0; j < n; ++j) {
        S abar, bbar;
        zoh_discretize(a[size_t(j)], bmat.data[size_t(t) * n + j], dt, abar,
                       bbar);
        h[size_t(j)] = abar * h[size_t(j)] + bbar * xv;
        acc += cmat.data[size_t(t) * n + j] * h[size_t(j)];
      }
      out.data[size_t(t) * c + ch] = acc + dv * xv;
    }
  }

  Tape<S>* tp = detail::tape_of(x, delta);
  for (const Tensor<S>* in : {&bmat, &cmat, &log_a, &d_skip}) {
    if (in->tracked()) {
      if (tp)
        require<Error>(tp == in->tape, "ssm_scan: inputs from different tapes");
      tp = in->tape;
    }
  }
  if (!tp) return out;

  out.tape = tp;
  out.node = tp->add_node(out.numel());
  int on = out.node;
  int xn = x.tracked() ? x.node : -1;
  int dn = delta.tracked() ? delta.node : -1;
  int bn = bmat.tracked() ? bmat.node : -1;
  int cn = cmat.tracked() ? cmat.node : -1;
  int lan = log_a.tracked() ? log_a.node : -1;
  int dsn = d_skip.tracked() ? d_skip.node : -1;
  std::vector<S> xv = x.data, dev = delta.data, bv = bmat.data, cv = cmat.data,
                 lav = log_a.data, dsv = d_skip.data;
  tp->record([=, xv = std::move(xv), dev = std::move(dev), bv = std::move(bv),
              cv = std::move(cv), lav = std::move(lav),
              dsv = std::move(dsv)](Tape<S>& t) {
    const auto& g = t.grad(on);
    if (g.empty()) return;
    std::vector<S> gx, gdelta, gb, gc, gla, gds;
    if (xn >= 0) gx.assign(size_t(l) * c, S(0));
    if (dn >= 0) gdelta.assign(size_t(l) * c, S(0));
    if (bn >= 0) gb.assign(size_t(l) * n, S(0));
    if (cn >= 0) gc.assign(size_t(l) * n, S(0));
    if (lan >= 0) gla.assign(size_t(c) * n, S(0));
    if (dsn >= 0) gds.assign(size_t(c), S(0));

    std::vector<S> hs(size_t(l + 1) * n);  // h trajectory, hs[0] = 0
    std::vector<S> a(static_cast<size_t>(n)), gh(static_cast<size_t>(n));
    for (int ch = 0; ch < c; ++ch) {
      for (int j = 0; j < n; ++j) {
        a[size_t(j)] = -std::exp(lav[size_t(ch) * n + j]);
        hs[size_t(j)] = S(0);
        gh[size_t(j)] = S(0);
      }
      // Recompute the state trajectory for this channel.
      for (int t2 = 0; t2 < l; ++t2) {
        S dt = dev[size_t(t2) * c + ch];
        S xval = xv[size_t(t2) * c + ch];
        for (int j = 0; j < n; ++j) {
          S abar, bbar;
          zoh_discretize(a[size_t(j)], bv[size_t(t2) * n + j], dt, abar, bbar);
          hs[size_t(t2 + 1) * n + j] =
              abar * hs[size_t(t2) * n + j] + bbar * xval;
        }
      }
      S dval = dsv[size_t(ch)];
      // Reverse sweep.
      for (int t2 = l - 1; t2 >= 0; --t2) {
        S gy = g[size_t(t2) * c + ch];
        S dt = dev[size_t(t2) * c + ch];
        S xval = xv[size_t(t2) * c + ch];
        if (dsn >= 0) gds[size_t(ch)] += gy * xval;
        S gxv = gy * dval;
        S gdt = S(0);
        for (int j = 0; j < n; ++j) {
          S bj = bv[size_t(t2) * n + j];
          S cj = cv[size_t(t2) * n + j];
          S aj = a[size_t(j)];
          S ad = dt * aj;
          S abar = std::exp(ad);
          S bbar;
          bool series = std::abs(ad) < S(1e-6);
          if (series)
            bbar = dt * bj * (S(1) + ad * S(0.5));
          else
            bbar = (abar - S(1)) / aj * bj;

          S ht = hs[size_t(t2 + 1) * n + j];
          S hprev = hs[size_t(t2) * n + j];
          if (cn >= 0) gc[size_t(t2) * n + j] += gy * ht;
          S ghj = gh[size_t(j)] + gy * cj;

          // h_t = abar h_{t-1} + bbar x_t
          S gabar = ghj * hprev;
          S gbbar = ghj * xval;
          gxv += ghj * bbar;
          gh[size_t(j)] = ghj * abar;

          // abar = exp(dt a):  d/d dt = a abar,  d/d a = dt abar
          gdt += gabar * aj * abar;
          S ga = gabar * dt * abar;

          // bbar partials.
          S db_ddt, db_da, db_db;
          if (series) {
            db_ddt = bj * (S(1) + ad);
            db_da = dt * dt * bj * S(0.5);
            db_db = dt * (S(1) + ad * S(0.5));
          } else {
            db_ddt = abar * bj;
            db_da = (dt * abar * aj - (abar - S(1))) / (aj * aj) * bj;
            db_db = (abar - S(1)) / aj;
          }
          gdt += gbbar * db_ddt;
          ga += gbbar * db_da;
          if (bn >= 0) gb[size_t(t2) * n + j] += gbbar * db_db;
          // a = -exp(log_a)  =>  da/dlog_a = a
          if (lan >= 0) gla[size_t(ch) * n + j] += ga * aj;
        }
        if (xn >= 0) gx[size_t(t2) * c + ch] += gxv;
        if (dn >= 0) gdelta[size_t(t2) * c + ch] += gdt;
      }
    }
    if (xn >= 0) t.accum(xn, gx.data(), gx.size());
    if (dn >= 0) t.accum(dn, gdelta.data(), gdelta.size());
    if (bn >= 0) t.accum(bn, gb.data(), gb.size());
    if (cn >= 0) t.accum(cn, gc.data(), gc.size());
    if (lan >= 0) t.accum(lan, gla.data(), gla.size());
    if (dsn >= 0) t.accum(dsn, gds.data(), gds.size());
  });
  return out;
}

// ---------------------------------------------------------------------------
// Scan orders.

enum class ScanKind { kHorizontal, kVertical, kDiagonal, kAntiDiagonal };

struct ScanOrder {
  ScanKind kind;
  bool reversed;
  std::vector<int> perm;  // perm[t] = flat (row*w + col) pixel visited at t
};

// Eight orders: {horizontal, vertical, diagonal, anti-diagonal} x {fwd, rev}.
// Diagonals group pixels by constant (col - row), anti-diagonals by constant
// (row + col); groups are visited in ascending key and rows ascend within a
// group, so scan-neighbors inside a group are 8-neighbors on the map.
inline std::vector<ScanOrder> build_scan_orders(int h, int w) {
  require<ShapeError>(h >= 1 && w >= 1, "scan orders need h,w >= 1, got ", h,
                      "x", w);
  std::vector<ScanOrder> orders;
  orders.reserve(8);
  auto push_pair = [&orders](ScanKind kind, std::vector<int> base) {
    ScanOrder fwd{kind, false, base};
    std::vector<int> rev(base.rbegin(), base.rend());
    orders.push_back(std::move(fwd));
    orders.push_back(ScanOrder{kind, true, std::move(rev)});
  };

  std::vector<int> base;
  base.reserve(size_t(h) * w);

  // Horizontal: row-major.
  base.clear();
  for (int r = 0; r < h; ++r)
    for (int col = 0; col < w; ++col) base.push_back(r * w + col);
  push_pair(ScanKind::kHorizontal, base);

  // Vertical: column-major.
  base.clear();
  for (int col = 0; col < w; ++col)
    for (int r = 0; r < h; ++r) base.push_back(r * w + col);
  push_pair(ScanKind::kVertical, base);

  // Diagonal: constant (col - row), keys ascending from -(h-1) to (w-1).
  base.clear();
  for (int k = -(h - 1); k <= w - 1; ++k)
    for (int r = 0; r < h; ++r) {
      int col = r + k;
      if (col >= 0 && col < w) base.push_back(r * w + col);
    }
  push_pair(ScanKind::kDiagonal, base);

  // Anti-diagonal: constant (row + col), keys ascending.
  base.clear();
  for (int k = 0; k <= h + w - 2; ++k)
    for (int r = 0; r < h; ++r) {
      int col = k - r;
      if (col >= 0 && col < w) base.push_back(r * w + col);
    }
  push_pair(ScanKind::kAntiDiagonal, base);

  return orders;
}

// Gather a [C,H,W] map into the [L,C] token sequence of one scan order.
inline IndexMap scan_gather_map(const std::vector<int>& perm, int c, int hw) {
  std::vector<int64_t> idx(size_t(perm.size()) * c);
  size_t k = 0;
  for (size_t t = 0; t < perm.size(); ++t)
    for (int ch = 0; ch < c; ++ch)
      idx[k++] = int64_t(ch) * hw + perm[t];
  return make_index_map(std::move(idx));
}

// Scatter an [L,C] sequence back to [C,H,W] (inverse of the gather).
inline IndexMap scan_scatter_map(const std::vector<int>& perm, int c, int hw) {
  std::vector<int> inv(size_t(hw), -1);
  for (size_t t = 0; t < perm.size(); ++t) inv[size_t(perm[t])] = int(t);
  std::vector<int64_t> idx(size_t(hw) * c);
  size_t k = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < hw; ++p)
      idx[k++] = int64_t(inv[size_t(p)]) * c + ch;
  return make_index_map(std::move(idx));
}

// ---------------------------------------------------------------------------
// One path's parameters: shared between the forward and reverse direction of
// its scan type.

template <class S>
struct SsmPath {
  int c = 0, n = 0;
  Parameter<S> log_a;       // [C,N]
  Parameter<S> d_skip;      // [C]
  Parameter<S> delta_bias;  // [C]
  DenseLayer<S> proj_delta;  // C -> C
  DenseLayer<S> proj_b;      // C -> N
  DenseLayer<S> proj_c;      // C -> N

  SsmPath() = default;
  SsmPath(int c_, int n_, Rng& rng)
      : c(c_),
        n(n_),
        proj_delta(c_, c_, rng, Init::kTruncNormal, /*bias=*/false),
        proj_b(c_, n_, rng, Init::kTruncNormal, false),
        proj_c(c_, n_, rng, Init::kTruncNormal, false) {
    log_a.value = Tensor<S>({c_, n_});
    for (int ch = 0; ch < c_; ++ch)
      for (int j = 0; j < n_; ++j)
        log_a.value.data[size_t(ch) * n_ + j] = S(std::log(double(j + 1)));
    d_skip.value = Tensor<S>({c_}, S(1));
    delta_bias.value = Tensor<S>({c_});
    for (int ch = 0; ch < c_; ++ch) {
      // softplus(bias) lands log-uniformly in [1e-3, 0.1].
      double dt = std::exp(rng.uniform(std::log(1e-3), std::log(0.1)));
      delta_bias.value.data[size_t(ch)] = S(std::log(std::expm1(dt)));
    }
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& seq) {
    Tensor<S> draw = proj_delta.forward(ctx, seq);
    Tensor<S> delta = softplus_t(row_add(draw, ctx.use(delta_bias)));
    Tensor<S> bmat = proj_b.forward(ctx, seq);
    Tensor<S> cmat = proj_c.forward(ctx, seq);
    return ssm_scan(seq, delta, bmat, cmat, ctx.use(log_a), ctx.use(d_skip));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix, "log_a", log_a);
    add_param(out, prefix, "d_skip", d_skip);
    add_param(out, prefix, "delta_bias", delta_bias);
    proj_delta.collect(prefix + ".proj_delta", out);
    proj_b.collect(prefix + ".proj_b", out);
    proj_c.collect(prefix + ".proj_c", out);
  }
};

// Input-conditioned scan over one token sequence.
template <class S>
Tensor<S> selective_scan(Ctx<S>& ctx, const Tensor<S>& seq, SsmPath<S>& path) {
  return path.forward(ctx, seq);
}

// ---------------------------------------------------------------------------
// Omni-directional scan mixer: runs all eight orders (four path types, each
// forward + reverse, parameters shared per type) and sums the scattered
// results.

template <class S>
struct Vonssm {
  int c = 0, n = 0;
  std::array<SsmPath<S>, 4> paths;

  Vonssm() = default;
  Vonssm(int c_, int n_, Rng& rng)
      : c(c_), n(n_),
        paths{SsmPath<S>(c_, n_, rng), SsmPath<S>(c_, n_, rng),
              SsmPath<S>(c_, n_, rng), SsmPath<S>(c_, n_, rng)} {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(0) == c,
                        "vonssm wants [C,H,W] with C=", c, ", got ",
                        shape_str(x.shape));
    int h = x.dim(1), w = x.dim(2);
    int hw = h * w;
    auto orders = build_scan_orders(h, w);
    Tensor<S> acc;
    for (size_t k = 0; k < orders.size(); ++k) {
      const auto& ord = orders[k];
      Tensor<S> seq = remap(x, {hw, c}, scan_gather_map(ord.perm, c, hw));
      Tensor<S> ys = paths[k / 2].forward(ctx, seq);
      Tensor<S> back = remap(ys, {c, h, w}, scan_scatter_map(ord.perm, c, hw));
      acc = (k == 0) ? back : add(acc, back);
    }
    return acc;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    static const char* kNames[4] = {"horizontal", "vertical", "diagonal",
                                    "anti_diagonal"};
    for (int i = 0; i < 4; ++i)
      paths[size_t(i)].collect(prefix + "." + kNames[i], out);
  }
};

// ---------------------------------------------------------------------------
// Scan mixer block: Linear -> depthwise 3x3 -> SiLU -> scans -> LN -> Linear.
// Callers normalize the input; the final projection is zero-initialized so a
// fresh block is the zero map (identity once residually added).

template <class S>
struct VonssBlock {
  Conv2dLayer<S> lin_in;
  Conv2dLayer<S> dwconv;
  Vonssm<S> ssm;
  ChannelLayerNorm<S> norm;
  Conv2dLayer<S> lin_out;

  VonssBlock() = default;
  VonssBlock(int c, int n, Rng& rng)
      : lin_in(c, c, 1, 1, 0, rng, Init::kTruncNormal),
        dwconv(c, c, 3, 1, 1, rng, Init::kFanIn, /*groups=*/c),
        ssm(c, n, rng),
        norm(c),
        lin_out(c, c, 1, 1, 0, rng, Init::kZero) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> t = lin_in.forward(ctx, x);
    t = silu_t(dwconv.forward(ctx, t));
    t = ssm.forward(ctx, t);
    t = norm.forward(ctx, t);
    return lin_out.forward(ctx, t);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    lin_in.collect(prefix + ".lin_in", out);
    dwconv.collect(prefix + ".dwconv", out);
    ssm.collect(prefix + ".scan", out);
    norm.collect(prefix + ".norm", out);
    lin_out.collect(prefix + ".lin_out", out);
  }
};

}  // namespace hcfs
