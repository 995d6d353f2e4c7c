#pragma once

// Probability modeling: a per-channel monotone factorized density for the
// side latent, the mean/scale Gaussian conditional for the main latent,
// slice conditioning networks with residual prediction, and the hyper
// analysis/synthesis transforms.

#include <cmath>
#include <numeric>
#include <vector>

#include "hcfs/blocks.h"
#include "hcfs/nn.h"
#include "hcfs/ops.h"

namespace hcfs {

// Probability floor matching 16-bit coder precision, and the scale floor
// keeping bin probabilities well conditioned.
inline constexpr double kProbFloor = 1.0 / 65536.0;
inline constexpr double kSigmaFloor = 0.04;

// sigma = floor + softplus(raw): positive, kink-free, respects the floor.
template <class S>
Tensor<S> sigma_from_raw(const Tensor<S>& raw) {
  return add_scalar(softplus_t(raw), S(kSigmaFloor));
}

// Standard normal CDF of each element.
template <class S>
Tensor<S> normal_cdf_t(const Tensor<S>& t) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  return mul_scalar(add_scalar(erf_t(mul_scalar(t, S(kInvSqrt2))), S(1)), S(0.5));
}

inline double normal_cdf(double t) {
  return 0.5 * std::erfc(-t * 0.7071067811865475244);
}

// P(round(v) = k) for v ~ N(mu, sigma^2): Phi((k-mu+.5)/sigma) -
// Phi((k-mu-.5)/sigma), evaluated elementwise at positions `k`
// (which may be non-integer, e.g. noise-relaxed latents).
// floor <= 0 disables flooring (used by exactness oracles).
template <class S>
Tensor<S> gaussian_bin_prob(const Tensor<S>& k, const Tensor<S>& mu,
                            const Tensor<S>& sigma, double floor = kProbFloor) {
  Tensor<S> d = sub(k, mu);
  Tensor<S> up = normal_cdf_t(div(add_scalar(d, S(0.5)), sigma));
  Tensor<S> lo = normal_cdf_t(div(add_scalar(d, S(-0.5)), sigma));
  Tensor<S> p = sub(up, lo);
  return floor > 0 ? clamp_min(p, S(floor)) : p;
}

// Total code length in bits: -sum log2 p.
template <class S>
Tensor<S> rate_bits(const Tensor<S>& probs) {
  for (S p : probs.data)
    require<Error>(p > S(0) && std::isfinite(double(p)),
                   "rate_bits: nonpositive probability ", double(p));
  constexpr double kInvLn2 = 1.4426950408889634074;
  return mul_scalar(sum_all(log_t(probs)), S(-kInvLn2));
}

namespace detail {
inline IndexMap contiguous_map(int64_t offset, int n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), offset);
  return make_index_map(std::move(idx));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Per-channel monotone CDF network for the side latent: four stages of width
// 3 with positivity-constrained slopes (softplus on the raw matrices) and
// bounded gates x + tanh(g) * tanh(x), finished by a sigmoid.  Strictly
// increasing in the input by construction.  Also carries the per-channel
// medians used as quantization offsets.

template <class S>
struct FactorizedDensity {
  static constexpr int kWidth = 3;
  int c = 0;
  // Raw (pre-softplus) stage matrices, stacked per channel.
  Parameter<S> h1, h2, h3, h4;  // [c,3], [c,9], [c,9], [c,3]
  Parameter<S> b1, b2, b3, b4;  // [c,3], [c,3], [c,3], [c,1]
  Parameter<S> g1, g2, g3;      // [c,3] gate raws
  Parameter<S> medians;         // [c]

  FactorizedDensity() = default;
  FactorizedDensity(int c_, Rng& rng) : c(c_) {
    auto fill = [&](Parameter<S>& p, std::vector<int> shape, double v) {
      p.value = Tensor<S>(std::move(shape));
      for (S& e : p.value.data) e = S(v);
    };
    auto fill_uniform = [&](Parameter<S>& p, std::vector<int> shape) {
      p.value = Tensor<S>(std::move(shape));
      for (S& e : p.value.data) e = S(rng.uniform(-0.5, 0.5));
    };
    double w_in = std::log(std::expm1(1.0));        // softplus -> 1
    double w_mid = std::log(std::expm1(1.0 / 3.0)); // rows average 3 inputs
    fill(h1, {c_, 3}, w_in);
    fill(h2, {c_, 9}, w_mid);
    fill(h3, {c_, 9}, w_mid);
    fill(h4, {c_, 3}, w_mid);
    fill_uniform(b1, {c_, 3});
    fill_uniform(b2, {c_, 3});
    fill_uniform(b3, {c_, 3});
    fill_uniform(b4, {c_, 1});
    fill(g1, {c_, 3}, 0.0);
    fill(g2, {c_, 3}, 0.0);
    fill(g3, {c_, 3}, 0.0);
    fill(medians, {c_}, 0.0);
  }

  // CDF of channel ch evaluated at every element of x (any shape).
  Tensor<S> cdf(Ctx<S>& ctx, const Tensor<S>& x, int ch) {
    require<ShapeError>(0 <= ch && ch < c, "density channel ", ch,
                        " out of range [0,", c, ")");
    int n = x.numel();
    Tensor<S> t = x.reshaped({n, 1});
    auto mat = [&](Parameter<S>& p, int rows, int cols) {
      return softplus_t(remap(ctx.use(p), {rows, cols},
                              detail::contiguous_map(int64_t(ch) * rows * cols,
                                                     rows * cols)));
    };
    auto vec = [&](Parameter<S>& p, int k) {
      return remap(ctx.use(p), {k}, detail::contiguous_map(int64_t(ch) * k, k));
    };
    auto stage = [&](const Tensor<S>& in, Parameter<S>& h, Parameter<S>& b,
                     Parameter<S>* g, int rows, int cols) {
      Tensor<S> o = row_add(matmul(in, mat(h, rows, cols), false, true),
                            vec(b, rows));
      if (g) o = add(o, row_scale(tanh_t(o), tanh_t(vec(*g, rows))));
      return o;
    };
    t = stage(t, h1, b1, &g1, 3, 1);
    t = stage(t, h2, b2, &g2, 3, 3);
    t = stage(t, h3, b3, &g3, 3, 3);
    t = stage(t, h4, b4, nullptr, 1, 3);
    return sigmoid_t(t).reshaped(x.shape);
  }

  // P(value rounds into the unit bin at each position of x) for channel ch.
  Tensor<S> bin_prob(Ctx<S>& ctx, const Tensor<S>& x, int ch,
                     double floor = kProbFloor) {
    Tensor<S> p = sub(cdf(ctx, add_scalar(x, S(0.5)), ch),
                      cdf(ctx, add_scalar(x, S(-0.5)), ch));
    return floor > 0 ? clamp_min(p, S(floor)) : p;
  }

  // Plain scalar CDF in double, for coder table construction.  Mirrors
  // cdf() exactly (up to the graph's scalar type).
  double cdf_value(double x, int ch) const {
    auto softplus = [](double v) {
      return v > 20 ? v : (v < -20 ? std::exp(v) : std::log1p(std::exp(v)));
    };
    double t[kWidth] = {x, 0, 0};
    int width = 1;
    auto run = [&](const Parameter<S>& h, const Parameter<S>& b,
                   const Parameter<S>* g, int rows, int cols) {
      double o[kWidth] = {0, 0, 0};
      for (int r = 0; r < rows; ++r) {
        double acc = double(b.value.data[size_t(ch) * rows + r]);
        for (int cc = 0; cc < cols; ++cc)
          acc += softplus(double(
                     h.value.data[(size_t(ch) * rows + r) * cols + cc])) *
                 t[cc];
        if (g)
          acc += std::tanh(double(g->value.data[size_t(ch) * rows + r])) *
                 std::tanh(acc);
        o[r] = acc;
      }
      for (int r = 0; r < rows; ++r) t[r] = o[r];
      width = rows;
    };
    run(h1, b1, &g1, 3, width);
    run(h2, b2, &g2, 3, width);
    run(h3, b3, &g3, 3, width);
    run(h4, b4, nullptr, 1, width);
    return 1.0 / (1.0 + std::exp(-t[0]));
  }

  double bin_prob_value(double x, int ch, double floor = kProbFloor) const {
    double p = cdf_value(x + 0.5, ch) - cdf_value(x - 0.5, ch);
    return floor > 0 ? std::max(p, floor) : p;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix, "h1", h1);
    add_param(out, prefix, "b1", b1);
    add_param(out, prefix, "g1", g1);
    add_param(out, prefix, "h2", h2);
    add_param(out, prefix, "b2", b2);
    add_param(out, prefix, "g2", g2);
    add_param(out, prefix, "h3", h3);
    add_param(out, prefix, "b3", b3);
    add_param(out, prefix, "g3", g3);
    add_param(out, prefix, "h4", h4);
    add_param(out, prefix, "b4", b4);
    add_param(out, prefix, "medians", medians);
  }
};

// ---------------------------------------------------------------------------
// Slice conditioning network e_i.  The mu branch reads concat(f_mean,
// previously decoded slices), the sigma branch concat(f_scale, same slices);
// each runs a 1x1 conv, LeakyReLU, 3x3 conv, an attention+frequency block,
// and a zero-initialized 1x1 projection to the slice width.  The residual
// predictor reads concat(mu, y_hat) and emits a correction bounded to
// (-1/2, 1/2) by tanh/2.

template <class S>
struct SliceNet {
  int ms = 0;  // channels in this slice

  Conv2dLayer<S> mu_in, mu_conv, mu_out;
  Fstam<S> mu_mix;
  Conv2dLayer<S> sg_in, sg_conv, sg_out;
  Fstam<S> sg_mix;
  Conv2dLayer<S> res_in, res_conv, res_out;

  SliceNet() = default;
  // cin = channels of (hyper feature + previous slices) input.
  SliceNet(int cin, int u, int ms_, int win, int heads, Rng& rng)
      : ms(ms_),
        mu_in(cin, u, 1, 1, 0, rng, Init::kFanIn),
        mu_conv(u, u, 3, 1, 1, rng, Init::kFanIn),
        mu_out(u, ms_, 1, 1, 0, rng, Init::kZero),
        mu_mix(u, win, heads, rng),
        sg_in(cin, u, 1, 1, 0, rng, Init::kFanIn),
        sg_conv(u, u, 3, 1, 1, rng, Init::kFanIn),
        sg_out(u, ms_, 1, 1, 0, rng, Init::kZero),
        sg_mix(u, win, heads, rng),
        res_in(2 * ms_, u, 1, 1, 0, rng, Init::kFanIn),
        res_conv(u, u, 3, 1, 1, rng, Init::kFanIn),
        res_out(u, ms_, 1, 1, 0, rng, Init::kZero) {}

  Tensor<S> branch(Ctx<S>& ctx, Conv2dLayer<S>& in, Conv2dLayer<S>& conv,
                   Fstam<S>& mix, Conv2dLayer<S>& out, const Tensor<S>& x) {
    Tensor<S> t = conv.forward(ctx, leaky_relu_t(in.forward(ctx, x)));
    return out.forward(ctx, mix.forward(ctx, t));
  }

  // Conditioning input: hyper feature followed by previously decoded slices.
  static Tensor<S> conditioning(const Tensor<S>& feat,
                                const std::vector<Tensor<S>>& prev) {
    std::vector<const Tensor<S>*> parts;
    parts.reserve(prev.size() + 1);
    parts.push_back(&feat);
    for (const auto& p : prev) parts.push_back(&p);
    return concat0(parts);
  }

  Tensor<S> predict_mu(Ctx<S>& ctx, const Tensor<S>& f_mean,
                       const std::vector<Tensor<S>>& prev) {
    return branch(ctx, mu_in, mu_conv, mu_mix, mu_out,
                  conditioning(f_mean, prev));
  }

  Tensor<S> predict_sigma(Ctx<S>& ctx, const Tensor<S>& f_scale,
                          const std::vector<Tensor<S>>& prev) {
    return sigma_from_raw(
        branch(ctx, sg_in, sg_conv, sg_mix, sg_out, conditioning(f_scale, prev)));
  }

  Tensor<S> residual(Ctx<S>& ctx, const Tensor<S>& mu, const Tensor<S>& y_hat) {
    Tensor<S> t = concat0(mu, y_hat);
    t = leaky_relu_t(res_in.forward(ctx, t));
    t = leaky_relu_t(res_conv.forward(ctx, t));
    return mul_scalar(tanh_t(res_out.forward(ctx, t)), S(0.5));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    mu_in.collect(prefix + ".mu_in", out);
    mu_conv.collect(prefix + ".mu_conv", out);
    mu_mix.collect(prefix + ".mu_mix", out);
    mu_out.collect(prefix + ".mu_out", out);
    sg_in.collect(prefix + ".sg_in", out);
    sg_conv.collect(prefix + ".sg_conv", out);
    sg_mix.collect(prefix + ".sg_mix", out);
    sg_out.collect(prefix + ".sg_out", out);
    res_in.collect(prefix + ".res_in", out);
    res_conv.collect(prefix + ".res_conv", out);
    res_out.collect(prefix + ".res_out", out);
  }
};

// ---------------------------------------------------------------------------
// Hyper transforms.  Analysis: stride-1 conv, hybrid block, two stride-2
// convs (4x reduction).  Synthesis (one instance each for the mean and scale
// features): two 2x sub-pixel stages, hybrid block, stride-1 conv out.

template <class S>
struct HyperAnalysis {
  Conv2dLayer<S> conv_in;
  Hcfss<S> block;
  Conv2dLayer<S> down1, down2;

  HyperAnalysis() = default;
  HyperAnalysis(int m, int hw, int cz, int state_dim, int afmm_win, Rng& rng)
      : conv_in(m, hw, 3, 1, 1, rng, Init::kFanIn),
        block(hw, state_dim, afmm_win, rng),
        down1(hw, hw, 3, 2, 1, rng, Init::kFanIn),
        down2(hw, cz, 3, 2, 1, rng, Init::kFanIn) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& y) {
    require<ShapeError>(y.rank() == 3 && y.dim(1) % 4 == 0 && y.dim(2) % 4 == 0,
                        "hyper analysis needs spatial dims divisible by 4, got ",
                        shape_str(y.shape));
    Tensor<S> t = block.forward(ctx, conv_in.forward(ctx, y));
    return down2.forward(ctx, leaky_relu_t(down1.forward(ctx, t)));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    conv_in.collect(prefix + ".conv_in", out);
    block.collect(prefix + ".block", out);
    down1.collect(prefix + ".down1", out);
    down2.collect(prefix + ".down2", out);
  }
};

template <class S>
struct HyperSynth {
  SubpelConv<S> up1, up2;
  Hcfss<S> block;
  Conv2dLayer<S> conv_out;

  HyperSynth() = default;
  HyperSynth(int cz, int hw, int m, int state_dim, int afmm_win, Rng& rng)
      : up1(cz, hw, 3, 2, rng),
        up2(hw, hw, 3, 2, rng),
        block(hw, state_dim, afmm_win, rng),
        conv_out(hw, m, 3, 1, 1, rng, Init::kFanIn) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& z_hat) {
    Tensor<S> t = up2.forward(ctx, leaky_relu_t(up1.forward(ctx, z_hat)));
    return conv_out.forward(ctx, block.forward(ctx, t));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    up1.collect(prefix + ".up1", out);
    up2.collect(prefix + ".up2", out);
    block.collect(prefix + ".block", out);
    conv_out.collect(prefix + ".conv_out", out);
  }
};

}  // namespace hcfs
