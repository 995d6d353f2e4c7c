#pragma once

// The codec: model configuration, analysis/synthesis transforms, hyper path,
// slice-by-slice entropy coding against the range coder, the training-time
// rate-distortion loss, and checkpoint serialization.

#include <array>
#include <cstdint>
#include <fstream>
#include <vector>

#include "hcfs/blocks.h"
#include "hcfs/entropy.h"
#include "hcfs/image.h"
#include "hcfs/nn.h"
#include "hcfs/rangecoder.h"

namespace hcfs {

// Lagrange multipliers selectable at train time; the container records the
// index used.
inline constexpr std::array<double, 6> kLambdas = {0.0025, 0.0035, 0.0067,
                                                   0.0130, 0.0250, 0.0500};

// Total spatial reduction: 16x in the main transform, 4x more in the hyper.
inline constexpr int kMainDown = 16;
inline constexpr int kTotalDown = 64;

struct ModelConfig {
  int c = 32;           // main transform width
  int m = 48;           // latent channels
  int cz = 16;          // side latent channels
  int hyper = 32;       // hyper transform width
  int slices = 3;       // channel slices
  int state_dim = 4;    // scan state size
  int u = 16;           // slice-network width
  int heads = 4;        // attention heads
  int afmm_win = 16;    // frequency window, main transforms
  int entropy_win = 8;  // attention + frequency window, entropy side

  static ModelConfig desk() { return ModelConfig{}; }
  static ModelConfig micro() {
    return ModelConfig{8, 12, 8, 8, 3, 4, 16, 4, 16, 8};
  }
  static ModelConfig full() {
    return ModelConfig{256, 320, 192, 256, 5, 16, 192, 8, 16, 8};
  }

  int slice_channels() const { return m / slices; }

  void validate() const {
    require<Error>(c >= 2 && c % 2 == 0, "config: main width must be even, got ", c);
    require<Error>(hyper >= 2 && hyper % 2 == 0,
                   "config: hyper width must be even, got ", hyper);
    require<Error>(slices >= 1 && m % slices == 0, "config: latent channels ",
                   m, " not divisible into ", slices, " slices");
    require<Error>(u >= heads && u % heads == 0, "config: slice width ", u,
                   " not divisible by ", heads, " heads");
    require<Error>(cz >= 1 && state_dim >= 1 && afmm_win >= 1 && entropy_win >= 1,
                   "config: nonpositive field");
  }

  std::vector<float> to_floats(int lambda_index) const {
    return {float(c),     float(m),        float(cz),
            float(hyper), float(slices),   float(state_dim),
            float(u),     float(heads),    float(afmm_win),
            float(entropy_win), float(lambda_index)};
  }
  static ModelConfig from_floats(const std::vector<float>& v, int* lambda_index) {
    require<FormatError>(v.size() == 11, "checkpoint config: expected 11 values, got ",
                         v.size());
    ModelConfig cfg{int(v[0]), int(v[1]), int(v[2]), int(v[3]), int(v[4]),
                    int(v[5]), int(v[6]), int(v[7]), int(v[8]), int(v[9])};
    if (lambda_index) *lambda_index = int(v[10]);
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Spatial helpers.

inline int pad_up(int v, int mult) { return (v + mult - 1) / mult * mult; }

// Reflect-pad a [C,H,W] map at the bottom/right to [C,th,tw]; differentiable.
template <class S>
Tensor<S> reflect_pad_to(const Tensor<S>& x, int th, int tw) {
  require<ShapeError>(x.rank() == 3, "reflect_pad_to wants [C,H,W], got ",
                      shape_str(x.shape));
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (th == h && tw == w) return x;
  require<ShapeError>(th >= h && tw >= w, "reflect_pad_to cannot shrink ",
                      shape_str(x.shape), " to ", th, "x", tw);
  std::vector<int64_t> idx(size_t(c) * th * tw);
  size_t k = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < th; ++y) {
      int ry = reflect_index(y, h);
      for (int xx = 0; xx < tw; ++xx)
        idx[k++] = (int64_t(ch) * h + ry) * w + reflect_index(xx, w);
    }
  return remap(x, {c, th, tw}, make_index_map(std::move(idx)));
}

template <class S>
Tensor<S> crop_chw(const Tensor<S>& x, int th, int tw) {
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (th == h && tw == w) return x;
  require<ShapeError>(th <= h && tw <= w, "crop_chw cannot grow ",
                      shape_str(x.shape), " to ", th, "x", tw);
  std::vector<int64_t> idx(size_t(c) * th * tw);
  size_t k = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < th; ++y)
      for (int xx = 0; xx < tw; ++xx) idx[k++] = (int64_t(ch) * h + y) * w + xx;
  return remap(x, {c, th, tw}, make_index_map(std::move(idx)));
}

// Broadcast a per-channel vector [C] over [C,H,W].
template <class S>
Tensor<S> broadcast_channels(const Tensor<S>& vec, int h, int w) {
  int c = vec.dim(0);
  std::vector<int64_t> idx(size_t(c) * h * w);
  size_t k = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h * w; ++i) idx[k++] = ch;
  return remap(vec, {c, h, w}, make_index_map(std::move(idx)));
}

// ---------------------------------------------------------------------------

template <class S>
struct Model {
  ModelConfig cfg;
  int lambda_index = 3;

  // Analysis: four 2x reductions interleaved with hybrid blocks.
  Conv2dLayer<S> ga_in;
  Hcfss<S> ga_b1;
  RbsDown<S> ga_d1;
  Hcfss<S> ga_b2;
  RbsDown<S> ga_d2;
  Hcfss<S> ga_b3;
  Conv2dLayer<S> ga_out;

  // Synthesis: mirrored with sub-pixel upsampling.
  SubpelConv<S> gs_in;
  Hcfss<S> gs_b1;
  RbuUp<S> gs_u1;
  Hcfss<S> gs_b2;
  RbuUp<S> gs_u2;
  Hcfss<S> gs_b3;
  SubpelConv<S> gs_out;

  HyperAnalysis<S> ha;
  HyperSynth<S> h_mean, h_scale;
  FactorizedDensity<S> density;
  std::vector<SliceNet<S>> slices;

  Model(const ModelConfig& cfg_, uint64_t seed) : cfg(cfg_) {
    cfg.validate();
    Rng rng(seed);
    int c = cfg.c, m = cfg.m, n = cfg.state_dim, wn = cfg.afmm_win;
    ga_in = Conv2dLayer<S>(3, c, 3, 2, 1, rng, Init::kFanIn);
    ga_b1 = Hcfss<S>(c, n, wn, rng);
    ga_d1 = RbsDown<S>(c, c, rng);
    ga_b2 = Hcfss<S>(c, n, wn, rng);
    ga_d2 = RbsDown<S>(c, c, rng);
    ga_b3 = Hcfss<S>(c, n, wn, rng);
    ga_out = Conv2dLayer<S>(c, m, 3, 2, 1, rng, Init::kFanIn);

    gs_in = SubpelConv<S>(m, c, 3, 2, rng);
    gs_b1 = Hcfss<S>(c, n, wn, rng);
    gs_u1 = RbuUp<S>(c, c, rng);
    gs_b2 = Hcfss<S>(c, n, wn, rng);
    gs_u2 = RbuUp<S>(c, c, rng);
    gs_b3 = Hcfss<S>(c, n, wn, rng);
    gs_out = SubpelConv<S>(c, 3, 3, 2, rng);
    // Mid-gray output bias: a fresh decoder emits 0.5 everywhere.
    for (S& b : gs_out.conv.b.value.data) b = S(0.5);

    ha = HyperAnalysis<S>(m, cfg.hyper, cfg.cz, n, wn, rng);
    h_mean = HyperSynth<S>(cfg.cz, cfg.hyper, m, n, wn, rng);
    h_scale = HyperSynth<S>(cfg.cz, cfg.hyper, m, n, wn, rng);
    density = FactorizedDensity<S>(cfg.cz, rng);

    int ms = cfg.slice_channels();
    slices.reserve(size_t(cfg.slices));
    for (int i = 0; i < cfg.slices; ++i)
      slices.emplace_back(m + i * ms, cfg.u, ms, cfg.entropy_win, cfg.heads, rng);
  }

  Tensor<S> analysis(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3 && x.dim(0) == 3 &&
                            x.dim(1) % kMainDown == 0 && x.dim(2) % kMainDown == 0,
                        "analysis wants [3,H,W] with H,W multiples of ",
                        kMainDown, ", got ", shape_str(x.shape));
    Tensor<S> t = ga_in.forward(ctx, x);
    t = ga_b1.forward(ctx, t);
    t = ga_d1.forward(ctx, t);
    t = ga_b2.forward(ctx, t);
    t = ga_d2.forward(ctx, t);
    t = ga_b3.forward(ctx, t);
    return ga_out.forward(ctx, t);
  }

  Tensor<S> synthesis(Ctx<S>& ctx, const Tensor<S>& y_bar) {
    Tensor<S> t = gs_in.forward(ctx, y_bar);
    t = gs_b1.forward(ctx, t);
    t = gs_u1.forward(ctx, t);
    t = gs_b2.forward(ctx, t);
    t = gs_u2.forward(ctx, t);
    t = gs_b3.forward(ctx, t);
    return gs_out.forward(ctx, t);
  }

  ParamList<S> params() {
    ParamList<S> out;
    ga_in.collect("ga.in", out);
    ga_b1.collect("ga.b1", out);
    ga_d1.collect("ga.d1", out);
    ga_b2.collect("ga.b2", out);
    ga_d2.collect("ga.d2", out);
    ga_b3.collect("ga.b3", out);
    ga_out.collect("ga.out", out);
    gs_in.collect("gs.in", out);
    gs_b1.collect("gs.b1", out);
    gs_u1.collect("gs.u1", out);
    gs_b2.collect("gs.b2", out);
    gs_u2.collect("gs.u2", out);
    gs_b3.collect("gs.b3", out);
    gs_out.collect("gs.out", out);
    ha.collect("ha", out);
    h_mean.collect("hm", out);
    h_scale.collect("hs", out);
    density.collect("density", out);
    for (size_t i = 0; i < slices.size(); ++i)
      slices[i].collect("slice" + std::to_string(i), out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Coding.  Symbols are clamped rounded residuals; the side latent is coded
// per channel against the factorized density of the centered variable
// (z - median), the main latent per element against Gaussian tables built
// from the predicted sigma.  Encoder and decoder reconstruct quantized
// values through the identical arithmetic, so their latents match bit for
// bit.

// Residual pmf over the clamped alphabet for side-latent channel ch,
// out-of-range mass folded into the edge bins.
template <class S>
std::vector<double> factorized_pmf(FactorizedDensity<S>& density, int ch) {
  std::vector<double> pmf(static_cast<size_t>(kAlphabet));
  double prev = 0.0;
  for (int k = kSymMin; k < kSymMax; ++k) {
    double up = density.cdf_value(double(k) + 0.5, ch);
    pmf[size_t(k - kSymMin)] = up - prev;
    prev = up;
  }
  pmf[size_t(kAlphabet - 1)] = 1.0 - prev;
  return pmf;
}

template <class S>
struct LatentBundle {
  Tensor<S> z_hat;                    // [Cz, h/4, w/4]
  Tensor<S> y_bar;                    // [M, h, w]
  std::vector<Tensor<S>> slice_mu, slice_sigma, slice_ybar;
  double est_bits_z = 0, est_bits_y = 0;
};

namespace detail {

inline double bits_of(double p) {
  constexpr double kInvLn2 = 1.4426950408889634074;
  return -std::log(std::max(p, kProbFloor)) * kInvLn2;
}

// Shared slice pass: predicts mu/sigma, lets `code` map residuals to
// symbols (encode) or pull them from the stream (decode), reconstructs
// y_hat = symbol + mu, applies the learned residual correction, and appends
// the slice to `prev`.  Both coder sides run exactly this arithmetic.
template <class S, class CodeFn>
void slice_pass(Ctx<S>& ctx, SliceNet<S>& net, const Tensor<S>& f_mean,
                const Tensor<S>& f_scale, std::vector<Tensor<S>>& prev,
                LatentBundle<S>& out, CodeFn&& code) {
  Tensor<S> mu = net.predict_mu(ctx, f_mean, prev);
  Tensor<S> sigma = net.predict_sigma(ctx, f_scale, prev);
  Tensor<S> y_hat(mu.shape);
  code(mu, sigma, y_hat);  // fills y_hat = symbol + mu elementwise
  Tensor<S> y_bar = add(y_hat, net.residual(ctx, mu, y_hat));
  out.slice_mu.push_back(mu);
  out.slice_sigma.push_back(sigma);
  out.slice_ybar.push_back(y_bar);
  prev.push_back(y_bar);
}

template <class S>
void assemble_ybar(LatentBundle<S>& b) {
  std::vector<const Tensor<S>*> parts;
  for (const auto& t : b.slice_ybar) parts.push_back(&t);
  b.y_bar = concat0(parts);
}

}  // namespace detail

template <class S>
CodedStream encode_image(Model<S>& model, const ImageBuffer& img,
                         LatentBundle<S>* debug = nullptr) {
  Ctx<S> ctx;  // inference: nothing is taped
  int ph = pad_up(img.height, kTotalDown), pw = pad_up(img.width, kTotalDown);
  Tensor<S> x = reflect_pad_to(image_to_tensor<S>(img), ph, pw);

  Tensor<S> y = model.analysis(ctx, x);
  Tensor<S> z = model.ha.forward(ctx, y);

  CodedStream stream;
  stream.width = uint32_t(img.width);
  stream.height = uint32_t(img.height);
  stream.lambda_index = uint8_t(model.lambda_index);

  LatentBundle<S> local;
  LatentBundle<S>& bundle = debug ? *debug : local;
  bundle = LatentBundle<S>{};

  // Side latent: per-channel tables over the centered variable.
  int cz = z.dim(0), hz = z.dim(1), wz = z.dim(2);
  Tensor<S> z_hat({cz, hz, wz});
  {
    RangeEncoder enc;
    for (int ch = 0; ch < cz; ++ch) {
      std::vector<double> pmf = factorized_pmf(model.density, ch);
      CdfTable table = quantize_cdf(pmf);
      double median = double(model.density.medians.value.data[size_t(ch)]);
      for (int i = 0; i < hz * wz; ++i) {
        size_t e = size_t(ch) * hz * wz + size_t(i);
        int sym = clamp_symbol(double(z.data[e]) - median);
        enc.encode(sym - kSymMin, table);
        bundle.est_bits_z += detail::bits_of(pmf[size_t(sym - kSymMin)]);
        z_hat.data[e] = S(sym) + S(median);
      }
    }
    stream.z_segment = enc.finish();
  }
  bundle.z_hat = z_hat;

  Tensor<S> f_mean = model.h_mean.forward(ctx, z_hat);
  Tensor<S> f_scale = model.h_scale.forward(ctx, z_hat);

  int ms = model.cfg.slice_channels();
  std::vector<Tensor<S>> prev;
  for (int i = 0; i < model.cfg.slices; ++i) {
    Tensor<S> y_i = slice_channels(y, i * ms, (i + 1) * ms);
    RangeEncoder enc;
    detail::slice_pass(ctx, model.slices[size_t(i)], f_mean, f_scale, prev,
                       bundle,
                       [&](const Tensor<S>& mu, const Tensor<S>& sigma,
                           Tensor<S>& y_hat) {
                         for (size_t e = 0; e < y_i.numel(); ++e) {
                           double sg = double(sigma.data[size_t(e)]);
                           std::vector<double> pmf = gaussian_pmf(sg);
                           CdfTable table = quantize_cdf(pmf);
                           int sym = clamp_symbol(double(y_i.data[size_t(e)]) -
                                                  double(mu.data[size_t(e)]));
                           enc.encode(sym - kSymMin, table);
                           bundle.est_bits_y +=
                               detail::bits_of(pmf[size_t(sym - kSymMin)]);
                           y_hat.data[size_t(e)] =
                               S(sym) + mu.data[size_t(e)];
                         }
                       });
    stream.slice_segments.push_back(enc.finish());
  }
  detail::assemble_ybar(bundle);
  return stream;
}

template <class S>
LatentBundle<S> decode_latents(Model<S>& model, const CodedStream& stream) {
  Ctx<S> ctx;
  require<FormatError>(int(stream.slice_segments.size()) == model.cfg.slices,
                       "container has ", stream.slice_segments.size(),
                       " slice segments, model wants ", model.cfg.slices);
  int ph = pad_up(int(stream.height), kTotalDown);
  int pw = pad_up(int(stream.width), kTotalDown);
  int hy = ph / kMainDown, wy = pw / kMainDown;
  int hz = hy / 4, wz = wy / 4;

  LatentBundle<S> bundle;
  int cz = model.cfg.cz;
  Tensor<S> z_hat({cz, hz, wz});
  {
    RangeDecoder dec(stream.z_segment);
    for (int ch = 0; ch < cz; ++ch) {
      CdfTable table = quantize_cdf(factorized_pmf(model.density, ch));
      double median = double(model.density.medians.value.data[size_t(ch)]);
      for (int i = 0; i < hz * wz; ++i) {
        int sym = dec.decode(table) + kSymMin;
        z_hat.data[size_t(ch) * hz * wz + size_t(i)] = S(sym) + S(median);
      }
    }
  }
  bundle.z_hat = z_hat;

  Tensor<S> f_mean = model.h_mean.forward(ctx, z_hat);
  Tensor<S> f_scale = model.h_scale.forward(ctx, z_hat);

  std::vector<Tensor<S>> prev;
  for (int i = 0; i < model.cfg.slices; ++i) {
    RangeDecoder dec(stream.slice_segments[size_t(i)]);
    detail::slice_pass(ctx, model.slices[size_t(i)], f_mean, f_scale, prev,
                       bundle,
                       [&](const Tensor<S>& mu, const Tensor<S>& sigma,
                           Tensor<S>& y_hat) {
                         for (size_t e = 0; e < mu.numel(); ++e) {
                           double sg = double(sigma.data[size_t(e)]);
                           CdfTable table = gaussian_cdf_table(sg);
                           int sym = dec.decode(table) + kSymMin;
                           y_hat.data[size_t(e)] =
                               S(sym) + mu.data[size_t(e)];
                         }
                       });
  }
  detail::assemble_ybar(bundle);
  return bundle;
}

template <class S>
ImageBuffer decode_image(Model<S>& model, const CodedStream& stream) {
  LatentBundle<S> bundle = decode_latents(model, stream);
  Ctx<S> ctx;
  Tensor<S> x_hat = model.synthesis(ctx, bundle.y_bar);
  x_hat = crop_chw(x_hat, int(stream.height), int(stream.width));
  return tensor_to_image(x_hat);  // clamps to [0,1] at byte conversion
}

// ---------------------------------------------------------------------------
// Training-time loss.  Rate terms relax quantization with additive uniform
// noise; the conditioning/distortion path uses straight-through rounding in
// kMixed mode, or the same noise relaxation in kAllNoise (which keeps the
// whole graph differentiable for finite-difference checks).

enum class Relax { kMixed, kAllNoise };

template <class S>
struct RdParts {
  Tensor<S> loss, rate_y, rate_z, distortion;  // scalars; rates in bpp
};

// noise_rng is taken by value: a given seed always yields the same noise
// tensors, which keeps repeated evaluations (finite differences, traces)
// comparable.
template <class S>
RdParts<S> rd_loss(Ctx<S>& ctx, Model<S>& model, const Tensor<S>& x_img,
                   double lambda, Rng noise_rng, Relax relax = Relax::kMixed) {
  require<Error>(lambda > 0, "rd_loss: lambda must be positive, got ", lambda);
  int ph = pad_up(x_img.dim(1), kTotalDown), pw = pad_up(x_img.dim(2), kTotalDown);
  Tensor<S> x = reflect_pad_to(x_img, ph, pw);
  double pixels = double(ph) * double(pw);

  Tensor<S> y = model.analysis(ctx, x);
  Tensor<S> z = model.ha.forward(ctx, y);

  // Side latent rate over the centered variable.
  Tensor<S> med = broadcast_channels(ctx.use(model.density.medians), z.dim(1),
                                     z.dim(2));
  Tensor<S> z_cent = sub(z, med);
  Tensor<S> z_noisy = add(z_cent, uniform_noise<S>(z.shape, noise_rng));
  Tensor<S> rz_bits;
  for (int ch = 0; ch < z.dim(0); ++ch) {
    Tensor<S> vals = slice_channels(z_noisy, ch, ch + 1);
    Tensor<S> bits = rate_bits(model.density.bin_prob(ctx, vals, ch));
    rz_bits = ch == 0 ? bits : add(rz_bits, bits);
  }

  Tensor<S> z_hat = relax == Relax::kMixed ? add(ste_round(z_cent), med)
                                           : add(z_noisy, med);

  Tensor<S> f_mean = model.h_mean.forward(ctx, z_hat);
  Tensor<S> f_scale = model.h_scale.forward(ctx, z_hat);

  int ms = model.cfg.slice_channels();
  std::vector<Tensor<S>> prev;
  Tensor<S> ry_bits;
  for (int i = 0; i < model.cfg.slices; ++i) {
    SliceNet<S>& net = model.slices[size_t(i)];
    Tensor<S> y_i = slice_channels(y, i * ms, (i + 1) * ms);
    Tensor<S> mu = net.predict_mu(ctx, f_mean, prev);
    Tensor<S> sigma = net.predict_sigma(ctx, f_scale, prev);
    Tensor<S> y_noisy = add(y_i, uniform_noise<S>(y_i.shape, noise_rng));
    Tensor<S> p = gaussian_bin_prob(y_noisy, mu, sigma);
    Tensor<S> bits = rate_bits(p);
    ry_bits = i == 0 ? bits : add(ry_bits, bits);
    Tensor<S> y_hat = relax == Relax::kMixed
                          ? add(ste_round(sub(y_i, mu)), mu)
                          : y_noisy;
    Tensor<S> y_bar = add(y_hat, net.residual(ctx, mu, y_hat));
    prev.push_back(y_bar);
  }
  std::vector<const Tensor<S>*> parts;
  for (const auto& t : prev) parts.push_back(&t);
  Tensor<S> x_hat = model.synthesis(ctx, concat0(parts));

  Tensor<S> err = sub(x_hat, x);
  Tensor<S> d = mul_scalar(mean_all(mul(err, err)), S(255.0 * 255.0));

  RdParts<S> out;
  out.rate_y = mul_scalar(ry_bits, S(1.0 / pixels));
  out.rate_z = mul_scalar(rz_bits, S(1.0 / pixels));
  out.distortion = d;
  out.loss = add(add(out.rate_y, out.rate_z), mul_scalar(d, S(lambda)));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: the parameter records plus one "meta.config" record holding
// the configuration (as f32 values), so a model can be rebuilt from the file
// alone.

template <class S>
void save_model(const std::string& path, Model<S>& model) {
  ParamList<S> params = model.params();
  std::vector<CkptRecord> records = params_to_records(params);
  CkptRecord meta;
  meta.name = "meta.config";
  std::vector<float> vals = model.cfg.to_floats(model.lambda_index);
  meta.shape = {int(vals.size())};
  meta.data = vals;
  records.push_back(std::move(meta));
  std::ofstream os(path, std::ios::binary);
  require<IoError>(os.good(), "cannot open checkpoint for write: ", path);
  write_checkpoint(os, records);
}

template <class S>
Model<S> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require<IoError>(is.good(), "cannot open checkpoint: ", path);
  std::vector<CkptRecord> records = read_checkpoint(is);
  const CkptRecord* meta = nullptr;
  std::vector<CkptRecord> rest;
  for (auto& r : records) {
    if (r.name == "meta.config")
      meta = &r;
    else
      rest.push_back(std::move(r));
  }
  require<FormatError>(meta != nullptr, "checkpoint lacks meta.config record");
  int lambda_index = 0;
  ModelConfig cfg = ModelConfig::from_floats(meta->data, &lambda_index);
  Model<S> model(cfg, 0);
  model.lambda_index = lambda_index;
  ParamList<S> params = model.params();
  records_to_params(rest, params);
  return model;
}

// ---------------------------------------------------------------------------

struct EvalResult {
  double bpp = 0, psnr = 0, mse = 0;
  size_t bytes = 0;
  int width = 0, height = 0;
};

template <class S>
EvalResult eval_image(Model<S>& model, const ImageBuffer& img) {
  CodedStream stream = encode_image(model, img);
  std::vector<uint8_t> container = write_container(stream);
  ImageBuffer rec = decode_image(model, read_container(container));
  EvalResult r;
  r.bytes = container.size();
  r.width = img.width;
  r.height = img.height;
  r.bpp = double(r.bytes) * 8.0 / (double(img.width) * double(img.height));
  r.mse = mse_8bit(img, rec);
  r.psnr = psnr_from_mse(r.mse);
  return r;
}

}  // namespace hcfs
