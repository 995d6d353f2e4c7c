#pragma once

// Small-module layer library: thin structs owning Parameters plus a forward
// that strings ops together.  Parameter collection walks the module tree
// with dotted path names; those names key the checkpoint records.

#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hcfs/ops.h"
#include "hcfs/rng.h"
#include "hcfs/tensor.h"

namespace hcfs {

enum class Init { kZero, kTruncNormal, kFanIn };

template <class S>
void init_tensor(Tensor<S>& t, Init kind, int fan_in, Rng& rng) {
  switch (kind) {
    case Init::kZero:
      for (auto& v : t.data) v = S(0);
      break;
    case Init::kTruncNormal:
      for (auto& v : t.data) v = S(rng.trunc_normal(0.02));
      break;
    case Init::kFanIn: {
      double limit = 1.0 / std::sqrt(double(std::max(1, fan_in)));
      for (auto& v : t.data) v = S(rng.uniform(-limit, limit));
      break;
    }
  }
}

template <class S>
struct ParamRef {
  std::string name;
  Parameter<S>* p;
};

template <class S>
using ParamList = std::vector<ParamRef<S>>;

template <class S>
void add_param(ParamList<S>& out, const std::string& prefix,
               const std::string& name, Parameter<S>& p) {
  out.push_back(ParamRef<S>{prefix.empty() ? name : prefix + "." + name, &p});
}

// ---------------------------------------------------------------------------
// Index map helpers shared by several modules.

inline IndexMap transpose_chw_to_hwc(int c, int h, int w) {
  std::vector<int64_t> idx(size_t(c) * h * w);
  size_t k = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        idx[k++] = (int64_t(ch) * h + y) * w + x;
  return make_index_map(std::move(idx));
}

inline IndexMap transpose_hwc_to_chw(int c, int h, int w) {
  std::vector<int64_t> idx(size_t(c) * h * w);
  size_t k = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        idx[k++] = (int64_t(y) * w + x) * c + ch;
  return make_index_map(std::move(idx));
}

// Sub-pixel rearrangement [c*r*r, h, w] -> [c, h*r, w*r]; channel
// (c*r + dy)*r + dx lands at spatial offset (dy, dx).
inline IndexMap pixel_shuffle_map(int c_out, int r, int h, int w) {
  std::vector<int64_t> idx(size_t(c_out) * r * r * h * w);
  size_t k = 0;
  int ho = h * r, wo = w * r;
  for (int ch = 0; ch < c_out; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        int dy = oy % r, dx = ox % r;
        int iy = oy / r, ix = ox / r;
        int ic = (ch * r + dy) * r + dx;
        idx[k++] = (int64_t(ic) * h + iy) * w + ix;
      }
  return make_index_map(std::move(idx));
}

// ---------------------------------------------------------------------------
// Layers.

template <class S>
struct DenseLayer {
  Parameter<S> w, b;
  bool has_bias = true;

  DenseLayer() = default;
  DenseLayer(int din, int dout, Rng& rng, Init init = Init::kTruncNormal,
             bool bias = true)
      : has_bias(bias) {
    w.value = Tensor<S>({dout, din});
    init_tensor(w.value, init, din, rng);
    if (bias) b.value = Tensor<S>({dout});  // zeros
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> wt = ctx.use(w);
    if (!has_bias) return dense(x, wt);
    Tensor<S> bt = ctx.use(b);
    return dense(x, wt, bt);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix, "weight", w);
    if (has_bias) add_param(out, prefix, "bias", b);
  }
};

template <class S>
struct Conv2dLayer {
  Parameter<S> w, b;
  int stride = 1, pad = 0, groups = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride_, int pad_, Rng& rng,
              Init init = Init::kFanIn, int groups_ = 1)
      : stride(stride_), pad(pad_), groups(groups_) {
    w.value = Tensor<S>({cout, cin / groups_, k, k});
    init_tensor(w.value, init, (cin / groups_) * k * k, rng);
    b.value = Tensor<S>({cout});  // zeros
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> wt = ctx.use(w);
    Tensor<S> bt = ctx.use(b);
    return conv2d(x, wt, bt, stride, pad, groups);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix, "weight", w);
    add_param(out, prefix, "bias", b);
  }
};

// LayerNorm over channels of a [C,H,W] map (per spatial site).
template <class S>
struct ChannelLayerNorm {
  Parameter<S> gain, shift;
  double eps = 1e-6;

  ChannelLayerNorm() = default;
  explicit ChannelLayerNorm(int c) {
    gain.value = Tensor<S>({c}, S(1));
    shift.value = Tensor<S>({c});
  }

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    require<ShapeError>(x.rank() == 3, "channel layer norm wants [C,H,W], got ",
                        shape_str(x.shape));
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<S> tok = remap(x, {h * w, c}, transpose_chw_to_hwc(c, h, w));
    Tensor<S> normed = layer_norm(tok, ctx.use(gain), ctx.use(shift), eps);
    return remap(normed, {c, h, w}, transpose_hwc_to_chw(c, h, w));
  }

  // For token layouts [.., C] no transpose is needed.
  Tensor<S> forward_tokens(Ctx<S>& ctx, const Tensor<S>& x) {
    return layer_norm(x, ctx.use(gain), ctx.use(shift), eps);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix, "gain", gain);
    add_param(out, prefix, "shift", shift);
  }
};

// k x k conv to r*r*cout channels followed by sub-pixel rearrangement:
// learned 2x (or rx) upsampling.
template <class S>
struct SubpelConv {
  Conv2dLayer<S> conv;
  int cout = 0, r = 2;

  SubpelConv() = default;
  SubpelConv(int cin, int cout_, int k, int r_, Rng& rng,
             Init init = Init::kFanIn)
      : conv(cin, cout_ * r_ * r_, k, 1, k / 2, rng, init), cout(cout_), r(r_) {}

  Tensor<S> forward(Ctx<S>& ctx, const Tensor<S>& x) {
    Tensor<S> y = conv.forward(ctx, x);
    int h = y.dim(1), w = y.dim(2);
    return remap(y, {cout, h * r, w * r}, pixel_shuffle_map(cout, r, h, w));
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    conv.collect(prefix + ".conv", out);
  }
};

// ---------------------------------------------------------------------------
// Checkpoint records: flat named f32 blobs.
//
// Layout (all little-endian):
//   "HCFSCKPT" | version u8 | records...
//   record: name_len u16 | name bytes | rank u8 | extents u32[rank] | f32 data

struct CkptRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

namespace ckpt_io {

constexpr char kMagic[8] = {'H', 'C', 'F', 'S', 'C', 'K', 'P', 'T'};
constexpr uint8_t kVersion = 1;

inline void write_u8(std::ostream& os, uint8_t v) {
  os.put(char(v));
}
inline void write_u16(std::ostream& os, uint16_t v) {
  os.put(char(v & 0xff));
  os.put(char((v >> 8) & 0xff));
}
inline void write_u32(std::ostream& os, uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(char((v >> (8 * i)) & 0xff));
}
inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline bool read_u8(std::istream& is, uint8_t& v) {
  int c = is.get();
  if (c == EOF) return false;
  v = uint8_t(c);
  return true;
}
inline bool read_u16(std::istream& is, uint16_t& v) {
  uint8_t a, b;
  if (!read_u8(is, a) || !read_u8(is, b)) return false;
  v = uint16_t(a) | (uint16_t(b) << 8);
  return true;
}
inline bool read_u32(std::istream& is, uint32_t& v) {
  v = 0;
  for (int i = 0; i < 4; ++i) {
    uint8_t b;
    if (!read_u8(is, b)) return false;
    v |= uint32_t(b) << (8 * i);
  }
  return true;
}
inline bool read_f32(std::istream& is, float& v) {
  uint32_t bits;
  if (!read_u32(is, bits)) return false;
  std::memcpy(&v, &bits, 4);
  return true;
}

}  // namespace ckpt_io

inline void write_checkpoint(std::ostream& os,
                             const std::vector<CkptRecord>& records) {
  os.write(ckpt_io::kMagic, 8);
  ckpt_io::write_u8(os, ckpt_io::kVersion);
  for (const auto& r : records) {
    require<Error>(r.name.size() <= 0xffff, "checkpoint record name too long: ",
                   r.name.size());
    require<Error>(shape_numel(r.shape) == r.data.size(),
                   "checkpoint record '", r.name, "': shape ",
                   shape_str(r.shape), " vs ", r.data.size(), " values");
    ckpt_io::write_u16(os, uint16_t(r.name.size()));
    os.write(r.name.data(), std::streamsize(r.name.size()));
    ckpt_io::write_u8(os, uint8_t(r.shape.size()));
    for (int d : r.shape) ckpt_io::write_u32(os, uint32_t(d));
    for (float v : r.data) ckpt_io::write_f32(os, v);
  }
  require<IoError>(bool(os), "checkpoint write failed");
}

inline std::vector<CkptRecord> read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  require<FormatError>(is.gcount() == 8 &&
                           std::memcmp(magic, ckpt_io::kMagic, 8) == 0,
                       "not a checkpoint: bad magic");
  uint8_t ver;
  require<FormatError>(ckpt_io::read_u8(is, ver), "checkpoint truncated");
  require<FormatError>(ver == ckpt_io::kVersion,
                       "unsupported checkpoint version ", int(ver),
                       " (expected ", int(ckpt_io::kVersion), ")");
  std::vector<CkptRecord> records;
  uint16_t name_len;
  while (ckpt_io::read_u16(is, name_len)) {
    CkptRecord r;
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    require<FormatError>(is.gcount() == name_len,
                         "checkpoint truncated in record name");
    uint8_t rank;
    require<FormatError>(ckpt_io::read_u8(is, rank),
                         "checkpoint truncated after record name '", r.name,
                         "'");
    size_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      uint32_t e;
      require<FormatError>(ckpt_io::read_u32(is, e),
                           "checkpoint truncated in extents of '", r.name, "'");
      r.shape.push_back(int(e));
      numel *= e;
    }
    r.data.resize(numel);
    for (size_t i = 0; i < numel; ++i)
      require<FormatError>(ckpt_io::read_f32(is, r.data[i]),
                           "checkpoint truncated in payload of '", r.name, "'");
    records.push_back(std::move(r));
  }
  return records;
}

template <class S>
std::vector<CkptRecord> params_to_records(const ParamList<S>& params) {
  std::vector<CkptRecord> records;
  records.reserve(params.size());
  for (const auto& pr : params) {
    CkptRecord r;
    r.name = pr.name;
    r.shape = pr.p->value.shape;
    r.data.reserve(pr.p->value.numel());
    for (S v : pr.p->value.data) r.data.push_back(float(v));
    records.push_back(std::move(r));
  }
  return records;
}

template <class S>
void records_to_params(const std::vector<CkptRecord>& records,
                       const ParamList<S>& params) {
  for (const auto& pr : params) {
    const CkptRecord* found = nullptr;
    for (const auto& r : records)
      if (r.name == pr.name) {
        found = &r;
        break;
      }
    require<FormatError>(found != nullptr, "checkpoint is missing record '",
                         pr.name, "'");
    require<FormatError>(found->shape == pr.p->value.shape,
                         "checkpoint record '", pr.name, "' has shape ",
                         shape_str(found->shape), ", model wants ",
                         shape_str(pr.p->value.shape));
    for (size_t i = 0; i < found->data.size(); ++i)
      pr.p->value.data[i] = S(found->data[i]);
  }
}

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping.

template <class S>
class Adam {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(const ParamList<S>& params) {
    for (const auto& pr : params) {
      m_.emplace_back(pr.p->value.numel(), S(0));
      v_.emplace_back(pr.p->value.numel(), S(0));
    }
  }

  // One update from the accumulated gradients.  Returns the pre-clip global
  // gradient norm.  Gradients are left in place; callers zero them.
  double step(const ParamList<S>& params, double lr, double clip_norm) {
    require<Error>(params.size() == m_.size(),
                   "optimizer state does not match parameter list");
    double sq = 0.0;
    for (const auto& pr : params) {
      pr.p->ensure_grad();
      for (S g : pr.p->grad) sq += double(g) * double(g);
    }
    double norm = std::sqrt(sq);
    double scale = 1.0;
    if (clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, t_);
    double bc2 = 1.0 - std::pow(beta2, t_);
    for (size_t k = 0; k < params.size(); ++k) {
      Parameter<S>& p = *params[k].p;
      auto& m = m_[k];
      auto& v = v_[k];
      for (size_t i = 0; i < p.value.numel(); ++i) {
        double g = double(p.grad[i]) * scale;
        double mi = beta1 * double(m[i]) + (1.0 - beta1) * g;
        double vi = beta2 * double(v[i]) + (1.0 - beta2) * g * g;
        m[i] = S(mi);
        v[i] = S(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        p.value.data[i] -= S(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
    return norm;
  }

 private:
  std::vector<std::vector<S>> m_, v_;
  int t_ = 0;
};

}  // namespace hcfs
