#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hcfs/error.h"

namespace hcfs {

template <class S>
class Tape;

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require<ShapeError>(d >= 0, "negative extent ", d, " in shape");
    n *= size_t(d);
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor. Value-like: copies duplicate the buffer, moves are
// cheap.  `tape`/`node` link a value into the autodiff graph of one Tape;
// tensors with tape == nullptr are plain constants.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;
  Tape<S>* tape = nullptr;
  int node = -1;

  Tensor() = default;
  explicit Tensor(std::vector<int> sh, S fill = S(0))
      : shape(std::move(sh)), data(shape_numel(shape), fill) {}

  static Tensor from(std::vector<int> sh, std::vector<S> d) {
    require<ShapeError>(shape_numel(sh) == d.size(), "tensor init: shape ",
                        shape_str(sh), " wants ", shape_numel(sh),
                        " values, got ", d.size());
    Tensor t;
    t.shape = std::move(sh);
    t.data = std::move(d);
    return t;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return int(shape.size()); }

  int dim(int i) const {
    int r = rank();
    if (i < 0) i += r;
    require<ShapeError>(i >= 0 && i < r, "dim index ", i, " out of range for ",
                        shape_str(shape));
    return shape[size_t(i)];
  }

  bool tracked() const { return tape != nullptr && node >= 0; }

  S scalar() const {
    require<ShapeError>(numel() == 1, "scalar() on tensor of shape ",
                        shape_str(shape));
    return data[0];
  }

  // Reinterpret the buffer with a new shape (same element count & order).
  Tensor reshaped(std::vector<int> sh) const {
    require<ShapeError>(shape_numel(sh) == numel(), "reshape ",
                        shape_str(shape), " -> ", shape_str(sh),
                        ": element count mismatch");
    Tensor t = *this;
    t.shape = std::move(sh);
    return t;
  }
};

// A named learnable value plus its accumulated gradient.  Callers zero the
// gradient; backward passes only ever add into it.
template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  std::vector<S> grad;

  Parameter() = default;
  explicit Parameter(Tensor<S> v) : value(std::move(v)) {}

  void zero_grad() { grad.assign(value.numel(), S(0)); }

  void ensure_grad() {
    if (grad.size() != value.numel()) grad.assign(value.numel(), S(0));
  }
};

// Reverse-mode tape.  Single-threaded and owned by one forward/backward
// pass: ops append records during the forward pass; backward() replays them
// in reverse, accumulating gradients per node, then adds leaf gradients into
// the watched Parameters and clears itself.
template <class S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Register a parameter as a leaf of this graph.  Repeated watch() of the
  // same parameter returns the same node so fan-out accumulates naturally.
  Tensor<S> watch(Parameter<S>& p) {
    require<Error>(!consumed_, "tape already consumed by backward()");
    Tensor<S> t = p.value;
    auto it = watched_.find(&p);
    if (it != watched_.end()) {
      t.tape = this;
      t.node = it->second;
      return t;
    }
    int node = add_node(t.numel());
    watched_.emplace(&p, node);
    t.tape = this;
    t.node = node;
    return t;
  }

  int add_node(size_t numel) {
    numel_.push_back(numel);
    grads_.emplace_back();
    return int(numel_.size()) - 1;
  }

  void record(std::function<void(Tape<S>&)> fn) {
    require<Error>(!consumed_, "tape already consumed by backward()");
    recs_.push_back(std::move(fn));
  }

  bool has_grad(int node) const {
    return node >= 0 && !grads_[size_t(node)].empty();
  }

  // Gradient buffer of a node; empty if nothing reached it (yet).
  const std::vector<S>& grad(int node) const { return grads_[size_t(node)]; }

  void accum(int node, const S* g, size_t n) {
    if (node < 0) return;
    auto& buf = grads_[size_t(node)];
    require<Error>(numel_[size_t(node)] == n, "gradient size mismatch: node ",
                   node, " has ", numel_[size_t(node)], " elements, got ", n);
    if (buf.empty()) buf.assign(n, S(0));
    for (size_t i = 0; i < n; ++i) buf[i] += g[i];
  }

  void note_ste() { ste_count_++; }
  int ste_count() const { return ste_count_; }

  bool consumed() const { return consumed_; }

  // Reverse sweep from a scalar loss.  Populates Parameter::grad (additively)
  // for every watched parameter the loss reaches, then clears the tape.
  void backward(const Tensor<S>& loss) {
    require<Error>(!consumed_, "backward() called twice on one tape");
    require<ShapeError>(loss.numel() == 1,
                        "backward() needs a scalar loss, got shape ",
                        shape_str(loss.shape));
    require<Error>(loss.tape == this && loss.node >= 0,
                   "backward(): loss does not belong to this tape");
    S one = S(1);
    accum(loss.node, &one, 1);
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) (*it)(*this);
    for (auto& [param, node] : watched_) {
      const auto& g = grads_[size_t(node)];
      if (g.empty()) continue;
      param->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) param->grad[i] += g[i];
    }
    consumed_ = true;
    recs_.clear();
    grads_.clear();
    numel_.clear();
    watched_.clear();
  }

 private:
  std::vector<std::function<void(Tape<S>&)>> recs_;
  std::vector<std::vector<S>> grads_;
  std::vector<size_t> numel_;
  std::map<Parameter<S>*, int> watched_;
  int ste_count_ = 0;
  bool consumed_ = false;
};

// Forward context: carries the tape during training, or nothing at inference.
template <class S>
struct Ctx {
  Tape<S>* tape = nullptr;

  Tensor<S> use(Parameter<S>& p) {
    if (tape) return tape->watch(p);
    Tensor<S> t = p.value;
    t.tape = nullptr;
    t.node = -1;
    return t;
  }

  bool training() const { return tape != nullptr; }
};

// Central finite differences against the tape gradient.
//
// f: (Ctx<S>&, const Tensor<S>&) -> scalar Tensor.  Returns the maximum of
// |analytic - numeric| / max(1, |numeric|) over the checked coordinates.
// Instantiate with S = double: the numeric quotient needs 64-bit evaluation
// to be trustworthy at h ~ 1e-3.  Graphs containing straight-through
// rounding are rejected: finite differences are meaningless across a step
// discontinuity.
template <class S, class F>
double grad_check(F f, const Tensor<S>& point, double h = 1e-3,
                  int max_coords = -1, uint64_t seed = 12345) {
  Parameter<S> p(point);
  p.zero_grad();
  Tape<S> tape;
  Ctx<S> ctx{&tape};
  Tensor<S> x = tape.watch(p);
  Tensor<S> loss = f(ctx, x);
  require<ShapeError>(loss.numel() == 1, "grad_check: f must return a scalar");
  if (tape.ste_count() > 0)
    throw std::logic_error(
        "grad_check: graph contains straight-through rounding; finite "
        "differences are invalid here");
  tape.backward(loss);

  size_t n = point.numel();
  std::vector<size_t> coords(n);
  for (size_t i = 0; i < n; ++i) coords[i] = i;
  if (max_coords > 0 && size_t(max_coords) < n) {
    // Deterministic subsample (Fisher-Yates prefix).
    std::mt19937_64 g(seed);
    for (size_t i = 0; i < size_t(max_coords); ++i) {
      size_t j = i + size_t(g() % (n - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(size_t(max_coords));
  }

  double worst = 0.0;
  for (size_t idx : coords) {
    Tensor<S> xp = point, xm = point;
    xp.data[idx] += S(h);
    xm.data[idx] -= S(h);
    Ctx<S> plain;
    double fp = double(f(plain, xp).scalar());
    double fm = double(f(plain, xm).scalar());
    double numeric = (fp - fm) / (2.0 * h);
    double analytic = double(p.grad[idx]);
    double err = std::abs(analytic - numeric) /
                 std::max(1.0, std::abs(numeric));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace hcfs
