#pragma once

// Toy training: a seeded synthetic texture dataset and a deterministic
// single-image-per-step descent loop over the rate-distortion loss.

#include <array>
#include <cmath>
#include <ostream>
#include <vector>

#include "hcfs/codec.h"

namespace hcfs {

struct TrainConfig {
  ModelConfig model;
  int lambda_index = 3;  // into kLambdas
  int steps = 500;
  double lr = 1e-4;
  double clip_norm = 1.0;
  int images = 64;
  int image_size = 64;
  uint64_t seed = 7;

  double lambda() const {
    require<Error>(lambda_index >= 0 && lambda_index < int(kLambdas.size()),
                   "lambda index ", lambda_index, " out of range [0,",
                   kLambdas.size(), ")");
    return kLambdas[size_t(lambda_index)];
  }
};

// Synthetic 3-channel textures in [0,1]: smooth gradients, sinusoidal
// plaids, soft checkerboards, and Gaussian blob fields, all seeded.
template <class S>
std::vector<Tensor<S>> make_toy_dataset(int count, int size, uint64_t seed) {
  std::vector<Tensor<S>> out;
  out.reserve(size_t(count));
  Rng rng(seed);
  for (int n = 0; n < count; ++n) {
    Tensor<S> img({3, size, size});
    int kind = n % 4;
    double p1 = rng.uniform(), p2 = rng.uniform(), p3 = rng.uniform();
    double f1 = rng.uniform(1.0, 6.0), f2 = rng.uniform(1.0, 6.0);
    std::array<double, 3> tint = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                  rng.uniform(0.2, 0.8)};
    std::array<std::array<double, 4>, 3> blobs{};
    for (auto& b : blobs)
      b = {rng.uniform(), rng.uniform(), rng.uniform(0.05, 0.3),
           rng.uniform(-0.4, 0.4)};
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double u = double(x) / size, v = double(y) / size;
        double base = 0;
        switch (kind) {
          case 0:  // tilted gradient
            base = p1 * u + p2 * v + 0.3 * (p3 - 0.5);
            break;
          case 1:  // plaid
            base = 0.5 + 0.25 * std::sin(2 * kPi * (f1 * u + p1)) *
                             std::sin(2 * kPi * (f2 * v + p2));
            break;
          case 2: {  // soft checkerboard
            double cell = std::floor(f1 * u + p1) + std::floor(f2 * v + p2);
            base = 0.35 + 0.3 * (std::fmod(cell, 2.0) == 0 ? 1.0 : 0.0) +
                   0.1 * p3;
            break;
          }
          default: {  // blob field
            base = 0.4;
            for (const auto& b : blobs) {
              double dx = u - b[0], dy = v - b[1];
              base += b[3] * std::exp(-(dx * dx + dy * dy) / (2 * b[2] * b[2]));
            }
            break;
          }
        }
        for (int ch = 0; ch < 3; ++ch) {
          double val = base * tint[size_t(ch)] + 0.15;
          val = val < 0 ? 0 : (val > 1 ? 1 : val);
          img.data[(size_t(ch) * size + size_t(y)) * size + size_t(x)] = S(val);
        }
      }
    out.push_back(std::move(img));
  }
  return out;
}

struct TraceRow {
  int step = 0;
  double loss = 0, rate_y = 0, rate_z = 0, distortion = 0;
};

// One image per step, cycling the dataset; per-step noise streams derive
// from the config seed, so a run is a pure function of its config.
// Throws on divergence (non-finite loss) with the offending step in the
// message.  If trace_out is given, rows are streamed as "step,L,R_y,R_z,D".
template <class S>
std::vector<TraceRow> train_toy(Model<S>& model, const TrainConfig& tc,
                                std::ostream* trace_out = nullptr) {
  std::vector<Tensor<S>> dataset =
      make_toy_dataset<S>(tc.images, tc.image_size, tc.seed);
  ParamList<S> params = model.params();
  Adam<S> opt(params);
  Rng master(tc.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<TraceRow> trace;
  trace.reserve(size_t(tc.steps));
  if (trace_out) *trace_out << "step,L,R_y,R_z,D\n";
  for (int step = 0; step < tc.steps; ++step) {
    const Tensor<S>& img = dataset[size_t(step) % dataset.size()];
    Tape<S> tape;
    Ctx<S> ctx{&tape};
    RdParts<S> parts = rd_loss(ctx, model, img, tc.lambda(),
                               master.child(uint64_t(step)), Relax::kMixed);
    TraceRow row{step, double(parts.loss.scalar()),
                 double(parts.rate_y.scalar()), double(parts.rate_z.scalar()),
                 double(parts.distortion.scalar())};
    require<Error>(std::isfinite(row.loss) && std::isfinite(row.distortion),
                   "training diverged at step ", step, ": L=", row.loss,
                   " R_y=", row.rate_y, " R_z=", row.rate_z, " D=",
                   row.distortion);
    tape.backward(parts.loss);
    opt.step(params, tc.lr, tc.clip_norm);
    for (auto& pr : params) pr.p->zero_grad();
    trace.push_back(row);
    if (trace_out)
      *trace_out << row.step << "," << row.loss << "," << row.rate_y << ","
                 << row.rate_z << "," << row.distortion << "\n";
  }
  model.lambda_index = tc.lambda_index;
  return trace;
}

// Mean of the first/last `window` losses — the descent measure used by the
// training checks.
inline double smoothed_loss(const std::vector<TraceRow>& trace, size_t window,
                            bool head) {
  require<Error>(trace.size() >= window && window >= 1,
                 "trace too short for smoothing window");
  double acc = 0;
  for (size_t i = 0; i < window; ++i)
    acc += trace[head ? i : trace.size() - 1 - i].loss;
  return acc / double(window);
}

}  // namespace hcfs
