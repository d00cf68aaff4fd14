/* Copyright 2026 The loopvec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Optimization loops: VAE training on the pyramid loss, direct fitting of
// paths to one image, and fitting of loss-vs-segment-count curves.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loopvec/diffnum.hpp"
#include "loopvec/model.hpp"
#include "loopvec/raster.hpp"

namespace loopvec {

// ---------------------------------------------------------------------------
// Optimizers

/// Updates parameters from their accumulated gradients.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(std::span<diffnum::Parameter* const> params) = 0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `values`; `t` is the 1-based step.
/// Throws InvalidArgument when sizes differ.
void adam_step(std::span<double> values, std::span<const double> grads, AdamState& state, std::int64_t t,
               const AdamConfig& cfg);

class Adam : public Optimizer {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter. The parameter list must be the
  /// same (in size and order) on every call.
  void step(std::span<diffnum::Parameter* const> params) override;

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }
  const std::vector<AdamState>& state() const { return state_; }
  void restore(std::int64_t steps, std::vector<AdamState> state);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<AdamState> state_;
};

// ---------------------------------------------------------------------------
// VAE training

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 1;
  double kl_weight = 1e-2;
  int levels = 4;
  int k_min = 7;
  int k_max = 25;
  int paths = 1;
  std::uint64_t seed = 0;
  RasterConfig raster;

  /// Throws InvalidArgument on non-positive rates or sizes, an empty
  /// segment range, or more pyramid levels than raster.resolution allows.
  void validate() const;
};

struct StepMetrics {
  std::int64_t step = 0;  // 1-based
  double loss = 0.0;      // recon + kl_weight * kl, before the update
  double recon = 0.0;
  double kl = 0.0;
  int segments = 0;
  double seconds = 0.0;

  /// One JSON object on a single line.
  std::string json() const;
};

class VaeTrainer {
 public:
  /// Images must match the model's resolution; each is turned into a
  /// target pyramid once.
  VaeTrainer(Model& model, const TrainConfig& cfg, const std::vector<RasterImage>& images);

  /// One update on a random batch with a random segment count. Throws
  /// NumericError naming the step on a non-finite loss or gradient.
  StepMetrics step();
  /// Runs `steps` updates, writing one metrics line per step to `log` when
  /// it is non-null.
  std::vector<StepMetrics> run(std::int64_t steps, std::ostream* log = nullptr);

  /// Steps per epoch: ceil(dataset size / batch size).
  std::int64_t steps_per_epoch() const;
  std::int64_t steps_done() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Adam& optimizer() { return adam_; }

  std::string rng_state() const;
  void restore(std::int64_t step, const std::string& rng_state);

 private:
  Model& model_;
  TrainConfig cfg_;
  std::vector<RasterImage> images_;
  std::vector<ImagePyramid> targets_;
  std::mt19937_64 rng_;
  Adam adam_;
  std::int64_t step_ = 0;
};

/// Mean pixel MSE between each image and the full-resolution render of the
/// decoded mean code (no sampling, no path discarding).
double reconstruction_mse(Model& model, const std::vector<RasterImage>& images, int k, int paths,
                          const RasterConfig& raster);

// ---------------------------------------------------------------------------
// Direct fitting

struct DirectFitConfig {
  double learning_rate = 3e-2;
  int levels = 4;
  std::uint64_t seed = 0;
  RasterConfig raster;
};

struct DirectFitResult {
  VectorGraphic graphic;            // best iterate
  double best_loss = 0.0;           // pyramid loss of `graphic`
  std::vector<double> best_so_far;  // per iteration, non-increasing
};

/// Optimizes T paths of k segments directly against `target` with Adam.
/// Paths start as small circles on a jittered grid; colors are kept in
/// [0,1] through a sigmoid.
DirectFitResult direct_fit(const RasterImage& target, int paths, int k, int iters, const DirectFitConfig& cfg);

struct DecoderFitConfig {
  int iters = 1000;
  double learning_rate = 1e-3;
  int k_min = 7;  // segment count drawn per iteration from [k_min, k_max]
  int k_max = 25;
  int eval_k = 7;
  int eval_every = 25;
  bool deform = true;  // false keeps samples uniform
  int levels = 4;
  std::uint64_t seed = 0;
  RasterConfig raster;
};

/// Optimizes a free latent together with the decoder side of `model`
/// (unroller, deformer, decoder) against one target, drawing the segment
/// count per iteration. Returns the best-so-far loss at eval_k, recorded
/// every eval_every iterations and after the last one.
std::vector<double> fit_decoder(Model& model, const RasterImage& target, const DecoderFitConfig& cfg);

/// (N, loss) for N in [k_lo, k_hi]; loss of the best iterate of a short
/// direct fit at each N.
std::vector<std::pair<int, double>> measure_loss_vs_segments(const RasterImage& target, int paths, int k_lo,
                                                             int k_hi, int iters, const DirectFitConfig& cfg);

/// (N, loss) for N in [k_lo, k_hi]; pyramid loss of the model's decoding of
/// `z` at each N.
std::vector<std::pair<int, double>> measure_loss_vs_segments(Model& model, std::span<const double> z,
                                                             const RasterImage& target, int paths, int k_lo,
                                                             int k_hi, const RasterConfig& raster, int levels);

// ---------------------------------------------------------------------------
// Complexity curves

struct CurveFit {
  ComplexityCurve curve;
  double rms = 0.0;  // residual root-mean-square
};

/// Least-squares fit of loss = c + exp(b - a N). Needs >= 4 points with
/// distinct N; throws FitFailure when no start converges.
CurveFit fit_complexity_curve(std::span<const std::pair<int, double>> points);

struct AuxTrainConfig {
  int instances = 8;  // dataset images measured
  int k_lo = 7;
  int k_hi = 25;
  int steps = 500;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  RasterConfig raster;
  int levels = 4;
};

struct AuxExample {
  std::vector<double> z_t;
  ComplexityCurve curve;
};

/// Regresses the auxiliary head onto (a, b, c) targets with MSE; only the
/// auxiliary parameters change. Returns the final mean squared error.
double fit_auxiliary(Model& model, const std::vector<AuxExample>& examples, int steps, double learning_rate);

/// Measures each instance's loss-vs-N curve with the model, fits curves and
/// trains the auxiliary head on them.
std::vector<AuxExample> train_auxiliary(Model& model, const std::vector<RasterImage>& images,
                                        const AuxTrainConfig& cfg);

}  // namespace loopvec
