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

#include "loopvec/train.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "loopvec/errors.hpp"

namespace loopvec {

using diffnum::DiffArray;
using diffnum::Graph;
using diffnum::Parameter;

namespace {

double standard_normal(std::mt19937_64& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double pixel_mse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

RasterConfig at_resolution(RasterConfig cfg, const RasterImage& target) {
  if (target.width != target.height) throw InvalidArgument("target image must be square");
  cfg.resolution = target.width;
  cfg.validate();
  return cfg;
}

// Closed circle of k cubic segments; handles use the tangent-length rule.
std::vector<double> circle_controls(Point2 center, double radius, int k) {
  const double step = 2.0 * std::numbers::pi / k;
  const double handle = 4.0 / 3.0 * std::tan(step / 4.0) * radius;
  std::vector<double> out;
  for (int j = 0; j < k; ++j) {
    const double t0 = step * j, t1 = step * (j + 1);
    const Point2 p0{center.x + radius * std::cos(t0), center.y + radius * std::sin(t0)};
    const Point2 p1{center.x + radius * std::cos(t1), center.y + radius * std::sin(t1)};
    const Point2 h0{p0.x - handle * std::sin(t0), p0.y + handle * std::cos(t0)};
    const Point2 h1{p1.x + handle * std::sin(t1), p1.y - handle * std::cos(t1)};
    for (Point2 p : {p0, h0, h1}) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<double> values, std::span<const double> grads, AdamState& state, std::int64_t t,
               const AdamConfig& cfg) {
  if (grads.size() != values.size()) {
    throw InvalidArgument("adam_step: " + std::to_string(values.size()) + " values but " +
                          std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(values.size(), 0.0);
    state.v.assign(values.size(), 0.0);
  }
  if (state.m.size() != values.size() || state.v.size() != values.size()) {
    throw InvalidArgument("adam_step: optimizer state does not match the parameter size");
  }
  if (t < 1) throw InvalidArgument("adam_step: step index must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    values[i] -= cfg.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.epsilon);
  }
}

void Adam::step(std::span<Parameter* const> params) {
  if (state_.empty()) state_.resize(params.size());
  if (state_.size() != params.size()) {
    throw InvalidArgument("Adam: parameter list changed from " + std::to_string(state_.size()) + " to " +
                          std::to_string(params.size()) + " entries");
  }
  ++t_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.grad.empty()) p.zero_grad();
    adam_step(p.value, p.grad, state_[i], t_, cfg_);
  }
}

void Adam::restore(std::int64_t steps, std::vector<AdamState> state) {
  if (steps < 0) throw InvalidArgument("Adam: negative step count");
  t_ = steps;
  state_ = std::move(state);
}

// ---------------------------------------------------------------------------
// VAE training

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("TrainConfig: " + m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be > 0");
  if (batch_size < 1) fail("batch size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(kl_weight >= 0.0) || !std::isfinite(kl_weight)) fail("KL weight must be >= 0");
  if (k_min < 1 || k_max < k_min) fail("segment range must satisfy 1 <= k_min <= k_max");
  if (paths < 1) fail("paths must be >= 1");
  raster.validate();
  pyramid_sizes(raster.resolution, levels);
}

std::string StepMetrics::json() const {
  return nlohmann::json{{"step", step}, {"loss", loss},         {"recon", recon},
                        {"kl", kl},     {"segments", segments}, {"wall_time", seconds}}
      .dump();
}

VaeTrainer::VaeTrainer(Model& model, const TrainConfig& cfg, const std::vector<RasterImage>& images)
    : model_(model), cfg_(cfg), images_(images), rng_(cfg.seed), adam_(AdamConfig{cfg.learning_rate}) {
  cfg_.validate();
  if (images_.empty()) throw InvalidArgument("VaeTrainer: empty dataset");
  if (cfg_.raster.resolution != model_.config().resolution) {
    throw InvalidArgument("VaeTrainer: raster resolution differs from the model resolution");
  }
  for (const RasterImage& img : images_) {
    if (img.width != cfg_.raster.resolution || img.height != cfg_.raster.resolution) {
      throw InvalidArgument("VaeTrainer: image size " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + " differs from the model resolution");
    }
    targets_.push_back(gaussian_pyramid(img, cfg_.levels));
  }
}

std::int64_t VaeTrainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(images_.size());
  return (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

StepMetrics VaeTrainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t index = step_ + 1;
  StepMetrics m;
  m.step = index;
  m.segments = std::uniform_int_distribution<int>(cfg_.k_min, cfg_.k_max)(rng_);

  // Batch without replacement when the dataset is large enough.
  const std::size_t n = images_.size(), b = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<std::size_t> batch;
  if (b <= n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < b; ++i) {
      std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, n - 1)(rng_)]);
      batch.push_back(order[i]);
    }
  } else {
    for (std::size_t i = 0; i < b; ++i) batch.push_back(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_));
  }

  const auto params = model_.main_parameters();
  for (Parameter* p : model_.parameters()) p->zero_grad();
  const double weight = 1.0 / static_cast<double>(b);
  const auto latent = static_cast<std::size_t>(model_.config().latent_size);
  try {
    for (std::size_t i : batch) {
      std::vector<double> noise(latent);
      for (double& v : noise) v = standard_normal(rng_);
      Graph g;
      const LatentCode code = model_.encode(g, image_input(g, images_[i], model_.config().input_channels));
      const DiffArray z = reparameterize(g, code, noise);
      const DiffArray recon = pyramid_loss(g, model_.decode(g, z, m.segments, cfg_.paths), targets_[i], cfg_.raster);
      const DiffArray kl = g.kl_standard_normal(code.mu, code.logvar);
      const DiffArray total = g.scale(g.add(recon, g.scale(kl, cfg_.kl_weight)), weight);
      if (!std::isfinite(total.item())) throw NumericError("non-finite loss");
      m.recon += weight * recon.item();
      m.kl += weight * kl.item();
      g.backward(total);
    }
  } catch (const NumericError& e) {
    throw NumericError("training step " + std::to_string(index) + ": " + e.what());
  }
  for (const Parameter* p : params) {
    if (!all_finite(p->grad)) {
      throw NumericError("training step " + std::to_string(index) + ": non-finite gradient in " + p->name);
    }
  }
  m.loss = m.recon + cfg_.kl_weight * m.kl;
  adam_.step(params);
  step_ = index;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

std::vector<StepMetrics> VaeTrainer::run(std::int64_t steps, std::ostream* log) {
  std::vector<StepMetrics> out;
  for (std::int64_t i = 0; i < steps; ++i) {
    out.push_back(step());
    if (log) *log << out.back().json() << '\n' << std::flush;
  }
  return out;
}

std::string VaeTrainer::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void VaeTrainer::restore(std::int64_t step, const std::string& rng_state) {
  std::istringstream is(rng_state);
  std::mt19937_64 rng;
  is >> rng;
  if (is.fail()) throw FormatError("VaeTrainer: unreadable generator state");
  rng_ = rng;
  step_ = step;
}

double reconstruction_mse(Model& model, const std::vector<RasterImage>& images, int k, int paths,
                          const RasterConfig& raster) {
  if (images.empty()) throw InvalidArgument("reconstruction_mse: empty dataset");
  double total = 0.0;
  for (const RasterImage& img : images) {
    const std::vector<double> mu = model.encode_mean(img);
    Graph g;
    const DiffArray z = g.constant({1, mu.size()}, mu);
    const DiffArray out = render_graphic(g, model.decode(g, z, k, paths), at_resolution(raster, img), 0);
    total += pixel_mse(out.values(), to_rgb(img).data);
  }
  return total / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Direct fitting

DirectFitResult direct_fit(const RasterImage& target, int paths, int k, int iters, const DirectFitConfig& cfg) {
  if (paths < 1) throw InvalidArgument("direct_fit: paths must be >= 1");
  if (k < 1) throw InvalidArgument("direct_fit: k must be >= 1");
  if (iters < 0) throw InvalidArgument("direct_fit: iters must be >= 0");
  const RasterConfig raster = at_resolution(cfg.raster, target);
  const ImagePyramid pyramid = gaussian_pyramid(target, cfg.levels);

  std::mt19937_64 rng(cfg.seed);
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(paths))));
  const double cell = 1.0 / grid;
  std::uniform_real_distribution<double> jitter(-0.15 * cell, 0.15 * cell);
  std::vector<Parameter> controls, depths, colors;
  for (int t = 0; t < paths; ++t) {
    const Point2 center{(t % grid + 0.5) * cell + jitter(rng), (t / grid + 0.5) * cell + jitter(rng)};
    controls.emplace_back("controls." + std::to_string(t), diffnum::Shape{3 * static_cast<std::size_t>(k), 2});
    controls.back().value = circle_controls(center, 0.2 * cell, k);
    depths.emplace_back("depth." + std::to_string(t), diffnum::Shape{1});
    depths.back().value = {0.1 * t};
    colors.emplace_back("color." + std::to_string(t), diffnum::Shape{3});
  }
  std::vector<Parameter*> params;
  for (int t = 0; t < paths; ++t) {
    params.push_back(&controls[t]);
    params.push_back(&depths[t]);
    params.push_back(&colors[t]);
  }

  Adam adam(AdamConfig{cfg.learning_rate});
  DirectFitResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  // The final pass only evaluates the last update.
  for (int it = 0; it <= iters; ++it) {
    for (Parameter* p : params) p->zero_grad();
    Graph g;
    DiffGraphic graphic;
    for (int t = 0; t < paths; ++t) {
      graphic.controls.push_back(g.param(controls[t]));
      graphic.depths.push_back(g.param(depths[t]));
      graphic.colors.push_back(g.sigmoid(g.param(colors[t])));
    }
    const DiffArray loss = pyramid_loss(g, graphic, pyramid, raster);
    if (loss.item() < result.best_loss) {
      result.best_loss = loss.item();
      result.graphic = to_vector_graphic(graphic);
    }
    if (it == iters) break;
    result.best_so_far.push_back(result.best_loss);
    g.backward(loss);
    adam.step(params);
  }
  if (!result.best_so_far.empty()) result.best_so_far.back() = result.best_loss;
  return result;
}

std::vector<double> fit_decoder(Model& model, const RasterImage& target, const DecoderFitConfig& cfg) {
  if (cfg.iters < 0 || cfg.eval_every < 1) throw InvalidArgument("fit_decoder: invalid iteration counts");
  if (cfg.k_min < 1 || cfg.k_max < cfg.k_min || cfg.eval_k < 1) throw InvalidArgument("fit_decoder: invalid segment counts");
  const RasterConfig rc = at_resolution(cfg.raster, target);
  const ImagePyramid pyramid = gaussian_pyramid(target, cfg.levels);
  std::mt19937_64 rng(cfg.seed);
  Parameter z("latent", {1, static_cast<std::size_t>(model.config().latent_size)});
  for (double& v : z.value) v = standard_normal(rng);
  std::vector<Parameter*> params{&z};
  for (Parameter* p : model.main_parameters()) {
    if (p->name.rfind("encoder.", 0) != 0) params.push_back(p);
  }
  Adam adam(AdamConfig{cfg.learning_rate});
  std::vector<double> history;
  double best = std::numeric_limits<double>::infinity();
  auto evaluate = [&] {
    Graph g;
    const DiffArray zz = g.constant(z.shape, z.value);
    best = std::min(best, pyramid_loss(g, model.decode(g, zz, cfg.eval_k, 1, cfg.deform), pyramid, rc).item());
    history.push_back(best);
  };
  for (int it = 0; it < cfg.iters; ++it) {
    if (it % cfg.eval_every == 0) evaluate();
    const int k = std::uniform_int_distribution<int>(cfg.k_min, cfg.k_max)(rng);
    for (Parameter* p : params) p->zero_grad();
    Graph g;
    g.backward(pyramid_loss(g, model.decode(g, g.param(z), k, 1, cfg.deform), pyramid, rc));
    adam.step(params);
  }
  evaluate();
  return history;
}

std::vector<std::pair<int, double>> measure_loss_vs_segments(const RasterImage& target, int paths, int k_lo,
                                                             int k_hi, int iters, const DirectFitConfig& cfg) {
  if (k_lo < 1 || k_hi < k_lo) throw InvalidArgument("measure_loss_vs_segments: invalid segment range");
  std::vector<std::pair<int, double>> out;
  for (int n = k_lo; n <= k_hi; ++n) out.emplace_back(n, direct_fit(target, paths, n, iters, cfg).best_loss);
  return out;
}

std::vector<std::pair<int, double>> measure_loss_vs_segments(Model& model, std::span<const double> z,
                                                             const RasterImage& target, int paths, int k_lo,
                                                             int k_hi, const RasterConfig& raster, int levels) {
  if (k_lo < 1 || k_hi < k_lo) throw InvalidArgument("measure_loss_vs_segments: invalid segment range");
  const RasterConfig rc = at_resolution(raster, target);
  const ImagePyramid pyramid = gaussian_pyramid(target, levels);
  std::vector<std::pair<int, double>> out;
  for (int n = k_lo; n <= k_hi; ++n) {
    Graph g;
    const DiffArray zz = g.constant({1, z.size()}, {z.begin(), z.end()});
    out.emplace_back(n, pyramid_loss(g, model.decode(g, zz, n, paths), pyramid, rc).item());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Complexity curves

CurveFit fit_complexity_curve(std::span<const std::pair<int, double>> points) {
  const auto m = static_cast<Eigen::Index>(points.size());
  if (m < 4) throw InvalidArgument("fit_complexity_curve: need at least 4 points, got " + std::to_string(m));
  Eigen::VectorXd n(m), y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    n[i] = points[i].first;
    y[i] = points[i].second;
    if (!std::isfinite(y[i])) throw InvalidArgument("fit_complexity_curve: non-finite loss");
  }
  std::vector<int> ns(points.size());
  std::transform(points.begin(), points.end(), ns.begin(), [](const auto& p) { return p.first; });
  std::sort(ns.begin(), ns.end());
  if (std::adjacent_find(ns.begin(), ns.end()) != ns.end()) {
    throw InvalidArgument("fit_complexity_curve: segment counts must be distinct");
  }

  using Vec3 = Eigen::Vector3d;  // (a, b, c)
  auto residual = [&](const Vec3& p) -> Eigen::VectorXd {
    return (p[2] + (p[1] - p[0] * n.array()).exp() - y.array()).matrix();
  };
  auto sse = [&](const Vec3& p) {
    const double s = residual(p).squaredNorm();
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  };

  std::vector<std::string> diagnostics;
  Vec3 best = Vec3::Zero();
  double best_sse = std::numeric_limits<double>::infinity();
  for (double a0 : {0.01, 0.05, 0.2, 1.0, 5.0}) {
    // For fixed a the model is linear in (c, e^b).
    Eigen::MatrixXd design(m, 2);
    design.col(0).setOnes();
    design.col(1) = (-a0 * n.array()).exp().matrix();
    const Eigen::Vector2d lin = design.colPivHouseholderQr().solve(y);
    Vec3 p(a0, std::log(std::max(lin[1], 1e-300)), lin[0]);
    double s = sse(p);
    if (!std::isfinite(s)) {
      diagnostics.push_back("a0=" + std::to_string(a0) + ": non-finite start");
      continue;
    }
    // Levenberg-Marquardt with a > 0 enforced by rejection.
    double lambda = 1e-3;
    for (int it = 0; it < 500 && s > 0.0; ++it) {
      const Eigen::ArrayXd e = (p[1] - p[0] * n.array()).exp();
      Eigen::MatrixXd jac(m, 3);
      jac.col(0) = (-n.array() * e).matrix();
      jac.col(1) = e.matrix();
      jac.col(2).setOnes();
      const Eigen::VectorXd r = residual(p);
      const Eigen::Matrix3d jtj = jac.transpose() * jac;
      const Vec3 jtr = jac.transpose() * r;
      bool accepted = false;
      while (lambda < 1e20) {
        Eigen::Matrix3d lhs = jtj;
        lhs.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
        const Vec3 candidate = p - lhs.ldlt().solve(jtr);
        const double cs = candidate[0] > 0.0 ? sse(candidate) : std::numeric_limits<double>::infinity();
        if (cs < s) {
          const double change = (candidate - p).cwiseAbs().maxCoeff();
          p = candidate;
          s = cs;
          lambda = std::max(lambda * 0.1, 1e-15);
          accepted = change > 1e-15 * (1.0 + p.cwiseAbs().maxCoeff());
          break;
        }
        lambda *= 10.0;
      }
      if (!accepted) break;
    }
    if (!std::isfinite(s) || !(p[0] > 0.0)) {
      diagnostics.push_back("a0=" + std::to_string(a0) + ": diverged");
      continue;
    }
    if (s < best_sse) {
      best_sse = s;
      best = p;
    }
  }
  if (!std::isfinite(best_sse)) {
    std::string msg = "fit_complexity_curve: every start failed";
    for (const auto& d : diagnostics) msg += "; " + d;
    throw FitFailure(msg);
  }
  return {{best[0], best[1], best[2]}, std::sqrt(best_sse / static_cast<double>(m))};
}

double fit_auxiliary(Model& model, const std::vector<AuxExample>& examples, int steps, double learning_rate) {
  if (examples.empty()) throw InvalidArgument("fit_auxiliary: no examples");
  const auto params = model.auxiliary_parameters();
  Adam adam(AdamConfig{learning_rate});
  const double weight = 1.0 / static_cast<double>(examples.size());
  auto pass = [&](bool update) {
    for (Parameter* p : params) p->zero_grad();
    double total = 0.0;
    for (const AuxExample& ex : examples) {
      Graph g;
      const DiffArray pred = model.predict_complexity(g, g.constant({1, ex.z_t.size()}, ex.z_t));
      const DiffArray loss =
          g.scale(g.reduce_mse(pred, g.constant({1, 3}, {ex.curve.a, ex.curve.b, ex.curve.c})), weight);
      total += loss.item();
      if (update) g.backward(loss);
    }
    if (update) adam.step(params);
    return total;
  };
  for (int s = 0; s < steps; ++s) pass(true);
  return pass(false);
}

std::vector<AuxExample> train_auxiliary(Model& model, const std::vector<RasterImage>& images,
                                        const AuxTrainConfig& cfg) {
  if (images.empty()) throw InvalidArgument("train_auxiliary: empty dataset");
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), static_cast<std::size_t>(std::max(cfg.instances, 1))));
  const int paths = model.config().max_paths;
  std::vector<AuxExample> examples;
  for (std::size_t i : order) {
    const std::vector<double> z = model.encode_mean(images[i]);
    const auto points = measure_loss_vs_segments(model, z, images[i], paths, cfg.k_lo, cfg.k_hi, cfg.raster, cfg.levels);
    CurveFit fit;
    try {
      fit = fit_complexity_curve(points);
    } catch (const FitFailure&) {
      continue;
    }
    for (auto& z_t : model.path_latents(z, paths)) examples.push_back({std::move(z_t), fit.curve});
  }
  if (examples.empty()) throw FitFailure("train_auxiliary: no instance produced a curve fit");
  fit_auxiliary(model, examples, cfg.steps, cfg.learning_rate);
  return examples;
}

}  // namespace loopvec
