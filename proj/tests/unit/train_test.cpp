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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "loopvec/errors.hpp"
#include "test_support.hpp"

namespace loopvec {
namespace {

using diffnum::DiffArray;
using diffnum::Graph;
using diffnum::Parameter;

ModelConfig toy_config(int resolution) {
  ModelConfig c;
  c.resolution = resolution;
  c.input_channels = 1;
  c.latent_size = 8;
  c.path_latent_size = 7;
  c.encoder_filters = {4, 8, 8};
  c.decoder_channels = {10, 16, 16, 2};
  c.deform_channels = {10, 16, 1};
  c.aux_channels = {7, 16, 3};
  c.lstm_hidden = 8;
  c.mono_color = {1.0, 1.0, 1.0};
  return c;
}

TrainConfig toy_train(int resolution, std::uint64_t seed) {
  TrainConfig t;
  t.batch_size = 4;
  t.levels = 3;
  t.k_min = 4;
  t.k_max = 8;
  t.seed = seed;
  t.learning_rate = 3e-3;
  t.raster.resolution = resolution;
  t.raster.background = {0.0, 0.0, 0.0};
  return t;
}

// White disks of varying radius and centre on black.
std::vector<RasterImage> disk_dataset(int n, int res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RasterImage> out;
  for (int i = 0; i < n; ++i) {
    const double r = 0.15 + 0.15 * u(rng), cx = 0.35 + 0.3 * u(rng), cy = 0.35 + 0.3 * u(rng);
    RasterImage img(res, res, 1);
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x) {
        const double px = (x + 0.5) / res, py = (y + 0.5) / res;
        img.at(0, y, x) = std::hypot(px - cx, py - cy) < r ? 1.0 : 0.0;
      }
    out.push_back(std::move(img));
  }
  return out;
}

RasterImage filled_disk(int res, double r) {
  RasterImage img(res, res, 1);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) {
      double s = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double px = (x + (a + 0.5) / 4) / res, py = (y + (b + 0.5) / 4) / res;
          s += std::hypot(px - 0.5, py - 0.5) < r ? 1.0 : 0.0;
        }
      img.at(0, y, x) = 1.0 - s / 16.0;
    }
  return img;
}

double image_mse(const RasterImage& a, const RasterImage& b) {
  const RasterImage ra = to_rgb(a), rb = to_rgb(b);
  double s = 0.0;
  for (std::size_t i = 0; i < ra.data.size(); ++i) s += (ra.data[i] - rb.data[i]) * (ra.data[i] - rb.data[i]);
  return s / static_cast<double>(ra.data.size());
}

std::vector<std::vector<double>> snapshot(Model& m) {
  std::vector<std::vector<double>> out;
  for (Parameter* p : m.parameters()) out.push_back(p->value);
  return out;
}

// ---------------------------------------------------------------------------
// Adam

TEST(AdamTest, ZeroGradientLeavesValues) {
  std::vector<double> x{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState s;
  for (int t = 1; t <= 5; ++t) adam_step(x, g, s, t, {});
  EXPECT_EQ(x, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(AdamTest, FirstStepIsLearningRateTimesSign) {
  std::vector<double> x{0.0, 0.0, 0.0};
  const std::vector<double> g{0.3, -5.0, 1e-3};
  AdamState s;
  adam_step(x, g, s, 1, AdamConfig{0.01});
  // m_hat = g and v_hat = g^2 at t = 1.
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
}

TEST(AdamTest, MinimizesQuadraticBowl) {
  std::vector<double> x{3.0, -2.0, 0.5, 1.5};
  const std::vector<double> scale{1.0, 10.0, 0.1, 3.0};
  AdamState s;
  int steps = 0;
  auto norm = [&] { return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0)); };
  while (norm() >= 1e-3 && steps < 2000) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * scale[i] * x[i];
    adam_step(x, g, s, ++steps, AdamConfig{0.05});
  }
  EXPECT_LT(norm(), 1e-3);
  EXPECT_LE(steps, 2000);
}

TEST(AdamTest, SizeMismatchRejected) {
  std::vector<double> x(3, 0.0);
  AdamState s;
  EXPECT_THROW(adam_step(x, std::vector<double>(2, 0.0), s, 1, {}), InvalidArgument);
  adam_step(x, std::vector<double>(3, 1.0), s, 1, {});
  std::vector<double> y(4, 0.0);
  EXPECT_THROW(adam_step(y, std::vector<double>(4, 0.0), s, 2, {}), InvalidArgument);

  Parameter a("a", {2}), b("b", {2});
  a.zero_grad();
  b.zero_grad();
  Adam adam;
  std::vector<Parameter*> one{&a}, two{&a, &b};
  adam.step(one);
  EXPECT_THROW(adam.step(two), InvalidArgument);
}

// ---------------------------------------------------------------------------
// VAE training

TEST(TrainConfigTest, Validation) {
  TrainConfig t = toy_train(16, 0);
  EXPECT_NO_THROW(t.validate());
  t.levels = 5;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = toy_train(16, 0);
  t.learning_rate = 0.0;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = toy_train(16, 0);
  t.k_max = 3;
  EXPECT_THROW(t.validate(), InvalidArgument);
  t = toy_train(16, 0);
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), InvalidArgument);
}

TEST(VaeTrainerTest, SelfRenderedTargetGivesZeroLoss) {
  const int res = 16;
  ModelConfig mc = toy_config(res);
  mc.input_channels = 3;
  Model m(mc, 3);
  // Collapse the posterior so z equals the mean exactly.
  auto& lb = m.parameter("encoder.logvar.bias").value;
  std::fill(lb.begin(), lb.end(), -200.0);
  std::fill(m.parameter("encoder.logvar.weight").value.begin(), m.parameter("encoder.logvar.weight").value.end(), 0.0);
  std::fill(m.parameter("encoder.mu.weight").value.begin(), m.parameter("encoder.mu.weight").value.end(), 0.0);
  std::mt19937_64 rng(4);
  auto& mb = m.parameter("encoder.mu.bias").value;
  mb = testing::uniform_values(mb.size(), rng);

  TrainConfig t = toy_train(res, 1);
  t.kl_weight = 0.0;
  t.levels = 1;
  t.k_min = t.k_max = 5;
  t.batch_size = 1;
  Graph g;
  const DiffArray z = g.constant({1, mb.size()}, mb);
  const DiffArray img = render_graphic(g, m.decode(g, z, 5, 1), t.raster, 0);
  RasterImage target(res, res, 3);
  target.data.assign(img.values().begin(), img.values().end());

  VaeTrainer trainer(m, t, {target});
  EXPECT_EQ(trainer.step().loss, 0.0);
}

TEST(VaeTrainerTest, IdenticalSeedsGiveIdenticalRuns) {
  const auto data = disk_dataset(6, 16, 1);
  Model a(toy_config(16), 9), b(toy_config(16), 9);
  VaeTrainer ta(a, toy_train(16, 5), data), tb(b, toy_train(16, 5), data);
  for (int i = 0; i < 3; ++i) {
    const StepMetrics ma = ta.step(), mb = tb.step();
    EXPECT_EQ(ma.loss, mb.loss);
    EXPECT_EQ(ma.segments, mb.segments);
  }
  EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(VaeTrainerTest, ResumeMatchesUninterruptedRun) {
  const auto data = disk_dataset(6, 16, 2);
  Model full(toy_config(16), 4);
  VaeTrainer tf(full, toy_train(16, 8), data);
  tf.run(3);
  const auto params = snapshot(full);
  const std::string rng = tf.rng_state();
  const auto adam_state = tf.optimizer().state();
  const auto adam_steps = tf.optimizer().steps();
  const auto tail = tf.run(2);

  Model resumed(toy_config(16), 123);
  auto rp = resumed.parameters();
  for (std::size_t i = 0; i < rp.size(); ++i) rp[i]->value = params[i];
  VaeTrainer tr(resumed, toy_train(16, 8), data);
  tr.restore(3, rng);
  tr.optimizer().restore(adam_steps, adam_state);
  const auto again = tr.run(2);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(again[i].step, tail[i].step);
    EXPECT_EQ(again[i].loss, tail[i].loss);
  }
  EXPECT_EQ(snapshot(resumed), snapshot(full));
}

TEST(VaeTrainerTest, NonFiniteParameterAbortsWithStepIndex) {
  const auto data = disk_dataset(4, 16, 3);
  Model m(toy_config(16), 1);
  VaeTrainer t(m, toy_train(16, 0), data);
  t.step();
  m.parameter("decoder.0.weight").value[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("training step 2"), std::string::npos) << e.what();
  }
}

TEST(VaeTrainerTest, LossDropsOnToySet) {
  const auto data = disk_dataset(16, 16, 4);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    Model m(toy_config(16), seed);
    TrainConfig cfg = toy_train(16, seed);
    cfg.batch_size = 8;
    VaeTrainer t(m, cfg, data);
    const auto metrics = t.run(200);
    double last = 0.0;
    for (int i = 0; i < 10; ++i) last += metrics[metrics.size() - 10 + i].loss / 10.0;
    EXPECT_LT(last, 0.25 * metrics.front().loss) << "seed " << seed;
    for (const auto& mm : metrics) ASSERT_TRUE(std::isfinite(mm.loss));
  }
}

TEST(VaeTrainerTest, MetricsLineIsJson) {
  StepMetrics m;
  m.step = 7;
  m.loss = 0.5;
  m.recon = 0.4;
  m.kl = 10.0;
  m.segments = 9;
  const auto j = nlohmann::json::parse(m.json());
  EXPECT_EQ(j["step"], 7);
  EXPECT_EQ(j["loss"], 0.5);
  EXPECT_EQ(j["segments"], 9);
  EXPECT_TRUE(j.contains("wall_time"));
  EXPECT_EQ(m.json().find('\n'), std::string::npos);
  std::ostringstream log;
  const auto data = disk_dataset(4, 16, 3);
  Model model(toy_config(16), 1);
  VaeTrainer(model, toy_train(16, 0), data).run(2, &log);
  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    EXPECT_EQ(nlohmann::json::parse(line)["step"], ++count);
  }
  EXPECT_EQ(count, 2);
}

TEST(VaeTrainerTest, MismatchedImagesRejected) {
  Model m(toy_config(16), 1);
  EXPECT_THROW(VaeTrainer(m, toy_train(16, 0), {}), InvalidArgument);
  EXPECT_THROW(VaeTrainer(m, toy_train(16, 0), disk_dataset(2, 32, 0)), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Direct fitting

TEST(DirectFitTest, RecoversSelfRenderedPath) {
  const int res = 32;
  std::vector<Point2> c;
  const Point2 corners[4] = {{0.25, 0.3}, {0.75, 0.2}, {0.7, 0.75}, {0.3, 0.7}};
  for (int i = 0; i < 4; ++i) {
    const Point2 a = corners[i], b = corners[(i + 1) % 4];
    c.push_back(a);
    c.push_back(a + (1.0 / 3.0) * (b - a) + Point2{0.03, -0.02});
    c.push_back(a + (2.0 / 3.0) * (b - a) + Point2{-0.02, 0.03});
  }
  VectorGraphic known;
  known.add(ClosedPath(c), 0.0, {0.2, 0.3, 0.4});
  DirectFitConfig cfg;
  cfg.raster.resolution = res;
  cfg.levels = 1;
  const RasterImage target = render_graphic(known, cfg.raster, 0);
  const DirectFitResult r = direct_fit(target, 1, 4, 1500, cfg);
  EXPECT_LT(image_mse(render_graphic(r.graphic, cfg.raster, 0), target), 1e-4);
}

TEST(DirectFitTest, BestSoFarNeverIncreases) {
  DirectFitConfig cfg;
  cfg.raster.resolution = 32;
  cfg.learning_rate = 0.2;  // large enough for the raw loss to oscillate
  const DirectFitResult r = direct_fit(filled_disk(32, 0.3), 2, 5, 200, cfg);
  ASSERT_EQ(r.best_so_far.size(), 200u);
  for (std::size_t i = 1; i < r.best_so_far.size(); ++i) EXPECT_LE(r.best_so_far[i], r.best_so_far[i - 1]);
  EXPECT_EQ(r.best_so_far.back(), r.best_loss);
  EXPECT_NEAR(pyramid_loss(r.graphic, filled_disk(32, 0.3), cfg.levels, cfg.raster), r.best_loss, 1e-12);
}

TEST(DirectFitTest, FilledDiskReconstructed) {
  const RasterImage target = filled_disk(64, 0.3);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    DirectFitConfig cfg;
    cfg.seed = seed;
    cfg.raster.resolution = 64;
    const DirectFitResult r = direct_fit(target, 1, 8, 500, cfg);
    EXPECT_LT(image_mse(render_graphic(r.graphic, cfg.raster, 0), target), 5e-3) << "seed " << seed;
  }
}

TEST(DirectFitTest, BlankTargetCollapsesPaths) {
  RasterImage blank(32, 32, 1);
  std::fill(blank.data.begin(), blank.data.end(), 1.0);
  DirectFitConfig cfg;
  cfg.raster.resolution = 32;
  const DirectFitResult r = direct_fit(blank, 2, 6, 8000, cfg);
  EXPECT_EQ(r.graphic.size(), 2u);
  EXPECT_TRUE(discard_degenerate(r.graphic).empty());
}

TEST(DirectFitTest, InvalidArgumentsRejected) {
  DirectFitConfig cfg;
  cfg.raster.resolution = 16;
  const RasterImage t = filled_disk(16, 0.3);
  EXPECT_THROW(direct_fit(t, 0, 4, 10, cfg), InvalidArgument);
  EXPECT_THROW(direct_fit(t, 1, 0, 10, cfg), InvalidArgument);
  EXPECT_THROW(direct_fit(RasterImage(16, 8, 1), 1, 4, 10, cfg), InvalidArgument);
}

TEST(FitDecoderTest, HistoryIsNonIncreasingAndDeformOffKeepsDeformer) {
  const RasterImage t = filled_disk(16, 0.3);
  ModelConfig mc = toy_config(16);
  mc.mono_color = {0.0, 0.0, 0.0};
  Model m(mc, 2);
  const auto before = m.parameter("deformer.1.weight").value;
  DecoderFitConfig cfg;
  cfg.iters = 40;
  cfg.eval_every = 10;
  cfg.k_min = 4;
  cfg.k_max = 6;
  cfg.eval_k = 4;
  cfg.levels = 2;
  cfg.deform = false;
  cfg.learning_rate = 1e-2;
  cfg.raster.resolution = 16;
  const auto h = fit_decoder(m, t, cfg);
  ASSERT_EQ(h.size(), 5u);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1]);
  EXPECT_LT(h.back(), h.front());
  EXPECT_EQ(m.parameter("deformer.1.weight").value, before);
}

TEST(MeasureLossTest, DirectModeShapeAndTrend) {
  DirectFitConfig cfg;
  cfg.raster.resolution = 32;
  // A square needs more segments than a circle does; losses should fall.
  RasterImage square(32, 32, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) square.at(0, y, x) = (x >= 8 && x < 24 && y >= 8 && y < 24) ? 0.0 : 1.0;
  const auto pts = measure_loss_vs_segments(square, 1, 1, 8, 150, cfg);
  ASSERT_EQ(pts.size(), 8u);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(pts[i].first, static_cast<int>(i) + 1);
  // Spearman rank correlation of (N, loss).
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return pts[a].second < pts[b].second; });
  std::vector<double> rank(pts.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<double>(r);
  const double n = static_cast<double>(pts.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) d2 += (rank[i] - static_cast<double>(i)) * (rank[i] - static_cast<double>(i));
  const double spearman = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
  EXPECT_LT(spearman, 0.0);
}

TEST(MeasureLossTest, ModelModeSelfTargetIsZeroAtItsOwnCount) {
  const int res = 16;
  Model m(toy_config(res), 6);
  std::mt19937_64 rng(6);
  const auto z = testing::uniform_values(8, rng);
  RasterConfig rc;
  rc.resolution = res;
  Graph g;
  const DiffArray img = render_graphic(g, m.decode(g, g.constant({1, 8}, z), 5, 1), rc, 0);
  RasterImage target(res, res, 3);
  target.data.assign(img.values().begin(), img.values().end());
  const auto pts = measure_loss_vs_segments(m, z, target, 1, 3, 7, rc, 1);
  ASSERT_EQ(pts.size(), 5u);
  EXPECT_EQ(pts[2].first, 5);
  EXPECT_EQ(pts[2].second, 0.0);
}

// ---------------------------------------------------------------------------
// Complexity curves

std::vector<std::pair<int, double>> curve_points(const ComplexityCurve& c, int lo, int hi) {
  std::vector<std::pair<int, double>> out;
  for (int n = lo; n <= hi; ++n) out.emplace_back(n, c(n));
  return out;
}

TEST(CurveFitTest, RecoversPlantedParameters) {
  const CurveFit f = fit_complexity_curve(curve_points({0.5, 2.0, 0.01}, 7, 25));
  EXPECT_NEAR(f.curve.a, 0.5, 1e-6);
  EXPECT_NEAR(f.curve.b, 2.0, 1e-6);
  EXPECT_NEAR(f.curve.c, 0.01, 1e-6);
  EXPECT_LT(f.rms, 1e-10);
}

TEST(CurveFitTest, RecoversRandomPlantedCurves) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> la(std::log(0.05), std::log(2.0)), ub(-1.0, 6.0), uc(0.0, 0.05);
  for (int trial = 0; trial < 50; ++trial) {
    const ComplexityCurve c{std::exp(la(rng)), ub(rng), uc(rng)};
    const CurveFit f = fit_complexity_curve(curve_points(c, 7, 25));
    EXPECT_NEAR(f.curve.a, c.a, 1e-6 * std::max(1.0, c.a));
    EXPECT_NEAR(f.curve.b, c.b, 1e-6 * std::max(1.0, std::abs(c.b)));
    EXPECT_NEAR(f.curve.c, c.c, 1e-6);
    EXPECT_LT(f.rms, 1e-10);
  }
}

TEST(CurveFitTest, ConstantShiftMovesOnlyC) {
  auto pts = curve_points({0.3, 1.0, 0.02}, 7, 25);
  const CurveFit base = fit_complexity_curve(pts);
  for (auto& p : pts) p.second += 0.5;
  const CurveFit shifted = fit_complexity_curve(pts);
  EXPECT_NEAR(shifted.curve.a, base.curve.a, 1e-7);
  EXPECT_NEAR(shifted.curve.b, base.curve.b, 1e-7);
  EXPECT_NEAR(shifted.curve.c, base.curve.c + 0.5, 1e-7);
}

TEST(CurveFitTest, OnePercentNoiseStaysWithinFivePercent) {
  const ComplexityCurve planted{0.5, 2.0, 0.01};
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.01);
  auto pts = curve_points(planted, 7, 25);
  for (auto& p : pts) p.second *= 1.0 + noise(rng);
  const CurveFit f = fit_complexity_curve(pts);
  EXPECT_NEAR(f.curve.a, planted.a, 0.05 * planted.a);
  EXPECT_NEAR(f.curve.b, planted.b, 0.05 * planted.b);
  EXPECT_NEAR(f.curve.c, planted.c, 0.05 * planted.c);
}

TEST(CurveFitTest, InvalidInputsRejected) {
  EXPECT_THROW(fit_complexity_curve(curve_points({0.5, 2.0, 0.0}, 7, 9)), InvalidArgument);
  auto pts = curve_points({0.5, 2.0, 0.0}, 7, 12);
  pts[1].first = pts[0].first;
  EXPECT_THROW(fit_complexity_curve(pts), InvalidArgument);
  pts = curve_points({0.5, 2.0, 0.0}, 7, 12);
  pts[3].second = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(fit_complexity_curve(pts), InvalidArgument);
}

TEST(AuxiliaryTest, SingleInstanceOverfitsWithinOnePercent) {
  Model m(toy_config(16), 7);
  const auto main_before = snapshot(m);
  std::mt19937_64 rng(8);
  const AuxExample ex{testing::uniform_values(7, rng), {0.4, 1.5, 0.02}};
  fit_auxiliary(m, {ex}, 3000, 1e-2);
  const ComplexityCurve p = m.predict_complexity(ex.z_t);
  EXPECT_NEAR(p.a, 0.4, 0.004);
  EXPECT_NEAR(p.b, 1.5, 0.015);
  EXPECT_NEAR(p.c, 0.02, 0.0002);
  // Only the auxiliary head moved.
  const auto after = snapshot(m);
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name.rfind("auxiliary.", 0) != 0) EXPECT_EQ(after[i], main_before[i]) << params[i]->name;
  }
}

TEST(AuxiliaryTest, TrainAuxiliaryProducesValidCurves) {
  Model m(toy_config(16), 3);
  AuxTrainConfig cfg;
  cfg.instances = 3;
  cfg.k_lo = 4;
  cfg.k_hi = 10;
  cfg.steps = 50;
  cfg.levels = 2;
  cfg.raster.resolution = 16;
  cfg.raster.background = {0.0, 0.0, 0.0};
  // A freshly initialized model's loss barely depends on N, so some fits
  // may fail; every returned example must still carry a valid curve.
  std::vector<AuxExample> examples;
  try {
    examples = train_auxiliary(m, disk_dataset(5, 16, 9), cfg);
  } catch (const FitFailure&) {
    GTEST_SKIP() << "no instance produced a fit";
  }
  for (const auto& ex : examples) {
    EXPECT_EQ(ex.z_t.size(), 7u);
    EXPECT_GT(ex.curve.a, 0.0);
    const ComplexityCurve p = m.predict_complexity(ex.z_t);
    EXPECT_GT(p.a, 0.0);
    EXPECT_GT(p.c, 0.0);
  }
}

}  // namespace
}  // namespace loopvec
