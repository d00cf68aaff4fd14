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

#include "loopvec/model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "loopvec/errors.hpp"
#include "test_support.hpp"

namespace loopvec {
namespace {

using diffnum::DiffArray;
using diffnum::Graph;
using diffnum::Parameter;

ModelConfig tiny_config(int resolution = 16) {
  ModelConfig c;
  c.resolution = resolution;
  c.input_channels = 1;
  c.latent_size = 6;
  c.path_latent_size = 5;
  c.encoder_filters = {3, 4};
  c.decoder_channels = {8, 6, 2};
  c.deform_channels = {8, 6, 1};
  c.aux_channels = {5, 6, 3};
  c.lstm_hidden = 4;
  c.max_paths = 3;
  c.k_min = 2;
  c.k_max = 4;
  return c;
}

void fill_all(Model& m, double v) {
  for (Parameter* p : m.parameters()) std::fill(p->value.begin(), p->value.end(), v);
}

void randomize(Model& m, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  for (Parameter* p : m.parameters()) p->value = testing::uniform_values(p->size(), rng, -scale, scale);
}

RasterImage random_image(int res, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RasterImage img(res, res, channels);
  img.data = testing::uniform_values(img.data.size(), rng, 0.0, 1.0);
  return img;
}

using ModelLoss = std::function<DiffArray(Graph&)>;

// Worst relative error of reverse-mode parameter gradients against central
// differences over a random subset of parameter components.
double parameter_gradient_error(Model& m, const ModelLoss& loss, double h, std::size_t components,
                                std::uint64_t seed = 3) {
  auto params = m.parameters();
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  double scale = 0.0;
  std::vector<std::pair<Parameter*, std::size_t>> picks;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      scale = std::max(scale, std::abs(p->grad[i]));
      picks.emplace_back(p, i);
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(picks.begin(), picks.end(), rng);
  if (picks.size() > components) picks.resize(components);
  auto value = [&] {
    Graph g;
    return loss(g).item();
  };
  double worst = 0.0;
  for (auto [p, i] : picks) {
    const double x0 = p->value[i];
    p->value[i] = x0 + h;
    const double fp = value();
    p->value[i] = x0 - h;
    const double fm = value();
    p->value[i] = x0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = p->grad[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3 * scale, 1e-300});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------

TEST(ModelConfigTest, DefaultChainsConnect) {
  const ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.fused_channels(), 170);
  EXPECT_EQ(c.encoded_side(), 2);
  EXPECT_NO_THROW(ModelConfig::desk().validate());
}

TEST(ModelConfigTest, BrokenChainsRejected) {
  ModelConfig c = tiny_config();
  c.decoder_channels = {7, 6, 2};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.deform_channels = {8, 6, 2};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.aux_channels = {6, 6, 3};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.k_max = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(ModelTest, ParameterNamesUnique) {
  Model m(tiny_config(), 1);
  auto params = m.parameters();
  std::vector<std::string> names;
  for (auto* p : params) names.push_back(p->name);
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
  EXPECT_EQ(m.main_parameters().size() + m.auxiliary_parameters().size(), params.size());
  EXPECT_NO_THROW(m.parameter("decoder.0.weight"));
  EXPECT_THROW(m.parameter("nope"), InvalidArgument);
}

TEST(ModelTest, SameSeedSameInit) {
  Model a(tiny_config(), 5), b(tiny_config(), 5), c(tiny_config(), 6);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    differs = differs || pa[i]->value != pc[i]->value;
  }
  EXPECT_TRUE(differs);
}

TEST(EncodeTest, DefaultShapes) {
  Model m(ModelConfig{}, 1);
  Graph g;
  const LatentCode code = m.encode(g, image_input(g, random_image(64, 1, 2), 3));
  EXPECT_EQ(code.mu.shape(), (diffnum::Shape{1, 128}));
  EXPECT_EQ(code.logvar.shape(), (diffnum::Shape{1, 128}));
  EXPECT_EQ(m.parameter("encoder.mu.weight").value.size(), 2048u * 128u);
}

TEST(EncodeTest, WrongResolutionRejected) {
  Model m(tiny_config(), 1);
  Graph g;
  EXPECT_THROW(m.encode(g, image_input(g, random_image(8, 1, 2), 1)), InvalidArgument);
  EXPECT_THROW(image_input(g, random_image(16, 3, 2), 1), InvalidArgument);
}

TEST(EncodeTest, ZeroWeightsGiveBiases) {
  Model m(tiny_config(), 1);
  fill_all(m, 0.0);
  std::mt19937_64 rng(4);
  auto& mb = m.parameter("encoder.mu.bias").value;
  auto& lb = m.parameter("encoder.logvar.bias").value;
  mb = testing::uniform_values(mb.size(), rng);
  lb = testing::uniform_values(lb.size(), rng);
  Graph g;
  const LatentCode code = m.encode(g, image_input(g, random_image(16, 1, 2), 1));
  for (std::size_t i = 0; i < mb.size(); ++i) {
    EXPECT_EQ(code.mu.values()[i], mb[i]);
    EXPECT_EQ(code.logvar.values()[i], lb[i]);
  }
}

TEST(EncodeTest, GradientMatchesFiniteDifferences) {
  Model m(tiny_config(), 11);
  const RasterImage img = random_image(16, 1, 12);
  const ModelLoss loss = [&](Graph& g) {
    const LatentCode c = m.encode(g, image_input(g, img, 1));
    return g.add(g.sum(g.mul(c.mu, c.mu)), g.sum(g.sin(c.logvar)));
  };
  EXPECT_LT(parameter_gradient_error(m, loss, 1e-6, 200), 1e-4);
}

TEST(ReparameterizeTest, Identities) {
  Graph g;
  const LatentCode code{g.constant({1, 3}, {0.5, -1.0, 2.0}), g.constant({1, 3}, {0.0, 0.0, 0.0})};
  const std::vector<double> zero(3, 0.0), n{0.3, -0.2, 1.1};
  const DiffArray z0 = reparameterize(g, code, zero);
  const DiffArray z1 = reparameterize(g, code, n);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(z0.values()[i], code.mu.values()[i]);
    EXPECT_DOUBLE_EQ(z1.values()[i], code.mu.values()[i] + n[i]);
  }
  EXPECT_THROW(reparameterize(g, code, std::vector<double>(2, 0.0)), InvalidArgument);
}

TEST(ReparameterizeTest, MonteCarloMoments) {
  const std::vector<double> mu{1.0, -2.0}, logvar{0.5, -1.0};
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal;
  double sum[2] = {0, 0}, sq[2] = {0, 0};
  const int draws = 100000;
  for (int d = 0; d < draws; ++d) {
    Graph g;
    const LatentCode code{g.constant({1, 2}, mu), g.constant({1, 2}, logvar)};
    const std::vector<double> noise{normal(rng), normal(rng)};
    const DiffArray z = reparameterize(g, code, noise);
    for (int i = 0; i < 2; ++i) {
      sum[i] += z.values()[i];
      sq[i] += z.values()[i] * z.values()[i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    const double mean = sum[i] / draws, var = sq[i] / draws - mean * mean;
    EXPECT_NEAR(mean, mu[i], 0.02 * std::abs(mu[i]));
    EXPECT_NEAR(var, std::exp(logvar[i]), 0.02 * std::exp(logvar[i]));
  }
}

TEST(UnrollTest, ShapesAndZeroParameters) {
  ModelConfig cfg = tiny_config();
  cfg.color_mode = ColorMode::kLearned;
  Model m(cfg, 1);
  fill_all(m, 0.0);
  std::mt19937_64 rng(3);
  auto& bias = m.parameter("unroller.head.bias").value;
  bias = testing::uniform_values(bias.size(), rng);
  Graph g;
  const auto codes = m.unroll_paths(g, g.constant({1, 6}, testing::uniform_values(6, rng)), 3);
  ASSERT_EQ(codes.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    ASSERT_EQ(codes[t].z.shape(), (diffnum::Shape{1, 5}));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(codes[t].z.values()[i], bias[i]);
    EXPECT_DOUBLE_EQ(codes[t].depth.item(), bias[5] + 0.1 * static_cast<double>(t));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(codes[t].color.values()[c], 1.0 / (1.0 + std::exp(-bias[6 + c])));
  }
  EXPECT_EQ(m.unroll_paths(g, g.constant({1, 6}, std::vector<double>(6, 0.0)), 1).size(), 1u);
  EXPECT_THROW(m.unroll_paths(g, g.constant({1, 6}, std::vector<double>(6, 0.0)), 0), InvalidArgument);
}

TEST(UnrollTest, MonoColorIsConstant) {
  ModelConfig cfg = tiny_config();
  cfg.mono_color = {0.2, 0.4, 0.6};
  Model m(cfg, 1);
  Graph g;
  const auto codes = m.unroll_paths(g, g.constant({1, 6}, std::vector<double>(6, 0.3)), 2);
  for (const auto& c : codes) {
    EXPECT_EQ(c.color.values()[0], 0.2);
    EXPECT_EQ(c.color.values()[2], 0.6);
    EXPECT_FALSE(c.color.requires_grad());
  }
}

TEST(UnrollTest, GradientMatchesFiniteDifferences) {
  ModelConfig cfg = tiny_config();
  cfg.color_mode = ColorMode::kLearned;
  Model m(cfg, 21);
  std::mt19937_64 rng(22);
  const auto z = testing::uniform_values(6, rng);
  const ModelLoss loss = [&](Graph& g) {
    const auto codes = m.unroll_paths(g, g.constant({1, 6}, z), 3);
    DiffArray acc = g.constant({1}, {0.0});
    for (std::size_t t = 0; t < codes.size(); ++t) {
      acc = g.add(acc, g.scale(g.sum(g.sin(codes[t].z)), static_cast<double>(t + 1)));
      acc = g.add(acc, g.mul(codes[t].depth, codes[t].depth));
      acc = g.add(acc, g.sum(codes[t].color));
    }
    return acc;
  };
  EXPECT_LT(parameter_gradient_error(m, loss, 1e-6, 300), 1e-5);
}

TEST(DeformTest, InitialOffsetsAreZero) {
  Model m(tiny_config(), 1);
  Graph g;
  const DiffArray d = m.deform_samples(g, g.constant({1, 5}, {0.1, 0.2, 0.3, 0.4, 0.5}), 4);
  ASSERT_EQ(d.shape(), (diffnum::Shape{1, 12}));
  for (double v : d.values()) EXPECT_EQ(v, 0.0);
}

TEST(DeformTest, OffsetsBoundedAndOrderPreserved) {
  Model m(tiny_config(), 1);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    randomize(m, 100 + trial, 3.0);
    const int k = 2 + trial % 3;
    const std::size_t n = 3 * static_cast<std::size_t>(k);
    Graph g;
    const DiffArray d = m.deform_samples(g, g.constant({1, 5}, testing::uniform_values(5, rng, -3, 3)), k);
    const double spacing = 2.0 * std::numbers::pi / static_cast<double>(n);
    std::vector<double> theta(n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LT(std::abs(d.values()[i]), spacing);
      theta[i] = spacing * static_cast<double>(i) + d.values()[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double next = i + 1 < n ? theta[i + 1] : theta[0] + 2.0 * std::numbers::pi;
      EXPECT_GT(next, theta[i]);
    }
  }
}

TEST(DeformTest, GradientMatchesFiniteDifferences) {
  Model m(tiny_config(), 1);
  randomize(m, 31, 0.5);
  std::mt19937_64 rng(32);
  const auto z = testing::uniform_values(5, rng);
  const ModelLoss loss = [&](Graph& g) {
    return g.sum(g.sin(g.scale(m.deform_samples(g, g.constant({1, 5}, z), 3), 7.0)));
  };
  EXPECT_LT(parameter_gradient_error(m, loss, 1e-6, 300), 1e-5);
}

TEST(FuseTest, UnitCircleAndFlags) {
  Model m(tiny_config(), 1);
  Graph g;
  std::mt19937_64 rng(5);
  const DiffArray fused = m.fuse(g, g.constant({1, 5}, testing::uniform_values(5, rng)), 3,
                                 g.constant({1, 9}, testing::uniform_values(9, rng, -0.3, 0.3)));
  ASSERT_EQ(fused.shape(), (diffnum::Shape{8, 9}));
  const auto v = fused.values();
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(std::hypot(v[i], v[9 + i]), 1.0, 1e-9);
    EXPECT_EQ(v[18 + i], i % 3 == 0 ? 1.0 : 0.0);
  }
}

TEST(DecodePathTest, ZeroParametersGiveCenterPoint) {
  Model m(tiny_config(), 1);
  fill_all(m, 0.0);
  Graph g;
  const DiffArray z = g.constant({1, 5}, {0.1, 0.2, 0.3, 0.4, 0.5});
  const DiffArray ctrl = m.decode_path(g, z, 3, m.deform_samples(g, z, 3));
  ASSERT_EQ(ctrl.shape(), (diffnum::Shape{9, 2}));
  for (double v : ctrl.values()) EXPECT_EQ(v, 0.5);
}

TEST(DecodePathTest, ControlsStrictlyInsideCanvas) {
  Model m(tiny_config(), 1);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    randomize(m, 200 + trial, 2.0);
    Graph g;
    const DiffArray z = g.constant({1, 5}, testing::uniform_values(5, rng, -2, 2));
    for (double v : m.decode_path(g, z, 4, m.deform_samples(g, z, 4)).values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(DecodePathTest, ShiftEquivariantExactly) {
  Model m(tiny_config(), 1);
  randomize(m, 41, 1.0);
  std::mt19937_64 rng(42);
  const std::size_t n = 12;
  const auto buffer = testing::uniform_values(8 * n, rng);
  for (std::size_t r : {1u, 5u}) {
    std::vector<double> rotated(buffer.size());
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t i = 0; i < n; ++i) rotated[c * n + (i + r) % n] = buffer[c * n + i];
    Graph g;
    const auto a = m.decode_fused(g, g.constant({8, n}, buffer)).values();
    const auto b = m.decode_fused(g, g.constant({8, n}, rotated)).values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(b[((i + r) % n) * 2 + d], a[i * 2 + d]);
  }
}

TEST(DecodeGraphicTest, ZeroParametersLeaveNoPaths) {
  Model m(tiny_config(), 1);
  fill_all(m, 0.0);
  const std::vector<double> z(6, 0.4);
  EXPECT_TRUE(m.decode_graphic(z, 3, 3).empty());
}

TEST(DecodeGraphicTest, AtMostTPathsAndDeterministic) {
  Model m(tiny_config(), 1);
  randomize(m, 51, 1.0);
  std::mt19937_64 rng(52);
  const auto z = testing::uniform_values(6, rng);
  const std::vector<int> segs{2, 3, 4};
  const VectorGraphic a = m.decode_graphic(z, segs);
  const VectorGraphic b = m.decode_graphic(z, segs);
  ASSERT_LE(a.size(), 3u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.depths[i], b.depths[i]);
    const auto ca = a.paths[i].controls(), cb = b.paths[i].controls();
    ASSERT_EQ(ca.size(), cb.size());
    for (std::size_t j = 0; j < ca.size(); ++j) {
      EXPECT_EQ(ca[j].x, cb[j].x);
      EXPECT_EQ(ca[j].y, cb[j].y);
    }
  }
}

TEST(DecodeGraphicTest, EndToEndGradientMatchesFiniteDifferences) {
  Model m(tiny_config(), 61);
  randomize(m, 62, 0.8);
  const RasterImage img = random_image(16, 1, 63);
  RasterConfig rc;
  rc.resolution = 16;
  const ImagePyramid target = gaussian_pyramid(to_rgb(img), 2);
  const std::vector<double> noise{0.3, -0.1, 0.5, 0.2, -0.4, 0.1};
  const ModelLoss loss = [&](Graph& g) {
    const LatentCode code = m.encode(g, image_input(g, img, 1));
    const DiffArray z = reparameterize(g, code, noise);
    return pyramid_loss(g, m.decode(g, z, 3, 2), target, rc);
  };
  // Coverage is piecewise linear in the controls; a small step keeps the
  // central difference on one side of the band-edge creases.
  EXPECT_LT(parameter_gradient_error(m, loss, 1e-7, 300), 1e-3);
}

TEST(ComplexityPredictorTest, RangeAndZeroParameters) {
  Model m(tiny_config(), 1);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    randomize(m, 300 + trial, 3.0);
    const ComplexityCurve c = m.predict_complexity(testing::uniform_values(5, rng, -3, 3));
    EXPECT_GT(c.a, 0.0);
    EXPECT_GT(c.c, 0.0);
  }
  fill_all(m, 0.0);
  const ComplexityCurve c = m.predict_complexity(std::vector<double>(5, 1.0));
  EXPECT_DOUBLE_EQ(c.a, std::log(2.0));
  EXPECT_EQ(c.b, 0.0);
  EXPECT_DOUBLE_EQ(c.c, std::log(2.0));
}

// Smallest N in [k_min, k_max] with a e^{b - aN} <= k, else k_max.
int scan_segments(const ComplexityCurve& c, double k, int k_min, int k_max) {
  for (int n = k_min; n <= k_max; ++n)
    if (c.a * std::exp(c.b - c.a * n) <= k) return n;
  return k_max;
}

TEST(SelectSegmentCountTest, WorkedExample) {
  EXPECT_EQ(select_segment_count({1.0, 3.0, 0.0}, std::exp(-4.0)), 7);
  EXPECT_EQ(select_segment_count({1.0, 3.0, 0.0}, std::exp(-4.0), 1, 25), 7);
  EXPECT_EQ(select_segment_count({0.1, 5.0, 0.0}, 1e-6), 25);
  EXPECT_EQ(select_segment_count({2.0, 0.0, 0.0}, 10.0), 7);
}

TEST(SelectSegmentCountTest, InvalidInputsRejected) {
  EXPECT_THROW(select_segment_count({0.0, 1.0, 0.0}, 0.1), InvalidArgument);
  EXPECT_THROW(select_segment_count({1.0, 1.0, 0.0}, 0.0), InvalidArgument);
  EXPECT_THROW(select_segment_count({-1.0, 1.0, 0.0}, 0.1), InvalidArgument);
}

TEST(SelectSegmentCountTest, AgreesWithIntegerScan) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> la(std::log(0.01), std::log(5.0)), ub(-5.0, 30.0), lk(-12.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const ComplexityCurve c{std::exp(la(rng)), ub(rng), 0.0};
    const double k = std::exp(lk(rng));
    ASSERT_EQ(select_segment_count(c, k), scan_segments(c, k, 7, 25)) << c.a << " " << c.b << " " << k;
    ASSERT_EQ(select_segment_count(c, k, 1, 200), scan_segments(c, k, 1, 200));
  }
}

TEST(SelectSegmentCountTest, NonIncreasingInThreshold) {
  std::mt19937_64 rng(78);
  for (int trial = 0; trial < 200; ++trial) {
    const ComplexityCurve c{std::exp(testing::uniform_values(1, rng, -4, 1)[0]), testing::uniform_values(1, rng, -5, 30)[0],
                            0.0};
    int prev = 1 << 30;
    for (double lk = -12.0; lk <= 1.0; lk += 0.05) {
      const int n = select_segment_count(c, std::exp(lk), 1, 1000);
      EXPECT_LE(n, prev);
      prev = n;
    }
  }
}

TEST(DiscardDegenerateTest, RemovesOnlySubEpsilonPaths) {
  VectorGraphic g;
  const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 0}, {1, 0}, {1, 1}, {1, 1},
                                   {1, 1}, {0, 1}, {0, 1}, {0, 1}, {0, 0}, {0, 0}};
  const std::vector<Point2> speck(12, Point2{0.3, 0.3});
  std::vector<Point2> tiny = speck;
  tiny[4] = {0.3005, 0.3005};
  g.add(ClosedPath(square), 0.0, {});
  g.add(ClosedPath(speck), 1.0, {});
  g.add(ClosedPath(square), 2.0, {0.1, 0.1, 0.1});
  g.add(ClosedPath(tiny), 3.0, {});
  const VectorGraphic out = discard_degenerate(g);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.depths[0], 0.0);
  EXPECT_EQ(out.depths[1], 2.0);
  EXPECT_EQ(out.colors[1], (Rgb{0.1, 0.1, 0.1}));
  EXPECT_EQ(discard_degenerate(g, 1e-4).size(), 3u);
}

}  // namespace
}  // namespace loopvec
