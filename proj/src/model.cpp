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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "loopvec/errors.hpp"

namespace loopvec {

using diffnum::DiffArray;
using diffnum::Graph;
using diffnum::Parameter;
using diffnum::Shape;

namespace {

constexpr double kDepthStride = 0.1;
// Fraction of the sample spacing an offset may reach; below one half so
// neighbouring samples can never meet.
constexpr double kOffsetFraction = 0.49;
constexpr double kInset = 1e-9;

std::string chain_string(const std::vector<int>& c) {
  std::string s = "[";
  for (std::size_t i = 0; i < c.size(); ++i) s += (i ? "," : "") + std::to_string(c[i]);
  return s + "]";
}

std::size_t as_size(int v) { return static_cast<std::size_t>(v); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.latent_size = 32;
  c.path_latent_size = 29;
  c.encoder_filters = {8, 16, 32, 64, 64};
  c.decoder_channels = {32, 64, 64, 64, 64, 64, 2};
  c.deform_channels = {32, 64, 64, 1};
  c.aux_channels = {29, 64, 64, 64, 3};
  c.lstm_hidden = 64;
  return c;
}

int ModelConfig::encoded_side() const {
  int side = resolution;
  for (std::size_t i = 0; i < encoder_filters.size(); ++i) side = (side + 1) / 2;
  return side;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("ModelConfig: " + m); };
  if (resolution < 4) fail("resolution must be >= 4");
  if (input_channels != 1 && input_channels != 3) fail("input_channels must be 1 or 3");
  if (latent_size < 1 || path_latent_size < 1 || lstm_hidden < 1) fail("sizes must be positive");
  if (max_paths < 1) fail("max_paths must be >= 1");
  if (k_min < 1 || k_max < k_min) fail("segment range must satisfy 1 <= k_min <= k_max");
  if (encoder_filters.empty()) fail("encoder needs at least one block");
  for (const auto* chain : {&encoder_filters, &decoder_channels, &deform_channels, &aux_channels})
    for (int c : *chain)
      if (c < 1) fail("channel counts must be positive");
  if (decoder_channels.size() < 2 || decoder_channels.front() != fused_channels() || decoder_channels.back() != 2) {
    fail("decoder chain " + chain_string(decoder_channels) + " must run from " + std::to_string(fused_channels()) +
         " to 2");
  }
  if (deform_channels.size() < 2 || deform_channels.front() != fused_channels() || deform_channels.back() != 1) {
    fail("deformation chain " + chain_string(deform_channels) + " must run from " + std::to_string(fused_channels()) +
         " to 1");
  }
  if (aux_channels.size() < 2 || aux_channels.front() != path_latent_size || aux_channels.back() != 3) {
    fail("auxiliary chain " + chain_string(aux_channels) + " must run from " + std::to_string(path_latent_size) +
         " to 3");
  }
}

// ---------------------------------------------------------------------------
// Complexity curve

double ComplexityCurve::operator()(double n) const { return c + std::exp(b - a * n); }

int select_segment_count(const ComplexityCurve& curve, double k_thr, int k_min, int k_max) {
  if (!(curve.a > 0.0) || !std::isfinite(curve.a)) throw InvalidArgument("select_segment_count: a must be > 0");
  if (!(k_thr > 0.0) || !std::isfinite(k_thr)) throw InvalidArgument("select_segment_count: k_thr must be > 0");
  if (k_max < k_min) throw InvalidArgument("select_segment_count: k_max < k_min");
  const double a = curve.a, b = curve.b;
  auto flat_enough = [&](long n) { return a * std::exp(b - a * static_cast<double>(n)) <= k_thr; };
  // Closed form, then settle on the exact integer boundary of the
  // inequality so rounding in the logarithm never shifts the answer.
  const double x = (std::log(a / k_thr) + b) / a;
  long n = std::isnan(x) ? k_min : static_cast<long>(std::clamp(std::ceil(x), k_min - 1.0, k_max + 1.0));
  while (n > k_min - 1 && flat_enough(n - 1)) --n;
  while (n <= k_max && !flat_enough(n)) ++n;
  return static_cast<int>(std::clamp<long>(n, k_min, k_max));
}

VectorGraphic discard_degenerate(const VectorGraphic& graphic, double eps) {
  graphic.validate();
  VectorGraphic out;
  for (std::size_t i = 0; i < graphic.size(); ++i) {
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (Point2 p : graphic.paths[i].controls()) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    if (std::hypot(x1 - x0, y1 - y0) >= eps) out.add(graphic.paths[i], graphic.depths[i], graphic.colors[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model construction

Parameter* Model::add_parameter(const std::string& name, Shape shape) {
  params_.push_back(std::make_unique<Parameter>(name, std::move(shape)));
  return params_.back().get();
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto normal_fill = [&rng](Parameter* p, double std_dev) {
    for (double& v : p->value) v = std::normal_distribution<double>(0.0, std_dev)(rng);
  };
  auto uniform_fill = [&rng](Parameter* p, double bound) {
    for (double& v : p->value) v = std::uniform_real_distribution<double>(-bound, bound)(rng);
  };
  // Conv/fc weights are stored [Cout x Cin x K x K], [Cout x Cin x 3] and
  // [Din x Dout]; biases start at zero.
  auto conv2d = [&](const std::string& name, int cin, int cout, int ks) {
    Conv c{add_parameter(name + ".weight", {as_size(cout), as_size(cin), as_size(ks), as_size(ks)}),
           add_parameter(name + ".bias", {as_size(cout)})};
    normal_fill(c.weight, std::sqrt(2.0 / (cin * ks * ks)));
    return c;
  };
  auto conv1d = [&](const std::string& name, int cin, int cout, double gain) {
    Conv c{add_parameter(name + ".weight", {as_size(cout), as_size(cin), 3}), add_parameter(name + ".bias", {as_size(cout)})};
    normal_fill(c.weight, std::sqrt(gain / (3.0 * cin)));
    return c;
  };
  auto dense = [&](const std::string& name, int din, int dout, double gain) {
    Conv c{add_parameter(name + ".weight", {as_size(din), as_size(dout)}), add_parameter(name + ".bias", {as_size(dout)})};
    normal_fill(c.weight, std::sqrt(gain / din));
    return c;
  };

  int cin = config_.input_channels;
  for (std::size_t i = 0; i < config_.encoder_filters.size(); ++i) {
    const int cout = config_.encoder_filters[i];
    const std::string base = "encoder." + std::to_string(i);
    encoder_.push_back({conv2d(base + ".main1", cin, cout, 3), conv2d(base + ".main2", cout, cout, 3),
                        conv2d(base + ".skip", cin, cout, 1)});
    cin = cout;
  }
  const int flat = cin * config_.encoded_side() * config_.encoded_side();
  mu_head_ = dense("encoder.mu", flat, config_.latent_size, 1.0);
  logvar_head_ = dense("encoder.logvar", flat, config_.latent_size, 0.01);

  const std::size_t h = as_size(config_.lstm_hidden);
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(h));
  auto lstm = [&](const std::string& name) {
    LstmParams p{add_parameter(name + ".w_input", {as_size(config_.latent_size), 4 * h}),
                 add_parameter(name + ".w_recurrent", {h, 4 * h}), add_parameter(name + ".bias", {4 * h})};
    uniform_fill(p.w_input, lstm_bound);
    uniform_fill(p.w_recurrent, lstm_bound);
    uniform_fill(p.bias, lstm_bound);
    return p;
  };
  lstm_forward_ = lstm("unroller.forward");
  lstm_backward_ = lstm("unroller.backward");
  const int head_out = config_.path_latent_size + 1 + (config_.color_mode == ColorMode::kLearned ? 3 : 0);
  path_head_ = dense("unroller.head", 2 * config_.lstm_hidden, head_out, 1.0);

  const auto& dc = config_.deform_channels;
  for (std::size_t i = 0; i + 1 < dc.size(); ++i) {
    deformer_.push_back(conv1d("deformer." + std::to_string(i), dc[i], dc[i + 1], 2.0));
  }
  // Zero final layer: training starts from uniform sampling.
  std::fill(deformer_.back().weight->value.begin(), deformer_.back().weight->value.end(), 0.0);

  const auto& pc = config_.decoder_channels;
  for (std::size_t i = 0; i + 1 < pc.size(); ++i) {
    decoder_.push_back(conv1d("decoder." + std::to_string(i), pc[i], pc[i + 1], i + 2 == pc.size() ? 1.0 : 2.0));
  }

  aux_begin_ = params_.size();
  const auto& ac = config_.aux_channels;
  for (std::size_t i = 0; i + 1 < ac.size(); ++i) {
    auxiliary_.push_back(dense("auxiliary." + std::to_string(i), ac[i], ac[i + 1], i + 2 == ac.size() ? 1.0 : 2.0));
  }
  for (auto& p : params_) p->zero_grad();
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> Model::auxiliary_parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = aux_begin_; i < params_.size(); ++i) out.push_back(params_[i].get());
  return out;
}

std::vector<Parameter*> Model::main_parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < aux_begin_; ++i) out.push_back(params_[i].get());
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

Parameter& Model::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw InvalidArgument("Model: no parameter named '" + name + "'");
}

// ---------------------------------------------------------------------------
// Forward passes

DiffArray image_input(Graph& g, const RasterImage& image, int channels) {
  const auto h = as_size(image.height), w = as_size(image.width);
  if (image.channels == channels) return g.constant({as_size(channels), h, w}, image.data);
  if (image.channels == 1 && channels == 3) return g.constant({3, h, w}, to_rgb(image).data);
  throw InvalidArgument("image_input: cannot feed a " + std::to_string(image.channels) + "-channel image to a " +
                        std::to_string(channels) + "-channel encoder");
}

LatentCode Model::encode(Graph& g, const DiffArray& image) {
  const auto r = as_size(config_.resolution);
  if (image.shape() != Shape{as_size(config_.input_channels), r, r}) {
    throw InvalidArgument("encode: expected image " +
                          diffnum::shape_string({as_size(config_.input_channels), r, r}) + ", got " +
                          diffnum::shape_string(image.shape()));
  }
  DiffArray x = image;
  for (const ResidualBlock& b : encoder_) {
    DiffArray m = g.relu(g.conv2d(x, g.param(*b.main1.weight), g.param(*b.main1.bias), 2));
    m = g.conv2d(m, g.param(*b.main2.weight), g.param(*b.main2.bias), 1);
    DiffArray s = g.conv2d(x, g.param(*b.skip.weight), g.param(*b.skip.bias), 2);
    x = g.relu(g.add(m, s));
  }
  DiffArray flat = g.reshape(x, {1, x.size()});
  return {g.fully_connected(flat, g.param(*mu_head_.weight), g.param(*mu_head_.bias)),
          g.fully_connected(flat, g.param(*logvar_head_.weight), g.param(*logvar_head_.bias))};
}

DiffArray reparameterize(Graph& g, const LatentCode& code, std::span<const double> noise) {
  if (noise.size() != code.mu.size()) {
    throw InvalidArgument("reparameterize: expected " + std::to_string(code.mu.size()) + " noise values, got " +
                          std::to_string(noise.size()));
  }
  DiffArray sd = g.exp(g.scale(code.logvar, 0.5));
  return g.add(code.mu, g.mul(sd, g.constant(code.mu.shape(), {noise.begin(), noise.end()})));
}

std::vector<PathCode> Model::unroll_paths(Graph& g, const DiffArray& z, int paths) {
  if (paths < 1) throw InvalidArgument("unroll_paths: path count must be >= 1");
  if (z.size() != as_size(config_.latent_size)) {
    throw InvalidArgument("unroll_paths: latent has " + std::to_string(z.size()) + " values, expected " +
                          std::to_string(config_.latent_size));
  }
  const auto steps = as_size(paths);
  DiffArray inputs = g.transpose(g.tile_columns(g.reshape(z, {as_size(config_.latent_size)}), steps));
  auto direction = [&](const LstmParams& p) {
    return diffnum::LstmDirection{g.param(*p.w_input), g.param(*p.w_recurrent), g.param(*p.bias)};
  };
  DiffArray states = diffnum::lstm_bidirectional(g, inputs, direction(lstm_forward_), direction(lstm_backward_));
  DiffArray head = g.fully_connected(states, g.param(*path_head_.weight), g.param(*path_head_.bias));
  const auto dp = as_size(config_.path_latent_size);
  std::vector<PathCode> out;
  for (std::size_t t = 0; t < steps; ++t) {
    DiffArray row = g.slice(head, 0, t, 1);
    PathCode code;
    code.z = g.slice(row, 1, 0, dp);
    code.depth = g.add_scalar(g.reshape(g.slice(row, 1, dp, 1), {1}), kDepthStride * static_cast<double>(t));
    if (config_.color_mode == ColorMode::kLearned) {
      code.color = g.reshape(g.sigmoid(g.slice(row, 1, dp + 1, 3)), {3});
    } else {
      const Rgb& c = config_.mono_color;
      code.color = g.constant({3}, {c.r, c.g, c.b});
    }
    out.push_back(code);
  }
  return out;
}

DiffArray Model::conv_chain(Graph& g, const std::vector<Conv>& chain, DiffArray x) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    x = g.conv1d_circular(x, g.param(*chain[i].weight), g.param(*chain[i].bias));
    if (i + 1 < chain.size()) x = g.relu(x);
  }
  return x;
}

DiffArray Model::fuse(Graph& g, const DiffArray& z_t, int k, const DiffArray& offsets) {
  if (k < 1) throw InvalidArgument("fuse: k must be >= 1");
  const std::size_t n = 3 * as_size(k);
  if (z_t.size() != as_size(config_.path_latent_size)) {
    throw InvalidArgument("fuse: path code has " + std::to_string(z_t.size()) + " values, expected " +
                          std::to_string(config_.path_latent_size));
  }
  if (offsets.shape() != Shape{1, n}) {
    throw InvalidArgument("fuse: offsets must be [1 x " + std::to_string(n) + "], got " +
                          diffnum::shape_string(offsets.shape()));
  }
  std::vector<double> base(n), flag(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    base[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    if (i % 3 == 0) flag[i] = 1.0;
  }
  DiffArray theta = g.add(g.constant({1, n}, std::move(base)), offsets);
  const DiffArray rows[] = {g.cos(theta), g.sin(theta), g.constant({1, n}, std::move(flag)),
                            g.tile_columns(g.reshape(z_t, {z_t.size()}), n)};
  return g.concat(rows, 0);
}

DiffArray Model::deform_samples(Graph& g, const DiffArray& z_t, int k) {
  const std::size_t n = 3 * as_size(k);
  DiffArray fused = fuse(g, z_t, k, g.constant({1, n}, std::vector<double>(n, 0.0)));
  DiffArray raw = conv_chain(g, deformer_, fused);
  const double bound = kOffsetFraction * 2.0 * std::numbers::pi / static_cast<double>(n);
  return g.scale(g.tanh(raw), bound);
}

DiffArray Model::decode_fused(Graph& g, const DiffArray& fused) {
  const Shape& s = fused.shape();
  if (s.size() != 2 || s[0] != as_size(config_.fused_channels())) {
    throw InvalidArgument("decode_fused: expected [" + std::to_string(config_.fused_channels()) + " x n], got " +
                          diffnum::shape_string(s));
  }
  // sigmoid(x) = 0.5 + 0.5 tanh(x / 2), narrowed by kInset so saturated
  // outputs stay strictly inside the canvas.
  DiffArray t = g.tanh(g.scale(conv_chain(g, decoder_, fused), 0.5));
  return g.transpose(g.add_scalar(g.scale(t, 0.5 - kInset), 0.5));
}

DiffArray Model::decode_path(Graph& g, const DiffArray& z_t, int k, const DiffArray& offsets) {
  return decode_fused(g, fuse(g, z_t, k, offsets));
}

DiffArray Model::predict_complexity(Graph& g, const DiffArray& z_t) {
  DiffArray x = g.reshape(z_t, {1, z_t.size()});
  if (z_t.size() != as_size(config_.path_latent_size)) {
    throw InvalidArgument("predict_complexity: path code has " + std::to_string(z_t.size()) + " values");
  }
  for (std::size_t i = 0; i < auxiliary_.size(); ++i) {
    x = g.fully_connected(x, g.param(*auxiliary_[i].weight), g.param(*auxiliary_[i].bias));
    if (i + 1 < auxiliary_.size()) x = g.relu(x);
  }
  const DiffArray parts[] = {g.softplus(g.slice(x, 1, 0, 1)), g.slice(x, 1, 1, 1), g.softplus(g.slice(x, 1, 2, 1))};
  return g.concat(parts, 1);
}

DiffGraphic Model::decode(Graph& g, const DiffArray& z, std::span<const int> segments, bool deform) {
  if (segments.empty()) throw InvalidArgument("decode: need at least one path");
  const auto codes = unroll_paths(g, z, static_cast<int>(segments.size()));
  DiffGraphic out;
  for (std::size_t t = 0; t < codes.size(); ++t) {
    const int k = segments[t];
    const std::size_t n = 3 * as_size(k);
    DiffArray offsets = deform ? deform_samples(g, codes[t].z, k) : g.constant({1, n}, std::vector<double>(n, 0.0));
    out.controls.push_back(decode_path(g, codes[t].z, k, offsets));
    out.depths.push_back(codes[t].depth);
    out.colors.push_back(codes[t].color);
  }
  return out;
}

DiffGraphic Model::decode(Graph& g, const DiffArray& z, int k, int paths, bool deform) {
  if (paths < 1) throw InvalidArgument("decode: path count must be >= 1");
  const std::vector<int> segments(as_size(paths), k);
  return decode(g, z, segments, deform);
}

VectorGraphic Model::decode_graphic(std::span<const double> z, std::span<const int> segments) {
  Graph g;
  DiffArray zz = g.constant({1, z.size()}, {z.begin(), z.end()});
  return discard_degenerate(to_vector_graphic(decode(g, zz, segments)));
}

VectorGraphic Model::decode_graphic(std::span<const double> z, int k, int paths) {
  const std::vector<int> segments(as_size(std::max(paths, 0)), k);
  return decode_graphic(z, segments);
}

std::vector<std::vector<double>> Model::path_latents(std::span<const double> z, int paths) {
  Graph g;
  const auto codes = unroll_paths(g, g.constant({1, z.size()}, {z.begin(), z.end()}), paths);
  std::vector<std::vector<double>> out;
  for (const PathCode& c : codes) out.emplace_back(c.z.values().begin(), c.z.values().end());
  return out;
}

ComplexityCurve Model::predict_complexity(std::span<const double> z_t) {
  Graph g;
  const auto v = predict_complexity(g, g.constant({1, z_t.size()}, {z_t.begin(), z_t.end()})).values();
  return {v[0], v[1], v[2]};
}

std::vector<double> Model::encode_mean(const RasterImage& image) {
  Graph g;
  const LatentCode code = encode(g, image_input(g, image, config_.input_channels));
  return {code.mu.values().begin(), code.mu.values().end()};
}

}  // namespace loopvec
