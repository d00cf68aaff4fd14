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

#include "loopvec/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

#include "loopvec/errors.hpp"

namespace loopvec {

double EvalReport::aggregate() const {
  if (per_sample.empty()) return 0.0;
  return std::accumulate(per_sample.begin(), per_sample.end(), 0.0) / static_cast<double>(per_sample.size());
}

std::string EvalReport::json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["dataset"] = dataset;
  j["config_hash"] = config_hash;
  j["normalization"] = "per-pixel mean";
  j["count"] = per_sample.size();
  j["aggregate"] = aggregate();
  j["per_sample"] = per_sample;
  return j.dump();
}

std::string config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double recon_error(const RasterImage& output, const RasterImage& target) {
  if (output.height != target.height || output.width != target.width || output.channels != target.channels)
    throw InvalidArgument("recon_error: image shapes differ");
  if (output.data.empty()) throw InvalidArgument("recon_error: empty image");
  double s = 0.0;
  for (std::size_t i = 0; i < output.data.size(); ++i) {
    const double d = output.data[i] - target.data[i];
    s += d * d;
  }
  return s / static_cast<double>(output.data.size());
}

namespace {

PointSet pooled_samples(const VectorGraphic& g, int n) {
  PointSet out;
  for (const ClosedPath& p : g.paths) {
    const PointSet s = sample_boundary(p, n);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

}  // namespace

double chamfer_recon(const VectorGraphic& graphic, const VectorGraphic& reference, int n) {
  if (graphic.empty() || reference.empty()) throw InvalidArgument("chamfer_recon: empty graphic");
  return chamfer_distance(pooled_samples(graphic, n), pooled_samples(reference, n));
}

double generation_quality(std::span<const RasterImage> generated, std::span<const RasterImage> dataset) {
  if (generated.empty() || dataset.empty()) throw InvalidArgument("generation_quality: empty image set");
  double total = 0.0;
  for (const RasterImage& o : generated) {
    double best = std::numeric_limits<double>::infinity();
    for (const RasterImage& i : dataset) best = std::min(best, recon_error(o, i));
    total += best;
  }
  return total / static_cast<double>(generated.size());
}

std::vector<std::vector<double>> interpolation_latents(std::span<const double> z_a, std::span<const double> z_b,
                                                       int steps) {
  if (steps < 2) throw InvalidArgument("interpolate: steps must be >= 2");
  if (z_a.size() != z_b.size()) throw InvalidArgument("interpolate: latent sizes differ");
  std::vector<std::vector<double>> out;
  out.emplace_back(z_a.begin(), z_a.end());
  for (int i = 1; i + 1 < steps; ++i) {
    const double s = static_cast<double>(i) / (steps - 1);
    std::vector<double> z(z_a.size());
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = (1.0 - s) * z_a[j] + s * z_b[j];
    out.push_back(std::move(z));
  }
  out.emplace_back(z_b.begin(), z_b.end());
  return out;
}

std::vector<VectorGraphic> interpolate(Model& model, std::span<const double> z_a, std::span<const double> z_b,
                                       int steps, int k, int paths) {
  std::vector<VectorGraphic> out;
  for (const auto& z : interpolation_latents(z_a, z_b, steps)) out.push_back(model.decode_graphic(z, k, paths));
  return out;
}

std::vector<std::vector<double>> sample_latents(int n, int size, std::uint64_t seed) {
  if (n < 1 || size < 1) throw InvalidArgument("sample_latents: n and size must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n), std::vector<double>(size));
  for (auto& z : out)
    for (double& v : z) v = normal(rng);
  return out;
}

}  // namespace loopvec
