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

// Evaluation metrics over rasters and vector graphics, latent sampling and
// latent interpolation. Pixel metrics are per-pixel means.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopvec/model.hpp"
#include "loopvec/raster.hpp"
#include "loopvec/vector_graphic.hpp"

namespace loopvec {

struct EvalReport {
  std::string metric;
  std::string dataset;
  std::string config_hash;
  std::vector<double> per_sample;

  /// Mean of per_sample; 0 when empty.
  double aggregate() const;
  /// One JSON object on a single line.
  std::string json() const;
};

/// 64-bit FNV-1a of `text` as 16 lowercase hex digits.
std::string config_hash(std::string_view text);

/// Mean squared error over pixels and channels. Throws InvalidArgument on a
/// shape mismatch.
double recon_error(const RasterImage& output, const RasterImage& target);

/// Chamfer distance between the pooled boundary samples (n per path) of two
/// graphics. Throws InvalidArgument when either graphic is empty.
double chamfer_recon(const VectorGraphic& graphic, const VectorGraphic& reference, int n);

/// Mean over `generated` of the smallest recon_error against `dataset`.
double generation_quality(std::span<const RasterImage> generated, std::span<const RasterImage> dataset);

/// Decodings at z = (1 - s) z_a + s z_b, s = i / (steps - 1). The first and
/// last latents are z_a and z_b themselves.
std::vector<VectorGraphic> interpolate(Model& model, std::span<const double> z_a, std::span<const double> z_b,
                                       int steps, int k, int paths);

/// The latents fed to `interpolate`, without decoding.
std::vector<std::vector<double>> interpolation_latents(std::span<const double> z_a, std::span<const double> z_b,
                                                       int steps);

/// n standard-normal vectors of length `size` from a generator seeded with
/// `seed`.
std::vector<std::vector<double>> sample_latents(int n, int size, std::uint64_t seed);

}  // namespace loopvec
