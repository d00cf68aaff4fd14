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

// Image-to-vector networks: a convolutional variational encoder, a
// bidirectional LSTM that unrolls the global code into per-path codes, a
// sample-deformation network that moves samples along the unit circle, a
// circular-convolution decoder that turns deformed samples into control
// points, and a small predictor of each path's loss-vs-segments curve.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "loopvec/diffnum.hpp"
#include "loopvec/raster.hpp"
#include "loopvec/vector_graphic.hpp"

namespace loopvec {

enum class ColorMode { kMono, kLearned };

struct ModelConfig {
  int resolution = 64;
  int input_channels = 3;
  int latent_size = 128;
  int path_latent_size = 167;
  std::vector<int> encoder_filters{32, 64, 128, 256, 512};
  std::vector<int> decoder_channels{170, 340, 340, 340, 340, 340, 2};
  std::vector<int> deform_channels{170, 340, 340, 1};
  std::vector<int> aux_channels{167, 256, 256, 256, 3};
  int lstm_hidden = 256;
  int max_paths = 1;
  int k_min = 7;
  int k_max = 25;
  ColorMode color_mode = ColorMode::kMono;
  Rgb mono_color{0.0, 0.0, 0.0};

  /// Reduced widths for single-core training runs; same topology.
  static ModelConfig desk();

  int fused_channels() const { return path_latent_size + 3; }
  /// Spatial side after the encoder's stride-2 blocks.
  int encoded_side() const;
  /// Throws InvalidArgument when chains do not connect (decoder and
  /// deformation inputs must equal fused_channels(), decoder output 2,
  /// deformation output 1, auxiliary input path_latent_size and output 3).
  void validate() const;
};

/// loss(N) ~ c + exp(b - a N).
struct ComplexityCurve {
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;

  double operator()(double n) const;
};

/// Smallest N with a * exp(b - a N) <= k_thr, clamped to [k_min, k_max].
int select_segment_count(const ComplexityCurve& curve, double k_thr, int k_min = 7, int k_max = 25);

/// Drops paths whose control bounding box diagonal is below eps.
VectorGraphic discard_degenerate(const VectorGraphic& graphic, double eps = 1e-3);

struct LatentCode {
  diffnum::DiffArray mu;      // [1 x latent]
  diffnum::DiffArray logvar;  // [1 x latent]
};

struct PathCode {
  diffnum::DiffArray z;      // [1 x D_p]
  diffnum::DiffArray depth;  // [1]
  diffnum::DiffArray color;  // [3]
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  /// Every learnable block in a fixed order with unique dotted names.
  std::vector<diffnum::Parameter*> parameters();
  std::vector<const diffnum::Parameter*> parameters() const;
  /// Subsets used when training parts of the model separately.
  std::vector<diffnum::Parameter*> auxiliary_parameters();
  std::vector<diffnum::Parameter*> main_parameters();
  std::size_t parameter_count() const;
  diffnum::Parameter& parameter(const std::string& name);

  /// image [C x H x W] with C = input_channels and H = W = resolution.
  LatentCode encode(diffnum::Graph& g, const diffnum::DiffArray& image);
  std::vector<PathCode> unroll_paths(diffnum::Graph& g, const diffnum::DiffArray& z, int paths);
  /// [1 x 3k] angular offsets, each strictly within half the sample spacing.
  diffnum::DiffArray deform_samples(diffnum::Graph& g, const diffnum::DiffArray& z_t, int k);
  /// [3k x 2] control points in (0,1)^2 from the fused buffer over the
  /// uniformly spaced samples moved by `offsets` ([1 x 3k]).
  diffnum::DiffArray decode_path(diffnum::Graph& g, const diffnum::DiffArray& z_t, int k,
                                 const diffnum::DiffArray& offsets);
  /// Decoder applied to an explicit fused buffer [fused_channels x n].
  diffnum::DiffArray decode_fused(diffnum::Graph& g, const diffnum::DiffArray& fused);
  /// Fused buffer rows: cos, sin, on-curve flag, then z_t repeated.
  diffnum::DiffArray fuse(diffnum::Graph& g, const diffnum::DiffArray& z_t, int k, const diffnum::DiffArray& offsets);
  /// [1 x 3] = (a, b, c) with a, c > 0.
  diffnum::DiffArray predict_complexity(diffnum::Graph& g, const diffnum::DiffArray& z_t);

  /// Full differentiable decode with one segment count per path
  /// (`segments.size()` paths). No paths are discarded.
  DiffGraphic decode(diffnum::Graph& g, const diffnum::DiffArray& z, std::span<const int> segments,
                     bool deform = true);
  DiffGraphic decode(diffnum::Graph& g, const diffnum::DiffArray& z, int k, int paths, bool deform = true);

  /// Plain decode followed by discard_degenerate.
  VectorGraphic decode_graphic(std::span<const double> z, int k, int paths);
  VectorGraphic decode_graphic(std::span<const double> z, std::span<const int> segments);
  /// Per-path codes of a plain latent.
  std::vector<std::vector<double>> path_latents(std::span<const double> z, int paths);
  ComplexityCurve predict_complexity(std::span<const double> z_t);
  /// Mean code of a plain image (no sampling).
  std::vector<double> encode_mean(const RasterImage& image);

 private:
  struct Conv {
    diffnum::Parameter* weight;
    diffnum::Parameter* bias;
  };
  struct ResidualBlock {
    Conv main1, main2, skip;
  };
  struct LstmParams {
    diffnum::Parameter* w_input;
    diffnum::Parameter* w_recurrent;
    diffnum::Parameter* bias;
  };

  diffnum::Parameter* add_parameter(const std::string& name, diffnum::Shape shape);
  diffnum::DiffArray conv_chain(diffnum::Graph& g, const std::vector<Conv>& chain, diffnum::DiffArray x);

  ModelConfig config_;
  std::vector<std::unique_ptr<diffnum::Parameter>> params_;
  std::size_t aux_begin_ = 0;  // auxiliary parameters occupy [aux_begin_, end)

  std::vector<ResidualBlock> encoder_;
  Conv mu_head_{}, logvar_head_{};
  LstmParams lstm_forward_{}, lstm_backward_{};
  Conv path_head_{};
  std::vector<Conv> deformer_;
  std::vector<Conv> decoder_;
  std::vector<Conv> auxiliary_;
};

/// z = mu + exp(logvar / 2) * noise; noise is [1 x latent].
diffnum::DiffArray reparameterize(diffnum::Graph& g, const LatentCode& code, std::span<const double> noise);

/// Image as a [C x H x W] constant, replicating one channel when the model
/// expects three.
diffnum::DiffArray image_input(diffnum::Graph& g, const RasterImage& image, int channels);

}  // namespace loopvec
