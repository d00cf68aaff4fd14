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

// Differentiable rasterization of filled closed paths, soft depth
// compositing, Gaussian pyramids and the multi-resolution raster loss.
//
// Canvas conventions: the unit square maps onto a resolution x resolution
// grid, pixel (x, y) has its center at ((x + 0.5) / res, (y + 0.5) / res),
// and row 0 is y = 0. Coverage is a linear ramp of the signed distance to the
// flattened path, measured in pixels of the level being rendered.

#include <span>
#include <vector>

#include "loopvec/diffnum.hpp"
#include "loopvec/geometry.hpp"
#include "loopvec/vector_graphic.hpp"

namespace loopvec {

/// Channel-major float canvas: data[(c * height + y) * width + x].
struct RasterImage {
  RasterImage() = default;
  RasterImage(int height, int width, int channels, double fill = 0.0);

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> data;
};

struct ImagePyramid {
  std::vector<RasterImage> levels;
};

struct RasterConfig {
  int resolution = 64;
  double prefilter_radius = 1.0;  // pixels
  int subdivisions = 16;          // flattening vertices per segment
  double tau = 0.05;              // compositing temperature
  Rgb background{1.0, 1.0, 1.0};

  /// Throws InvalidArgument unless r > 0, tau > 0, resolution >= 4 and
  /// subdivisions >= 1.
  void validate() const;
  /// Side length of pyramid level `level` (repeated ceil-halving).
  int level_resolution(int level) const;
};

struct Layer {
  RasterImage alpha;  // one channel
  Rgb color;
  double depth = 0.0;
};

/// Replicates a one-channel image into three channels; three-channel input is
/// returned unchanged.
RasterImage to_rgb(const RasterImage& img);

/// Side lengths of an L-level pyramid over a square of side `size`.
/// Throws InvalidArgument when the coarsest level would be smaller than 2.
std::vector<int> pyramid_sizes(int size, int levels);

RasterImage rasterize_path(const ClosedPath& path, const RasterConfig& cfg, int resolution);
RasterImage rasterize_path(const ClosedPath& path, const RasterConfig& cfg);

RasterImage composite(std::span<const Layer> layers, const RasterConfig& cfg, int resolution);
RasterImage composite(std::span<const Layer> layers, const RasterConfig& cfg);

/// Binomial [1 4 6 4 1]/16 blur with reflected borders, then 2x decimation
/// sampled midway between pixel pairs so coarse pixel centres match the
/// re-rendered grid, once per level.
ImagePyramid gaussian_pyramid(const RasterImage& img, int levels);

/// Renders every path at level resolution (not a downsampled level 0) and
/// composites over the background.
RasterImage render_graphic(const VectorGraphic& graphic, const RasterConfig& cfg, int level = 0);

/// Sum over levels of the per-level mean squared error between the target
/// pyramid and the re-rendered graphic.
double pyramid_loss(const VectorGraphic& graphic, const RasterImage& target, int levels,
                    const RasterConfig& cfg);

// ---------------------------------------------------------------------------
// Differentiable counterparts. Control arrays are [3k x 2] in canvas units,
// depths are [1], colors are [3].

struct DiffGraphic {
  std::vector<diffnum::DiffArray> controls;
  std::vector<diffnum::DiffArray> depths;
  std::vector<diffnum::DiffArray> colors;

  std::size_t size() const { return controls.size(); }
};

/// Plain values of a differentiable graphic.
VectorGraphic to_vector_graphic(const DiffGraphic& graphic);

/// [res x res] coverage of one path.
diffnum::DiffArray rasterize_path(diffnum::Graph& g, const diffnum::DiffArray& controls,
                                  const RasterConfig& cfg, int resolution);

/// [3 x res x res] soft-depth composite over the background. For each pixel
///   v_i  = a_i * prod_{j != i} (1 - a_j * s((d_j - d_i) / tau))
///   v_bg = prod_i (1 - a_i)
///   O    = (sum_i v_i C_i + v_bg C_bg) / (sum_i v_i + v_bg + 1e-6)
/// with s the logistic function. Layers are processed in a canonical order so
/// the result does not depend on the order they are passed in.
diffnum::DiffArray composite(diffnum::Graph& g, std::span<const diffnum::DiffArray> alphas,
                             std::span<const diffnum::DiffArray> colors,
                             std::span<const diffnum::DiffArray> depths, const RasterConfig& cfg,
                             int resolution);

diffnum::DiffArray render_graphic(diffnum::Graph& g, const DiffGraphic& graphic, const RasterConfig& cfg,
                                  int level);

/// The target pyramid must have been built from an image at cfg.resolution;
/// its level count sets L.
diffnum::DiffArray pyramid_loss(diffnum::Graph& g, const DiffGraphic& graphic, const ImagePyramid& target,
                                const RasterConfig& cfg);

}  // namespace loopvec
