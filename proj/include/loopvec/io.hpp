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

// File formats: PNG images, IDX digit sets, SVG export, run configuration
// and the binary checkpoint.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loopvec/diffnum.hpp"
#include "loopvec/model.hpp"
#include "loopvec/raster.hpp"
#include "loopvec/train.hpp"
#include "loopvec/vector_graphic.hpp"

namespace loopvec {

// ---------------------------------------------------------------------------
// Images

/// Three-channel image with values v / 255; alpha is composited over white.
/// Throws IoError (missing file) or FormatError (undecodable), both naming
/// the path.
RasterImage load_png(const std::filesystem::path& path);

/// Writes an 8-bit gray (1 channel) or RGB (3 channels) PNG, rounding
/// round(255 v) after clamping to [0,1].
void save_png(const RasterImage& image, const std::filesystem::path& path);

/// Resamples to size x size; sample centres are aligned and edges clamp.
RasterImage resize_bilinear(const RasterImage& image, int size);

struct Dataset {
  std::string source;        // identifier used in reports
  std::vector<RasterImage> images;
  std::vector<int> labels;   // empty for PNG directories
};

/// Every *.png in `dir` (sorted by name), resized to `resolution`.
Dataset load_png_dir(const std::filesystem::path& dir, int resolution);

struct IdxOptions {
  int resolution = 64;
  std::vector<int> digits;  // keep only these labels; empty keeps all
  int limit = 0;            // keep the first `limit` matches; 0 keeps all
  bool dark_ink = true;     // 1 - v / 255, so strokes are dark on white
};

/// Big-endian IDX pair (images 0x00000803, labels 0x00000801) as one-channel
/// images. Throws FormatError with the byte offset on a bad magic, a count
/// mismatch or truncation.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const IdxOptions& opt);

// ---------------------------------------------------------------------------
// SVG

/// SVG 1.1 document; one <path> per shape in ascending depth (back to
/// front), coordinates scaled by `canvas_px` with 4 decimals.
std::string svg_document(const VectorGraphic& graphic, int canvas_px);
void export_svg(const VectorGraphic& graphic, int canvas_px, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  AuxTrainConfig aux;
};

/// JSON object with "model", "train" and "aux" sections. Missing keys keep
/// their defaults; a "preset" key ("desk" or "full") in "model" selects the
/// starting widths. Throws FormatError on unknown keys or wrong types.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical text; parse_run_config(run_config_text(c)) reproduces c.
std::string run_config_text(const RunConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParameterBlock {
  std::string name;
  diffnum::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string config;  // run_config_text
  std::vector<ParameterBlock> parameters;
  std::int64_t optimizer_steps = 0;
  std::vector<AdamState> optimizer_state;
  std::string rng_state;
  std::int64_t step = 0;
};

/// Layout (little-endian): "IM2V", u32 version, u64-length config text,
/// u32 block count, blocks (u32-length name, u32 rank, u64 dims, f64
/// values), u64 optimizer steps, u32 state count, states (u64 n, n f64 m,
/// n f64 v), u64-length RNG text, i64 step.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws IncompatibleError on a magic or version mismatch and FormatError
/// (with byte offset) on truncated or trailing data.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and a rename.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters of `model`; optimizer, RNG and step come from `trainer` when
/// it is non-null.
Checkpoint make_checkpoint(const Model& model, const RunConfig& config, VaeTrainer* trainer);
/// Copies every block into the same-named parameter. Throws
/// IncompatibleError on a missing name or a shape mismatch.
void restore_parameters(Model& model, const Checkpoint& ckpt);
void restore_trainer(VaeTrainer& trainer, const Checkpoint& ckpt);

}  // namespace loopvec
