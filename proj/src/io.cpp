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

#include "loopvec/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "loopvec/errors.hpp"

namespace loopvec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Temporary file in the same directory followed by a rename, so readers see
// either the old file or the complete new one.
void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Images

RasterImage load_png(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw FormatError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  const int w = static_cast<int>(image.width), h = static_cast<int>(image.height);
  RasterImage out(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const png_byte* px = &buf[(static_cast<std::size_t>(y) * w + x) * 4];
      const double a = px[3] / 255.0;
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = a * (px[c] / 255.0) + (1.0 - a);
    }
  return out;
}

void save_png(const RasterImage& img, const fs::path& path) {
  if (img.channels != 1 && img.channels != 3) throw InvalidArgument("save_png: need 1 or 3 channels");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        buf[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = to_byte(img.at(c, y, x));
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, buf.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
  write_file_atomic(path, bytes);
}

RasterImage resize_bilinear(const RasterImage& img, int size) {
  if (size < 1 || img.width < 1 || img.height < 1) throw InvalidArgument("resize_bilinear: empty size");
  RasterImage out(size, size, img.channels);
  auto source = [](int i, int n_in, int n_out, int& i0, int& i1, double& t) {
    const double s = std::clamp((i + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1.0);
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, n_in - 1);
    t = s - i0;
  };
  for (int y = 0; y < size; ++y) {
    int y0, y1;
    double ty;
    source(y, img.height, size, y0, y1, ty);
    for (int x = 0; x < size; ++x) {
      int x0, x1;
      double tx;
      source(x, img.width, size, x0, x1, tx);
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - tx) * img.at(c, y0, x0) + tx * img.at(c, y0, x1);
        const double bottom = (1 - tx) * img.at(c, y1, x0) + tx * img.at(c, y1, x1);
        out.at(c, y, x) = (1 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

Dataset load_png_dir(const fs::path& dir, int resolution) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError(dir.string() + ": no .png files");
  Dataset d;
  d.source = dir.string();
  for (const fs::path& f : files) {
    RasterImage img = load_png(f);
    if (img.width != resolution || img.height != resolution) img = resize_bilinear(img, resolution);
    d.images.push_back(std::move(img));
  }
  return d;
}

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_)
      throw FormatError(what_ + ": truncated at byte offset " + std::to_string(pos_) + " (need " + std::to_string(n) +
                        " more bytes)");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32_be() {
    auto s = take(4);
    return (std::uint32_t{s[0]} << 24) | (std::uint32_t{s[1]} << 16) | (std::uint32_t{s[2]} << 8) | s[3];
  }
  std::uint64_t le(int n) {
    auto s = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string text(std::size_t n) {
    auto s = take(n);
    return {s.begin(), s.end()};
  }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace

Dataset load_idx(const fs::path& images, const fs::path& labels, const IdxOptions& opt) {
  if (opt.resolution < 1) throw InvalidArgument("load_idx: resolution must be >= 1");
  const std::vector<std::uint8_t> ib = read_file(images), lb = read_file(labels);
  ByteReader ir(ib, images.string()), lr(lb, labels.string());
  if (ir.u32_be() != 0x00000803u) ir.fail("bad image magic", 0);
  const std::uint32_t n = ir.u32_be(), rows = ir.u32_be(), cols = ir.u32_be();
  if (lr.u32_be() != 0x00000801u) lr.fail("bad label magic", 0);
  const std::uint32_t nl = lr.u32_be();
  if (nl != n) lr.fail("label count " + std::to_string(nl) + " != image count " + std::to_string(n), 4);
  const std::set<int> keep(opt.digits.begin(), opt.digits.end());
  Dataset d;
  d.source = images.string();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto px = ir.take(static_cast<std::size_t>(rows) * cols);
    const int label = lr.take(1)[0];
    if (!keep.empty() && !keep.count(label)) continue;
    if (opt.limit > 0 && static_cast<int>(d.images.size()) >= opt.limit) continue;
    RasterImage img(static_cast<int>(rows), static_cast<int>(cols), 1);
    for (std::size_t p = 0; p < px.size(); ++p) {
      const double v = px[p] / 255.0;
      img.data[p] = opt.dark_ink ? 1.0 - v : v;
    }
    if (img.width != opt.resolution || img.height != opt.resolution) img = resize_bilinear(img, opt.resolution);
    d.images.push_back(std::move(img));
    d.labels.push_back(label);
  }
  if (!ir.done()) ir.fail("trailing data", ir.offset());
  if (!lr.done()) lr.fail("trailing data", lr.offset());
  if (d.images.empty()) throw FormatError(images.string() + ": no images left after filtering");
  return d;
}

// ---------------------------------------------------------------------------
// SVG

std::string svg_document(const VectorGraphic& graphic, int canvas_px) {
  graphic.validate();
  if (canvas_px < 1) throw InvalidArgument("svg_document: canvas must be >= 1 px");
  std::vector<std::size_t> order(graphic.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return graphic.depths[a] < graphic.depths[b]; });
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << canvas_px << "\" height=\""
     << canvas_px << "\" viewBox=\"0 0 " << canvas_px << ' ' << canvas_px << "\">\n";
  char num[64];
  auto coord = [&](double v) {
    std::snprintf(num, sizeof num, "%.4f", v * canvas_px);
    return std::string(num);
  };
  for (std::size_t i : order) {
    const ClosedPath& p = graphic.paths[i];
    const Rgb& c = graphic.colors[i];
    std::snprintf(num, sizeof num, "#%02x%02x%02x", to_byte(c.r), to_byte(c.g), to_byte(c.b));
    os << "  <path fill=\"" << num << "\" fill-rule=\"nonzero\" d=\"M " << coord(p.control(0).x) << ' '
       << coord(p.control(0).y);
    for (std::size_t s = 0; s < p.segment_count(); ++s) {
      os << " C";
      for (std::size_t j = 1; j <= 3; ++j) {
        const Point2& q = p.control(3 * s + j);
        os << ' ' << coord(q.x) << ' ' << coord(q.y);
      }
    }
    os << " Z\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void export_svg(const VectorGraphic& graphic, int canvas_px, const fs::path& path) {
  const std::string doc = svg_document(graphic, canvas_px);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(doc.data()), doc.size()));
}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

// Reads known keys from one section and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw FormatError("config: section \"" + name_ + "\" must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw FormatError("config: unknown key \"" + name_ + "." + key + "\"");
  }
  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw FormatError("config: wrong type for \"" + name_ + "." + key + "\"");
    }
  }
  void mark(const std::string& key) { seen_.insert(key); }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void get_rgb(Section& s, const std::string& key, Rgb& out) {
  std::vector<double> v{out.r, out.g, out.b};
  s.get(key, v);
  if (v.size() != 3) throw FormatError("config: \"" + key + "\" needs 3 values");
  out = {v[0], v[1], v[2]};
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  RunConfig c;
  Section root(j, "config");
  if (j.contains("model")) {
    const json& jm = j["model"];
    Section s(jm, "model");
    std::string preset = "desk";
    s.get("preset", preset);
    if (preset == "full")
      c.model = ModelConfig{};
    else if (preset != "desk")
      throw FormatError("config: unknown preset \"" + preset + "\"");
    ModelConfig& m = c.model;
    s.get("resolution", m.resolution);
    s.get("input_channels", m.input_channels);
    s.get("latent_size", m.latent_size);
    s.get("path_latent_size", m.path_latent_size);
    s.get("encoder_filters", m.encoder_filters);
    s.get("decoder_channels", m.decoder_channels);
    s.get("deform_channels", m.deform_channels);
    s.get("aux_channels", m.aux_channels);
    s.get("lstm_hidden", m.lstm_hidden);
    s.get("max_paths", m.max_paths);
    s.get("k_min", m.k_min);
    s.get("k_max", m.k_max);
    std::string color = m.color_mode == ColorMode::kMono ? "mono" : "learned";
    s.get("color_mode", color);
    if (color == "mono")
      m.color_mode = ColorMode::kMono;
    else if (color == "learned")
      m.color_mode = ColorMode::kLearned;
    else
      throw FormatError("config: color_mode must be \"mono\" or \"learned\"");
    get_rgb(s, "mono_color", m.mono_color);
  }
  if (j.contains("train")) {
    Section s(j["train"], "train");
    TrainConfig& t = c.train;
    s.get("learning_rate", t.learning_rate);
    s.get("batch_size", t.batch_size);
    s.get("epochs", t.epochs);
    s.get("kl_weight", t.kl_weight);
    s.get("levels", t.levels);
    s.get("k_min", t.k_min);
    s.get("k_max", t.k_max);
    s.get("paths", t.paths);
    s.get("seed", t.seed);
    s.get("prefilter_radius", t.raster.prefilter_radius);
    s.get("subdivisions", t.raster.subdivisions);
    s.get("tau", t.raster.tau);
    get_rgb(s, "background", t.raster.background);
  }
  if (j.contains("aux")) {
    Section s(j["aux"], "aux");
    AuxTrainConfig& a = c.aux;
    s.get("instances", a.instances);
    s.get("k_lo", a.k_lo);
    s.get("k_hi", a.k_hi);
    s.get("steps", a.steps);
    s.get("learning_rate", a.learning_rate);
  }
  root.mark("model");
  root.mark("train");
  root.mark("aux");
  c.train.raster.resolution = c.model.resolution;
  c.aux.raster = c.train.raster;
  c.aux.levels = c.train.levels;
  c.aux.seed = c.train.seed;
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return parse_run_config(std::string(bytes.begin(), bytes.end()));
}

std::string run_config_text(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  const AuxTrainConfig& a = c.aux;
  json j;
  j["model"] = {{"preset", "desk"},
                {"resolution", m.resolution},
                {"input_channels", m.input_channels},
                {"latent_size", m.latent_size},
                {"path_latent_size", m.path_latent_size},
                {"encoder_filters", m.encoder_filters},
                {"decoder_channels", m.decoder_channels},
                {"deform_channels", m.deform_channels},
                {"aux_channels", m.aux_channels},
                {"lstm_hidden", m.lstm_hidden},
                {"max_paths", m.max_paths},
                {"k_min", m.k_min},
                {"k_max", m.k_max},
                {"color_mode", m.color_mode == ColorMode::kMono ? "mono" : "learned"},
                {"mono_color", {m.mono_color.r, m.mono_color.g, m.mono_color.b}}};
  j["train"] = {{"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"kl_weight", t.kl_weight},
                {"levels", t.levels},
                {"k_min", t.k_min},
                {"k_max", t.k_max},
                {"paths", t.paths},
                {"seed", t.seed},
                {"prefilter_radius", t.raster.prefilter_radius},
                {"subdivisions", t.raster.subdivisions},
                {"tau", t.raster.tau},
                {"background", {t.raster.background.r, t.raster.background.g, t.raster.background.b}}};
  j["aux"] = {{"instances", a.instances},
              {"k_lo", a.k_lo},
              {"k_hi", a.k_hi},
              {"steps", a.steps},
              {"learning_rate", a.learning_rate}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class ByteWriter {
 public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint64_t v) {
    if (v > 0xffffffffu) throw InvalidArgument("checkpoint: field exceeds 32 bits");
    le(v, 4);
  }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void text(std::string_view s) {
    u64(s.size());
    raw(s);
  }
  std::vector<std::uint8_t> release() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

constexpr std::string_view kMagic = "IM2V";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.text(ck.config);
  w.u32(ck.parameters.size());
  for (const ParameterBlock& b : ck.parameters) {
    if (diffnum::element_count(b.shape) != b.values.size())
      throw InvalidArgument("checkpoint: block " + b.name + " size does not match its shape");
    w.u32(b.name.size());
    w.raw(b.name);
    w.u32(b.shape.size());
    for (std::size_t d : b.shape) w.u64(d);
    for (double v : b.values) w.f64(v);
  }
  w.u64(static_cast<std::uint64_t>(ck.optimizer_steps));
  w.u32(ck.optimizer_state.size());
  for (const AdamState& s : ck.optimizer_state) {
    if (s.m.size() != s.v.size()) throw InvalidArgument("checkpoint: optimizer moments differ in size");
    w.u64(s.m.size());
    for (double v : s.m) w.f64(v);
    for (double v : s.v) w.f64(v);
  }
  w.text(ck.rng_state);
  w.u64(static_cast<std::uint64_t>(ck.step));
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  if (bytes.size() < kMagic.size() || r.text(kMagic.size()) != kMagic)
    throw IncompatibleError("checkpoint: bad magic (expected IM2V)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IncompatibleError("checkpoint: format version " + std::to_string(version) + ", this build reads " +
                            std::to_string(kCheckpointVersion));
  // Sizes are checked against the remaining bytes before allocating.
  auto count = [&](std::uint64_t n, std::size_t unit) {
    if (n > (bytes.size() - r.offset()) / unit) r.fail("length field exceeds file size", r.offset());
    return static_cast<std::size_t>(n);
  };
  Checkpoint ck;
  ck.config = r.text(count(r.u64(), 1));
  const std::size_t blocks = count(r.u32(), 1);
  for (std::size_t i = 0; i < blocks; ++i) {
    ParameterBlock b;
    b.name = r.text(count(r.u32(), 1));
    const std::size_t rank = count(r.u32(), 8);
    std::uint64_t n = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      b.shape.push_back(count(r.u64(), 1));
      n *= b.shape.back();
    }
    b.values.resize(count(n, 8));
    for (double& v : b.values) v = r.f64();
    ck.parameters.push_back(std::move(b));
  }
  ck.optimizer_steps = static_cast<std::int64_t>(r.u64());
  const std::size_t states = count(r.u32(), 8);
  for (std::size_t i = 0; i < states; ++i) {
    AdamState s;
    const std::size_t n = count(r.u64(), 16);
    s.m.resize(n);
    s.v.resize(n);
    for (double& v : s.m) v = r.f64();
    for (double& v : s.v) v = r.f64();
    ck.optimizer_state.push_back(std::move(s));
  }
  ck.rng_state = r.text(count(r.u64(), 1));
  ck.step = static_cast<std::int64_t>(r.u64());
  if (!r.done()) r.fail("trailing data", r.offset());
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const fs::path& path) { write_file_atomic(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const fs::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const IncompatibleError& e) {
    throw IncompatibleError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const Model& model, const RunConfig& config, VaeTrainer* trainer) {
  Checkpoint ck;
  ck.config = run_config_text(config);
  for (const diffnum::Parameter* p : model.parameters()) ck.parameters.push_back({p->name, p->shape, p->value});
  if (trainer) {
    ck.optimizer_steps = trainer->optimizer().steps();
    ck.optimizer_state = trainer->optimizer().state();
    ck.rng_state = trainer->rng_state();
    ck.step = trainer->steps_done();
  }
  return ck;
}

void restore_parameters(Model& model, const Checkpoint& ck) {
  std::map<std::string, const ParameterBlock*> by_name;
  for (const ParameterBlock& b : ck.parameters) by_name[b.name] = &b;
  if (by_name.size() != model.parameters().size())
    throw IncompatibleError("checkpoint: " + std::to_string(by_name.size()) + " parameter blocks, model has " +
                            std::to_string(model.parameters().size()));
  for (diffnum::Parameter* p : model.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw IncompatibleError("checkpoint: missing parameter " + p->name);
    if (it->second->shape != p->shape)
      throw IncompatibleError("checkpoint: parameter " + p->name + " has shape " +
                              diffnum::shape_string(it->second->shape) + ", model expects " +
                              diffnum::shape_string(p->shape));
  }
  for (diffnum::Parameter* p : model.parameters()) p->value = by_name[p->name]->values;
}

void restore_trainer(VaeTrainer& trainer, const Checkpoint& ck) {
  trainer.optimizer().restore(ck.optimizer_steps, ck.optimizer_state);
  trainer.restore(ck.step, ck.rng_state);
}

}  // namespace loopvec
