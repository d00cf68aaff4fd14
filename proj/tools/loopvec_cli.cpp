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

// Command-line front end: train, vectorize, sample, interpolate, eval and
// complexity. Exit 0 on success, 2 on usage errors, 1 on any other failure
// with a one-line JSON error on stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "loopvec/errors.hpp"
#include "loopvec/evalmetrics.hpp"
#include "loopvec/io.hpp"
#include "loopvec/model.hpp"
#include "loopvec/raster.hpp"
#include "loopvec/train.hpp"

namespace fs = std::filesystem;
using namespace loopvec;

namespace {

struct DataArgs {
  std::string path;
  std::string labels;
  std::vector<int> digits;
  int limit = 0;
};

void add_data_options(CLI::App* app, DataArgs& d, bool required) {
  auto* opt = app->add_option("--data", d.path, "PNG directory or IDX image file");
  if (required) opt->required();
  app->add_option("--labels", d.labels, "IDX label file (with an IDX --data)");
  app->add_option("--digits", d.digits, "Keep only these labels")->delimiter(',');
  app->add_option("--limit", d.limit, "Keep at most this many images");
}

Dataset load_dataset(const DataArgs& d, int resolution) {
  if (fs::is_directory(d.path)) {
    Dataset ds = load_png_dir(d.path, resolution);
    if (d.limit > 0 && static_cast<int>(ds.images.size()) > d.limit) ds.images.resize(d.limit);
    return ds;
  }
  if (d.labels.empty()) throw InvalidArgument("--labels is required with an IDX --data file");
  IdxOptions opt;
  opt.resolution = resolution;
  opt.digits = d.digits;
  opt.limit = d.limit;
  return load_idx(d.path, d.labels, opt);
}

// Matches the model's resolution and channel count.
RasterImage model_image(RasterImage img, const ModelConfig& mc) {
  if (img.width != mc.resolution || img.height != mc.resolution) img = resize_bilinear(img, mc.resolution);
  if (mc.input_channels == 1 && img.channels == 3) {
    RasterImage gray(img.height, img.width, 1);
    for (std::size_t i = 0; i < gray.pixel_count(); ++i)
      gray.data[i] = (img.data[i] + img.data[i + gray.pixel_count()] + img.data[i + 2 * gray.pixel_count()]) / 3.0;
    img = std::move(gray);
  }
  return img;
}

struct Loaded {
  RunConfig config;
  std::unique_ptr<Model> model;
};

Loaded load_model(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  Loaded l{parse_run_config(ck.config), nullptr};
  l.model = std::make_unique<Model>(l.config.model, l.config.train.seed);
  restore_parameters(*l.model, ck);
  return l;
}

std::string indexed(const std::string& stem, int i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03d", i);
  return stem + buf + ext;
}

void write_outputs(const VectorGraphic& g, const RasterConfig& raster, const fs::path& dir, const std::string& name) {
  export_svg(g, raster.resolution, dir / (name + ".svg"));
  save_png(render_graphic(g, raster), dir / (name + ".png"));
}

// Segment count per path from the complexity head, or `k` for every path.
std::vector<int> segment_counts(Model& m, std::span<const double> z, int paths, int k, std::optional<double> k_thr) {
  if (!k_thr) return std::vector<int>(static_cast<std::size_t>(paths), k);
  std::vector<int> out;
  for (const auto& zt : m.path_latents(z, paths))
    out.push_back(select_segment_count(m.predict_complexity(zt), *k_thr, m.config().k_min, m.config().k_max));
  return out;
}

double render_mse(const VectorGraphic& g, const RasterImage& target, RasterConfig raster) {
  raster.resolution = target.width;
  return recon_error(render_graphic(g, raster), to_rgb(target));
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  DataArgs data;
  std::string config, out, resume, log;
  std::int64_t steps = 0;
  std::optional<double> lr, kl_weight;
  std::optional<int> batch, epochs, levels, paths, aux_steps;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.lr) rc.train.learning_rate = *a.lr;
  if (a.kl_weight) rc.train.kl_weight = *a.kl_weight;
  if (a.batch) rc.train.batch_size = *a.batch;
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.levels) rc.train.levels = rc.aux.levels = *a.levels;
  if (a.paths) rc.train.paths = *a.paths;
  if (a.aux_steps) rc.aux.steps = *a.aux_steps;
  if (a.seed) rc.train.seed = rc.aux.seed = *a.seed;
  rc = parse_run_config(run_config_text(rc));

  const Dataset data = load_dataset(a.data, rc.model.resolution);
  std::vector<RasterImage> images;
  for (const RasterImage& img : data.images) images.push_back(model_image(img, rc.model));

  Model model(rc.model, rc.train.seed);
  VaeTrainer trainer(model, rc.train, images);
  if (!a.resume.empty()) {
    const Checkpoint ck = load_checkpoint(a.resume);
    restore_parameters(model, ck);
    restore_trainer(trainer, ck);
  }
  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::app);
    if (!log_file) throw IoError("cannot open " + a.log);
    log = &log_file;
  }
  const std::int64_t total = a.steps > 0 ? a.steps : rc.train.epochs * trainer.steps_per_epoch();
  trainer.run(std::max<std::int64_t>(0, total - trainer.steps_done()), log);
  if (rc.aux.steps > 0) train_auxiliary(model, images, rc.aux);
  save_checkpoint(make_checkpoint(model, rc, &trainer), a.out);
  std::cout << nlohmann::json{{"checkpoint", a.out}, {"steps", trainer.steps_done()}}.dump() << '\n';
  return 0;
}

struct VectorizeArgs {
  std::string image, out, ckpt;
  bool direct = false;
  int paths = 1, segments = 8, iters = 500, levels = 4;
  double lr = 3e-2;
  std::uint64_t seed = 0;
  std::optional<double> k_thr;
};

int run_vectorize(const VectorizeArgs& a) {
  const RasterImage target = load_png(a.image);
  VectorGraphic g;
  RasterConfig raster;
  if (a.direct) {
    DirectFitConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.levels = a.levels;
    cfg.seed = a.seed;
    raster = cfg.raster;
    g = direct_fit(target, a.paths, a.segments, a.iters, cfg).graphic;
  } else {
    if (a.ckpt.empty()) throw InvalidArgument("vectorize needs --ckpt or --direct");
    Loaded l = load_model(a.ckpt);
    raster = l.config.train.raster;
    const std::vector<double> z = l.model->encode_mean(model_image(target, l.config.model));
    g = l.model->decode_graphic(z, segment_counts(*l.model, z, l.config.train.paths, a.segments, a.k_thr));
  }
  export_svg(g, target.width, a.out);
  std::cout << nlohmann::json{{"svg", a.out}, {"paths", g.size()}, {"mse", render_mse(g, target, raster)}}.dump()
            << '\n';
  return 0;
}

struct SampleArgs {
  std::string ckpt, out_dir;
  int n = 8, segments = 7;
  std::uint64_t seed = 0;
};

int run_sample(const SampleArgs& a) {
  Loaded l = load_model(a.ckpt);
  fs::create_directories(a.out_dir);
  const auto zs = sample_latents(a.n, l.config.model.latent_size, a.seed);
  for (int i = 0; i < a.n; ++i)
    write_outputs(l.model->decode_graphic(zs[i], a.segments, l.config.train.paths), l.config.train.raster, a.out_dir,
                  indexed("sample", i, ""));
  std::cout << nlohmann::json{{"samples", a.n}, {"out_dir", a.out_dir}}.dump() << '\n';
  return 0;
}

struct InterpolateArgs {
  std::string ckpt, image_a, image_b, out_dir;
  int steps = 6, segments = 7;
};

int run_interpolate(const InterpolateArgs& a) {
  Loaded l = load_model(a.ckpt);
  fs::create_directories(a.out_dir);
  const auto za = l.model->encode_mean(model_image(load_png(a.image_a), l.config.model));
  const auto zb = l.model->encode_mean(model_image(load_png(a.image_b), l.config.model));
  const auto frames = interpolate(*l.model, za, zb, a.steps, a.segments, l.config.train.paths);
  for (std::size_t i = 0; i < frames.size(); ++i)
    write_outputs(frames[i], l.config.train.raster, a.out_dir, indexed("interp", static_cast<int>(i), ""));
  std::cout << nlohmann::json{{"frames", frames.size()}, {"out_dir", a.out_dir}}.dump() << '\n';
  return 0;
}

struct EvalArgs {
  std::string ckpt, metric;
  DataArgs data;
  int segments = 7, n = 100, pairs = 10, ref_iters = 200;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  Loaded l = load_model(a.ckpt);
  Model& m = *l.model;
  const RunConfig& rc = l.config;
  const Dataset data = load_dataset(a.data, rc.model.resolution);
  std::vector<RasterImage> targets;
  for (const RasterImage& img : data.images) targets.push_back(to_rgb(img));
  auto decode = [&](std::span<const double> z) { return m.decode_graphic(z, a.segments, rc.train.paths); };
  auto render = [&](const VectorGraphic& g) { return render_graphic(g, rc.train.raster); };

  EvalReport report{a.metric, data.source, config_hash(run_config_text(rc)), {}};
  if (a.metric == "recon") {
    for (std::size_t i = 0; i < data.images.size(); ++i)
      report.per_sample.push_back(
          recon_error(render(decode(m.encode_mean(model_image(data.images[i], rc.model)))), targets[i]));
  } else if (a.metric == "chamfer") {
    // Reference geometry is a direct fit to each image.
    DirectFitConfig cfg;
    cfg.seed = a.seed;
    cfg.raster = rc.train.raster;
    cfg.levels = rc.train.levels;
    for (const RasterImage& img : data.images) {
      const VectorGraphic g = decode(m.encode_mean(model_image(img, rc.model)));
      const VectorGraphic ref = direct_fit(img, rc.train.paths, a.segments, a.ref_iters, cfg).graphic;
      if (g.empty() || ref.empty()) continue;
      report.per_sample.push_back(chamfer_recon(g, ref, 64));
    }
  } else if (a.metric == "generation") {
    for (const auto& z : sample_latents(a.n, rc.model.latent_size, a.seed)) {
      const RasterImage out = render(decode(z));
      report.per_sample.push_back(generation_quality(std::span(&out, 1), targets));
    }
  } else if (a.metric == "interpolation") {
    // Interior frames of 6-frame interpolations between random dataset pairs.
    std::mt19937_64 rng(a.seed);
    std::uniform_int_distribution<std::size_t> pick(0, data.images.size() - 1);
    for (int p = 0; p < a.pairs; ++p) {
      const auto za = m.encode_mean(model_image(data.images[pick(rng)], rc.model));
      const auto zb = m.encode_mean(model_image(data.images[pick(rng)], rc.model));
      const auto zs = interpolation_latents(za, zb, 6);
      for (std::size_t i = 1; i + 1 < zs.size(); ++i) {
        const RasterImage out = render(decode(zs[i]));
        report.per_sample.push_back(generation_quality(std::span(&out, 1), targets));
      }
    }
  } else {
    throw InvalidArgument("unknown metric " + a.metric);
  }
  std::cout << report.json() << '\n';
  return 0;
}

struct ComplexityArgs {
  std::string ckpt, image;
  double k_thr = 0.005;
};

int run_complexity(const ComplexityArgs& a) {
  Loaded l = load_model(a.ckpt);
  Model& m = *l.model;
  const auto z = m.encode_mean(model_image(load_png(a.image), l.config.model));
  const auto codes = m.path_latents(z, l.config.train.paths);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const ComplexityCurve c = m.predict_complexity(codes[i]);
    const int n = select_segment_count(c, a.k_thr, m.config().k_min, m.config().k_max);
    std::cout << nlohmann::json{{"path", i}, {"a", c.a}, {"b", c.b}, {"c", c.c}, {"segments", n}}.dump() << '\n';
  }
  return 0;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const IncompatibleError*>(&e)) return "IncompatibleError";
  if (dynamic_cast<const NumericError*>(&e)) return "NumericError";
  if (dynamic_cast<const FitFailure*>(&e)) return "FitFailure";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "IoError";
  return "Error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Raster-to-vector autoencoder toolkit"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the autoencoder on a dataset");
  add_data_options(train, ta.data, true);
  train->add_option("--config", ta.config, "Run configuration (JSON)");
  train->add_option("--out", ta.out, "Checkpoint to write")->required();
  train->add_option("--resume", ta.resume, "Checkpoint to continue from");
  train->add_option("--steps", ta.steps, "Total steps (default: epochs x steps per epoch)");
  train->add_option("--log", ta.log, "Metrics log (default: stdout)");
  train->add_option("--lr", ta.lr);
  train->add_option("--kl-weight", ta.kl_weight);
  train->add_option("--batch", ta.batch);
  train->add_option("--epochs", ta.epochs);
  train->add_option("--levels", ta.levels);
  train->add_option("--paths", ta.paths);
  train->add_option("--aux-steps", ta.aux_steps);
  train->add_option("--seed", ta.seed);

  VectorizeArgs va;
  auto* vectorize = app.add_subcommand("vectorize", "Convert a PNG to SVG");
  vectorize->add_option("--image", va.image)->required();
  vectorize->add_option("--out", va.out)->required();
  auto* ckpt_opt = vectorize->add_option("--ckpt", va.ckpt);
  vectorize->add_flag("--direct", va.direct, "Optimize paths directly instead of using a model")->excludes(ckpt_opt);
  vectorize->add_option("--paths", va.paths);
  vectorize->add_option("--segments", va.segments);
  vectorize->add_option("--iters", va.iters);
  vectorize->add_option("--levels", va.levels);
  vectorize->add_option("--lr", va.lr);
  vectorize->add_option("--seed", va.seed);
  vectorize->add_option("--k-thr", va.k_thr, "Pick segments per path from the complexity head");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Decode random latents");
  sample->add_option("--ckpt", sa.ckpt)->required();
  sample->add_option("--n", sa.n);
  sample->add_option("--seed", sa.seed);
  sample->add_option("--segments", sa.segments);
  sample->add_option("--out-dir", sa.out_dir)->required();

  InterpolateArgs ia;
  auto* interp = app.add_subcommand("interpolate", "Decode a latent path between two images");
  interp->add_option("--ckpt", ia.ckpt)->required();
  interp->add_option("--image-a", ia.image_a)->required();
  interp->add_option("--image-b", ia.image_b)->required();
  interp->add_option("--steps", ia.steps)->check(CLI::Range(2, 1000));
  interp->add_option("--segments", ia.segments);
  interp->add_option("--out-dir", ia.out_dir)->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Compute a metric over a dataset");
  eval->add_option("--ckpt", ea.ckpt)->required();
  add_data_options(eval, ea.data, true);
  eval->add_option("--metric", ea.metric)
      ->required()
      ->check(CLI::IsMember({"recon", "chamfer", "generation", "interpolation"}));
  eval->add_option("--segments", ea.segments);
  eval->add_option("--n", ea.n, "Generated samples");
  eval->add_option("--pairs", ea.pairs, "Interpolation pairs");
  eval->add_option("--ref-iters", ea.ref_iters, "Direct-fit iterations for chamfer references");
  eval->add_option("--seed", ea.seed);

  ComplexityArgs ca;
  auto* complexity = app.add_subcommand("complexity", "Print fitted complexity curves and segment counts");
  complexity->add_option("--ckpt", ca.ckpt)->required();
  complexity->add_option("--image", ca.image)->required();
  complexity->add_option("--k-thr", ca.k_thr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train) return run_train(ta);
    if (*vectorize) return run_vectorize(va);
    if (*sample) return run_sample(sa);
    if (*interp) return run_interpolate(ia);
    if (*eval) return run_eval(ea);
    if (*complexity) return run_complexity(ca);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 2;
}
