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

#include "loopvec/raster.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "loopvec/errors.hpp"

namespace loopvec {

using diffnum::BackwardContext;
using diffnum::DiffArray;
using diffnum::Graph;

namespace {

constexpr double kCompositeEpsilon = 1e-6;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Forward state the rasterizer keeps for its backward pass.
struct CoverageRecord {
  int resolution = 0;
  int subdivisions = 0;
  std::size_t segments = 0;
  double radius = 1.0;
  std::vector<Point2> vertices;          // flattened, pixel units
  std::vector<std::array<double, 4>> weights;  // Bernstein weights per subdivision
  std::vector<int> edge;                 // closest edge within the band, or -1
  std::vector<double> edge_t;            // clamped projection parameter on that edge
  std::vector<double> distance;
  std::vector<signed char> inside;
};

// Rasterizes [3k x 2] canvas controls at `res`. Pixels whose nearest edge lies
// within the prefilter radius get the linear ramp; all others are 0 or 1 by
// nonzero winding.
std::shared_ptr<CoverageRecord> rasterize_kernel(std::span<const double> controls, int res, int subdivisions,
                                                 double radius, std::vector<double>& alpha) {
  auto rec = std::make_shared<CoverageRecord>();
  const std::size_t n_ctrl = controls.size() / 2;
  rec->resolution = res;
  rec->subdivisions = subdivisions;
  rec->segments = n_ctrl / 3;
  rec->radius = radius;
  for (int j = 0; j < subdivisions; ++j) {
    rec->weights.push_back(cubic_bernstein(static_cast<double>(j) / subdivisions));
  }
  const std::size_t m_count = rec->segments * static_cast<std::size_t>(subdivisions);
  rec->vertices.resize(m_count);
  for (std::size_t s = 0; s < rec->segments; ++s) {
    for (int j = 0; j < subdivisions; ++j) {
      Point2 v;
      for (int q = 0; q < 4; ++q) {
        const std::size_t ci = (3 * s + q) % n_ctrl;
        v.x += rec->weights[j][q] * controls[2 * ci];
        v.y += rec->weights[j][q] * controls[2 * ci + 1];
      }
      rec->vertices[s * subdivisions + j] = {v.x * res, v.y * res};
    }
  }
  const auto& verts = rec->vertices;
  const std::size_t npix = static_cast<std::size_t>(res) * res;

  // Winding numbers, row by row, using the same half-open crossing rule and
  // side test as winding_number().
  std::vector<int> winding(npix, 0);
  for (int y = 0; y < res; ++y) {
    const double qy = y + 0.5;
    for (std::size_t m = 0; m < m_count; ++m) {
      const Point2 a = verts[m];
      const Point2 b = verts[(m + 1) % m_count];
      int dir = 0;
      if (a.y <= qy) {
        if (b.y > qy) dir = 1;
      } else if (b.y <= qy) {
        dir = -1;
      }
      if (dir == 0) continue;
      for (int x = 0; x < res; ++x) {
        const double qx = x + 0.5;
        const double side = (b.x - a.x) * (qy - a.y) - (qx - a.x) * (b.y - a.y);
        if (dir > 0 && side > 0.0) ++winding[static_cast<std::size_t>(y) * res + x];
        if (dir < 0 && side < 0.0) --winding[static_cast<std::size_t>(y) * res + x];
      }
    }
  }

  // Nearest edge inside the band |d| < r, visiting only pixels near each edge.
  rec->edge.assign(npix, -1);
  rec->edge_t.assign(npix, 0.0);
  rec->distance.assign(npix, radius);
  rec->inside.assign(npix, 0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const Point2 a = verts[m];
    const Point2 b = verts[(m + 1) % m_count];
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x) - radius - 0.5)));
    const int x1 = std::min(res - 1, static_cast<int>(std::floor(std::max(a.x, b.x) + radius - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y) - radius - 0.5)));
    const int y1 = std::min(res - 1, static_cast<int>(std::floor(std::max(a.y, b.y) + radius - 0.5)));
    const Point2 ab = b - a;
    const double len2 = dot(ab, ab);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Point2 q{x + 0.5, y + 0.5};
        double t = len2 > 0.0 ? dot(q - a, ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double d = norm(q - (a + t * ab));
        const std::size_t p = static_cast<std::size_t>(y) * res + x;
        if (d < rec->distance[p]) {
          rec->distance[p] = d;
          rec->edge[p] = static_cast<int>(m);
          rec->edge_t[p] = t;
        }
      }
    }
  }

  alpha.assign(npix, 0.0);
  for (std::size_t p = 0; p < npix; ++p) {
    rec->inside[p] = winding[p] != 0 ? 1 : 0;
    if (rec->edge[p] < 0) {
      alpha[p] = rec->inside[p] ? 1.0 : 0.0;
    } else {
      const double sd = rec->inside[p] ? -rec->distance[p] : rec->distance[p];
      alpha[p] = std::clamp(0.5 - sd / (2.0 * radius), 0.0, 1.0);
    }
  }
  return rec;
}

void rasterize_backward(const CoverageRecord& rec, std::span<const double> alpha_grad,
                        std::span<double> control_grad) {
  const int res = rec.resolution;
  const std::size_t m_count = rec.vertices.size();
  std::vector<Point2> vgrad(m_count);
  for (std::size_t p = 0; p < alpha_grad.size(); ++p) {
    const int m = rec.edge[p];
    if (m < 0 || alpha_grad[p] == 0.0) continue;
    const double d = rec.distance[p];
    if (d <= 0.0) continue;
    const double g_sd = -alpha_grad[p] / (2.0 * rec.radius);
    const double g_d = rec.inside[p] ? -g_sd : g_sd;
    const std::size_t mb = (static_cast<std::size_t>(m) + 1) % m_count;
    const Point2 a = rec.vertices[m];
    const Point2 b = rec.vertices[mb];
    const double t = rec.edge_t[p];
    const Point2 q{static_cast<double>(p % res) + 0.5, static_cast<double>(p / res) + 0.5};
    const Point2 proj = a + t * (b - a);
    const Point2 u = (1.0 / d) * (proj - q);
    vgrad[m] = vgrad[m] + (g_d * (1.0 - t)) * u;
    vgrad[mb] = vgrad[mb] + (g_d * t) * u;
  }
  const std::size_t n_ctrl = control_grad.size() / 2;
  for (std::size_t s = 0; s < rec.segments; ++s) {
    for (int j = 0; j < rec.subdivisions; ++j) {
      const Point2 gv = vgrad[s * rec.subdivisions + j];
      for (int q = 0; q < 4; ++q) {
        const std::size_t ci = (3 * s + q) % n_ctrl;
        control_grad[2 * ci] += res * rec.weights[j][q] * gv.x;
        control_grad[2 * ci + 1] += res * rec.weights[j][q] * gv.y;
      }
    }
  }
}

// Canonical processing order for the compositor: by depth, then color, then
// coverage, so permuting the inputs permutes nothing in the arithmetic.
std::vector<std::size_t> canonical_order(std::span<const DiffArray> alphas, std::span<const DiffArray> colors,
                                         std::span<const DiffArray> depths) {
  std::vector<std::size_t> order(alphas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = depths[a].values()[0], db = depths[b].values()[0];
    if (da != db) return da < db;
    const auto ca = colors[a].values(), cb = colors[b].values();
    if (!std::equal(ca.begin(), ca.end(), cb.begin())) {
      return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
    }
    const auto aa = alphas[a].values(), ab = alphas[b].values();
    return std::lexicographical_compare(aa.begin(), aa.end(), ab.begin(), ab.end());
  });
  return order;
}

RasterImage image_from(const DiffArray& a, int channels, int res) {
  RasterImage img(res, res, channels);
  std::copy(a.values().begin(), a.values().end(), img.data.begin());
  return img;
}

std::vector<double> blur_decimate(const std::vector<double>& src, int channels, int h, int w, int oh, int ow) {
  // [1,4,6,4,1]/16 followed by the mean of each pixel pair: output i sits
  // between inputs 2i and 2i+1, on the centre of the coarser pixel.
  static constexpr double kTaps[6] = {1.0 / 32, 5.0 / 32, 10.0 / 32, 10.0 / 32, 5.0 / 32, 1.0 / 32};
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  std::vector<double> out(static_cast<std::size_t>(channels) * oh * ow);
  std::vector<double> rows(static_cast<std::size_t>(oh) * w);
  for (int c = 0; c < channels; ++c) {
    const double* s = src.data() + static_cast<std::size_t>(c) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -2; t <= 3; ++t) acc += kTaps[t + 2] * s[reflect(2 * oy + t, h) * w + x];
        rows[static_cast<std::size_t>(oy) * w + x] = acc;
      }
    }
    double* o = out.data() + static_cast<std::size_t>(c) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int t = -2; t <= 3; ++t) acc += kTaps[t + 2] * rows[static_cast<std::size_t>(oy) * w + reflect(2 * ox + t, w)];
        o[static_cast<std::size_t>(oy) * ow + ox] = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void VectorGraphic::add(ClosedPath path, double depth, Rgb color) {
  paths.push_back(std::move(path));
  depths.push_back(depth);
  colors.push_back(color);
}

void VectorGraphic::validate() const {
  if (paths.size() != depths.size() || paths.size() != colors.size()) {
    throw InvalidArgument("VectorGraphic: paths, depths and colors differ in length");
  }
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!std::isfinite(depths[i]) || !std::isfinite(colors[i].r) || !std::isfinite(colors[i].g) ||
        !std::isfinite(colors[i].b)) {
      throw InvalidArgument("VectorGraphic: non-finite depth or color at path " + std::to_string(i));
    }
  }
}

RasterImage::RasterImage(int h, int w, int c, double fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
  if (h < 0 || w < 0 || (c != 1 && c != 3)) {
    throw InvalidArgument("RasterImage: bad extents " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                          std::to_string(c));
  }
}

void RasterConfig::validate() const {
  if (!(prefilter_radius > 0.0)) throw InvalidArgument("RasterConfig: prefilter radius must be > 0");
  if (!(tau > 0.0)) throw InvalidArgument("RasterConfig: tau must be > 0");
  if (resolution < 4) throw InvalidArgument("RasterConfig: resolution must be >= 4");
  if (subdivisions < 1) throw InvalidArgument("RasterConfig: subdivisions must be >= 1");
}

int RasterConfig::level_resolution(int level) const {
  if (level < 0) throw InvalidArgument("level_resolution: negative level");
  int r = resolution;
  for (int l = 0; l < level; ++l) r = (r + 1) / 2;
  return r;
}

RasterImage to_rgb(const RasterImage& img) {
  if (img.channels == 3) return img;
  RasterImage out(img.height, img.width, 3);
  for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.pixel_count());
  return out;
}

std::vector<int> pyramid_sizes(int size, int levels) {
  if (levels < 1) throw InvalidArgument("pyramid: level count must be >= 1");
  std::vector<int> sizes{size};
  for (int l = 1; l < levels; ++l) sizes.push_back((sizes.back() + 1) / 2);
  if (sizes.back() < 2) {
    throw InvalidArgument("pyramid: " + std::to_string(levels) + " levels leave the coarsest level below 2 pixels");
  }
  return sizes;
}

ImagePyramid gaussian_pyramid(const RasterImage& img, int levels) {
  const auto hs = pyramid_sizes(img.height, levels);
  const auto ws = pyramid_sizes(img.width, levels);
  ImagePyramid pyr;
  pyr.levels.push_back(img);
  for (int l = 1; l < levels; ++l) {
    const RasterImage& prev = pyr.levels.back();
    RasterImage next(hs[l], ws[l], img.channels);
    next.data = blur_decimate(prev.data, img.channels, prev.height, prev.width, hs[l], ws[l]);
    pyr.levels.push_back(std::move(next));
  }
  return pyr;
}

// ---------------------------------------------------------------------------
// Differentiable path

VectorGraphic to_vector_graphic(const DiffGraphic& graphic) {
  VectorGraphic out;
  for (std::size_t i = 0; i < graphic.size(); ++i) {
    const auto v = graphic.controls[i].values();
    std::vector<Point2> pts(v.size() / 2);
    for (std::size_t j = 0; j < pts.size(); ++j) pts[j] = {v[2 * j], v[2 * j + 1]};
    const auto c = graphic.colors[i].values();
    out.add(ClosedPath(std::move(pts)), graphic.depths[i].values()[0], {c[0], c[1], c[2]});
  }
  return out;
}

DiffArray rasterize_path(Graph& g, const DiffArray& controls, const RasterConfig& cfg, int resolution) {
  cfg.validate();
  const auto& s = controls.shape();
  if (s.size() != 2 || s[1] != 2 || s[0] == 0 || s[0] % 3 != 0) {
    throw InvalidArgument("rasterize_path: controls must be [3k x 2], got " + diffnum::shape_string(s));
  }
  if (resolution < 1) throw InvalidArgument("rasterize_path: resolution must be positive");
  std::vector<double> alpha;
  auto rec = rasterize_kernel(controls.values(), resolution, cfg.subdivisions, cfg.prefilter_radius, alpha);
  const DiffArray in[] = {controls};
  const auto res = static_cast<std::size_t>(resolution);
  return g.record("rasterize_path", {res, res}, std::move(alpha), in, [rec](const BackwardContext& c) {
    if (c.input_grads[0].empty()) return;
    rasterize_backward(*rec, c.output_grad, c.input_grads[0]);
  });
}

DiffArray composite(Graph& g, std::span<const DiffArray> alphas, std::span<const DiffArray> colors,
                    std::span<const DiffArray> depths, const RasterConfig& cfg, int resolution) {
  cfg.validate();
  const std::size_t n = alphas.size();
  if (colors.size() != n || depths.size() != n) {
    throw InvalidArgument("composite: alphas, colors and depths differ in count");
  }
  const auto res = static_cast<std::size_t>(resolution);
  const std::size_t npix = res * res;
  for (std::size_t i = 0; i < n; ++i) {
    if (alphas[i].shape() != diffnum::Shape{res, res}) {
      throw InvalidArgument("composite: layer " + std::to_string(i) + " has shape " +
                            diffnum::shape_string(alphas[i].shape()) + ", expected " +
                            diffnum::shape_string({res, res}));
    }
    if (colors[i].size() != 3 || depths[i].size() != 1) {
      throw InvalidArgument("composite: colors must have 3 values and depths 1");
    }
  }
  const auto order = canonical_order(alphas, colors, depths);
  const double tau = cfg.tau;
  const double bg[3] = {cfg.background.r, cfg.background.g, cfg.background.b};

  // Pairwise in-front weights s_ij = logistic((d_j - d_i) / tau), canonical indices.
  std::vector<double> d(n), col(3 * n);
  std::vector<std::span<const double>> a(n);
  for (std::size_t k = 0; k < n; ++k) {
    d[k] = depths[order[k]].values()[0];
    for (int c = 0; c < 3; ++c) col[3 * k + c] = colors[order[k]].values()[c];
    a[k] = alphas[order[k]].values();
  }
  std::vector<double> s(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s[i * n + j] = logistic((d[j] - d[i]) / tau);

  std::vector<double> out(3 * npix);
  for (std::size_t p = 0; p < npix; ++p) {
    double num[3] = {0.0, 0.0, 0.0};
    double z = 0.0;
    double vbg = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double v = a[i][p];
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) v *= 1.0 - a[j][p] * s[i * n + j];
      z += v;
      for (int c = 0; c < 3; ++c) num[c] += v * col[3 * i + c];
      vbg *= 1.0 - a[i][p];
    }
    z += vbg + kCompositeEpsilon;
    for (int c = 0; c < 3; ++c) out[c * npix + p] = (num[c] + vbg * bg[c]) / z;
  }

  std::vector<DiffArray> inputs;
  inputs.reserve(3 * n);
  for (std::size_t k = 0; k < n; ++k) inputs.push_back(alphas[order[k]]);
  for (std::size_t k = 0; k < n; ++k) inputs.push_back(colors[order[k]]);
  for (std::size_t k = 0; k < n; ++k) inputs.push_back(depths[order[k]]);

  auto backward = [n, npix, tau, s, col, bg0 = bg[0], bg1 = bg[1], bg2 = bg[2]](const BackwardContext& c) {
    const double bgc[3] = {bg0, bg1, bg2};
    std::vector<double> gs(n * n, 0.0);
    std::vector<double> f(n), prefix(n + 1), suffix(n + 1), v(n), one_minus(n);
    for (std::size_t p = 0; p < npix; ++p) {
      const double go[3] = {c.output_grad[p], c.output_grad[npix + p], c.output_grad[2 * npix + p]};
      if (go[0] == 0.0 && go[1] == 0.0 && go[2] == 0.0) continue;
      const double o[3] = {c.output_value[p], c.output_value[npix + p], c.output_value[2 * npix + p]};
      // Recompute the forward quantities for this pixel.
      double z = 0.0, vbg = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ai = c.input_values[i][p];
        double vi = ai;
        for (std::size_t j = 0; j < n; ++j)
          if (j != i) vi *= 1.0 - c.input_values[j][p] * s[i * n + j];
        v[i] = vi;
        z += vi;
        one_minus[i] = 1.0 - ai;
        vbg *= one_minus[i];
      }
      z += vbg + kCompositeEpsilon;

      double g_vbg = 0.0;
      for (int ch = 0; ch < 3; ++ch) g_vbg += go[ch] * (bgc[ch] - o[ch]) / z;

      // v_bg = prod (1 - a_i)
      prefix[0] = 1.0;
      for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * one_minus[i];
      suffix[n] = 1.0;
      for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * one_minus[i];
      for (std::size_t i = 0; i < n; ++i) {
        auto ga = c.input_grads[i];
        if (!ga.empty()) ga[p] -= g_vbg * prefix[i] * suffix[i + 1];
      }

      for (std::size_t i = 0; i < n; ++i) {
        double g_vi = 0.0;
        for (int ch = 0; ch < 3; ++ch) g_vi += go[ch] * (col[3 * i + ch] - o[ch]) / z;
        auto gcol = c.input_grads[n + i];
        if (!gcol.empty())
          for (int ch = 0; ch < 3; ++ch) gcol[ch] += go[ch] * v[i] / z;
        if (g_vi == 0.0) continue;

        const double ai = c.input_values[i][p];
        for (std::size_t j = 0; j < n; ++j) f[j] = j == i ? 1.0 : 1.0 - c.input_values[j][p] * s[i * n + j];
        prefix[0] = 1.0;
        for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] * f[j];
        suffix[n] = 1.0;
        for (std::size_t j = n; j-- > 0;) suffix[j] = suffix[j + 1] * f[j];

        auto gai = c.input_grads[i];
        if (!gai.empty()) gai[p] += g_vi * prefix[n];
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double g_f = g_vi * ai * prefix[j] * suffix[j + 1];
          auto gaj = c.input_grads[j];
          if (!gaj.empty()) gaj[p] -= g_f * s[i * n + j];
          gs[i * n + j] -= g_f * c.input_values[j][p];
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j || gs[i * n + j] == 0.0) continue;
        const double sij = s[i * n + j];
        const double dd = gs[i * n + j] * sij * (1.0 - sij) / tau;
        auto gdj = c.input_grads[2 * n + j];
        auto gdi = c.input_grads[2 * n + i];
        if (!gdj.empty()) gdj[0] += dd;
        if (!gdi.empty()) gdi[0] -= dd;
      }
    }
  };
  return g.record("composite", {3, res, res}, std::move(out), inputs, std::move(backward));
}

DiffArray render_graphic(Graph& g, const DiffGraphic& graphic, const RasterConfig& cfg, int level) {
  const int res = cfg.level_resolution(level);
  std::vector<DiffArray> alphas;
  alphas.reserve(graphic.size());
  for (const DiffArray& c : graphic.controls) alphas.push_back(rasterize_path(g, c, cfg, res));
  return composite(g, alphas, graphic.colors, graphic.depths, cfg, res);
}

DiffArray pyramid_loss(Graph& g, const DiffGraphic& graphic, const ImagePyramid& target, const RasterConfig& cfg) {
  cfg.validate();
  if (target.levels.empty()) throw InvalidArgument("pyramid_loss: empty target pyramid");
  const auto sizes = pyramid_sizes(cfg.resolution, static_cast<int>(target.levels.size()));
  DiffArray total;
  for (std::size_t l = 0; l < target.levels.size(); ++l) {
    const RasterImage& t = target.levels[l];
    if (t.height != sizes[l] || t.width != sizes[l]) {
      throw InvalidArgument("pyramid_loss: target level " + std::to_string(l) + " is " + std::to_string(t.height) +
                            "x" + std::to_string(t.width) + ", expected " + std::to_string(sizes[l]));
    }
    const RasterImage rgb = to_rgb(t);
    const auto side = static_cast<std::size_t>(sizes[l]);
    DiffArray rendered = render_graphic(g, graphic, cfg, static_cast<int>(l));
    DiffArray level_loss = g.reduce_mse(rendered, g.constant({3, side, side}, rgb.data));
    total = total ? g.add(total, level_loss) : level_loss;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Plain wrappers

RasterImage rasterize_path(const ClosedPath& path, const RasterConfig& cfg, int resolution) {
  Graph g;
  std::vector<double> flat;
  for (const Point2& p : path.controls()) {
    flat.push_back(p.x);
    flat.push_back(p.y);
  }
  DiffArray c = g.constant({path.controls().size(), 2}, std::move(flat));
  return image_from(rasterize_path(g, c, cfg, resolution), 1, resolution);
}

RasterImage rasterize_path(const ClosedPath& path, const RasterConfig& cfg) {
  return rasterize_path(path, cfg, cfg.resolution);
}

RasterImage composite(std::span<const Layer> layers, const RasterConfig& cfg, int resolution) {
  Graph g;
  std::vector<DiffArray> alphas, colors, depths;
  const auto res = static_cast<std::size_t>(resolution);
  for (const Layer& l : layers) {
    if (l.alpha.channels != 1 || l.alpha.height != resolution || l.alpha.width != resolution) {
      throw InvalidArgument("composite: layer alpha must be a one-channel " + std::to_string(resolution) + "^2 image");
    }
    alphas.push_back(g.constant({res, res}, l.alpha.data));
    colors.push_back(g.constant({3}, {l.color.r, l.color.g, l.color.b}));
    depths.push_back(g.constant({1}, {l.depth}));
  }
  return image_from(composite(g, alphas, colors, depths, cfg, resolution), 3, resolution);
}

RasterImage composite(std::span<const Layer> layers, const RasterConfig& cfg) {
  return composite(layers, cfg, cfg.resolution);
}

namespace {

DiffGraphic constant_graphic(Graph& g, const VectorGraphic& graphic) {
  graphic.validate();
  DiffGraphic out;
  for (std::size_t i = 0; i < graphic.size(); ++i) {
    std::vector<double> flat;
    for (const Point2& p : graphic.paths[i].controls()) {
      flat.push_back(p.x);
      flat.push_back(p.y);
    }
    out.controls.push_back(g.constant({graphic.paths[i].controls().size(), 2}, std::move(flat)));
    out.depths.push_back(g.constant({1}, {graphic.depths[i]}));
    const Rgb& c = graphic.colors[i];
    out.colors.push_back(g.constant({3}, {c.r, c.g, c.b}));
  }
  return out;
}

}  // namespace

RasterImage render_graphic(const VectorGraphic& graphic, const RasterConfig& cfg, int level) {
  Graph g;
  const DiffGraphic dg = constant_graphic(g, graphic);
  const int res = cfg.level_resolution(level);
  return image_from(render_graphic(g, dg, cfg, level), 3, res);
}

double pyramid_loss(const VectorGraphic& graphic, const RasterImage& target, int levels, const RasterConfig& cfg) {
  if (target.height != cfg.resolution || target.width != cfg.resolution) {
    throw InvalidArgument("pyramid_loss: target is " + std::to_string(target.height) + "x" +
                          std::to_string(target.width) + " but the config renders at " +
                          std::to_string(cfg.resolution));
  }
  Graph g;
  const DiffGraphic dg = constant_graphic(g, graphic);
  return pyramid_loss(g, dg, gaussian_pyramid(target, levels), cfg).item();
}

}  // namespace loopvec
