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

#include "loopvec/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "loopvec/errors.hpp"

namespace loopvec {
namespace {

void require_finite(Point2 p, const char* what) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw InvalidArgument(std::string(what) + ": non-finite coordinate");
  }
}

// One direction of the Chamfer sum. Nearest neighbours come from a sweep over
// `targets` sorted by x, pruned once the horizontal gap alone exceeds the
// best squared distance found so far.
double nearest_sum(const PointSet& sources, const PointSet& targets) {
  std::vector<Point2> sorted(targets);
  std::sort(sorted.begin(), sorted.end(),
            [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  double total = 0.0;
  for (const Point2& q : sources) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), q.x,
                               [](Point2 p, double x) { return p.x < x; });
    double best = std::numeric_limits<double>::infinity();
    for (auto r = it; r != sorted.end(); ++r) {
      const double dx = r->x - q.x;
      if (dx * dx > best) break;
      best = std::min(best, squared_distance(q, *r));
    }
    for (auto l = it; l != sorted.begin();) {
      --l;
      const double dx = q.x - l->x;
      if (dx * dx > best) break;
      best = std::min(best, squared_distance(q, *l));
    }
    total += best;
  }
  return total;
}

}  // namespace

double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }

double norm(Point2 p) { return std::hypot(p.x, p.y); }

double squared_distance(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

ClosedPath::ClosedPath(std::vector<Point2> controls) : controls_(std::move(controls)) {
  if (controls_.empty() || controls_.size() % 3 != 0) {
    throw InvalidArgument("ClosedPath: control count must be a positive multiple of 3, got " +
                          std::to_string(controls_.size()));
  }
  for (const Point2& p : controls_) require_finite(p, "ClosedPath");
}

std::array<Point2, 4> ClosedPath::segment(std::size_t s) const {
  const std::size_t base = 3 * s;
  return {control(base), control(base + 1), control(base + 2), control(base + 3)};
}

std::array<double, 4> cubic_bernstein(double u) {
  const double v = 1.0 - u;
  return {v * v * v, 3.0 * u * v * v, 3.0 * u * u * v, u * u * u};
}

std::vector<Point2> circle_samples(int k, std::span<const double> offsets) {
  if (k < 1) throw InvalidArgument("circle_samples: k must be >= 1");
  const std::size_t n = 3 * static_cast<std::size_t>(k);
  if (!offsets.empty() && offsets.size() != n) {
    throw InvalidArgument("circle_samples: expected " + std::to_string(n) + " offsets, got " +
                          std::to_string(offsets.size()));
  }
  std::vector<Point2> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    if (!offsets.empty()) {
      if (!std::isfinite(offsets[i])) throw InvalidArgument("circle_samples: non-finite offset");
      theta += offsets[i];
    }
    out[i] = {std::cos(theta), std::sin(theta)};
  }
  return out;
}

Point2 eval_segment(const ClosedPath& path, std::size_t segment, double u) {
  // de Casteljau: a path whose controls coincide evaluates to that point exactly.
  auto p = path.segment(segment);
  for (int level = 3; level > 0; --level) {
    for (int i = 0; i < level; ++i) p[i] = p[i] + u * (p[i + 1] - p[i]);
  }
  return p[0];
}

Point2 eval_path(const ClosedPath& path, double t) {
  if (!(t >= 0.0 && t < 1.0)) throw InvalidArgument("eval_path: t must lie in [0,1)");
  const auto k = static_cast<double>(path.segment_count());
  double x = t * k;
  // t = s/k must land exactly on the endpoint of segment s.
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, x)) {
    x = nearest;
  }
  const double s = std::min(std::floor(x), k - 1.0);
  return eval_segment(path, static_cast<std::size_t>(s), x - s);
}

Polyline flatten(const ClosedPath& path, int subdivisions) {
  if (subdivisions < 1) throw InvalidArgument("flatten: subdivisions must be >= 1");
  Polyline poly;
  poly.vertices.reserve(path.segment_count() * static_cast<std::size_t>(subdivisions));
  for (std::size_t s = 0; s < path.segment_count(); ++s) {
    for (int j = 0; j < subdivisions; ++j) {
      poly.vertices.push_back(eval_segment(path, s, static_cast<double>(j) / subdivisions));
    }
  }
  return poly;
}

int winding_number(const Polyline& poly, Point2 q) {
  require_finite(q, "winding_number");
  const auto& v = poly.vertices;
  int wn = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2 a = v[i];
    const Point2 b = v[(i + 1) % v.size()];
    const double side = (b.x - a.x) * (q.y - a.y) - (q.x - a.x) * (b.y - a.y);
    if (a.y <= q.y) {
      if (b.y > q.y && side > 0.0) ++wn;
    } else if (b.y <= q.y && side < 0.0) {
      --wn;
    }
  }
  return wn;
}

double point_segment_distance(Point2 q, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(q - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(q - (a + t * ab));
}

double signed_distance(const Polyline& poly, Point2 q) {
  require_finite(q, "signed_distance");
  const auto& v = poly.vertices;
  if (v.empty()) throw InvalidArgument("signed_distance: empty polyline");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    best = std::min(best, point_segment_distance(q, v[i], v[(i + 1) % v.size()]));
  }
  return winding_number(poly, q) != 0 ? -best : best;
}

PointSet sample_boundary(const ClosedPath& path, int n) {
  if (n < 1) throw InvalidArgument("sample_boundary: n must be >= 1");
  PointSet out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(eval_path(path, static_cast<double>(i) / n));
  return out;
}

double chamfer_distance(const PointSet& x, const PointSet& y) {
  if (x.empty() || y.empty()) throw InvalidArgument("chamfer_distance: empty point set");
  for (const Point2& p : x) require_finite(p, "chamfer_distance");
  for (const Point2& p : y) require_finite(p, "chamfer_distance");
  return nearest_sum(x, y) + nearest_sum(y, x);
}

}  // namespace loopvec
