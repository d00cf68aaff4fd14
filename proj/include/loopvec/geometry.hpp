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

// Exact 2D geometry for closed cubic Bezier paths: circle sampling,
// evaluation, flattening, nonzero winding, signed distance, boundary
// sampling and Chamfer distance. Everything here is a pure function.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace loopvec {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
};

double dot(Point2 a, Point2 b);
double norm(Point2 p);
double squared_distance(Point2 a, Point2 b);

/// k closed cubic segments stored as 3k controls. Segment s uses controls
/// 3s, 3s+1, 3s+2 and 3(s+1) mod 3k; the closing point is never stored.
class ClosedPath {
 public:
  /// Throws InvalidArgument unless the size is a positive multiple of 3 and
  /// every coordinate is finite.
  explicit ClosedPath(std::vector<Point2> controls);

  std::size_t segment_count() const { return controls_.size() / 3; }
  std::span<const Point2> controls() const { return controls_; }
  /// Control i with wrap-around, so control(3k) is control(0).
  const Point2& control(std::size_t i) const { return controls_[i % controls_.size()]; }
  /// The four Bezier points of segment s.
  std::array<Point2, 4> segment(std::size_t s) const;

 private:
  std::vector<Point2> controls_;
};

/// Flattened closed polygon; the last vertex connects back to the first.
struct Polyline {
  std::vector<Point2> vertices;
};

using PointSet = std::vector<Point2>;

/// Bernstein weights of a cubic at local parameter u.
std::array<double, 4> cubic_bernstein(double u);

/// 3k unit-circle points at angles 2*pi*i/(3k) + offsets[i].
std::vector<Point2> circle_samples(int k, std::span<const double> offsets = {});

Point2 eval_segment(const ClosedPath& path, std::size_t segment, double u);

/// Global parameter t in [0,1) spread uniformly over the k segments.
Point2 eval_path(const ClosedPath& path, double t);

/// Uniform flattening: vertex j of segment s is eval_segment(s, j/subdivisions).
Polyline flatten(const ClosedPath& path, int subdivisions = 16);

/// Signed crossing count of the closed polyline around q (CCW gives +1).
/// Queries exactly on an edge are unspecified.
int winding_number(const Polyline& poly, Point2 q);

double point_segment_distance(Point2 q, Point2 a, Point2 b);

/// Distance to the nearest edge, negated when the winding number is nonzero.
double signed_distance(const Polyline& poly, Point2 q);

PointSet sample_boundary(const ClosedPath& path, int n);

/// Sum of squared nearest-neighbour distances in both directions.
double chamfer_distance(const PointSet& x, const PointSet& y);

}  // namespace loopvec
