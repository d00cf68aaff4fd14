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

#include <cstddef>
#include <vector>

#include "loopvec/geometry.hpp"

namespace loopvec {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Depth-ordered set of filled closed paths in canvas coordinates ([0,1]^2 is
/// the visible canvas). Larger depth is closer to the viewer.
struct VectorGraphic {
  std::vector<ClosedPath> paths;
  std::vector<double> depths;
  std::vector<Rgb> colors;

  std::size_t size() const { return paths.size(); }
  bool empty() const { return paths.empty(); }
  void add(ClosedPath path, double depth, Rgb color);
  /// Throws InvalidArgument when the three lists differ in length or a depth
  /// or color channel is non-finite.
  void validate() const;
};

}  // namespace loopvec
