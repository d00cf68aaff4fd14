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

// Minimal reverse-mode automatic differentiation over dense row-major arrays
// of doubles. A Graph records every operation it executes; backward() walks
// the record once in reverse. The operator set is deliberately closed: shapes
// must match exactly and nothing broadcasts implicitly.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loopvec::diffnum {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Learnable leaf storage owned by a model. Graph::param() reads `value` and
/// backward() accumulates into `grad`.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Shape shape);

  void zero_grad();
  std::size_t size() const { return value.size(); }

  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
};

class Graph;

/// Handle to an array recorded in a Graph. Cheap to copy; only valid while the
/// owning Graph is alive.
class DiffArray {
 public:
  DiffArray() = default;

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> values() const;
  /// Gradient after backward(); empty when the node never received one.
  std::span<const double> grad() const;
  bool requires_grad() const;
  /// Value of a one-element array.
  double item() const;
  Graph* graph() const { return graph_; }
  explicit operator bool() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  DiffArray(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Views handed to a backward function. `input_grads[i]` is empty when input
/// i does not require a gradient.
struct BackwardContext {
  std::span<const double> output_value;
  std::span<const double> output_grad;
  std::vector<std::span<const double>> input_values;
  std::vector<std::span<double>> input_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Graph {
 public:
  Graph();
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  DiffArray constant(Shape shape, std::vector<double> values);
  /// Leaf whose gradient is kept on the node (read it with DiffArray::grad()).
  DiffArray variable(Shape shape, std::vector<double> values);
  DiffArray param(Parameter& p);

  /// Records a custom node. `values` must already hold the forward result;
  /// they are checked for NaN/Inf here.
  DiffArray record(std::string_view op, Shape shape, std::vector<double> values,
                   std::span<const DiffArray> inputs, BackwardFn backward);

  // Elementwise.
  DiffArray add(const DiffArray& a, const DiffArray& b);
  DiffArray sub(const DiffArray& a, const DiffArray& b);
  DiffArray mul(const DiffArray& a, const DiffArray& b);
  DiffArray scale(const DiffArray& a, double s);
  DiffArray add_scalar(const DiffArray& a, double s);
  DiffArray exp(const DiffArray& a);
  DiffArray sin(const DiffArray& a);
  DiffArray cos(const DiffArray& a);
  /// Subgradient at exactly 0 is 0.
  DiffArray relu(const DiffArray& a);
  DiffArray sigmoid(const DiffArray& a);
  DiffArray tanh(const DiffArray& a);
  DiffArray softplus(const DiffArray& a);

  // Reductions.
  DiffArray sum(const DiffArray& a);
  DiffArray mean(const DiffArray& a);
  DiffArray reduce_mse(const DiffArray& a, const DiffArray& b);
  /// -0.5 * mean(1 + logvar - mu^2 - exp(logvar)).
  DiffArray kl_standard_normal(const DiffArray& mu, const DiffArray& logvar);

  // Structure. 2-D helpers treat the array as [rows x cols].
  DiffArray reshape(const DiffArray& a, Shape shape);
  DiffArray transpose(const DiffArray& a);
  DiffArray concat(std::span<const DiffArray> parts, int axis);
  DiffArray slice(const DiffArray& a, int axis, std::size_t begin, std::size_t count);
  /// [1 x D] (or [D]) repeated into D rows of n columns: out[d][j] = v[d].
  DiffArray tile_columns(const DiffArray& v, std::size_t n);
  /// Row-wise softmax of a [rows x cols] array.
  DiffArray softmax(const DiffArray& a);

  // Layers.
  /// x [N x Din] times W [Din x Dout] plus b [Dout].
  DiffArray fully_connected(const DiffArray& x, const DiffArray& w, const DiffArray& b);
  /// x [Cin x L], kernels [Cout x Cin x 3], bias [Cout]; taps read positions
  /// j-1, j, j+1 modulo L.
  DiffArray conv1d_circular(const DiffArray& x, const DiffArray& kernels, const DiffArray& bias);
  /// x [Cin x H x W], kernels [Cout x Cin x K x K] with K odd, zero padding
  /// (K-1)/2; output extents are ceil(H/stride) x ceil(W/stride).
  DiffArray conv2d(const DiffArray& x, const DiffArray& kernels, const DiffArray& bias, int stride);
  /// 3x3, stride 2, zero padding 1.
  DiffArray conv2d_down(const DiffArray& x, const DiffArray& kernels, const DiffArray& bias);

  /// Fills gradients for every node that requires one and accumulates into
  /// Parameter::grad. Throws std::logic_error when called twice and
  /// NumericError naming the operation when a gradient turns non-finite.
  void backward(const DiffArray& loss);

  std::size_t node_count() const;

 private:
  friend class DiffArray;
  struct Node;

  DiffArray push(std::string_view op, Shape shape, std::vector<double> values,
                 std::span<const DiffArray> inputs, BackwardFn backward);
  Node& node(const DiffArray& a);
  const Node& node(const DiffArray& a) const;
  void check_owner(const DiffArray& a, std::string_view op) const;
  DiffArray unary(std::string_view op, const DiffArray& a, double (*f)(double),
                  double (*df)(double x, double y));

  std::vector<std::unique_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

/// Weights of one LSTM direction: gate order is input, forget, cell, output.
struct LstmDirection {
  DiffArray w_input;      // [Din x 4H]
  DiffArray w_recurrent;  // [H x 4H]
  DiffArray bias;         // [4H]
};

/// Runs an LSTM forward and another backward over the rows of `inputs`
/// [T x Din] and returns the per-step concatenation [T x 2H] (forward half
/// first). Initial hidden and cell states are zero.
DiffArray lstm_bidirectional(Graph& g, const DiffArray& inputs, const LstmDirection& forward,
                             const LstmDirection& backward);

}  // namespace loopvec::diffnum
