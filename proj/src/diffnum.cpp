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

#include "loopvec/diffnum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "loopvec/errors.hpp"

namespace loopvec::diffnum {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Parameter::Parameter(std::string name_, Shape shape_)
    : name(std::move(name_)), shape(std::move(shape_)),
      value(element_count(shape), 0.0), grad(element_count(shape), 0.0) {}

void Parameter::zero_grad() { grad.assign(value.size(), 0.0); }

struct Graph::Node {
  std::string op;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::size_t> inputs;
  BackwardFn backward;
  Parameter* param = nullptr;
};

// ---------------------------------------------------------------------------
// DiffArray

const Shape& DiffArray::shape() const { return graph_->node(*this).shape; }
std::size_t DiffArray::size() const { return graph_->node(*this).value.size(); }
std::span<const double> DiffArray::values() const { return graph_->node(*this).value; }
std::span<const double> DiffArray::grad() const { return graph_->node(*this).grad; }
bool DiffArray::requires_grad() const { return graph_->node(*this).requires_grad; }

double DiffArray::item() const {
  const auto& v = graph_->node(*this).value;
  if (v.size() != 1) throw InvalidArgument("item(): array has " + std::to_string(v.size()) + " elements");
  return v[0];
}

// ---------------------------------------------------------------------------
// Graph plumbing

Graph::Graph() = default;
Graph::~Graph() = default;

std::size_t Graph::node_count() const { return nodes_.size(); }

Graph::Node& Graph::node(const DiffArray& a) { return *nodes_.at(a.id_); }
const Graph::Node& Graph::node(const DiffArray& a) const { return *nodes_.at(a.id_); }

void Graph::check_owner(const DiffArray& a, std::string_view op) const {
  if (a.graph_ != this) {
    throw InvalidArgument(std::string(op) + ": input array belongs to a different graph");
  }
}

DiffArray Graph::push(std::string_view op, Shape shape, std::vector<double> values,
                      std::span<const DiffArray> inputs, BackwardFn backward) {
  if (element_count(shape) != values.size()) {
    throw InvalidArgument(std::string(op) + ": shape " + shape_string(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite forward value");
  }
  auto n = std::make_unique<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(values);
  for (const DiffArray& in : inputs) {
    check_owner(in, op);
    n->inputs.push_back(in.id_);
    n->requires_grad = n->requires_grad || nodes_[in.id_]->requires_grad;
  }
  n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return DiffArray(this, nodes_.size() - 1);
}

DiffArray Graph::constant(Shape shape, std::vector<double> values) {
  return push("constant", std::move(shape), std::move(values), {}, nullptr);
}

DiffArray Graph::variable(Shape shape, std::vector<double> values) {
  DiffArray a = push("variable", std::move(shape), std::move(values), {}, nullptr);
  node(a).requires_grad = true;
  return a;
}

DiffArray Graph::param(Parameter& p) {
  DiffArray a = push("param:" + p.name, p.shape, p.value, {}, nullptr);
  node(a).requires_grad = true;
  node(a).param = &p;
  return a;
}

DiffArray Graph::record(std::string_view op, Shape shape, std::vector<double> values,
                        std::span<const DiffArray> inputs, BackwardFn backward) {
  return push(op, std::move(shape), std::move(values), inputs, std::move(backward));
}

void Graph::backward(const DiffArray& loss) {
  check_owner(loss, "backward");
  if (backward_done_) {
    throw std::logic_error("backward: graph already differentiated; record a new graph");
  }
  backward_done_ = true;
  Node& root = node(loss);
  if (root.value.size() != 1) throw InvalidArgument("backward: loss must be a scalar");
  if (!root.requires_grad) return;
  root.grad.assign(1, 1.0);

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = *nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      BackwardContext ctx;
      ctx.output_value = n.value;
      ctx.output_grad = n.grad;
      for (std::size_t in : n.inputs) {
        Node& src = *nodes_[in];
        ctx.input_values.emplace_back(src.value);
        if (src.requires_grad) {
          if (src.grad.empty()) src.grad.assign(src.value.size(), 0.0);
          ctx.input_grads.emplace_back(src.grad);
        } else {
          ctx.input_grads.emplace_back();
        }
      }
      n.backward(ctx);
      for (const auto& g : ctx.input_grads) {
        for (double v : g) {
          if (!std::isfinite(v)) {
            throw NumericError("backward: non-finite gradient produced by '" + n.op + "'");
          }
        }
      }
    }
    if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

void require_same_shape(const DiffArray& a, const DiffArray& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
  }
}

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

DiffArray Graph::unary(std::string_view op, const DiffArray& a, double (*f)(double),
                       double (*df)(double, double)) {
  check_owner(a, op);
  const auto x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const DiffArray in[] = {a};
  return push(op, a.shape(), std::move(y), in, [df](const BackwardContext& c) {
    auto gx = c.input_grads[0];
    if (gx.empty()) return;
    const auto x = c.input_values[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c.output_grad[i] * df(x[i], c.output_value[i]);
  });
}

DiffArray Graph::add(const DiffArray& a, const DiffArray& b) {
  check_owner(a, "add");
  check_owner(b, "add");
  require_same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  const DiffArray in[] = {a, b};
  return push("add", a.shape(), std::move(y), in, [](const BackwardContext& c) {
    for (int k = 0; k < 2; ++k) {
      auto g = c.input_grads[k];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.output_grad[i];
    }
  });
}

DiffArray Graph::sub(const DiffArray& a, const DiffArray& b) {
  check_owner(a, "sub");
  check_owner(b, "sub");
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] - b.values()[i];
  const DiffArray in[] = {a, b};
  return push("sub", a.shape(), std::move(y), in, [](const BackwardContext& c) {
    auto ga = c.input_grads[0];
    auto gb = c.input_grads[1];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.output_grad[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= c.output_grad[i];
  });
}

DiffArray Graph::mul(const DiffArray& a, const DiffArray& b) {
  check_owner(a, "mul");
  check_owner(b, "mul");
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  const DiffArray in[] = {a, b};
  return push("mul", a.shape(), std::move(y), in, [](const BackwardContext& c) {
    auto ga = c.input_grads[0];
    auto gb = c.input_grads[1];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c.output_grad[i] * c.input_values[1][i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += c.output_grad[i] * c.input_values[0][i];
  });
}

DiffArray Graph::scale(const DiffArray& a, double s) {
  check_owner(a, "scale");
  std::vector<double> y(a.values().begin(), a.values().end());
  for (double& v : y) v *= s;
  const DiffArray in[] = {a};
  return push("scale", a.shape(), std::move(y), in, [s](const BackwardContext& c) {
    auto g = c.input_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * c.output_grad[i];
  });
}

DiffArray Graph::add_scalar(const DiffArray& a, double s) {
  check_owner(a, "add_scalar");
  std::vector<double> y(a.values().begin(), a.values().end());
  for (double& v : y) v += s;
  const DiffArray in[] = {a};
  return push("add_scalar", a.shape(), std::move(y), in, [](const BackwardContext& c) {
    auto g = c.input_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.output_grad[i];
  });
}

DiffArray Graph::exp(const DiffArray& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

DiffArray Graph::sin(const DiffArray& a) {
  return unary("sin", a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

DiffArray Graph::cos(const DiffArray& a) {
  return unary("cos", a, [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); });
}

DiffArray Graph::relu(const DiffArray& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

DiffArray Graph::sigmoid(const DiffArray& a) {
  return unary("sigmoid", a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

DiffArray Graph::tanh(const DiffArray& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

DiffArray Graph::softplus(const DiffArray& a) {
  return unary("softplus", a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

// ---------------------------------------------------------------------------
// Reductions

DiffArray Graph::sum(const DiffArray& a) {
  check_owner(a, "sum");
  double s = 0.0;
  for (double v : a.values()) s += v;
  const DiffArray in[] = {a};
  return push("sum", {1}, {s}, in, [](const BackwardContext& c) {
    auto g = c.input_grads[0];
    for (double& v : g) v += c.output_grad[0];
  });
}

DiffArray Graph::mean(const DiffArray& a) {
  check_owner(a, "mean");
  if (a.size() == 0) throw InvalidArgument("mean: empty array");
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double n = static_cast<double>(a.size());
  const DiffArray in[] = {a};
  return push("mean", {1}, {s / n}, in, [n](const BackwardContext& c) {
    auto g = c.input_grads[0];
    for (double& v : g) v += c.output_grad[0] / n;
  });
}

DiffArray Graph::reduce_mse(const DiffArray& a, const DiffArray& b) {
  check_owner(a, "reduce_mse");
  check_owner(b, "reduce_mse");
  require_same_shape(a, b, "reduce_mse");
  if (a.size() == 0) throw InvalidArgument("reduce_mse: empty arrays");
  const auto x = a.values();
  const auto y = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const double n = static_cast<double>(x.size());
  const DiffArray in[] = {a, b};
  return push("reduce_mse", {1}, {s / n}, in, [n](const BackwardContext& c) {
    const auto x = c.input_values[0];
    const auto y = c.input_values[1];
    const double g = c.output_grad[0] * 2.0 / n;
    auto ga = c.input_grads[0];
    auto gb = c.input_grads[1];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (x[i] - y[i]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (x[i] - y[i]);
  });
}

DiffArray Graph::kl_standard_normal(const DiffArray& mu, const DiffArray& logvar) {
  check_owner(mu, "kl_standard_normal");
  check_owner(logvar, "kl_standard_normal");
  require_same_shape(mu, logvar, "kl_standard_normal");
  const auto m = mu.values();
  const auto lv = logvar.values();
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += 1.0 + lv[i] - m[i] * m[i] - std::exp(lv[i]);
  const double n = static_cast<double>(m.size());
  const DiffArray in[] = {mu, logvar};
  return push("kl_standard_normal", {1}, {-0.5 * s / n}, in, [n](const BackwardContext& c) {
    const auto m = c.input_values[0];
    const auto lv = c.input_values[1];
    const double g = c.output_grad[0] / n;
    auto gm = c.input_grads[0];
    auto glv = c.input_grads[1];
    for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g * m[i];
    for (std::size_t i = 0; i < glv.size(); ++i) glv[i] += g * -0.5 * (1.0 - std::exp(lv[i]));
  });
}

// ---------------------------------------------------------------------------
// Structure

DiffArray Graph::reshape(const DiffArray& a, Shape shape) {
  check_owner(a, "reshape");
  if (element_count(shape) != a.size()) {
    throw InvalidArgument("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> y(a.values().begin(), a.values().end());
  const DiffArray in[] = {a};
  return push("reshape", std::move(shape), std::move(y), in, [](const BackwardContext& c) {
    auto g = c.input_grads[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.output_grad[i];
  });
}

DiffArray Graph::transpose(const DiffArray& a) {
  check_owner(a, "transpose");
  if (a.shape().size() != 2) throw InvalidArgument("transpose: expects a 2-D array");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  const auto x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y[c * rows + r] = x[r * cols + c];
  const DiffArray in[] = {a};
  return push("transpose", {cols, rows}, std::move(y), in, [rows, cols](const BackwardContext& c) {
    auto g = c.input_grads[0];
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < cols; ++k) g[r * cols + k] += c.output_grad[k * rows + r];
  });
}

DiffArray Graph::concat(std::span<const DiffArray> parts, int axis) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  for (const auto& p : parts) check_owner(p, "concat");
  if (axis == 0) {
    const Shape& first = parts[0].shape();
    if (first.empty()) throw InvalidArgument("concat: scalar inputs");
    Shape out_shape = first;
    out_shape[0] = 0;
    std::vector<double> y;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) {
      const Shape& s = p.shape();
      if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
        throw InvalidArgument("concat: trailing extents differ: " + shape_string(s) + " vs " +
                              shape_string(first));
      }
      out_shape[0] += s[0];
      y.insert(y.end(), p.values().begin(), p.values().end());
      sizes.push_back(p.size());
    }
    return push("concat", std::move(out_shape), std::move(y), parts, [sizes](const BackwardContext& c) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        auto g = c.input_grads[k];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.output_grad[offset + i];
        offset += sizes[k];
      }
    });
  }
  if (axis != 1) throw InvalidArgument("concat: axis must be 0 or 1");
  const std::size_t rows = parts[0].shape().empty() ? 0 : parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.shape()[0] != rows) {
      throw InvalidArgument("concat(axis=1): inputs must be 2-D with equal row counts");
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<double> y(rows * total);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto x = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) y[r * total + col + j] = x[r * widths[k] + j];
    col += widths[k];
  }
  return push("concat", {rows, total}, std::move(y), parts, [rows, total, widths](const BackwardContext& c) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      auto g = c.input_grads[k];
      if (!g.empty()) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += c.output_grad[r * total + col + j];
      }
      col += widths[k];
    }
  });
}

DiffArray Graph::slice(const DiffArray& a, int axis, std::size_t begin, std::size_t count) {
  check_owner(a, "slice");
  const Shape& s = a.shape();
  if (s.empty()) throw InvalidArgument("slice: scalar input");
  if (axis == 0) {
    if (begin + count > s[0]) throw InvalidArgument("slice: rows out of range for " + shape_string(s));
    const std::size_t inner = s[0] == 0 ? 0 : a.size() / s[0];
    Shape out = s;
    out[0] = count;
    std::vector<double> y(a.values().begin() + begin * inner, a.values().begin() + (begin + count) * inner);
    const DiffArray in[] = {a};
    const std::size_t off = begin * inner;
    return push("slice", std::move(out), std::move(y), in, [off](const BackwardContext& c) {
      auto g = c.input_grads[0];
      if (g.empty()) return;
      for (std::size_t i = 0; i < c.output_grad.size(); ++i) g[off + i] += c.output_grad[i];
    });
  }
  if (axis != 1 || s.size() != 2) throw InvalidArgument("slice: axis 1 requires a 2-D array");
  const std::size_t rows = s[0], cols = s[1];
  if (begin + count > cols) throw InvalidArgument("slice: columns out of range for " + shape_string(s));
  std::vector<double> y(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) y[r * count + j] = a.values()[r * cols + begin + j];
  const DiffArray in[] = {a};
  return push("slice", {rows, count}, std::move(y), in, [rows, cols, begin, count](const BackwardContext& c) {
    auto g = c.input_grads[0];
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j) g[r * cols + begin + j] += c.output_grad[r * count + j];
  });
}

DiffArray Graph::tile_columns(const DiffArray& v, std::size_t n) {
  check_owner(v, "tile_columns");
  const Shape& s = v.shape();
  const bool row_vector = (s.size() == 1) || (s.size() == 2 && s[0] == 1);
  if (!row_vector) throw InvalidArgument("tile_columns: expects [D] or [1 x D], got " + shape_string(s));
  const std::size_t d = v.size();
  std::vector<double> y(d * n);
  for (std::size_t i = 0; i < d; ++i) std::fill_n(y.begin() + i * n, n, v.values()[i]);
  const DiffArray in[] = {v};
  return push("tile_columns", {d, n}, std::move(y), in, [d, n](const BackwardContext& c) {
    auto g = c.input_grads[0];
    if (g.empty()) return;
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += c.output_grad[i * n + j];
      g[i] += s;
    }
  });
}

DiffArray Graph::softmax(const DiffArray& a) {
  check_owner(a, "softmax");
  const Shape& s = a.shape();
  if (s.size() != 2 || s[1] == 0) throw InvalidArgument("softmax: expects a non-empty 2-D array");
  const std::size_t rows = s[0], cols = s[1];
  std::vector<double> y(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.values().data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (y[r * cols + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] /= z;
  }
  const DiffArray in[] = {a};
  return push("softmax", s, std::move(y), in, [rows, cols](const BackwardContext& c) {
    auto g = c.input_grads[0];
    if (g.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double dotp = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dotp += c.output_grad[r * cols + j] * c.output_value[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t i = r * cols + j;
        g[i] += c.output_value[i] * (c.output_grad[i] - dotp);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layers

DiffArray Graph::fully_connected(const DiffArray& x, const DiffArray& w, const DiffArray& b) {
  for (const auto* a : {&x, &w, &b}) check_owner(*a, "fully_connected");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0] || b.shape().size() != 1 ||
      b.shape()[0] != ws[1]) {
    throw InvalidArgument("fully_connected: incompatible shapes x" + shape_string(xs) + " W" +
                          shape_string(ws) + " b" + shape_string(b.shape()));
  }
  const std::size_t n = xs[0], din = xs[1], dout = ws[1];
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  std::vector<double> y(n * dout);
  for (std::size_t r = 0; r < n; ++r) {
    double* out = y.data() + r * dout;
    std::copy(bv.begin(), bv.end(), out);
    for (std::size_t i = 0; i < din; ++i) {
      const double xi = xv[r * din + i];
      const double* wrow = wv.data() + i * dout;
      for (std::size_t o = 0; o < dout; ++o) out[o] += xi * wrow[o];
    }
  }
  const DiffArray in[] = {x, w, b};
  return push("fully_connected", {n, dout}, std::move(y), in, [n, din, dout](const BackwardContext& c) {
    const auto xv = c.input_values[0];
    const auto wv = c.input_values[1];
    auto gx = c.input_grads[0];
    auto gw = c.input_grads[1];
    auto gb = c.input_grads[2];
    for (std::size_t r = 0; r < n; ++r) {
      const double* go = c.output_grad.data() + r * dout;
      if (!gb.empty())
        for (std::size_t o = 0; o < dout; ++o) gb[o] += go[o];
      for (std::size_t i = 0; i < din; ++i) {
        const double* wrow = wv.data() + i * dout;
        if (!gx.empty()) {
          double s = 0.0;
          for (std::size_t o = 0; o < dout; ++o) s += go[o] * wrow[o];
          gx[r * din + i] += s;
        }
        if (!gw.empty()) {
          const double xi = xv[r * din + i];
          double* gwrow = gw.data() + i * dout;
          for (std::size_t o = 0; o < dout; ++o) gwrow[o] += xi * go[o];
        }
      }
    }
  });
}

namespace {

// out[j] += w * x[(j + shift) mod L] for shift in {-1, 0, 1}, written as two
// contiguous runs so the inner loops vectorise.
inline void circular_axpy(double* out, const double* x, std::size_t len, int shift, double w) {
  if (shift == 0) {
    for (std::size_t j = 0; j < len; ++j) out[j] += w * x[j];
  } else if (shift < 0) {
    out[0] += w * x[len - 1];
    for (std::size_t j = 1; j < len; ++j) out[j] += w * x[j - 1];
  } else {
    for (std::size_t j = 0; j + 1 < len; ++j) out[j] += w * x[j + 1];
    out[len - 1] += w * x[0];
  }
}

inline double circular_dot(const double* g, const double* x, std::size_t len, int shift) {
  double s = 0.0;
  for (std::size_t j = 0; j < len; ++j) {
    const std::size_t src = (j + len + static_cast<std::size_t>(shift + 1) - 1) % len;  // j + shift
    s += g[j] * x[src];
  }
  return s;
}

}  // namespace

DiffArray Graph::conv1d_circular(const DiffArray& x, const DiffArray& kernels, const DiffArray& bias) {
  for (const auto* a : {&x, &kernels, &bias}) check_owner(*a, "conv1d_circular");
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  if (xs.size() != 2 || xs[1] < 1 || ks.size() != 3 || ks[1] != xs[0] || ks[2] != 3 ||
      bias.shape().size() != 1 || bias.shape()[0] != ks[0]) {
    throw InvalidArgument("conv1d_circular: incompatible shapes x" + shape_string(xs) + " k" +
                          shape_string(ks) + " b" + shape_string(bias.shape()));
  }
  const std::size_t cin = xs[0], len = xs[1], cout = ks[0];
  const auto xv = x.values();
  const auto kv = kernels.values();
  std::vector<double> y(cout * len);
  for (std::size_t co = 0; co < cout; ++co) {
    double* out = y.data() + co * len;
    std::fill_n(out, len, bias.values()[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* w = kv.data() + (co * cin + ci) * 3;
      const double* xr = xv.data() + ci * len;
      for (int t = 0; t < 3; ++t) circular_axpy(out, xr, len, t - 1, w[t]);
    }
  }
  const DiffArray in[] = {x, kernels, bias};
  return push("conv1d_circular", {cout, len}, std::move(y), in, [cin, len, cout](const BackwardContext& c) {
    const auto xv = c.input_values[0];
    const auto kv = c.input_values[1];
    auto gx = c.input_grads[0];
    auto gk = c.input_grads[1];
    auto gb = c.input_grads[2];
    for (std::size_t co = 0; co < cout; ++co) {
      const double* go = c.output_grad.data() + co * len;
      if (!gb.empty()) {
        double s = 0.0;
        for (std::size_t j = 0; j < len; ++j) s += go[j];
        gb[co] += s;
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* w = kv.data() + (co * cin + ci) * 3;
        const double* xr = xv.data() + ci * len;
        for (int t = 0; t < 3; ++t) {
          // Adjoint of reading x[j + t - 1] is writing gx[j + t - 1], i.e. a
          // shift in the opposite direction.
          if (!gx.empty()) circular_axpy(gx.data() + ci * len, go, len, 1 - t, w[t]);
          if (!gk.empty()) gk[(co * cin + ci) * 3 + t] += circular_dot(go, xr, len, t - 1);
        }
      }
    }
  });
}

DiffArray Graph::conv2d(const DiffArray& x, const DiffArray& kernels, const DiffArray& bias, int stride) {
  for (const auto* a : {&x, &kernels, &bias}) check_owner(*a, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  if (stride < 1 || xs.size() != 3 || ks.size() != 4 || ks[1] != xs[0] || ks[2] != ks[3] ||
      ks[2] % 2 == 0 || bias.shape().size() != 1 || bias.shape()[0] != ks[0]) {
    throw InvalidArgument("conv2d: incompatible shapes x" + shape_string(xs) + " k" + shape_string(ks) +
                          " b" + shape_string(bias.shape()));
  }
  const std::size_t cin = xs[0], h = xs[1], w = xs[2], cout = ks[0], ksz = ks[2];
  if (h < 1 || w < 1) throw InvalidArgument("conv2d: empty spatial extent");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ksz / 2);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t ho = (h - 1) / s + 1, wo = (w - 1) / s + 1;

  // Valid output range along one axis for kernel offset `k`.
  auto range = [pad, s](std::size_t k, std::size_t in_len, std::size_t out_len) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - pad;
    std::ptrdiff_t lo = 0;
    while (lo < static_cast<std::ptrdiff_t>(out_len) && lo * static_cast<std::ptrdiff_t>(s) + off < 0) ++lo;
    std::ptrdiff_t hi = static_cast<std::ptrdiff_t>(out_len);
    while (hi > lo && (hi - 1) * static_cast<std::ptrdiff_t>(s) + off >= static_cast<std::ptrdiff_t>(in_len)) --hi;
    return std::pair<std::size_t, std::size_t>(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
  };

  const auto xv = x.values();
  const auto kv = kernels.values();
  std::vector<double> y(cout * ho * wo);
  for (std::size_t co = 0; co < cout; ++co) {
    double* out = y.data() + co * ho * wo;
    std::fill_n(out, ho * wo, bias.values()[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xr = xv.data() + ci * h * w;
      for (std::size_t ky = 0; ky < ksz; ++ky) {
        const auto [oy0, oy1] = range(ky, h, ho);
        for (std::size_t kx = 0; kx < ksz; ++kx) {
          const auto [ox0, ox1] = range(kx, w, wo);
          const double wt = kv[((co * cin + ci) * ksz + ky) * ksz + kx];
          for (std::size_t oy = oy0; oy < oy1; ++oy) {
            const std::size_t iy = oy * s + ky - static_cast<std::size_t>(pad);
            // Index of input column for ox = 0; may be -pad, never read there.
            const std::size_t base = iy * w + kx - static_cast<std::size_t>(pad);
            double* orow = out + oy * wo;
            for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += wt * xr[base + ox * s];
          }
        }
      }
    }
  }
  const DiffArray in[] = {x, kernels, bias};
  return push("conv2d", {cout, ho, wo}, std::move(y), in,
              [=](const BackwardContext& c) {
                const auto xv = c.input_values[0];
                const auto kv = c.input_values[1];
                auto gx = c.input_grads[0];
                auto gk = c.input_grads[1];
                auto gb = c.input_grads[2];
                for (std::size_t co = 0; co < cout; ++co) {
                  const double* go = c.output_grad.data() + co * ho * wo;
                  if (!gb.empty()) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < ho * wo; ++i) acc += go[i];
                    gb[co] += acc;
                  }
                  for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double* xr = xv.data() + ci * h * w;
                    for (std::size_t ky = 0; ky < ksz; ++ky) {
                      const auto [oy0, oy1] = range(ky, h, ho);
                      for (std::size_t kx = 0; kx < ksz; ++kx) {
                        const auto [ox0, ox1] = range(kx, w, wo);
                        const std::size_t kidx = ((co * cin + ci) * ksz + ky) * ksz + kx;
                        const double wt = kv[kidx];
                        double acc = 0.0;
                        for (std::size_t oy = oy0; oy < oy1; ++oy) {
                          const std::size_t off = (oy * s + ky - static_cast<std::size_t>(pad)) * w + kx -
                                                  static_cast<std::size_t>(pad);
                          const double* grow = go + oy * wo;
                          if (!gx.empty()) {
                            double* gxc = gx.data() + ci * h * w;
                            for (std::size_t ox = ox0; ox < ox1; ++ox) gxc[off + ox * s] += wt * grow[ox];
                          }
                          for (std::size_t ox = ox0; ox < ox1; ++ox) acc += grow[ox] * xr[off + ox * s];
                        }
                        if (!gk.empty()) gk[kidx] += acc;
                      }
                    }
                  }
                }
              });
}

DiffArray Graph::conv2d_down(const DiffArray& x, const DiffArray& kernels, const DiffArray& bias) {
  const Shape& ks = kernels.shape();
  if (ks.size() != 4 || ks[2] != 3 || ks[3] != 3) {
    throw InvalidArgument("conv2d_down: kernels must be [Cout x Cin x 3 x 3], got " + shape_string(ks));
  }
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[1] < 2 || xs[2] < 2) {
    throw InvalidArgument("conv2d_down: input must be [C x H x W] with H, W >= 2, got " + shape_string(xs));
  }
  return conv2d(x, kernels, bias, 2);
}

// ---------------------------------------------------------------------------
// LSTM

namespace {

DiffArray lstm_step(Graph& g, const DiffArray& x, DiffArray& h, DiffArray& c, const LstmDirection& d,
                    const DiffArray& zero_bias, std::size_t hidden) {
  DiffArray gates = g.add(g.fully_connected(x, d.w_input, d.bias),
                          g.fully_connected(h, d.w_recurrent, zero_bias));
  DiffArray i = g.sigmoid(g.slice(gates, 1, 0, hidden));
  DiffArray f = g.sigmoid(g.slice(gates, 1, hidden, hidden));
  DiffArray cell = g.tanh(g.slice(gates, 1, 2 * hidden, hidden));
  DiffArray o = g.sigmoid(g.slice(gates, 1, 3 * hidden, hidden));
  c = g.add(g.mul(f, c), g.mul(i, cell));
  h = g.mul(o, g.tanh(c));
  return h;
}

}  // namespace

DiffArray lstm_bidirectional(Graph& g, const DiffArray& inputs, const LstmDirection& forward,
                             const LstmDirection& backward) {
  const Shape& s = inputs.shape();
  if (s.size() != 2 || s[0] < 1) throw InvalidArgument("lstm_bidirectional: inputs must be [T x Din], T >= 1");
  const std::size_t steps = s[0];
  for (const LstmDirection* d : {&forward, &backward}) {
    const Shape& wi = d->w_input.shape();
    const Shape& wr = d->w_recurrent.shape();
    if (wi.size() != 2 || wi[0] != s[1] || wi[1] % 4 != 0 || wr.size() != 2 || wr[1] != wi[1] ||
        wr[0] * 4 != wi[1] || d->bias.shape() != Shape{wi[1]}) {
      throw InvalidArgument("lstm_bidirectional: weight shapes do not match input " + shape_string(s));
    }
  }
  const std::size_t hidden = forward.w_recurrent.shape()[0];
  if (backward.w_recurrent.shape()[0] != hidden) {
    throw InvalidArgument("lstm_bidirectional: directions must share the hidden size");
  }
  const DiffArray zero_bias = g.constant({4 * hidden}, std::vector<double>(4 * hidden, 0.0));
  const DiffArray zero_state = g.constant({1, hidden}, std::vector<double>(hidden, 0.0));

  std::vector<DiffArray> fwd(steps), bwd(steps);
  DiffArray h = zero_state, c = zero_state;
  for (std::size_t t = 0; t < steps; ++t) {
    fwd[t] = lstm_step(g, g.slice(inputs, 0, t, 1), h, c, forward, zero_bias, hidden);
  }
  h = zero_state;
  c = zero_state;
  for (std::size_t t = steps; t-- > 0;) {
    bwd[t] = lstm_step(g, g.slice(inputs, 0, t, 1), h, c, backward, zero_bias, hidden);
  }
  std::vector<DiffArray> rows;
  for (std::size_t t = 0; t < steps; ++t) {
    const DiffArray pair[] = {fwd[t], bwd[t]};
    rows.push_back(g.concat(pair, 1));
  }
  return g.concat(rows, 0);
}

}  // namespace loopvec::diffnum
