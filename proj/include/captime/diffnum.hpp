#pragma once

// Dense float64 tensors and a tape-based reverse-mode differentiation engine.
//
// A Graph records every op applied to its Vars in topological (creation)
// order. Leaves are either constants or Parameters; only trainable
// Parameters accumulate gradients on backward(). Nodes whose inputs carry no
// gradient dependency skip their backward rule entirely, so frozen subgraphs
// (the backbone weights, the pretrained encoder) cost forward time only.

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace captime {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when an op produces NaN or Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Row-major float64 array. Rank 0 and 1 tensors behave as 1x1 and 1xN
/// matrices wherever an op needs a matrix view.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor(Shape{rows, cols}, fill);
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Named leaf tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad();
};

/// Ordered name -> Parameter map. References returned by at() stay valid for
/// the lifetime of the store (node-based container).
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool trainable);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  void erase(const std::string& name) { params_.erase(name); }

  std::vector<std::string> names() const;
  std::vector<Parameter*> trainable();
  std::size_t size() const { return params_.size(); }
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a Parameter. Repeated calls for the same Parameter return
  /// the same node; the value is referenced, not copied.
  Var param(Parameter& p);
  /// Read-only leaf bound to a Parameter; never receives a gradient.
  Var frozen(const Parameter& p);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient accumulator of a node, zero-allocated on first access.
  Tensor& grad(Var v);
  /// Gradient accumulated on a node during the last backward pass (empty if
  /// the node received none).
  const Tensor& grad_of(Var v) const { return nodes_[v.id].grad; }

  /// Registers an op output. `backward` runs only when some input needs a
  /// gradient; `op` names the op in error messages.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Adds d(loss)/d(param) into the grad of
  /// every trainable Parameter reached; frozen Parameters are never touched.
  void backward(Var loss);
  bool backward_done() const { return backward_done_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;

    const Tensor& value() const { return ref ? *ref : owned; }
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Primitive ops. All operate on rank <= 2 tensors viewed as matrices.

Var matmul(Var a, Var b);
/// a + b; b may equal a's shape, be a 1xN row (broadcast over rows) or an
/// Mx1 column (broadcast over columns).
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product with the same broadcasting rules as add().
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var neg(Var a);

/// Row-wise softmax. With `causal`, row i only covers columns 0..i and the
/// rest are exactly zero.
Var softmax(Var a, bool causal = false);
/// Row-wise layer normalization with per-column gain and bias (1xN).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// GELU, tanh approximation.
Var gelu(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var lgamma(Var a);
Var square(Var a);

Var transpose(Var a);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

Var reduce_sum(Var a);
Var reduce_mean(Var a);
/// Column means, shape 1xN.
Var mean_rows(Var a);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = true;

  const GradCheckEntry* find(const std::string& name) const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Gradients smaller than this in magnitude are compared absolutely
  /// (relative error denominator is clamped here).
  double floor = 1e-6;
};

/// Builds the scalar loss from the parameters in `store` on a fresh graph.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares analytic gradients of every trainable parameter against central
/// differences. Frozen parameters are absent from the report.
GradCheckReport grad_check(const LossBuilder& f, ParameterStore& store,
                           const GradCheckOptions& opts = {});

}  // namespace captime
