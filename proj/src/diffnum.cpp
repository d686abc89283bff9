#include "captime/diffnum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "captime/special.hpp"

namespace captime {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace {

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

std::size_t Tensor::rows() const {
  if (shape_.size() <= 1) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Parameter::zero_grad() {
  if (grad.shape() != value.shape() || grad.size() != value.size()) {
    grad = Tensor(value.shape());
  } else {
    grad.fill(0.0);
  }
}

Parameter& ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Parameter& p = it->second;
  p.name = name;
  p.value = std::move(value);
  p.trainable = trainable;
  p.zero_grad();
  return p;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& [_, p] : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.zero_grad();
}

const Tensor& Var::value() const { return graph->value(*this); }

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input");
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.ref = &p.value;
  n.param = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Graph::frozen(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.ref = &p.value;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return nodes_[v.id].value(); }

Tensor& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.shape() != n.value().shape() || n.grad.size() != n.value().size()) n.grad = Tensor(n.value().shape());
  return n.grad;
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Graph::record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite result");
  Node n;
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph != this) throw std::invalid_argument(std::string(op) + ": inputs from a different graph");
    n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

void Graph::backward(Var loss) {
  if (backward_done_) throw std::logic_error("backward called twice on the same graph");
  if (loss.graph != this) throw std::invalid_argument("backward: loss from a different graph");
  if (value(loss).size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss).shape()));
  backward_done_ = true;
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param && n.param->trainable) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape() || p.grad.size() != p.value.size()) p.zero_grad();
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (a.size() == b.size() && a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows() && b.rank() == 2) return Broadcast::kCol;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

inline std::size_t bindex(Broadcast k, std::size_t r, std::size_t c, std::size_t cols) {
  switch (k) {
    case Broadcast::kSame: return r * cols + c;
    case Broadcast::kRow: return c;
    case Broadcast::kCol: return r;
    case Broadcast::kScalar: return 0;
  }
  return 0;
}

Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

template <class F>
Var unary(const char* op, Var a, F&& fwd, double (*deriv)(double)) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return a.graph->record(op, std::move(out), {a}, [a, deriv](Graph& g, const Tensor& gout) {
    if (!g.needs_grad(a)) return;
    const Tensor& x = g.value(a);
    Tensor& ga = g.grad(a);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += gout[i] * deriv(x[i]);
  });
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  }
  Tensor out(matrix_shape(m, n));
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return a.graph->record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Graph& g, const Tensor& gout) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);  // gout (m x n) * B^T (n x k)
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = &gout[i * n];
          const double* brow = &B[p * n];
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);  // A^T (k x m) * gout (m x n)
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &gout[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = &gb[p * n];
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast kind = broadcast_kind("add", A, B);
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor out(A.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = A[r * cols + c] + B[bindex(kind, r, c, cols)];
  return a.graph->record("add", std::move(out), {a, b}, [a, b, kind, rows, cols](Graph& g, const Tensor& gout) {
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[bindex(kind, r, c, cols)] += gout[r * cols + c];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast kind = broadcast_kind("sub", A, B);
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor out(A.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = A[r * cols + c] - B[bindex(kind, r, c, cols)];
  return a.graph->record("sub", std::move(out), {a, b}, [a, b, kind, rows, cols](Graph& g, const Tensor& gout) {
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[bindex(kind, r, c, cols)] -= gout[r * cols + c];
    }
  });
}

Var mul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast kind = broadcast_kind("mul", A, B);
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor out(A.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = A[r * cols + c] * B[bindex(kind, r, c, cols)];
  return a.graph->record("mul", std::move(out), {a, b}, [a, b, kind, rows, cols](Graph& g, const Tensor& gout) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += gout[r * cols + c] * B[bindex(kind, r, c, cols)];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[bindex(kind, r, c, cols)] += gout[r * cols + c] * A[r * cols + c];
    }
  });
}

Var div(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) throw ShapeError("div: shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] / B[i];
  return a.graph->record("div", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& gout) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad(a);
      for (std::size_t i = 0; i < A.size(); ++i) ga[i] += gout[i] / B[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad(b);
      for (std::size_t i = 0; i < A.size(); ++i) gb[i] -= gout[i] * A[i] / (B[i] * B[i]);
    }
  });
}

Var scale(Var a, double k) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * k;
  return a.graph->record("scale", std::move(out), {a}, [a, k](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * k;
  });
}

Var add_scalar(Var a, double k) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + k;
  return a.graph->record("add_scalar", std::move(out), {a}, [a](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var softmax(Var a, bool causal) {
  const Tensor& X = a.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (causal && rows > cols) throw ShapeError("softmax: causal mask needs rows <= cols");
  Tensor out(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t width = causal ? r + 1 : cols;
    const double* x = &X[r * cols];
    double* y = &out[r * cols];
    const double mx = *std::max_element(x, x + width);
    double sum = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      y[c] = std::exp(x[c] - mx);
      sum += y[c];
    }
    for (std::size_t c = 0; c < width; ++c) y[c] /= sum;
  }
  Tensor y_copy = out;
  return a.graph->record("softmax", std::move(out), {a},
                         [a, y = std::move(y_copy), rows, cols](Graph& g, const Tensor& gout) {
                           Tensor& ga = g.grad(a);
                           for (std::size_t r = 0; r < rows; ++r) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) dot += gout[r * cols + c] * y[r * cols + c];
                             for (std::size_t c = 0; c < cols; ++c)
                               ga[r * cols + c] += y[r * cols + c] * (gout[r * cols + c] - dot);
                           }
                         });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& X = x.value();
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (G.size() != cols || B.size() != cols) {
    throw ShapeError("layer_norm: gain/bias length must equal " + std::to_string(cols));
  }
  Tensor out(X.shape());
  Tensor xhat(X.shape());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X[r * cols];
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mean) * rstd[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * G[c] + B[c];
    }
  }
  return x.graph->record(
      "layer_norm", std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd), rows, cols](Graph& g, const Tensor& gout) {
        const Tensor& G = g.value(gain);
        if (g.needs_grad(gain)) {
          Tensor& gg = g.grad(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += gout[r * cols + c] * xhat[r * cols + c];
        }
        if (g.needs_grad(bias)) {
          Tensor& gb = g.grad(bias);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += gout[r * cols + c];
        }
        if (g.needs_grad(x)) {
          Tensor& gx = g.grad(x);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = gout[r * cols + c] * G[c];
              mean_d += d;
              mean_dx += d * xhat[r * cols + c];
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = gout[r * cols + c] * G[c];
              gx[r * cols + c] += rstd[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
            }
          }
        }
      });
}

Var gelu(Var a) {
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](double x) {
        const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x) { return sigmoid(x); });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  const Tensor& X = a.value();
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (!(X[i] > 0.0)) throw DomainError("log: non-positive input " + std::to_string(X[i]));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var lgamma(Var a) {
  const Tensor& X = a.value();
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (!(X[i] > 0.0)) throw DomainError("lgamma: input must be > 0, got " + std::to_string(X[i]));
  }
  return unary("lgamma", a, [](double x) { return special::lgamma(x); },
               [](double x) { return special::digamma(x); });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var transpose(Var a) {
  const Tensor& X = a.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  Tensor out(matrix_shape(cols, rows));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = X[r * cols + c];
  return a.graph->record("transpose", std::move(out), {a}, [a, rows, cols](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += gout[c * rows + r];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& X = a.value();
  const std::size_t cols = X.cols();
  if (begin > end || end > X.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                     shape_str(X.shape()));
  }
  Tensor out(matrix_shape(end - begin, cols));
  std::copy(X.data().begin() + begin * cols, X.data().begin() + end * cols, out.data().begin());
  return a.graph->record("slice_rows", std::move(out), {a}, [a, begin, cols](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    for (std::size_t i = 0; i < gout.size(); ++i) ga[begin * cols + i] += gout[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& X = a.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (begin > end || end > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                     shape_str(X.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out(matrix_shape(rows, w));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) out[r * w + c] = X[r * cols + begin + c];
  return a.graph->record("slice_cols", std::move(out), {a}, [a, begin, rows, cols, w](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += gout[r * w + c];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor out(matrix_shape(rows, cols));
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + off);
    off += v.size();
  }
  return parts[0].graph->record("concat_rows", std::move(out), parts, [parts](Graph& g, const Tensor& gout) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t n = g.value(p).size();
      if (g.needs_grad(p)) {
        Tensor& gp = g.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += gout[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor out(matrix_shape(rows, cols));
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    const std::size_t w = v.cols();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) out[r * cols + off + c] = v[r * w + c];
    off += w;
  }
  return parts[0].graph->record("concat_cols", std::move(out), parts, [parts, rows, cols](Graph& g, const Tensor& gout) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t w = g.value(p).cols();
      if (g.needs_grad(p)) {
        Tensor& gp = g.grad(p);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += gout[r * cols + off + c];
      }
      off += w;
    }
  });
}

Var reduce_sum(Var a) {
  const Tensor& X = a.value();
  double s = 0.0;
  for (double v : X.data()) s += v;
  return a.graph->record("reduce_sum", Tensor::scalar(s), {a}, [a](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    const double d = gout[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += d;
  });
}

Var reduce_mean(Var a) {
  const Tensor& X = a.value();
  if (X.empty()) throw ShapeError("reduce_mean: empty tensor");
  double s = 0.0;
  for (double v : X.data()) s += v;
  const double n = static_cast<double>(X.size());
  return a.graph->record("reduce_mean", Tensor::scalar(s / n), {a}, [a, n](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    const double d = gout[0] / n;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += d;
  });
}

Var mean_rows(Var a) {
  const Tensor& X = a.value();
  const std::size_t rows = X.rows(), cols = X.cols();
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  Tensor out(matrix_shape(1, cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += X[r * cols + c];
  for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<double>(rows);
  return a.graph->record("mean_rows", std::move(out), {a}, [a, rows, cols](Graph& g, const Tensor& gout) {
    Tensor& ga = g.grad(a);
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += gout[c] * inv;
  });
}

// ---------------------------------------------------------------------------
// Gradient check

const GradCheckEntry* GradCheckReport::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

GradCheckReport grad_check(const LossBuilder& f, ParameterStore& store, const GradCheckOptions& opts) {
  store.zero_grad();
  {
    Graph g;
    Var loss = f(g);
    g.backward(loss);
  }
  auto eval = [&f] {
    Graph g;
    return f(g).value().item();
  };

  GradCheckReport report;
  for (Parameter* p : store.trainable()) {
    GradCheckEntry entry;
    entry.name = p->name;
    entry.elements = p->value.size();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + opts.step;
      const double fp = eval();
      p->value[i] = saved - opts.step;
      const double fm = eval();
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double analytic = p->grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    entry.passed = entry.max_rel_error < opts.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace captime
