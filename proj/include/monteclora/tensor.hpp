#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "monteclora/errors.hpp"
#include "monteclora/linalg.hpp"
#include "monteclora/special.hpp"

namespace mclora {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Disables graph recording for its scope. Used by evaluation, Monte Carlo
/// statistics loops and benchmarks, where gradients are not needed.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(enabled()) { enabled() = false; }
  ~NoGradGuard() { enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled() { return enabled(); }

 private:
  static bool& enabled() {
    thread_local bool e = true;
    return e;
  }
  bool prev_;
};

/// Dense double-precision tensor participating in a dynamically built
/// reverse-mode differentiation graph. Value semantics on the handle,
/// shared state underneath: copies alias the same node.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily by backward()
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Tensor> parents;
    std::function<void(Node&)> backprop;  // accumulates this->grad into parents
  };

  Tensor() = default;

  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

  static Tensor full(Shape shape, double value) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->values.assign(shape_numel(shape), value);
    t.node_->shape = std::move(shape);
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " expects " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return from_data({1}, {v}); }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.node_->values[i * n + i] = 1.0;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  bool is_scalar() const { return numel() == 1; }
  bool is_matrix() const { return node_->shape.size() == 2; }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  double value() const {
    if (!is_scalar()) throw ContractError("value(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->values[0];
  }
  double at(std::size_t i) const { return node_->values.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->values.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
  }

  bool grad_populated() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (node_->grad.empty()) {
      throw ContractError("grad read before a backward pass populated it (op: " +
                          std::string(node_->op) + ")");
    }
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  const char* op_name() const { return node_->op; }
  Node* node() const { return node_.get(); }

  /// Leaf copy of the values, cut loose from the graph.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    return t;
  }

  /// Reverse-mode sweep from this (scalar) tensor. Gradients accumulate on
  /// every requires_grad ancestor; clearing them is the caller's job.
  void backward() const {
    if (!is_scalar()) {
      throw ContractError("backward: root must be scalar, shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    // Iterative DFS post-order over grad-requiring ancestry.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      bool descended = false;
      while (idx < n->parents.size()) {
        Node* p = n->parents[idx++].node_.get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
          descended = true;
          break;
        }
      }
      if (descended) continue;
      order.push_back(n);
      stack.pop_back();
    }

    // Interior grads are scratch per sweep; leaf grads accumulate across
    // sweeps until explicitly cleared.
    for (Node* n : order) {
      if (n->backprop) n->grad.assign(n->values.size(), 0.0);
    }
    ensure_grad(*node_);
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backprop) n->backprop(*n);
    }
  }

  static void ensure_grad(Node& n) {
    if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  }

  /// Builds a graph node from parents; drops the closure when no gradient
  /// can flow (inference mode or constant inputs).
  static Tensor make(Shape shape, std::vector<double> values, const char* op,
                     std::vector<Tensor> parents, std::function<void(Node&)> backprop) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->op = op;
    bool needs = false;
    if (NoGradGuard::grad_enabled()) {
      for (const Tensor& p : parents)
        if (p.requires_grad()) needs = true;
    }
    if (needs) {
      t.node_->requires_grad = true;
      t.node_->parents = std::move(parents);
      t.node_->backprop = std::move(backprop);
    }
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

inline void accumulate(Tensor::Node& dst, const std::vector<double>& delta) {
  Tensor::ensure_grad(dst);
  for (std::size_t i = 0; i < delta.size(); ++i) dst.grad[i] += delta[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary operations (equal shapes, or one operand scalar)
// ---------------------------------------------------------------------------

namespace detail {

// fa, fb give d(out_i)/d(a_i) and d(out_i)/d(b_i) evaluated from saved values.
template <typename Fwd, typename Da, typename Db>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Da da, Db db) {
  const bool a_scalar = a.is_scalar();
  const bool b_scalar = b.is_scalar();
  if (!a_scalar && !b_scalar) check_same_shape(a, b, op);
  const Shape& out_shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  Tensor av_saved = a, bv_saved = b;
  return Tensor::make(
      out_shape, std::move(out), op, {a, b},
      [a_scalar, b_scalar, av_saved, bv_saved, da, db](Tensor::Node& self) {
        const auto& g = self.grad;
        const auto& av2 = av_saved.values();
        const auto& bv2 = bv_saved.values();
        if (av_saved.requires_grad()) {
          std::vector<double> delta(av2.size(), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            delta[a_scalar ? 0 : i] += g[i] * da(av2[a_scalar ? 0 : i], bv2[b_scalar ? 0 : i]);
          }
          accumulate(*av_saved.node(), delta);
        }
        if (bv_saved.requires_grad()) {
          std::vector<double> delta(bv2.size(), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            delta[b_scalar ? 0 : i] += g[i] * db(av2[a_scalar ? 0 : i], bv2[b_scalar ? 0 : i]);
          }
          accumulate(*bv_saved.node(), delta);
        }
      });
}

template <typename Fwd, typename Dx>
Tensor unary_elementwise(const Tensor& a, const char* op, Fwd fwd, Dx dx) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
  Tensor saved = a;
  return Tensor::make(a.shape(), std::move(out), op, {a}, [saved, dx](Tensor::Node& self) {
    if (!saved.requires_grad()) return;
    const auto& g = self.grad;
    std::vector<double> delta(g.size());
    const auto& av2 = saved.values();
    for (std::size_t i = 0; i < g.size(); ++i) delta[i] = g[i] * dx(av2[i], self.values[i]);
    accumulate(*saved.node(), delta);
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

inline Tensor neg(const Tensor& a) {
  return detail::unary_elementwise(
      a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor exp_t(const Tensor& a) {
  return detail::unary_elementwise(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

inline Tensor log_t(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= 0.0) throw DomainError("log: non-positive value " + std::to_string(v));
  }
  return detail::unary_elementwise(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt_t(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw DomainError("sqrt: negative value " + std::to_string(v));
  }
  return detail::unary_elementwise(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double out) { return 0.5 / out; });
}

inline Tensor tanh_t(const Tensor& a) {
  return detail::unary_elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double out) { return 1.0 - out * out; });
}

inline Tensor softplus(const Tensor& a) {
  return detail::unary_elementwise(
      a, "softplus",
      [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Tensor lgamma_t(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= 0.0) throw DomainError("lgamma: non-positive value " + std::to_string(v));
  }
  return detail::unary_elementwise(
      a, "lgamma", [](double x) { return log_gamma(x); },
      [](double x, double) { return digamma(x); });
}

inline Tensor digamma_t(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= 0.0) throw DomainError("digamma: non-positive value " + std::to_string(v));
  }
  return detail::unary_elementwise(
      a, "digamma", [](double x) { return digamma(x); },
      [](double x, double) { return trigamma(x); });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary_elementwise(
      a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary_elementwise(
      a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Matrix operations
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (!a.is_matrix() || !b.is_matrix()) {
    throw DimensionError("matmul: operands must be matrices, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  linalg::matmul_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  Tensor as = a, bs = b;
  return Tensor::make({m, n}, std::move(out), "matmul", {a, b}, [as, bs, m, k, n](Tensor::Node& self) {
    if (as.requires_grad()) {
      // dA += G * B^T
      std::vector<double> delta(m * k, 0.0);
      linalg::matmul_nt_acc(self.grad.data(), bs.values().data(), delta.data(), m, n, k);
      detail::accumulate(*as.node(), delta);
    }
    if (bs.requires_grad()) {
      // dB += A^T * G
      std::vector<double> delta(k * n, 0.0);
      linalg::matmul_tn_acc(as.values().data(), self.grad.data(), delta.data(), k, m, n);
      detail::accumulate(*bs.node(), delta);
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  if (!a.is_matrix()) throw DimensionError("transpose: expected matrix, got " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  Tensor as = a;
  return Tensor::make({n, m}, std::move(out), "transpose", {a}, [as, m, n](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    std::vector<double> delta(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) delta[i * n + j] = self.grad[j * m + i];
    detail::accumulate(*as.node(), delta);
  });
}

inline Tensor trace(const Tensor& a) {
  if (!a.is_matrix() || a.rows() != a.cols()) {
    throw DimensionError("trace: expected square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.rows();
  double t = 0.0;
  for (std::size_t i = 0; i < n; ++i) t += a.values()[i * n + i];
  Tensor as = a;
  return Tensor::make({1}, {t}, "trace", {a}, [as, n](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    std::vector<double> delta(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) delta[i * n + i] = self.grad[0];
    detail::accumulate(*as.node(), delta);
  });
}

/// Vector -> diagonal matrix.
inline Tensor diag_embed(const Tensor& v) {
  if (v.shape().size() != 1) {
    throw DimensionError("diag_embed: expected vector, got " + shape_str(v.shape()));
  }
  const std::size_t n = v.numel();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = v.values()[i];
  Tensor vs = v;
  return Tensor::make({n, n}, std::move(out), "diag_embed", {v}, [vs, n](Tensor::Node& self) {
    if (!vs.requires_grad()) return;
    std::vector<double> delta(n);
    for (std::size_t i = 0; i < n; ++i) delta[i] = self.grad[i * n + i];
    detail::accumulate(*vs.node(), delta);
  });
}

/// Diagonal of a square matrix as a vector.
inline Tensor diag_part(const Tensor& m) {
  if (!m.is_matrix() || m.rows() != m.cols()) {
    throw DimensionError("diag_part: expected square matrix, got " + shape_str(m.shape()));
  }
  const std::size_t n = m.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = m.values()[i * n + i];
  Tensor ms = m;
  return Tensor::make({n}, std::move(out), "diag_part", {m}, [ms, n](Tensor::Node& self) {
    if (!ms.requires_grad()) return;
    std::vector<double> delta(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) delta[i * n + i] = self.grad[i];
    detail::accumulate(*ms.node(), delta);
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor as = a;
  return Tensor::make({1}, {s}, "sum", {a}, [as](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    std::vector<double> delta(as.numel(), self.grad[0]);
    detail::accumulate(*as.node(), delta);
  });
}

inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor as = a;
  return Tensor::make({1}, {s * inv}, "mean", {a}, [as, inv](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    std::vector<double> delta(as.numel(), self.grad[0] * inv);
    detail::accumulate(*as.node(), delta);
  });
}

/// Matrix plus a row vector broadcast over rows (bias add).
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (!m.is_matrix() || v.shape().size() != 1 || v.numel() != m.cols()) {
    throw DimensionError("add_rowvec: shapes " + shape_str(m.shape()) + " and " +
                         shape_str(v.shape()));
  }
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(m.values());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v.values()[j];
  Tensor ms = m, vs = v;
  return Tensor::make({r, c}, std::move(out), "add_rowvec", {m, v}, [ms, vs, r, c](Tensor::Node& self) {
    if (ms.requires_grad()) detail::accumulate(*ms.node(), self.grad);
    if (vs.requires_grad()) {
      std::vector<double> delta(c, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) delta[j] += self.grad[i * c + j];
      detail::accumulate(*vs.node(), delta);
    }
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  }
  Tensor as = a;
  return Tensor::make(std::move(shape), a.values(), "reshape", {a}, [as](Tensor::Node& self) {
    if (as.requires_grad()) detail::accumulate(*as.node(), self.grad);
  });
}

/// Contiguous slice of a vector.
inline Tensor slice1d(const Tensor& a, std::size_t offset, std::size_t count) {
  if (a.shape().size() != 1 || offset + count > a.numel()) {
    throw DimensionError("slice1d: [" + std::to_string(offset) + ", " +
                         std::to_string(offset + count) + ") out of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(offset),
                          a.values().begin() + static_cast<std::ptrdiff_t>(offset + count));
  Tensor as = a;
  return Tensor::make({count}, std::move(out), "slice1d", {a}, [as, offset, count](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    std::vector<double> delta(as.numel(), 0.0);
    for (std::size_t i = 0; i < count; ++i) delta[offset + i] = self.grad[i];
    detail::accumulate(*as.node(), delta);
  });
}

/// Row-wise softmax of a matrix, numerically stabilized.
inline Tensor row_softmax(const Tensor& a) {
  if (!a.is_matrix()) throw DimensionError("row_softmax: expected matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = a.values().data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = std::exp(row[j] - mx) / z;
  }
  Tensor as = a;
  return Tensor::make({r, c}, std::move(out), "row_softmax", {a}, [as, r, c](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    std::vector<double> delta(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.values.data() + i * c;
      const double* g = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < c; ++j) delta[i * c + j] = y[j] * (g[j] - dot);
    }
    detail::accumulate(*as.node(), delta);
  });
}

/// Mean over the batch of -log softmax(logits)[label].
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (!logits.is_matrix()) {
    throw DimensionError("softmax_cross_entropy: logits must be a matrix, got " +
                         shape_str(logits.shape()));
  }
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(b));
  }
  std::vector<double> probs(b * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(label) +
                          " outside [0, " + std::to_string(k) + ")");
    }
    const double* row = logits.values().data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - mx) / z;
    loss += mx + std::log(z) - row[label];
  }
  loss /= static_cast<double>(b);
  Tensor ls = logits;
  return Tensor::make(
      {1}, {loss}, "softmax_cross_entropy", {logits},
      [ls, labels, probs = std::move(probs), b, k](Tensor::Node& self) {
        if (!ls.requires_grad()) return;
        const double up = self.grad[0] / static_cast<double>(b);
        std::vector<double> delta(b * k);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < k; ++j) delta[i * k + j] = probs[i * k + j] * up;
          delta[i * k + static_cast<std::size_t>(labels[i])] -= up;
        }
        detail::accumulate(*ls.node(), delta);
      });
}

// ---------------------------------------------------------------------------
// SPD matrix operations (Cholesky-backed)
// ---------------------------------------------------------------------------

namespace detail {

// The forward path symmetrizes its input, so per-entry finite differences
// and the symmetric analytic gradient agree.
inline std::vector<double> symmetrized(const Tensor& a) {
  const std::size_t n = a.rows();
  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      s[i * n + j] = 0.5 * (a.values()[i * n + j] + a.values()[j * n + i]);
  return s;
}

}  // namespace detail

/// Lower Cholesky factor of an SPD matrix, differentiable with respect to
/// the input. Reverse rule follows the standard triangular-solve form.
inline Tensor cholesky(const Tensor& a) {
  if (!a.is_matrix() || a.rows() != a.cols()) {
    throw DimensionError("cholesky: expected square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.rows();
  std::vector<double> sym = detail::symmetrized(a);
  std::vector<double> l = linalg::cholesky_lower(sym, n);
  Tensor as = a;
  return Tensor::make({n, n}, std::move(l), "cholesky", {a}, [as, n](Tensor::Node& self) {
    if (!as.requires_grad()) return;
    const std::vector<double>& lv = self.values;
    // P = Phi(L^T * tril(G)): lower triangle, halved diagonal.
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double acc = 0.0;
        for (std::size_t k = std::max(i, j); k < n; ++k) {
          acc += lv[k * n + i] * self.grad[k * n + j];  // (L^T G)_ij over lower G
        }
        p[i * n + j] = (i == j) ? 0.5 * acc : acc;
      }
    }
    // S = L^{-T} P L^{-1} via two triangular solves.
    linalg::solve_lower_transposed_inplace(lv, p, n, n);  // p <- L^{-T} P
    // rhs^T = p^T; solve L^T X = p^T, transpose back.
    std::vector<double> pt(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) pt[j * n + i] = p[i * n + j];
    linalg::solve_lower_transposed_inplace(lv, pt, n, n);
    std::vector<double> delta(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        delta[i * n + j] = 0.5 * (pt[j * n + i] + pt[i * n + j]);
    detail::accumulate(*as.node(), delta);
  });
}

/// ln|A| for SPD A, computed from the Cholesky log-diagonal sum.
inline Tensor logdet_spd(const Tensor& a) {
  if (!a.is_matrix() || a.rows() != a.cols()) {
    throw DimensionError("logdet_spd: expected square matrix, got " + shape_str(a.shape()));
  }
  const std::size_t n = a.rows();
  std::vector<double> sym = detail::symmetrized(a);
  std::vector<double> l = linalg::cholesky_lower(sym, n);
  double ld = 0.0;
  for (std::size_t i = 0; i < n; ++i) ld += 2.0 * std::log(l[i * n + i]);
  Tensor as = a;
  return Tensor::make({1}, {ld}, "logdet_spd", {a},
                      [as, n, l = std::move(l)](Tensor::Node& self) {
                        if (!as.requires_grad()) return;
                        std::vector<double> inv = linalg::spd_inverse_from_cholesky(l, n);
                        for (double& v : inv) v *= self.grad[0];
                        detail::accumulate(*as.node(), inv);
                      });
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
/// Evaluation oracle for the reverse-mode path; f must not mutate x.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                               double h) {
  if (h <= 0.0) throw ContractError("finite_diff_grad: step must be positive");
  Tensor probe = x.detach();
  std::vector<double> g(x.numel());
  NoGradGuard guard;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + h;
    const double fp = f(probe);
    probe.values()[i] = orig - h;
    const double fm = f(probe);
    probe.values()[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::from_data(x.shape(), std::move(g));
}

}  // namespace mclora
