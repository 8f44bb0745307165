// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// Every op records a node pointing at its inputs whenever at least one input
// requires a gradient; the graph is rebuilt on each forward pass and walked in
// reverse topological order by backward(). Values are never mutated once a
// tensor participates in a graph, with the single exception of leaf
// parameters updated by the optimizer between steps.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace concepthash {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl;

namespace detail {

/// Backward closure: reads `out.grad` and accumulates into the inputs' grads.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

}  // namespace detail

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<detail::Node> node;

  /// Accumulation target for backward closures; null when no grad is wanted.
  double* grad_target() { return requires_grad ? grad.data() : nullptr; }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  /// Product of all extents but the last (row count of the matrix view).
  std::size_t rows() const;
  /// Last extent (row width of the matrix view).
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Leaf-only write access (initialization, optimizer, finite differences).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  bool is_leaf() const;
  /// Empty span until a backward pass has reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// Populates grads of every reachable tensor. Leaf grads accumulate across
  /// calls; interior grads are reset on every call. Root must be scalar.
  void backward() const;

  /// Constant copy with no graph history.
  Tensor detach() const;

  const TensorImpl* id() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::initializer_list<const Tensor*>,
                            detail::BackwardFn);
  friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                            detail::BackwardFn);

  std::shared_ptr<TensorImpl> impl_;
};

/// While alive on a thread, ops record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

/// Builds an op output. A graph node is recorded only when some input
/// requires a gradient; otherwise the result is a constant.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, detail::BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   detail::BackwardFn backward);

// --- linear algebra -------------------------------------------------------

/// a[m x k] * b[k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[n x in] * w[in x out] (+ bias[out] when defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});
Tensor transpose(const Tensor& x);

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x times a learnable 1-element tensor.
Tensor scale_by(const Tensor& x, const Tensor& s);
/// Adds `rows` (r x d) to x ((n) x d), row i receiving rows[i mod r].
Tensor add_rows(const Tensor& x, const Tensor& rows);
/// Exact erf form x * Phi(x).
Tensor gelu(const Tensor& x);

// --- reductions and normalization -----------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// sum_i weights[i] * x[i] with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);
/// Max-stabilized softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma/beta (both of width cols).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

inline constexpr double kCosineEps = 1e-8;

/// u.v / (max(|u|, eps) max(|v|, eps)) for equal-length vectors.
Tensor cosine_similarity(const Tensor& u, const Tensor& v, double eps = kCosineEps);
/// Row-pairwise cosine: out[i, j] = cos(a_i, b_j); a is n x d, b is c x d.
Tensor cosine_matrix(const Tensor& a, const Tensor& b, double eps = kCosineEps);
/// Mean over rows of -log softmax(logits_i)[labels_i].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// --- structural -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// out.flat[k] = x.flat[indices[k]]; gradients scatter-add back.
Tensor gather(const Tensor& x, std::span<const std::size_t> indices, Shape shape);

// --- verification ---------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Compares the analytic gradient of f at leaf x with central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h. Relative error per coordinate is
/// |a - n| / max(|a|, |n|, abs_floor); the floor keeps coordinates whose true
/// gradient is below finite-difference roundoff from dominating the maximum.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           double h = 1e-5, double tol = 1e-4, double abs_floor = 1e-5);

}  // namespace concepthash
