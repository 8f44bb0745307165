// SPDX-License-Identifier: Apache-2.0
#include "concepthash/tensor.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "concepthash/errors.hpp"

namespace concepthash {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " +
                                          shape_string(t.shape()));
}

}  // namespace

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> values(shape_size(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != values.size())
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  if (requires_grad) impl->grad.assign(impl->values.size(), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  assert(impl_);
  return impl_->shape;
}

std::size_t Tensor::size() const { return impl_->values.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis out of range");
  return impl_->shape[axis];
}

std::size_t Tensor::rows() const { return size() / cols(); }
std::size_t Tensor::cols() const { return impl_->shape.back(); }

std::span<const double> Tensor::values() const { return impl_->values; }

std::span<double> Tensor::mutable_values() {
  if (impl_->node) throw ContractError("mutable_values on a non-leaf tensor");
  return impl_->values;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::is_leaf() const { return impl_->node == nullptr; }
std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), impl_->values, false); }

void Tensor::backward() const {
  if (!impl_) throw ContractError("backward on undefined tensor");
  if (size() != 1) throw ContractError("backward requires a scalar root, got " + shape_string(shape()));
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    const auto* node = cur->node.get();
    if (node && next < node->inputs.size()) {
      TensorImpl* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }

  for (TensorImpl* t : order) {
    if (t->node)
      t->grad.assign(t->values.size(), 0.0);
    else if (t->grad.size() != t->values.size())
      t->grad.assign(t->values.size(), 0.0);
  }
  impl_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (t->node) t->node->backward(*t);
  }
}

namespace {
thread_local bool g_no_grad = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                   detail::BackwardFn backward) {
  bool needs_grad = false;
  if (!g_no_grad)
    for (const Tensor* in : inputs) needs_grad = needs_grad || (in->defined() && in->requires_grad());
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (needs_grad) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    for (const Tensor* in : inputs)
      if (in->defined()) node->inputs.push_back(in->impl());
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   detail::BackwardFn backward) {
  bool needs_grad = false;
  if (!g_no_grad)
    for (const Tensor& in : inputs) needs_grad = needs_grad || in.requires_grad();
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (needs_grad) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::Node>();
    for (const Tensor& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

// --- kernels --------------------------------------------------------------

namespace {

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner extents differ " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto ai = a.impl().get();
  auto bi = b.impl().get();
  return make_result({m, n}, std::move(out), {&a, &b}, [ai, bi, m, k, n](const TensorImpl& o) {
    if (double* ga = ai->grad_target()) gemm_nt(o.grad.data(), bi->values.data(), ga, m, n, k);
    if (double* gb = bi->grad_target()) gemm_tn(ai->values.data(), o.grad.data(), gb, m, k, n);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_matrix(w, "linear");
  const std::size_t n = x.rows(), in = x.cols(), out_dim = w.dim(1);
  if (w.dim(0) != in)
    throw DimensionError("linear: input width " + std::to_string(in) + " vs weight " +
                         shape_string(w.shape()));
  if (bias.defined() && bias.size() != out_dim)
    throw DimensionError("linear: bias length " + std::to_string(bias.size()) + " vs " +
                         std::to_string(out_dim));
  std::vector<double> out(n * out_dim, 0.0);
  if (bias.defined()) {
    const double* bv = bias.values().data();
    for (std::size_t i = 0; i < n; ++i) std::copy(bv, bv + out_dim, out.begin() + i * out_dim);
  }
  gemm_nn(x.values().data(), w.values().data(), out.data(), n, in, out_dim);
  Shape shape = x.shape();
  shape.back() = out_dim;
  auto xi = x.impl().get();
  auto wi = w.impl().get();
  TensorImpl* bi = bias.defined() ? bias.impl().get() : nullptr;
  return make_result(std::move(shape), std::move(out), {&x, &w, &bias},
                     [xi, wi, bi, n, in, out_dim](const TensorImpl& o) {
                       if (double* gx = xi->grad_target())
                         gemm_nt(o.grad.data(), wi->values.data(), gx, n, out_dim, in);
                       if (double* gw = wi->grad_target())
                         gemm_tn(xi->values.data(), o.grad.data(), gw, n, in, out_dim);
                       if (bi) {
                         if (double* gb = bi->grad_target())
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < out_dim; ++j) gb[j] += o.grad[i * out_dim + j];
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  auto v = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  auto xi = x.impl().get();
  return make_result({c, r}, std::move(out), {&x}, [xi, r, c](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto ai = a.impl().get();
  auto bi = b.impl().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, [ai, bi](const TensorImpl& o) {
    for (TensorImpl* t : {ai, bi})
      if (double* g = t->grad_target())
        for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto ai = a.impl().get();
  auto bi = b.impl().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, [ai, bi](const TensorImpl& o) {
    if (double* g = ai->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = bi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto ai = a.impl().get();
  auto bi = b.impl().get();
  return make_result(a.shape(), std::move(out), {&a, &b}, [ai, bi](const TensorImpl& o) {
    if (double* g = ai->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bi->values[i];
    if (double* g = bi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * ai->values[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  auto xi = x.impl().get();
  return make_result(x.shape(), std::move(out), {&x}, [xi, factor](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += factor * o.grad[i];
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw DimensionError("scale_by: scale must have one element");
  const double sv = s.item();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= sv;
  auto xi = x.impl().get();
  auto si = s.impl().get();
  return make_result(x.shape(), std::move(out), {&x, &s}, [xi, si](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += si->values[0] * o.grad[i];
    if (double* g = si->grad_target()) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += xi->values[i] * o.grad[i];
      g[0] += acc;
    }
  });
}

Tensor add_rows(const Tensor& x, const Tensor& rows) {
  const std::size_t d = x.cols();
  if (rows.cols() != d)
    throw DimensionError("add_rows: width " + std::to_string(rows.cols()) + " vs " + std::to_string(d));
  const std::size_t n = x.rows(), r = rows.rows();
  std::vector<double> out(x.values().begin(), x.values().end());
  auto rv = rows.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = rv.data() + (i % r) * d;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += src[j];
  }
  auto xi = x.impl().get();
  auto ri = rows.impl().get();
  return make_result(x.shape(), std::move(out), {&x, &rows}, [xi, ri, n, r, d](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = ri->grad_target())
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[(i % r) * d + j] += o.grad[i * d + j];
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = v[i] * 0.5 * (1.0 + std::erf(v[i] * std::numbers::sqrt2 / 2.0));
  auto xi = x.impl().get();
  return make_result(x.shape(), std::move(out), {&x}, [xi](const TensorImpl& o) {
    if (double* g = xi->grad_target()) {
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double z = xi->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
        g[i] += o.grad[i] * (cdf + z * pdf);
      }
    }
  });
}

// --- reductions and normalization -----------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto xi = x.impl().get();
  return make_result({1}, {acc}, {&x}, [xi](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < xi->values.size(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.size()) throw DimensionError("weighted_sum: weight count mismatch");
  double acc = 0.0;
  auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) acc += weights[i] * v[i];
  std::vector<double> w(weights.begin(), weights.end());
  auto xi = x.impl().get();
  return make_result({1}, {acc}, {&x}, [xi, w = std::move(w)](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < w.size(); ++i) g[i] += w[i] * o.grad[0];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  auto v = x.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = v[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, v[base + k * inner]);
      assert(!std::isnan(mx) && "softmax: NaN input");
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(v[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  auto xi = x.impl().get();
  return make_result(x.shape(), std::move(out), {&x}, [xi, outer, inner, len](const TensorImpl& o) {
    double* g = xi->grad_target();
    if (!g) return;
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += o.grad[base + k * inner] * o.values[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          g[idx] += o.values[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.cols(), n = x.rows();
  if (gamma.size() != d || beta.size() != d) throw DimensionError("layer_norm: affine width mismatch");
  auto v = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = v.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  auto xi = x.impl().get();
  auto gi = gamma.impl().get();
  auto bi = beta.impl().get();
  return make_result(x.shape(), std::move(out), {&x, &gamma, &beta},
                     [xi, gi, bi, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorImpl& o) {
                       if (double* gg = gi->grad_target())
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j) gg[j] += o.grad[i * d + j] * xhat[i * d + j];
                       if (double* gb = bi->grad_target())
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j) gb[j] += o.grad[i * d + j];
                       if (double* gx = xi->grad_target()) {
                         const double inv_d = 1.0 / static_cast<double>(d);
                         for (std::size_t i = 0; i < n; ++i) {
                           double s1 = 0.0, s2 = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dxh = o.grad[i * d + j] * gi->values[j];
                             s1 += dxh;
                             s2 += dxh * xhat[i * d + j];
                           }
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dxh = o.grad[i * d + j] * gi->values[j];
                             gx[i * d + j] += inv_std[i] * (dxh - inv_d * s1 - xhat[i * d + j] * inv_d * s2);
                           }
                         }
                       }
                     });
}

namespace {

struct CosineTerms {
  double dot, nu, nv, du, dv;  // du/dv: clamped norms
};

}  // namespace

Tensor cosine_similarity(const Tensor& u, const Tensor& v, double eps) {
  if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
  Tensor a = reshape(u, {1, u.size()});
  Tensor b = reshape(v, {1, v.size()});
  return reshape(cosine_matrix(a, b, eps), {1});
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b, double eps) {
  const std::size_t n = a.rows(), c = b.rows(), d = a.cols();
  if (b.cols() != d) throw DimensionError("cosine_matrix: width mismatch");
  auto av = a.values(), bv = b.values();
  std::vector<double> na(n), nb(c);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += av[i * d + k] * av[i * d + k];
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < c; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += bv[j * d + k] * bv[j * d + k];
    nb[j] = std::sqrt(s);
  }
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += av[i * d + k] * bv[j * d + k];
      out[i * c + j] = dot / (std::max(na[i], eps) * std::max(nb[j], eps));
    }
  auto ai = a.impl().get();
  auto bi = b.impl().get();
  return make_result(
      {n, c}, std::move(out), {&a, &b},
      [ai, bi, n, c, d, eps, na = std::move(na), nb = std::move(nb)](const TensorImpl& o) {
        double* ga = ai->grad_target();
        double* gb = bi->grad_target();
        const double* av = ai->values.data();
        const double* bv = bi->values.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double da = std::max(na[i], eps);
          const bool a_clamped = na[i] < eps;
          for (std::size_t j = 0; j < c; ++j) {
            const double g = o.grad[i * c + j];
            if (g == 0.0) continue;
            const double db = std::max(nb[j], eps);
            const bool b_clamped = nb[j] < eps;
            const double cosv = o.values[i * c + j];
            // d cos / d a = b / (da db) - cos * a / |a|^2  (second term absent when clamped)
            if (ga) {
              const double k1 = g / (da * db);
              const double k2 = a_clamped ? 0.0 : g * cosv / (na[i] * na[i]);
              for (std::size_t k = 0; k < d; ++k) ga[i * d + k] += k1 * bv[j * d + k] - k2 * av[i * d + k];
            }
            if (gb) {
              const double k1 = g / (da * db);
              const double k2 = b_clamped ? 0.0 : g * cosv / (nb[j] * nb[j]);
              for (std::size_t k = 0; k < d; ++k) gb[j * d + k] += k1 * av[i * d + k] - k2 * bv[j * d + k];
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw DimensionError("cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(c) + ")");
  auto v = logits.values();
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = v.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_z);
    loss += log_z - row[labels[i]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> y(labels.begin(), labels.end());
  auto li = logits.impl().get();
  return make_result({1}, {loss}, {&logits},
                     [li, n, c, probs = std::move(probs), y = std::move(y)](const TensorImpl& o) {
                       double* g = li->grad_target();
                       if (!g) return;
                       const double scale_factor = o.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[i * c + j] += scale_factor * (probs[i * c + j] - (static_cast<int>(j) == y[i] ? 1.0 : 0.0));
                     });
}

// --- structural -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  auto xi = x.impl().get();
  return make_result(std::move(shape), std::move(out), {&x}, [xi](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t d = x.cols();
  if (begin >= end || end > x.rows())
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + std::to_string(x.rows()) + " rows");
  auto v = x.values();
  std::vector<double> out(v.begin() + begin * d, v.begin() + end * d);
  auto xi = x.impl().get();
  return make_result({end - begin, d}, std::move(out), {&x}, [xi, begin, d](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * d + i] += o.grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().cols();
  std::size_t total_rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw DimensionError("concat_rows: width mismatch");
    total_rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(total_rows * d);
  std::vector<TensorImpl*> impls;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    impls.push_back(p.impl().get());
  }
  return make_result({total_rows, d}, std::move(out), parts, [impls](const TensorImpl& o) {
    std::size_t offset = 0;
    for (TensorImpl* t : impls) {
      if (double* g = t->grad_target())
        for (std::size_t i = 0; i < t->values.size(); ++i) g[i] += o.grad[offset + i];
      offset += t->values.size();
    }
  });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices, Shape shape) {
  check_shape(shape);
  if (shape_size(shape) != indices.size()) throw DimensionError("gather: index count does not match shape");
  auto v = x.values();
  std::vector<double> out(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= v.size()) throw DimensionError("gather: index out of range");
    out[k] = v[indices[k]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  auto xi = x.impl().get();
  return make_result(std::move(shape), std::move(out), {&x}, [xi, idx = std::move(idx)](const TensorImpl& o) {
    if (double* g = xi->grad_target())
      for (std::size_t k = 0; k < idx.size(); ++k) g[idx[k]] += o.grad[k];
  });
}

// --- verification ---------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h, double tol,
                           double abs_floor) {
  if (!x.is_leaf() || !x.requires_grad()) throw ContractError("grad_check: x must be a leaf requiring grad");
  x.zero_grad();
  f(x).backward();
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  x.zero_grad();

  GradCheckReport report;
  auto vals = x.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + h;
    const double fp = f(x).item();
    vals[i] = orig - h;
    const double fm = f(x).item();
    vals[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace concepthash
