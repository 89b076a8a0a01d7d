/*
 * Copyright 2026 The Myna Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense tensors with tape-free reverse-mode differentiation.
//
// Every op returns a Tensor whose node keeps shared references to its inputs
// and a closure that pushes the output gradient back into them. The graph is
// therefore the set of nodes reachable from the loss; it is released when the
// last Tensor referencing it goes away. Training code uses Tensor<float>;
// gradient-check oracles instantiate the same ops with double.
//
// Shapes are rank 1 or rank 2 (a scalar is shape {1}). The only broadcast is
// matrix + row vector (bias add).

#ifndef MYNA_AUTODIFF_HPP_
#define MYNA_AUTODIFF_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "myna/error.hpp"
#include "myna/random.hpp"

namespace myna::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation or zero_grad()
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph construction on this thread while alive (evaluation mode).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape.empty() || std::find(shape.begin(), shape.end(), 0) != shape.end()) {
      throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape.size() > 2) throw ShapeError("tensors are rank 1 or 2, got " + shape_str(shape));
    if (numel_of(shape) != data.size()) {
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  // Rank-1 tensors behave as a single row.
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? node_->shape[1] : node_->shape[0]; }

  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool is_leaf() const { return node_->leaf; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }
  void clear_grad() { node_->grad.clear(); }
  const char* op() const { return node_->op; }

  // Copy of the values without graph history.
  Tensor detach() const { return from(shape(), node_->value, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  template <class U>
  friend Tensor<U> make_op(Shape, std::vector<U>, const char*,
                           std::initializer_list<Tensor<U>>, std::function<void(Node<U>&)>);

  std::shared_ptr<Node<T>> node_;
};

// Builds an op result. When no input needs a gradient (or grad mode is off)
// the result is a plain leaf and the backward closure is dropped.
template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> value, const char* op,
                  std::initializer_list<Tensor<T>> inputs,
                  std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (detail::grad_mode()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

namespace detail {

template <class T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline std::size_t resolve_axis(int axis, const char* op) {
  if (axis == 0 || axis == 1) return static_cast<std::size_t>(axis);
  if (axis == -1) return 1;
  throw AxisError(std::string(op) + ": invalid axis " + std::to_string(axis));
}

// Input gradient buffer, or nullptr when that input takes no gradient.
template <class T>
T* grad_of(Node<T>& self, std::size_t i) {
  Node<T>& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra and elementwise arithmetic

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return make_op<T>({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node<T>& self) {
    const T* G = self.grad.data();
    const T* A = self.inputs[0]->value.data();
    const T* B = self.inputs[1]->value.data();
    if (T* dA = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T* brow = B + p * n;
          T acc = T(0);
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (T* dB = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const T av = A[i * k + p];
          T* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * g[j];
        }
      }
    }
  });
}

// Same-shape elementwise sum, or matrix [m,n] + row vector ([n] or [1,n]).
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return make_op<T>(a.shape(), std::move(out), "add", {a, b}, [](Node<T>& self) {
      const std::size_t n = self.grad.size();
      for (std::size_t in = 0; in < 2; ++in) {
        if (T* d = detail::grad_of(self, in)) {
          for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[i];
        }
      }
    });
  }
  const bool bias = a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols();
  if (!bias) {
    throw ShapeError("add: incompatible shapes " + shape_str(a.shape()) + " + " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + b.data()[j];
  }
  return make_op<T>(a.shape(), std::move(out), "add_bias", {a, b}, [m, n](Node<T>& self) {
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) da[i] += self.grad[i];
    }
    if (T* db = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) db[j] += self.grad[i * n + j];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op<T>(a.shape(), std::move(out), "sub", {a, b}, [](Node<T>& self) {
    const std::size_t n = self.grad.size();
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += self.grad[i];
    }
    if (T* db = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op<T>(a.shape(), std::move(out), "mul", {a, b}, [](Node<T>& self) {
    const std::size_t n = self.grad.size();
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += self.grad[i] * bv[i];
    }
    if (T* db = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] += self.grad[i] * av[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return make_op<T>(a.shape(), std::move(out), "scale", {a}, [s](Node<T>& self) {
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] * s;
    }
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  }
  return make_op<T>({n, m}, std::move(out), "transpose", {a}, [m, n](Node<T>& self) {
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) da[i * n + j] += self.grad[j * m + i];
      }
    }
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel() || shape.empty() || shape.size() > 2) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_op<T>(std::move(shape), std::move(out), "reshape", {a}, [](Node<T>& self) {
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i];
    }
  });
}

// Concatenates matrices along rows (axis 0) or columns (axis 1).
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  const std::size_t ax = detail::resolve_axis(axis, "concat");
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat");
    if (ax == 0) {
      if (cols != 0 && p.cols() != cols) throw ShapeError("concat: column counts differ");
      cols = p.cols();
      rows += p.rows();
    } else {
      if (rows != 0 && p.rows() != rows) throw ShapeError("concat: row counts differ");
      rows = p.rows();
      cols += p.cols();
    }
  }
  std::vector<T> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const std::size_t r = ax == 0 ? offset + i : i;
        const std::size_t c = ax == 0 ? j : offset + j;
        out[r * cols + c] = p.data()[i * p.cols() + j];
      }
    }
    offset += ax == 0 ? p.rows() : p.cols();
  }

  // make_op takes an initializer_list; build the node by hand for N inputs.
  auto node = Tensor<T>::from({rows, cols}, std::move(out));
  bool needs = false;
  if (detail::grad_mode()) {
    for (const auto& p : parts) needs = needs || p.requires_grad();
  }
  if (!needs) return node;
  Node<T>* raw = node.node();
  raw->requires_grad = true;
  raw->leaf = false;
  raw->op = "concat";
  for (const auto& p : parts) raw->inputs.push_back(p.node_ptr());
  raw->backward_fn = [ax, cols, offsets](Node<T>& self) {
    for (std::size_t in = 0; in < self.inputs.size(); ++in) {
      T* d = detail::grad_of(self, in);
      if (!d) continue;
      const Shape& s = self.inputs[in]->shape;
      const std::size_t pr = s.size() == 2 ? s[0] : 1;
      const std::size_t pc = s.size() == 2 ? s[1] : s[0];
      for (std::size_t i = 0; i < pr; ++i) {
        for (std::size_t j = 0; j < pc; ++j) {
          const std::size_t r = ax == 0 ? offsets[in] + i : i;
          const std::size_t c = ax == 0 ? j : offsets[in] + j;
          d[i * pc + j] += self.grad[r * cols + c];
        }
      }
    }
  };
  return node;
}

// out[r] = a[indices[r]]; repeated indices accumulate in backward.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, std::vector<std::size_t> indices) {
  detail::require_rank2(a, "gather_rows");
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t n = a.cols();
  for (std::size_t idx : indices) {
    if (idx >= a.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                       shape_str(a.shape()));
    }
  }
  std::vector<T> out(indices.size() * n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(indices[r] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  const std::size_t count = indices.size();
  return make_op<T>({count, n}, std::move(out), "gather_rows", {a},
                    [n, idx = std::move(indices)](Node<T>& self) {
                      if (T* da = detail::grad_of(self, 0)) {
                        for (std::size_t r = 0; r < idx.size(); ++r) {
                          for (std::size_t j = 0; j < n; ++j) da[idx[r] * n + j] += self.grad[r * n + j];
                        }
                      }
                    });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  detail::require_rank2(a, "slice_cols");
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n) throw ShapeError("slice_cols: range out of bounds");
  std::vector<T> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.data()[i * n + begin + j];
  }
  return make_op<T>({m, count}, std::move(out), "slice_cols", {a},
                    [m, n, begin, count](Node<T>& self) {
                      if (T* da = detail::grad_of(self, 0)) {
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < count; ++j) {
                            da[i * n + begin + j] += self.grad[i * count + j];
                          }
                        }
                      }
                    });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  const std::size_t ax = detail::resolve_axis(axis, "softmax");
  detail::require_rank2(a, "softmax");
  const std::size_t m = a.rows(), n = a.cols();
  // Element (line l, position p) lives at l*ls + p*ps.
  const std::size_t lines = ax == 1 ? m : n, len = ax == 1 ? n : m;
  const std::size_t ls = ax == 1 ? n : 1, ps = ax == 1 ? 1 : n;
  std::vector<T> out(a.numel());
  for (std::size_t l = 0; l < lines; ++l) {
    T mx = a.data()[l * ls];
    for (std::size_t p = 1; p < len; ++p) mx = std::max(mx, a.data()[l * ls + p * ps]);
    T sum = T(0);
    for (std::size_t p = 0; p < len; ++p) {
      const T e = std::exp(a.data()[l * ls + p * ps] - mx);
      out[l * ls + p * ps] = e;
      sum += e;
    }
    for (std::size_t p = 0; p < len; ++p) out[l * ls + p * ps] /= sum;
  }
  return make_op<T>(a.shape(), std::move(out), "softmax", {a},
                    [lines, len, ls, ps](Node<T>& self) {
                      T* da = detail::grad_of(self, 0);
                      if (!da) return;
                      const T* y = self.value.data();
                      const T* g = self.grad.data();
                      for (std::size_t l = 0; l < lines; ++l) {
                        T dot = T(0);
                        for (std::size_t p = 0; p < len; ++p) dot += g[l * ls + p * ps] * y[l * ls + p * ps];
                        for (std::size_t p = 0; p < len; ++p) {
                          const std::size_t i = l * ls + p * ps;
                          da[i] += y[i] * (g[i] - dot);
                        }
                      }
                    });
}

// Normalizes each row over its columns, then applies gamma/beta ([n]).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  detail::require_rank2(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.numel() != n || beta.numel() != n) throw ShapeError("layer_norm: affine size mismatch");
  std::vector<T> out(m * n), xhat(m * n), rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data().data() + i * n;
    T mean = T(0);
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(n);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * rstd[i];
      out[i * n + j] = xhat[i * n + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  return make_op<T>(x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
                    [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                      const T* g = self.grad.data();
                      const T* gam = self.inputs[1]->value.data();
                      if (T* dx = detail::grad_of(self, 0)) {
                        for (std::size_t i = 0; i < m; ++i) {
                          T mean_d = T(0), mean_dx = T(0);
                          for (std::size_t j = 0; j < n; ++j) {
                            const T d = g[i * n + j] * gam[j];
                            mean_d += d;
                            mean_dx += d * xhat[i * n + j];
                          }
                          mean_d /= static_cast<T>(n);
                          mean_dx /= static_cast<T>(n);
                          for (std::size_t j = 0; j < n; ++j) {
                            const T d = g[i * n + j] * gam[j];
                            dx[i * n + j] += rstd[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                          }
                        }
                      }
                      if (T* dg = detail::grad_of(self, 1)) {
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < n; ++j) dg[j] += g[i * n + j] * xhat[i * n + j];
                        }
                      }
                      if (T* db = detail::grad_of(self, 2)) {
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                        }
                      }
                    });
}

// Exact (erf) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = a.data()[i];
    out[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  return make_op<T>(a.shape(), std::move(out), "gelu", {a}, [inv_sqrt2](Node<T>& self) {
    T* da = detail::grad_of(self, 0);
    if (!da) return;
    const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
    const T* xs = self.inputs[0]->value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T x = xs[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      da[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.data()[i], T(0));
  return make_op<T>(a.shape(), std::move(out), "relu", {a}, [](Node<T>& self) {
    T* da = detail::grad_of(self, 0);
    if (!da) return;
    const T* xs = self.inputs[0]->value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xs[i] > T(0)) da[i] += self.grad[i];
    }
  });
}

// Mean over one axis of a matrix: axis 0 -> [1,n], axis 1 -> [m,1].
template <class T>
Tensor<T> mean(const Tensor<T>& a, int axis) {
  const std::size_t ax = detail::resolve_axis(axis, "mean");
  detail::require_rank2(a, "mean");
  const std::size_t m = a.rows(), n = a.cols();
  Shape shape = ax == 0 ? Shape{1, n} : Shape{m, 1};
  std::vector<T> out(ax == 0 ? n : m, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[ax == 0 ? j : i] += a.data()[i * n + j];
  }
  const T inv = T(1) / static_cast<T>(ax == 0 ? m : n);
  for (T& v : out) v *= inv;
  return make_op<T>(std::move(shape), std::move(out), "mean", {a}, [ax, m, n, inv](Node<T>& self) {
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) da[i * n + j] += self.grad[ax == 0 ? j : i] * inv;
      }
    }
  });
}

template <class T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  return make_op<T>({1}, {acc}, "sum", {a}, [](Node<T>& self) {
    if (T* da = detail::grad_of(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) da[i] += self.grad[0];
    }
  });
}

template <class T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

// Scales each row (axis 1) or column (axis 0) to unit L2 norm. Zero vectors
// map to zero with zero gradient.
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& a, int axis) {
  const std::size_t ax = detail::resolve_axis(axis, "l2_normalize");
  detail::require_rank2(a, "l2_normalize");
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t lines = ax == 1 ? m : n, len = ax == 1 ? n : m;
  const std::size_t ls = ax == 1 ? n : 1, ps = ax == 1 ? 1 : n;
  std::vector<T> out(a.numel(), T(0)), norms(lines);
  for (std::size_t l = 0; l < lines; ++l) {
    T ss = T(0);
    for (std::size_t p = 0; p < len; ++p) ss += a.data()[l * ls + p * ps] * a.data()[l * ls + p * ps];
    norms[l] = std::sqrt(ss);
    if (norms[l] > T(0)) {
      for (std::size_t p = 0; p < len; ++p) out[l * ls + p * ps] = a.data()[l * ls + p * ps] / norms[l];
    }
  }
  return make_op<T>(a.shape(), std::move(out), "l2_normalize", {a},
                    [lines, len, ls, ps, norms = std::move(norms)](Node<T>& self) {
                      T* da = detail::grad_of(self, 0);
                      if (!da) return;
                      const T* y = self.value.data();
                      const T* g = self.grad.data();
                      for (std::size_t l = 0; l < lines; ++l) {
                        if (norms[l] == T(0)) continue;
                        T dot = T(0);
                        for (std::size_t p = 0; p < len; ++p) dot += y[l * ls + p * ps] * g[l * ls + p * ps];
                        for (std::size_t p = 0; p < len; ++p) {
                          const std::size_t i = l * ls + p * ps;
                          da[i] += (g[i] - y[i] * dot) / norms[l];
                        }
                      }
                    });
}

// Inverted dropout: kept activations are divided by (1 - p). Identity when
// not training or p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& a, double p, Rng& rng, bool training = true) {
  if (p < 0.0 || p >= 1.0) throw ParameterError("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(a.numel());
  for (T& v : mask) v = uniform01(rng) >= p ? keep_scale : T(0);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * mask[i];
  return make_op<T>(a.shape(), std::move(out), "dropout", {a},
                    [mask = std::move(mask)](Node<T>& self) {
                      if (T* da = detail::grad_of(self, 0)) {
                        for (std::size_t i = 0; i < mask.size(); ++i) da[i] += self.grad[i] * mask[i];
                      }
                    });
}

// ---------------------------------------------------------------------------
// Reductions used by the losses

// log sum_j exp(x[i,j]) over the columns j with exclude[i*n+j] == 0; [m,1].
template <class T>
Tensor<T> logsumexp_rows(const Tensor<T>& x, std::vector<unsigned char> exclude = {}) {
  detail::require_rank2(x, "logsumexp_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (exclude.empty()) exclude.assign(m * n, 0);
  if (exclude.size() != m * n) throw ShapeError("logsumexp_rows: mask shape mismatch");
  std::vector<T> out(m), weights(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!exclude[i * n + j]) mx = std::max(mx, x.data()[i * n + j]);
    }
    if (!std::isfinite(mx)) throw ShapeError("logsumexp_rows: row with no included entries");
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (exclude[i * n + j]) continue;
      weights[i * n + j] = std::exp(x.data()[i * n + j] - mx);
      sum += weights[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) weights[i * n + j] /= sum;
    out[i] = mx + std::log(sum);
  }
  return make_op<T>({m, 1}, std::move(out), "logsumexp_rows", {x},
                    [m, n, weights = std::move(weights)](Node<T>& self) {
                      if (T* dx = detail::grad_of(self, 0)) {
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += self.grad[i] * weights[i * n + j];
                        }
                      }
                    });
}

// out[i] = x[i, cols[i]]; [m,1].
template <class T>
Tensor<T> pick_per_row(const Tensor<T>& x, std::vector<std::size_t> cols) {
  detail::require_rank2(x, "pick_per_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (cols.size() != m) throw ShapeError("pick_per_row: one column index per row required");
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] >= n) throw ShapeError("pick_per_row: column index out of range");
    out[i] = x.data()[i * n + cols[i]];
  }
  return make_op<T>({m, 1}, std::move(out), "pick_per_row", {x},
                    [n, cols = std::move(cols)](Node<T>& self) {
                      if (T* dx = detail::grad_of(self, 0)) {
                        for (std::size_t i = 0; i < cols.size(); ++i) dx[i * n + cols[i]] += self.grad[i];
                      }
                    });
}

// Mean softmax cross-entropy of logits [m,c] against class indices.
template <class T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  detail::require_rank2(logits, "cross_entropy_logits");
  const std::size_t m = logits.rows(), c = logits.cols();
  if (targets.size() != m) throw ShapeError("cross_entropy_logits: one target per row required");
  std::vector<T> probs(m * c);
  T loss = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= c) throw ShapeError("cross_entropy_logits: target out of range");
    const T* row = logits.data().data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(row[j] - mx);
      sum += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= sum;
    loss += mx + std::log(sum) - row[targets[i]];
  }
  loss /= static_cast<T>(m);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return make_op<T>({1}, {loss}, "cross_entropy", {logits},
                    [m, c, probs = std::move(probs), tgt = std::move(tgt)](Node<T>& self) {
                      T* d = detail::grad_of(self, 0);
                      if (!d) return;
                      const T g = self.grad[0] / static_cast<T>(m);
                      for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t j = 0; j < c; ++j) {
                          d[i * c + j] += g * (probs[i * c + j] - (j == tgt[i] ? T(1) : T(0)));
                        }
                      }
                    });
}

// Mean independent binary cross-entropy of logits against {0,1} targets.
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  detail::require_same_shape(logits, targets, "bce_with_logits");
  const std::size_t n = logits.numel();
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits.data()[i], t = targets.data()[i];
    loss += std::max(x, T(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<T>(n);
  return make_op<T>({1}, {loss}, "bce_with_logits", {logits, targets}, [n](Node<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    const T* x = self.inputs[0]->value.data();
    const T* t = self.inputs[1]->value.data();
    if (T* dx = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) dx[i] += g * (T(1) / (T(1) + std::exp(-x[i])) - t[i]);
    }
    if (T* dt = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) dt[i] -= g * x[i];
    }
  });
}

// Mean squared error over all elements.
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mse");
  const std::size_t n = a.numel();
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.data()[i] - b.data()[i];
    loss += d * d;
  }
  loss /= static_cast<T>(n);
  return make_op<T>({1}, {loss}, "mse", {a, b}, [n](Node<T>& self) {
    const T g = T(2) * self.grad[0] / static_cast<T>(n);
    const T* av = self.inputs[0]->value.data();
    const T* bv = self.inputs[1]->value.data();
    if (T* da = detail::grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += g * (av[i] - bv[i]);
    }
    if (T* db = detail::grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] -= g * (av[i] - bv[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
// gradient. Intermediate gradients are reset on each call, so calling twice
// without zero_grad() doubles the leaf gradients.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor requiring a gradient");
  }
  Node<T>* root = loss.node();
  if (root->leaf) {
    root->grad_buffer()[0] += T(1);
    return;
  }

  // Iterative post-order DFS over interior nodes.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (!child->leaf && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) n->grad.assign(n->value.size(), T(0));
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// Element-wise conversion, e.g. float parameters into a double oracle graph.
template <class To, class From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>::from(t.shape(), std::move(v), requires_grad);
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace myna::ad

#endif  // MYNA_AUTODIFF_HPP_
