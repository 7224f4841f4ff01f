// mcar/autograd.hpp

// Copyright 2026  The mcar Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Tape-based reverse-mode differentiation over Tensor<T>.
//
// A Graph records nodes in creation order, which is a valid topological
// order, so backward() simply walks the tape in reverse. Every op is coarse
// (a whole convolution, a whole loss) and owns its backward closure.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcar/errors.hpp"
#include "mcar/tensor.hpp"

namespace mcar {

template <typename T>
using RowMajorMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMajorMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix<T>>;

/// Trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = true;  // subject to weight decay

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool d = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(d) {}

  void zero_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    grad.fill(T(0));
  }
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_ref() {
    if (!grad_ready) {
      grad = Tensor<T>(value.shape());
      grad_ready = true;
    }
    return grad;
  }

  T item() const {
    if (value.size() != 1) throw ContractError("item() on non-scalar " + value.shape_string());
    return value[0];
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return record(std::move(value), false, nullptr); }

  /// Leaf bound to a parameter; gradients accumulate into p.grad on backward().
  /// Repeated calls with the same parameter share one node.
  Var<T> parameter(Parameter<T>& p) {
    auto it = params_.find(&p);
    if (it != params_.end()) return it->second;
    Parameter<T>* target = &p;
    auto v = record(p.value, true, [target](Node<T>& self) {
      if (target->grad.size() != self.grad.size()) target->zero_grad();
      T* dst = target->grad.data();
      const T* src = self.grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += src[i];
    });
    params_.emplace(&p, v);
    return v;
  }

  Var<T> record(Tensor<T> value, bool requires_grad, std::function<void(Node<T>&)> backward) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    if (requires_grad) n->backward = std::move(backward);
    nodes_.push_back(n);
    return n;
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable parameter.
  void backward(const Var<T>& root) {
    if (root->value.size() != 1) {
      throw ContractError("backward() needs a scalar root, got " + root->value.shape_string());
    }
    if (!root->requires_grad) return;
    root->grad_ref()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.grad_ready && n.backward) n.backward(n);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<Var<T>> nodes_;
  std::unordered_map<const Parameter<T>*, Var<T>> params_;
};

namespace ops {

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> vars) {
  for (const auto* v : vars)
    if (v && *v && (*v)->requires_grad) return true;
  return false;
}

template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  if (a->value.size() != b->value.size()) {
    throw ConfigError("add: shape mismatch " + a->value.shape_string() + " vs " +
                      b->value.shape_string());
  }
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return g.record(std::move(out), any_requires_grad<T>({&a, &b}), [a, b](Node<T>& self) {
    for (const auto* in : {&a, &b}) {
      if (!(*in)->requires_grad) continue;
      auto& gi = (*in)->grad_ref();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& a, T s) {
  Tensor<T> out = a->value;
  for (auto& v : out.values()) v *= s;
  return g.record(std::move(out), a->requires_grad, [a, s](Node<T>& self) {
    auto& ga = a->grad_ref();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * self.grad[i];
  });
}

/// sum_i w_i * x_i over scalar nodes.
template <typename T>
Var<T> weighted_sum(Graph<T>& g, std::vector<std::pair<Var<T>, T>> terms) {
  T total = T(0);
  bool rg = false;
  for (const auto& [v, w] : terms) {
    total += w * v->item();
    rg = rg || v->requires_grad;
  }
  return g.record(Tensor<T>({1}, std::vector<T>{total}), rg,
                  [terms = std::move(terms)](Node<T>& self) {
                    for (const auto& [v, w] : terms)
                      if (v->requires_grad) v->grad_ref()[0] += w * self.grad[0];
                  });
}

/// Arithmetic mean of scalar nodes. Empty input yields a constant zero.
template <typename T>
Var<T> mean(Graph<T>& g, const std::vector<Var<T>>& scalars) {
  if (scalars.empty()) return g.constant(Tensor<T>({1}));
  std::vector<std::pair<Var<T>, T>> terms;
  terms.reserve(scalars.size());
  const T w = T(1) / static_cast<T>(scalars.size());
  for (const auto& s : scalars) terms.emplace_back(s, w);
  return weighted_sum(g, std::move(terms));
}

template <typename T>
Var<T> sum(Graph<T>& g, const Var<T>& x) {
  return g.record(Tensor<T>({1}, std::vector<T>{x->value.sum()}), x->requires_grad,
                  [x](Node<T>& self) {
                    auto& gx = x->grad_ref();
                    for (auto& v : gx.values()) v += self.grad[0];
                  });
}

template <typename T>
Var<T> relu(Graph<T>& g, const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return g.record(std::move(out), x->requires_grad, [x](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (self.value[i] > T(0)) gx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(Graph<T>& g, const Var<T>& x) {
  Tensor<T> out = x->value;
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  return g.record(std::move(out), x->requires_grad, [x](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = self.value[i];
      gx[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

/// Elementwise clamp; the gradient is zero where the clamp is active.
template <typename T>
Var<T> clamp(Graph<T>& g, const Var<T>& x, T lo, T hi) {
  Tensor<T> out = x->value;
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return g.record(std::move(out), x->requires_grad, [x, lo, hi](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = x->value[i];
      if (v > lo && v < hi) gx[i] += self.grad[i];
    }
  });
}

/// Softmax along the last axis. A 1-D input is one row.
template <typename T>
Var<T> softmax_rows(Graph<T>& g, const Var<T>& x) {
  const int cols = x->value.shape().back();
  const int rows = cols == 0 ? 0 : static_cast<int>(x->value.size()) / cols;
  Tensor<T> out = x->value;
  for (int r = 0; r < rows; ++r) {
    T* row = out.data() + static_cast<std::size_t>(r) * cols;
    const T m = *std::max_element(row, row + cols);
    T z = T(0);
    for (int c = 0; c < cols; ++c) z += (row[c] = std::exp(row[c] - m));
    for (int c = 0; c < cols; ++c) row[c] /= z;
  }
  return g.record(std::move(out), x->requires_grad, [x, rows, cols](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * cols;
      T dot = T(0);
      for (int c = 0; c < cols; ++c) dot += self.grad[off + c] * self.value[off + c];
      for (int c = 0; c < cols; ++c)
        gx[off + c] += self.value[off + c] * (self.grad[off + c] - dot);
    }
  });
}

/// Identity forward; backward multiplies the upstream gradient by -lambda.
template <typename T>
Var<T> gradient_reversal(Graph<T>& g, const Var<T>& x, T lambda) {
  if (lambda < T(0)) throw ConfigError("gradient_reversal: lambda must be >= 0");
  return g.record(x->value, x->requires_grad, [x, lambda](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= lambda * self.grad[i];
  });
}

/// Same values under a new shape of equal size.
template <typename T>
Var<T> reshape(Graph<T>& g, const Var<T>& x, std::vector<int> shape) {
  Tensor<T> out = x->value;
  out.reshape(std::move(shape));
  return g.record(std::move(out), x->requires_grad, [x](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

/// Same value, no gradient path.
template <typename T>
Var<T> detach(Graph<T>& g, const Var<T>& x) {
  return g.constant(x->value);
}

/// Flattened outer product: out[j*K + k] = a[j] * b[k].
template <typename T>
Var<T> outer(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
  const int d = static_cast<int>(a->value.size());
  const int k = static_cast<int>(b->value.size());
  Tensor<T> out({d * k});
  for (int j = 0; j < d; ++j)
    for (int c = 0; c < k; ++c) out[static_cast<std::size_t>(j) * k + c] = a->value[j] * b->value[c];
  return g.record(std::move(out), any_requires_grad<T>({&a, &b}), [a, b, d, k](Node<T>& self) {
    if (a->requires_grad) {
      auto& ga = a->grad_ref();
      for (int j = 0; j < d; ++j)
        for (int c = 0; c < k; ++c) ga[j] += self.grad[static_cast<std::size_t>(j) * k + c] * b->value[c];
    }
    if (b->requires_grad) {
      auto& gb = b->grad_ref();
      for (int j = 0; j < d; ++j)
        for (int c = 0; c < k; ++c) gb[c] += self.grad[static_cast<std::size_t>(j) * k + c] * a->value[j];
    }
  });
}

/// x: [n] or [R, n]; weight: [o, n]; bias: [o]. Returns [o] or [R, o].
template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const int out_f = weight->value.dim(0);
  const int in_f = weight->value.dim(1);
  const bool vec = x->value.ndim() == 1;
  const int rows = vec ? 1 : x->value.dim(0);
  const int xin = vec ? x->value.dim(0) : x->value.dim(1);
  if (xin != in_f) {
    throw ConfigError("linear: input features " + std::to_string(xin) + " != weight input " +
                      std::to_string(in_f));
  }
  Tensor<T> out(vec ? std::vector<int>{out_f} : std::vector<int>{rows, out_f});
  if (rows > 0) {
    ConstMatrixMap<T> X(x->value.data(), rows, in_f);
    ConstMatrixMap<T> W(weight->value.data(), out_f, in_f);
    MatrixMap<T> Y(out.data(), rows, out_f);
    Y.noalias() = X * W.transpose();
    for (int r = 0; r < rows; ++r)
      for (int o = 0; o < out_f; ++o) Y(r, o) += bias->value[o];
  }
  return g.record(std::move(out), any_requires_grad<T>({&x, &weight, &bias}),
                  [x, weight, bias, rows, in_f, out_f](Node<T>& self) {
                    if (rows == 0) return;
                    ConstMatrixMap<T> dY(self.grad.data(), rows, out_f);
                    ConstMatrixMap<T> X(x->value.data(), rows, in_f);
                    if (weight->requires_grad) {
                      MatrixMap<T> dW(weight->grad_ref().data(), out_f, in_f);
                      dW.noalias() += dY.transpose() * X;
                    }
                    if (bias->requires_grad) {
                      auto& gb = bias->grad_ref();
                      for (int r = 0; r < rows; ++r)
                        for (int o = 0; o < out_f; ++o) gb[o] += dY(r, o);
                    }
                    if (x->requires_grad) {
                      ConstMatrixMap<T> W(weight->value.data(), out_f, in_f);
                      MatrixMap<T> dX(x->grad_ref().data(), rows, in_f);
                      dX.noalias() += dY * W;
                    }
                  });
}

namespace detail {

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* cols) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>((c * k + ky) * k + kx)) * plane;
        const T* src = x + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix < 0 || ix >= w) ? T(0) : src[static_cast<std::size_t>(iy) * w + ix];
          }
        }
      }
}

template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, int k, int stride, int pad, int ho,
                int wo, T* x) {
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>((c * k + ky) * k + kx)) * plane;
        T* dst = x + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[static_cast<std::size_t>(iy) * w + ix] += row[static_cast<std::size_t>(oy) * wo + ox];
          }
        }
      }
}

}  // namespace detail

/// x: [C, H, W]; weight: [O, C, k, k]; bias: [O]. Square kernels only.
template <typename T>
Var<T> conv2d(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
              int pad) {
  const int c_in = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
  const int c_out = weight->value.dim(0), k = weight->value.dim(2);
  if (weight->value.dim(1) != c_in) {
    throw ConfigError("conv2d: input channels " + std::to_string(c_in) + " != weight channels " +
                      std::to_string(weight->value.dim(1)));
  }
  const int ho = detail::conv_out_size(h, k, stride, pad);
  const int wo = detail::conv_out_size(w, k, stride, pad);
  const int patch = c_in * k * k;
  const int plane = ho * wo;

  Tensor<T> cols({patch, plane});
  detail::im2col(x->value.data(), c_in, h, w, k, stride, pad, ho, wo, cols.data());

  Tensor<T> out({c_out, ho, wo});
  {
    ConstMatrixMap<T> W(weight->value.data(), c_out, patch);
    ConstMatrixMap<T> C(cols.data(), patch, plane);
    MatrixMap<T> Y(out.data(), c_out, plane);
    Y.noalias() = W * C;
    for (int o = 0; o < c_out; ++o) Y.row(o).array() += bias->value[o];
  }
  return g.record(
      std::move(out), any_requires_grad<T>({&x, &weight, &bias}),
      [x, weight, bias, cols = std::move(cols), c_in, h, w, c_out, k, stride, pad, ho, wo, patch,
       plane](Node<T>& self) {
        ConstMatrixMap<T> dY(self.grad.data(), c_out, plane);
        if (weight->requires_grad) {
          ConstMatrixMap<T> C(cols.data(), patch, plane);
          MatrixMap<T> dW(weight->grad_ref().data(), c_out, patch);
          dW.noalias() += dY * C.transpose();
        }
        if (bias->requires_grad) {
          auto& gb = bias->grad_ref();
          for (int o = 0; o < c_out; ++o) gb[o] += dY.row(o).sum();
        }
        if (x->requires_grad) {
          ConstMatrixMap<T> W(weight->value.data(), c_out, patch);
          RowMajorMatrix<T> dcols = W.transpose() * dY;
          detail::col2im_add(dcols.data(), c_in, h, w, k, stride, pad, ho, wo,
                             x->grad_ref().data());
        }
      });
}

/// [C, H, W] -> [C], mean over the spatial plane.
template <typename T>
Var<T> global_avg_pool(Graph<T>& g, const Var<T>& x) {
  const int c = x->value.dim(0);
  const int plane = x->value.dim(1) * x->value.dim(2);
  Tensor<T> out({c});
  for (int i = 0; i < c; ++i) {
    T s = T(0);
    const T* src = x->value.data() + static_cast<std::size_t>(i) * plane;
    for (int j = 0; j < plane; ++j) s += src[j];
    out[i] = s / static_cast<T>(plane);
  }
  return g.record(std::move(out), x->requires_grad, [x, c, plane](Node<T>& self) {
    auto& gx = x->grad_ref();
    for (int i = 0; i < c; ++i) {
      const T d = self.grad[i] / static_cast<T>(plane);
      T* dst = gx.data() + static_cast<std::size_t>(i) * plane;
      for (int j = 0; j < plane; ++j) dst[j] += d;
    }
  });
}

}  // namespace ops
}  // namespace mcar
