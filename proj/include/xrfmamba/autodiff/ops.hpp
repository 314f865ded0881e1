#pragma once

// Differentiable tensor ops. Layouts are time-major and channels-last:
// sequences are [B, L, C]; linear maps act on the last axis.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "xrfmamba/autodiff/tensor.hpp"

namespace xrf::ad {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

namespace detail {

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_str(s));
  }
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto& xv = x.values();
  Buffer<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [x, deriv](Node<T>& self) {
    T* gx = grad_of(x);
    if (!gx) return;
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      gx[i] += self.grad[i] * deriv(xv[i], self.value[i]);
    }
  });
}

template <typename T>
T stable_softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Buffer<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (T* ga = grad_of(a)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (T* gb = grad_of(b)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  Buffer<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (T* ga = grad_of(a)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (T* gb = grad_of(b)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  Buffer<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](Node<T>& self) {
    if (T* ga = grad_of(a)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * b[i];
    }
    if (T* gb = grad_of(b)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * a[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  Buffer<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return make_result<T>(x.shape(), std::move(out), {x}, [x, s](Node<T>& self) {
    if (T* gx = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * s;
    }
  });
}

/// x + v, with v broadcast along every axis but the last.
template <typename T>
Tensor<T> add_lastdim(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t c = v.size();
  if (x.rank() == 0 || x.shape().back() != c) {
    throw ShapeError("add_lastdim: " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
  }
  Buffer<T> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i % c];
  return make_result<T>(x.shape(), std::move(out), {x, v}, [x, v, c](Node<T>& self) {
    if (T* gx = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
    if (T* gv = grad_of(v)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gv[i % c] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return detail::stable_sigmoid(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v * detail::stable_sigmoid(v); },
      [](T v, T) {
        const T s = detail::stable_sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return detail::stable_softplus(v); },
      [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary<T>(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * T(kInvSqrt2))); },
      [](T v, T) {
        return T(0.5) * (T(1) + std::erf(v * T(kInvSqrt2))) +
               v * T(kInvSqrt2Pi) * std::exp(T(-0.5) * v * v);
      });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  return make_result<T>({}, {acc}, {x}, [x](Node<T>& self) {
    if (T* gx = grad_of(x)) {
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// ---------------------------------------------------------------- layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result<T>(std::move(shape), x.values(), {x}, [x](Node<T>& self) {
    if (T* gx = grad_of(x)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
  });
}

/// Concatenation along the last axis.
template <typename T>
Tensor<T> concat_lastdim(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() == 0 || a.rank() != b.rank()) throw ShapeError("concat_lastdim: rank");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_lastdim: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  const std::size_t ca = a.shape().back(), cb = b.shape().back();
  const std::size_t rows = a.size() / ca;
  Shape shape = a.shape();
  shape.back() = ca + cb;
  Buffer<T> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.values().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return make_result<T>(std::move(shape), std::move(out), {a, b},
                        [a, b, ca, cb, rows](Node<T>& self) {
                          T* ga = grad_of(a);
                          T* gb = grad_of(b);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* g = self.grad.data() + r * (ca + cb);
                            if (ga) {
                              for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[c];
                            }
                            if (gb) {
                              for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[ca + c];
                            }
                          }
                        });
}

/// Columns [start, start+len) of the last axis.
template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& x, std::size_t start, std::size_t len) {
  const std::size_t c = x.shape().back();
  if (start + len > c) throw ShapeError("slice_lastdim: out of range");
  const std::size_t rows = x.size() / c;
  Shape shape = x.shape();
  shape.back() = len;
  Buffer<T> out(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.values().data() + r * c + start, len, out.data() + r * len);
  }
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [x, start, len, c, rows](Node<T>& self) {
                          if (T* gx = grad_of(x)) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < len; ++j) {
                                gx[r * c + start + j] += self.grad[r * len + j];
                              }
                            }
                          }
                        });
}

/// Reverses the time axis of a [B, L, C] tensor.
template <typename T>
Tensor<T> flip_time(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 3, "flip_time");
  const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
  Buffer<T> out(x.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      std::copy_n(x.values().data() + (b * L + t) * C, C,
                  out.data() + (b * L + (L - 1 - t)) * C);
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [x, B, L, C](Node<T>& self) {
    if (T* gx = grad_of(x)) {
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < L; ++t) {
          const T* g = self.grad.data() + (b * L + (L - 1 - t)) * C;
          T* dst = gx + (b * L + t) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += g[c];
        }
      }
    }
  });
}

// ---------------------------------------------------------------- linear maps

/// x[..., in] · W[in, out] (+ bias[out]).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias = Tensor<T>()) {
  detail::require_rank(weight.shape(), 2, "linear weight");
  const std::size_t in = weight.dim(0), out_dim = weight.dim(1);
  if (x.rank() == 0 || x.shape().back() != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && bias.size() != out_dim) throw ShapeError("linear: bias size");
  const std::size_t rows = x.size() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  Buffer<T> out(rows * out_dim);
  MatMap<T> Y(out.data(), rows, out_dim);
  ConstMatMap<T> X(x.values().data(), rows, in);
  ConstMatMap<T> W(weight.values().data(), in, out_dim);
  Y.noalias() = X * W;
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += bias[c];
    }
  }
  return make_result<T>(
      std::move(shape), std::move(out), {x, weight, bias},
      [x, weight, bias, rows, in, out_dim](Node<T>& self) {
        ConstMatMap<T> dY(self.grad.data(), rows, out_dim);
        if (T* gx = grad_of(x)) {
          MatMap<T> dX(gx, rows, in);
          dX.noalias() += dY * ConstMatMap<T>(weight.values().data(), in, out_dim).transpose();
        }
        if (T* gw = grad_of(weight)) {
          MatMap<T> dW(gw, in, out_dim);
          dW.noalias() += ConstMatMap<T>(x.values().data(), rows, in).transpose() * dY;
        }
        if (T* gb = grad_of(bias)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < out_dim; ++c) gb[c] += self.grad[r * out_dim + c];
          }
        }
      });
}

struct Conv1dGeometry {
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;

  static Conv1dGeometry same(std::size_t kernel) {
    return {1, (kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2};
  }
};

/// Dense 1-D convolution of x[B, L, Cin] with W[K, Cin, Cout] via im2col.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv1dGeometry geo) {
  detail::require_rank(x.shape(), 3, "conv1d input");
  detail::require_rank(weight.shape(), 3, "conv1d weight");
  const std::size_t B = x.dim(0), L = x.dim(1), Cin = x.dim(2);
  const std::size_t K = weight.dim(0), Cout = weight.dim(2);
  if (weight.dim(1) != Cin) {
    throw ShapeError("conv1d: input channels " + std::to_string(Cin) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (geo.stride == 0) throw ShapeError("conv1d: zero stride");
  const std::size_t padded = L + geo.pad_left + geo.pad_right;
  if (padded < K) throw ShapeError("conv1d: input shorter than kernel");
  const std::size_t Lout = (padded - K) / geo.stride + 1;
  const std::size_t cols = K * Cin;

  auto patches = std::make_shared<Buffer<T>>(B * Lout * cols, T(0));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < Lout; ++t) {
      T* row = patches->data() + (b * Lout + t) * cols;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * geo.stride + k) -
                                   static_cast<std::ptrdiff_t>(geo.pad_left);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        std::copy_n(x.values().data() + (b * L + static_cast<std::size_t>(src)) * Cin, Cin,
                    row + k * Cin);
      }
    }
  }
  Buffer<T> out(B * Lout * Cout);
  MatMap<T>(out.data(), B * Lout, Cout).noalias() =
      ConstMatMap<T>(patches->data(), B * Lout, cols) *
      ConstMatMap<T>(weight.values().data(), cols, Cout);
  if (bias.defined()) {
    for (std::size_t r = 0; r < B * Lout; ++r) {
      for (std::size_t c = 0; c < Cout; ++c) out[r * Cout + c] += bias[c];
    }
  }
  return make_result<T>(
      {B, Lout, Cout}, std::move(out), {x, weight, bias},
      [=](Node<T>& self) {
        ConstMatMap<T> dY(self.grad.data(), B * Lout, Cout);
        if (T* gw = grad_of(weight)) {
          MatMap<T>(gw, cols, Cout).noalias() +=
              ConstMatMap<T>(patches->data(), B * Lout, cols).transpose() * dY;
        }
        if (T* gb = grad_of(bias)) {
          for (std::size_t r = 0; r < B * Lout; ++r) {
            for (std::size_t c = 0; c < Cout; ++c) gb[c] += self.grad[r * Cout + c];
          }
        }
        if (T* gx = grad_of(x)) {
          RowMatrix<T> dP = dY * ConstMatMap<T>(weight.values().data(), cols, Cout).transpose();
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < Lout; ++t) {
              const T* row = dP.data() + (b * Lout + t) * cols;
              for (std::size_t k = 0; k < K; ++k) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * geo.stride + k) -
                                           static_cast<std::ptrdiff_t>(geo.pad_left);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
                T* dst = gx + (b * L + static_cast<std::size_t>(src)) * Cin;
                for (std::size_t c = 0; c < Cin; ++c) dst[c] += row[k * Cin + c];
              }
            }
          }
        }
      });
}

/// Per-channel causal convolution: y[t,e] = b[e] + sum_k w[k,e] x[t-K+1+k, e].
template <typename T>
Tensor<T> depthwise_causal_conv1d(const Tensor<T>& x, const Tensor<T>& weight,
                                  const Tensor<T>& bias) {
  detail::require_rank(x.shape(), 3, "depthwise_causal_conv1d input");
  detail::require_rank(weight.shape(), 2, "depthwise_causal_conv1d weight");
  const std::size_t B = x.dim(0), L = x.dim(1), E = x.dim(2), K = weight.dim(0);
  if (weight.dim(1) != E) throw ShapeError("depthwise_causal_conv1d: channel mismatch");
  Buffer<T> out(x.size());
  const auto& xv = x.values();
  const auto& wv = weight.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      T* y = out.data() + (b * L + t) * E;
      if (bias.defined()) {
        for (std::size_t e = 0; e < E; ++e) y[e] = bias[e];
      }
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) -
                                   static_cast<std::ptrdiff_t>(K - 1);
        if (src < 0) continue;
        const T* xs = xv.data() + (b * L + static_cast<std::size_t>(src)) * E;
        const T* w = wv.data() + k * E;
        for (std::size_t e = 0; e < E; ++e) y[e] += w[e] * xs[e];
      }
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, weight, bias},
                        [=](Node<T>& self) {
                          T* gx = grad_of(x);
                          T* gw = grad_of(weight);
                          T* gb = grad_of(bias);
                          const auto& xv = x.values();
                          const auto& wv = weight.values();
                          for (std::size_t b = 0; b < B; ++b) {
                            for (std::size_t t = 0; t < L; ++t) {
                              const T* g = self.grad.data() + (b * L + t) * E;
                              if (gb) {
                                for (std::size_t e = 0; e < E; ++e) gb[e] += g[e];
                              }
                              for (std::size_t k = 0; k < K; ++k) {
                                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) -
                                                           static_cast<std::ptrdiff_t>(K - 1);
                                if (src < 0) continue;
                                const std::size_t off = (b * L + static_cast<std::size_t>(src)) * E;
                                for (std::size_t e = 0; e < E; ++e) {
                                  if (gw) gw[k * E + e] += g[e] * xv[off + e];
                                  if (gx) gx[off + e] += g[e] * wv[k * E + e];
                                }
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------- normalization

/// Normalizes over the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  const std::size_t C = x.shape().back();
  if (gamma.size() != C || beta.size() != C) throw ShapeError("layer_norm: affine size");
  const std::size_t rows = x.size() / C;
  auto xhat = std::make_shared<Buffer<T>>(x.size());
  auto rstd = std::make_shared<Buffer<T>>(rows);
  Buffer<T> out(x.size());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * C;
    T mu = T(0);
    for (std::size_t c = 0; c < C; ++c) mu += xr[c];
    mu /= static_cast<T>(C);
    T var = T(0);
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(C);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xr[c] - mu) * rs;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = h * gamma[c] + beta[c];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [=](Node<T>& self) {
                          T* gx = grad_of(x);
                          T* gg = grad_of(gamma);
                          T* gbeta = grad_of(beta);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* g = self.grad.data() + r * C;
                            const T* h = xhat->data() + r * C;
                            T m1 = T(0), m2 = T(0);
                            for (std::size_t c = 0; c < C; ++c) {
                              const T dh = g[c] * gamma[c];
                              m1 += dh;
                              m2 += dh * h[c];
                              if (gg) gg[c] += g[c] * h[c];
                              if (gbeta) gbeta[c] += g[c];
                            }
                            if (!gx) continue;
                            m1 /= static_cast<T>(C);
                            m2 /= static_cast<T>(C);
                            for (std::size_t c = 0; c < C; ++c) {
                              const T dh = g[c] * gamma[c];
                              gx[r * C + c] += (*rstd)[r] * (dh - m1 - h[c] * m2);
                            }
                          }
                        });
}

/// Group normalization of x[B, L, C]: statistics per (batch, channel group)
/// over time and the group's channels.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t groups, T eps = T(1e-5)) {
  detail::require_rank(x.shape(), 3, "group_norm");
  const std::size_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
  if (groups == 0 || C % groups != 0) throw ShapeError("group_norm: groups must divide channels");
  if (gamma.size() != C || beta.size() != C) throw ShapeError("group_norm: affine size");
  const std::size_t cg = C / groups;
  const T count = static_cast<T>(L * cg);
  auto xhat = std::make_shared<Buffer<T>>(x.size());
  auto rstd = std::make_shared<Buffer<T>>(B * groups);
  Buffer<T> out(x.size());
  const auto& xv = x.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      T mu = T(0);
      for (std::size_t t = 0; t < L; ++t) {
        const T* xr = xv.data() + (b * L + t) * C + g * cg;
        for (std::size_t c = 0; c < cg; ++c) mu += xr[c];
      }
      mu /= count;
      T var = T(0);
      for (std::size_t t = 0; t < L; ++t) {
        const T* xr = xv.data() + (b * L + t) * C + g * cg;
        for (std::size_t c = 0; c < cg; ++c) var += (xr[c] - mu) * (xr[c] - mu);
      }
      var /= count;
      const T rs = T(1) / std::sqrt(var + eps);
      (*rstd)[b * groups + g] = rs;
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t base = (b * L + t) * C + g * cg;
        for (std::size_t c = 0; c < cg; ++c) {
          const T h = (xv[base + c] - mu) * rs;
          (*xhat)[base + c] = h;
          out[base + c] = h * gamma[g * cg + c] + beta[g * cg + c];
        }
      }
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
        T* gx = grad_of(x);
        T* gg = grad_of(gamma);
        T* gbeta = grad_of(beta);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t g = 0; g < groups; ++g) {
            T m1 = T(0), m2 = T(0);
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t base = (b * L + t) * C + g * cg;
              for (std::size_t c = 0; c < cg; ++c) {
                const std::size_t ch = g * cg + c;
                const T gr = self.grad[base + c];
                const T dh = gr * gamma[ch];
                m1 += dh;
                m2 += dh * (*xhat)[base + c];
                if (gg) gg[ch] += gr * (*xhat)[base + c];
                if (gbeta) gbeta[ch] += gr;
              }
            }
            if (!gx) continue;
            m1 /= count;
            m2 /= count;
            const T rs = (*rstd)[b * groups + g];
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t base = (b * L + t) * C + g * cg;
              for (std::size_t c = 0; c < cg; ++c) {
                const T dh = self.grad[base + c] * gamma[g * cg + c];
                gx[base + c] += rs * (dh - m1 - (*xhat)[base + c] * m2);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------- attention

/// Multi-head scaled dot-product self-attention core on q, k, v [B, L, D];
/// heads split D evenly. Returns softmax(q k^T / sqrt(d_head)) v per head.
template <typename T>
Tensor<T> multihead_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                              std::size_t heads) {
  detail::require_rank(q.shape(), 3, "attention");
  detail::require_same(q.shape(), k.shape(), "attention k");
  detail::require_same(q.shape(), v.shape(), "attention v");
  const std::size_t B = q.dim(0), L = q.dim(1), D = q.dim(2);
  if (heads == 0 || D % heads != 0) throw ShapeError("attention: heads must divide width");
  const std::size_t dh = D / heads;
  const T inv = T(1) / std::sqrt(static_cast<T>(dh));
  using Strided = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
  auto probs = std::make_shared<Buffer<T>>(B * heads * L * L);
  Buffer<T> out(q.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * L * D + h * dh;
      Strided Q(q.values().data() + off, L, dh, Eigen::OuterStride<>(D));
      Strided Kt(k.values().data() + off, L, dh, Eigen::OuterStride<>(D));
      Strided V(v.values().data() + off, L, dh, Eigen::OuterStride<>(D));
      MatMap<T> P(probs->data() + (b * heads + h) * L * L, L, L);
      P.noalias() = (Q * Kt.transpose()) * inv;
      for (std::size_t i = 0; i < L; ++i) {
        const T mx = P.row(i).maxCoeff();
        P.row(i) = (P.row(i).array() - mx).exp();
        P.row(i) /= P.row(i).sum();
      }
      StridedMut O(out.data() + off, L, dh, Eigen::OuterStride<>(D));
      O.noalias() = P * V;
    }
  }
  return make_result<T>(
      q.shape(), std::move(out), {q, k, v}, [=](Node<T>& self) {
        T* gq = grad_of(q);
        T* gk = grad_of(k);
        T* gv = grad_of(v);
        RowMatrix<T> dP(L, L), dS(L, L);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * L * D + h * dh;
            Strided Q(q.values().data() + off, L, dh, Eigen::OuterStride<>(D));
            Strided Kt(k.values().data() + off, L, dh, Eigen::OuterStride<>(D));
            Strided V(v.values().data() + off, L, dh, Eigen::OuterStride<>(D));
            Strided dO(self.grad.data() + off, L, dh, Eigen::OuterStride<>(D));
            ConstMatMap<T> P(probs->data() + (b * heads + h) * L * L, L, L);
            if (gv) {
              StridedMut dV(gv + off, L, dh, Eigen::OuterStride<>(D));
              dV.noalias() += P.transpose() * dO;
            }
            if (!gq && !gk) continue;
            dP.noalias() = dO * V.transpose();
            for (std::size_t i = 0; i < L; ++i) {
              const T dot = (dP.row(i).array() * P.row(i).array()).sum();
              dS.row(i) = P.row(i).array() * (dP.row(i).array() - dot);
            }
            dS *= inv;
            if (gq) {
              StridedMut dQ(gq + off, L, dh, Eigen::OuterStride<>(D));
              dQ.noalias() += dS * Kt;
            }
            if (gk) {
              StridedMut dK(gk + off, L, dh, Eigen::OuterStride<>(D));
              dK.noalias() += dS.transpose() * Q;
            }
          }
        }
      });
}

}  // namespace xrf::ad
