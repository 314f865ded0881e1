#pragma once

// Linear state-space primitives: zero-order-hold discretization and the two
// equivalent evaluation forms of a discretized system (recurrence and causal
// convolution).

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xrfmamba/errors.hpp"

namespace xrf::ssm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Continuous system h' = A h + B x, y = C h with step size delta.
struct SSMParams {
  Matrix A;      // [N, N]
  Vector B;      // [N]
  Vector C;      // [N]
  double delta = 1.0;

  std::size_t state_dim() const { return static_cast<std::size_t>(A.rows()); }
};

struct DiscretizedSSM {
  Matrix A_bar;  // [N, N]
  Vector B_bar;  // [N]
};

/// Below this norm of delta*A the inverse in the ZOH input matrix is replaced
/// by its Taylor series.
inline constexpr double kZohSeriesThreshold = 1e-4;

inline void validate(const SSMParams& p) {
  const auto n = p.A.rows();
  if (n < 1 || p.A.cols() != n || p.B.size() != n || p.C.size() != n) {
    throw ShapeError("SSMParams: A must be [N,N] with B, C of length N");
  }
  if (!(p.delta > 0.0) || !std::isfinite(p.delta)) {
    throw NumericError("SSMParams: delta must be positive and finite");
  }
  if (!p.A.allFinite() || !p.B.allFinite() || !p.C.allFinite()) {
    throw NumericError("SSMParams: non-finite entries");
  }
}

/// A_bar = exp(dA), B_bar = (dA)^-1 (exp(dA) - I) dB.
inline DiscretizedSSM discretize_zoh(const SSMParams& p) {
  validate(p);
  const auto n = p.A.rows();
  const Matrix dA = p.delta * p.A;
  const Vector dB = p.delta * p.B;
  DiscretizedSSM out;
  out.A_bar = dA.exp();
  const Matrix I = Matrix::Identity(n, n);
  if (dA.norm() < kZohSeriesThreshold) {
    out.B_bar = (I + dA / 2.0 + dA * dA / 6.0) * dB;
    return out;
  }
  Eigen::FullPivLU<Matrix> lu(dA);
  if (lu.isInvertible() && lu.rcond() > 1e-12) {
    out.B_bar = lu.solve((out.A_bar - I) * dB);
  } else {
    // Singular dA: the top-right block of exp([[dA, dB], [0, 0]]) equals
    // phi1(dA) dB without any inversion.
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = dA;
    aug.topRightCorner(n, 1) = dB;
    out.B_bar = aug.exp().topRightCorner(n, 1);
  }
  if (!out.A_bar.allFinite() || !out.B_bar.allFinite()) {
    throw NumericError("discretize_zoh: non-finite result");
  }
  return out;
}

/// Dimensions of a batched selective scan.
struct ScanDims {
  std::size_t batch = 1;
  std::size_t length = 1;
  std::size_t inner = 1;  // E
  std::size_t state = 1;  // N
};

/// Batched selective recurrence with per-step diagonal parameters:
///   h_t = a_bar_t ⊙ h_{t-1} + b_bar_t ⊙ x_t,  y_t = <h_t, c_t>,  h_0 = 0.
/// Layouts (row-major): x [B,L,E], a_bar/b_bar [B,L,E,N], c [B,L,N], y [B,L,E].
template <typename T>
void scan_recurrent(const ScanDims& d, std::span<const T> x, std::span<const T> a_bar,
                    std::span<const T> b_bar, std::span<const T> c, std::span<T> y) {
  const std::size_t ble = d.batch * d.length * d.inner;
  if (x.size() != ble || y.size() != ble || a_bar.size() != ble * d.state ||
      b_bar.size() != ble * d.state || c.size() != d.batch * d.length * d.state) {
    throw ShapeError("scan_recurrent: buffer sizes do not match dims");
  }
  std::vector<T> h(d.inner * d.state);
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (std::size_t t = 0; t < d.length; ++t) {
      const std::size_t bt = b * d.length + t;
      const T* ct = c.data() + bt * d.state;
      for (std::size_t e = 0; e < d.inner; ++e) {
        const std::size_t base = (bt * d.inner + e) * d.state;
        const T xv = x[bt * d.inner + e];
        T* he = h.data() + e * d.state;
        T acc = T(0);
        for (std::size_t n = 0; n < d.state; ++n) {
          he[n] = a_bar[base + n] * he[n] + b_bar[base + n] * xv;
          acc += he[n] * ct[n];
        }
        y[bt * d.inner + e] = acc;
      }
    }
  }
}

/// Single-channel LTI recurrence with a full (not necessarily diagonal)
/// transition matrix.
inline std::vector<double> scan_recurrent(std::span<const double> x, const DiscretizedSSM& disc,
                                          const Vector& C) {
  const auto n = disc.A_bar.rows();
  if (disc.B_bar.size() != n || C.size() != n) throw ShapeError("scan_recurrent: dims");
  std::vector<double> y(x.size());
  Vector h = Vector::Zero(n);
  for (std::size_t t = 0; t < x.size(); ++t) {
    h = disc.A_bar * h + disc.B_bar * x[t];
    y[t] = C.dot(h);
  }
  return y;
}

/// K = (C B_bar, C A_bar B_bar, ..., C A_bar^{L-1} B_bar).
inline std::vector<double> ssm_kernel(const DiscretizedSSM& disc, const Vector& C,
                                      std::size_t length) {
  std::vector<double> k(length);
  Vector v = disc.B_bar;
  for (std::size_t i = 0; i < length; ++i) {
    k[i] = C.dot(v);
    v = disc.A_bar * v;
  }
  return k;
}

/// y = x * K (causal). Valid only for time-invariant systems.
inline std::vector<double> scan_convolutional(std::span<const double> x,
                                              const DiscretizedSSM& disc, const Vector& C) {
  if (disc.B_bar.size() != disc.A_bar.rows() || C.size() != disc.A_bar.rows()) {
    throw ShapeError("scan_convolutional: dims");
  }
  const auto k = ssm_kernel(disc, C, x.size());
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= t; ++j) acc += k[j] * x[t - j];
    y[t] = acc;
  }
  return y;
}

/// Per-step parameter schedule; the convolutional form accepts it only when
/// every step carries identical parameters.
struct StepParams {
  DiscretizedSSM disc;
  Vector C;
};

inline std::vector<double> scan_convolutional(std::span<const double> x,
                                              std::span<const StepParams> steps) {
  if (steps.size() != x.size()) throw ShapeError("scan_convolutional: one step per input");
  if (steps.empty()) return {};
  const auto& first = steps.front();
  for (std::size_t t = 1; t < steps.size(); ++t) {
    const auto& s = steps[t];
    if (s.disc.A_bar != first.disc.A_bar || s.disc.B_bar != first.disc.B_bar ||
        s.C != first.C) {
      throw ContractError("scan_convolutional: parameters vary at step " +
                          std::to_string(t) + "; the convolutional form needs an LTI system");
    }
  }
  return scan_convolutional(x, first.disc, first.C);
}

}  // namespace xrf::ssm
