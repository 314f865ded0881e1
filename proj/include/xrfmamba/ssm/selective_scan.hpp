#pragma once

// Differentiable selective scan used inside the DBM block.
//
//   a_t[e,n] = disc(delta_t[e] * A[e,n])     (exp or literal, see Discretization)
//   b_t[e,n] = delta_t[e] * B_t[n]
//   h_t      = a_t ⊙ h_{t-1} + b_t * x_t[e],  h_0 = 0
//   y_t[e]   = sum_n h_t[e,n] C_t[n]

#include <cmath>
#include <memory>
#include <type_traits>
#include <vector>

#include "xrfmamba/autodiff/ops.hpp"
#include "xrfmamba/ssm/native_scan.hpp"
#include "xrfmamba/ssm/ssm.hpp"

namespace xrf::ssm {

enum class Discretization {
  /// a = exp(delta * A); the ZOH transition for a diagonal A.
  exp_zoh,
  /// a = delta * A, the outer product exactly as the block pseudocode prints it.
  literal,
};

template <typename T>
T transition(Discretization mode, T delta_a) {
  return mode == Discretization::exp_zoh ? std::exp(delta_a) : delta_a;
}

/// x, delta: [B,L,E]; A: [E,N]; Bm, Cm: [B,L,N]. Returns y [B,L,E].
template <typename T>
ad::Tensor<T> selective_scan(const ad::Tensor<T>& x, const ad::Tensor<T>& delta,
                             const ad::Tensor<T>& A, const ad::Tensor<T>& Bm,
                             const ad::Tensor<T>& Cm, Discretization mode) {
  using ad::Node;
  using ad::Tensor;
  if (x.rank() != 3 || delta.shape() != x.shape() || A.rank() != 2 || Bm.rank() != 3 ||
      Cm.shape() != Bm.shape()) {
    throw ShapeError("selective_scan: bad ranks or shapes");
  }
  const std::size_t Bn = x.dim(0), L = x.dim(1), E = x.dim(2), N = A.dim(1);
  if (A.dim(0) != E || Bm.dim(0) != Bn || Bm.dim(1) != L || Bm.dim(2) != N) {
    throw ShapeError("selective_scan: x " + ad::shape_str(x.shape()) + ", A " +
                     ad::shape_str(A.shape()) + ", B " + ad::shape_str(Bm.shape()));
  }
  const bool need_graph =
      ad::grad_mode() && (x.requires_grad() || delta.requires_grad() || A.requires_grad() ||
                          Bm.requires_grad() || Cm.requires_grad());
  const auto& xv = x.values();
  const auto& dv = delta.values();
  const auto& av = A.values();
  const auto& bv = Bm.values();
  const auto& cv = Cm.values();
  ad::Buffer<T> y(x.size(), T(0));

  if constexpr (std::is_same_v<T, float>) {
    if (!need_graph) {
      if (const NativeScanKernel* kernel = NativeScanKernel::discovered()) {
        std::vector<float> a_bar(x.size() * N), b_bar(x.size() * N);
        for (std::size_t bt = 0; bt < Bn * L; ++bt) {
          for (std::size_t e = 0; e < E; ++e) {
            const float d = dv[bt * E + e];
            for (std::size_t n = 0; n < N; ++n) {
              a_bar[(bt * E + e) * N + n] = transition(mode, d * av[e * N + n]);
              b_bar[(bt * E + e) * N + n] = d * bv[bt * N + n];
            }
          }
        }
        scan_recurrent_dispatch(kernel, {Bn, L, E, N}, xv, a_bar, b_bar, cv, y);
        return Tensor<T>::from(x.shape(), std::move(y));
      }
    }
  }

  auto states = std::make_shared<std::vector<T>>(need_graph ? x.size() * N : 0);
  std::vector<T> h(E * N);
  for (std::size_t b = 0; b < Bn; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t bt = b * L + t;
      const T* bt_b = bv.data() + bt * N;
      const T* bt_c = cv.data() + bt * N;
      for (std::size_t e = 0; e < E; ++e) {
        const T d = dv[bt * E + e];
        const T xd = d * xv[bt * E + e];
        T* he = h.data() + e * N;
        const T* ae = av.data() + e * N;
        T acc = T(0);
        for (std::size_t n = 0; n < N; ++n) {
          he[n] = transition(mode, d * ae[n]) * he[n] + xd * bt_b[n];
          acc += he[n] * bt_c[n];
        }
        y[bt * E + e] = acc;
        if (need_graph) std::copy_n(he, N, states->data() + (bt * E + e) * N);
      }
    }
  }
  if (!need_graph) return Tensor<T>::from(x.shape(), std::move(y));

  return ad::make_result<T>(
      x.shape(), std::move(y), {x, delta, A, Bm, Cm}, [=](Node<T>& self) {
        T* gx = ad::grad_of(x);
        T* gd = ad::grad_of(delta);
        T* gA = ad::grad_of(A);
        T* gB = ad::grad_of(Bm);
        T* gC = ad::grad_of(Cm);
        const auto& xv = x.values();
        const auto& dv = delta.values();
        const auto& av = A.values();
        const auto& bv = Bm.values();
        const auto& cv = Cm.values();
        const auto& hs = *states;
        // gh holds dLoss/dh_t; carried backwards through a_{t+1}.
        std::vector<T> gh(E * N);
        for (std::size_t b = 0; b < Bn; ++b) {
          std::fill(gh.begin(), gh.end(), T(0));
          for (std::size_t tt = L; tt-- > 0;) {
            const std::size_t bt = b * L + tt;
            const T* ct = cv.data() + bt * N;
            const T* btb = bv.data() + bt * N;
            for (std::size_t e = 0; e < E; ++e) {
              const T gy = self.grad[bt * E + e];
              const T d = dv[bt * E + e];
              const T xval = xv[bt * E + e];
              const T* h_t = hs.data() + (bt * E + e) * N;
              const T* h_prev = tt > 0 ? hs.data() + ((bt - 1) * E + e) * N : nullptr;
              T* g = gh.data() + e * N;
              const T* ae = av.data() + e * N;
              T gdelta = T(0), gxe = T(0);
              for (std::size_t n = 0; n < N; ++n) {
                g[n] += gy * ct[n];
                if (gC) gC[bt * N + n] += gy * h_t[n];
                const T a = transition(mode, d * ae[n]);
                const T hp = h_prev ? h_prev[n] : T(0);
                const T ga = g[n] * hp;
                // da/d(delta*A): a for exp, 1 for literal.
                const T dadz = mode == Discretization::exp_zoh ? a : T(1);
                gdelta += ga * dadz * ae[n] + g[n] * xval * btb[n];
                if (gA) gA[e * N + n] += ga * dadz * d;
                if (gB) gB[bt * N + n] += g[n] * xval * d;
                gxe += g[n] * d * btb[n];
                g[n] *= a;
              }
              if (gd) gd[bt * E + e] += gdelta;
              if (gx) gx[bt * E + e] += gxe;
            }
          }
        }
      });
}

}  // namespace xrf::ssm
