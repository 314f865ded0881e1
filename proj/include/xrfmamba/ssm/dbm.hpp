#pragma once

// Decomposed bidirectional Mamba block.
//
// S' = LayerNorm(S); z1, x_f, x_b, z2 = four linear maps of S'.
// Each direction: x' = SiLU(causal depthwise conv(x)); B, C = linear(x');
// delta = softplus(linear(x') + bias); y = selective_scan(x', delta, A, B, C).
// The backward direction scans the time-reversed sequence and re-reverses
// its output. Output: Linear(cat(y_f * SiLU(z1), y_b * SiLU(z2))) + S.

#include <cmath>
#include <random>
#include <string>

#include "xrfmamba/autodiff/ops.hpp"
#include "xrfmamba/autodiff/params.hpp"
#include "xrfmamba/ssm/selective_scan.hpp"

namespace xrf::ssm {

struct DBMBlockConfig {
  std::size_t model_dim = 64;    // D
  std::size_t inner_dim = 128;   // E
  std::size_t state_dim = 16;    // N
  std::size_t conv_width = 4;
  bool share_directions = true;
  Discretization discretization = Discretization::exp_zoh;
  double dt_min = 1e-3;
  double dt_max = 1e-1;

  void validate() const {
    if (model_dim == 0 || inner_dim == 0 || state_dim == 0 || conv_width == 0) {
      throw ConfigError("DBMBlockConfig: all widths must be positive");
    }
    if (!(dt_min > 0.0) || !(dt_max >= dt_min)) throw ConfigError("DBMBlockConfig: dt range");
  }
};

/// Weights of one scan direction.
template <typename T>
struct DirectionWeights {
  ad::Tensor<T> conv_weight;  // [K, E]
  ad::Tensor<T> conv_bias;    // [E]
  ad::Tensor<T> b_proj;       // [E, N]
  ad::Tensor<T> c_proj;       // [E, N]
  ad::Tensor<T> dt_proj;      // [E, E]
  ad::Tensor<T> dt_bias;      // [E]
  ad::Tensor<T> a_log;        // [E, N]; A = -exp(a_log)

  static DirectionWeights create(ad::ParamStore<T>& store, const std::string& prefix,
                                 const DBMBlockConfig& cfg) {
    const auto E = cfg.inner_dim, N = cfg.state_dim, K = cfg.conv_width;
    DirectionWeights w;
    w.conv_weight = store.fan_in_uniform(prefix + "conv.weight", {K, E}, K);
    w.conv_bias = store.zeros(prefix + "conv.bias", {E});
    w.b_proj = store.fan_in_uniform(prefix + "b_proj.weight", {E, N}, E);
    w.c_proj = store.fan_in_uniform(prefix + "c_proj.weight", {E, N}, E);
    w.dt_proj = store.fan_in_uniform(prefix + "dt_proj.weight", {E, E}, E);
    // softplus(dt_bias) log-uniform in [dt_min, dt_max].
    ad::Buffer<T> dt_bias(E);
    std::uniform_real_distribution<double> u(std::log(cfg.dt_min), std::log(cfg.dt_max));
    for (auto& v : dt_bias) {
      const double dt = std::exp(u(store.rng()));
      v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
    }
    w.dt_bias = store.from_values(prefix + "dt_bias", {E}, std::move(dt_bias));
    // A[e, n] = -(n + 1).
    ad::Buffer<T> a_log(E * N);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t n = 0; n < N; ++n) a_log[e * N + n] = static_cast<T>(std::log(n + 1.0));
    }
    w.a_log = store.from_values(prefix + "a_log", {E, N}, std::move(a_log));
    return w;
  }
};

template <typename T>
class DBMBlock {
 public:
  DBMBlock(ad::ParamStore<T>& store, const std::string& prefix, const DBMBlockConfig& cfg)
      : cfg_(cfg) {
    cfg.validate();
    const auto D = cfg.model_dim, E = cfg.inner_dim;
    norm_weight_ = store.constant(prefix + "norm.weight", {D}, T(1));
    norm_bias_ = store.zeros(prefix + "norm.bias", {D});
    z1_proj_ = store.fan_in_uniform(prefix + "z1_proj.weight", {D, E}, D);
    xf_proj_ = store.fan_in_uniform(prefix + "xf_proj.weight", {D, E}, D);
    xb_proj_ = store.fan_in_uniform(prefix + "xb_proj.weight", {D, E}, D);
    z2_proj_ = store.fan_in_uniform(prefix + "z2_proj.weight", {D, E}, D);
    if (cfg.share_directions) {
      forward_ = DirectionWeights<T>::create(store, prefix + "ssm.", cfg);
      backward_ = forward_;
    } else {
      forward_ = DirectionWeights<T>::create(store, prefix + "fwd.", cfg);
      backward_ = DirectionWeights<T>::create(store, prefix + "bwd.", cfg);
    }
    out_proj_ = store.fan_in_uniform(prefix + "out_proj.weight", {2 * E, D}, 2 * E);
  }

  const DBMBlockConfig& config() const { return cfg_; }
  ad::Tensor<T>& out_proj() { return out_proj_; }

  /// S [B, L, D] -> [B, L, D].
  ad::Tensor<T> forward(const ad::Tensor<T>& S) const {
    if (S.rank() != 3 || S.dim(2) != cfg_.model_dim) {
      throw ShapeError("DBMBlock: input " + ad::shape_str(S.shape()) + ", expected [B,L," +
                       std::to_string(cfg_.model_dim) + "]");
    }
    const auto s = ad::layer_norm(S, norm_weight_, norm_bias_);
    const auto z1 = ad::linear(s, z1_proj_);
    const auto xf = ad::linear(s, xf_proj_);
    const auto xb = ad::linear(s, xb_proj_);
    const auto z2 = ad::linear(s, z2_proj_);
    const auto yf = direction(xf, forward_);
    const auto yb = ad::flip_time(direction(ad::flip_time(xb), backward_));
    const auto gated = ad::concat_lastdim(ad::mul(yf, ad::silu(z1)), ad::mul(yb, ad::silu(z2)));
    auto out = ad::add(ad::linear(gated, out_proj_), S);
    for (T v : out.values()) {
      if (!std::isfinite(static_cast<double>(v))) throw NumericError("DBMBlock: non-finite output");
    }
    return out;
  }

  /// One direction's scan output on already-oriented input x [B, L, E].
  ad::Tensor<T> direction(const ad::Tensor<T>& x, const DirectionWeights<T>& w) const {
    const auto xc = ad::silu(ad::depthwise_causal_conv1d(x, w.conv_weight, w.conv_bias));
    const auto Bm = ad::linear(xc, w.b_proj);
    const auto Cm = ad::linear(xc, w.c_proj);
    const auto delta = ad::softplus(ad::linear(xc, w.dt_proj, w.dt_bias));
    const auto A = ad::scale(ad::exp(w.a_log), T(-1));
    return selective_scan(xc, delta, A, Bm, Cm, cfg_.discretization);
  }

  const DirectionWeights<T>& forward_weights() const { return forward_; }
  const DirectionWeights<T>& backward_weights() const { return backward_; }

 private:
  DBMBlockConfig cfg_;
  ad::Tensor<T> norm_weight_, norm_bias_;
  ad::Tensor<T> z1_proj_, xf_proj_, xb_proj_, z2_proj_;
  DirectionWeights<T> forward_, backward_;
  ad::Tensor<T> out_proj_;
};

}  // namespace xrf::ssm
