#pragma once

// Network building blocks: projection, modality fusion, the dual-stream
// embedding (TSSE), the DBM pyramid backbone and the shared prediction heads.
// Activations are [B, L, C] throughout.

#include <cmath>
#include <string>
#include <vector>

#include "xrfmamba/autodiff/ops.hpp"
#include "xrfmamba/autodiff/params.hpp"
#include "xrfmamba/model/config.hpp"
#include "xrfmamba/ssm/dbm.hpp"

namespace xrf::model {

using ad::Tensor;

template <typename T>
Tensor<T> conv_weight(ad::ParamStore<T>& store, const std::string& name, std::size_t k,
                      std::size_t cin, std::size_t cout) {
  return store.fan_in_uniform(name, {k, cin, cout}, k * cin);
}

/// conv1d -> GroupNorm -> ReLU, reducing time by the projection stride.
template <typename T>
class Projection {
 public:
  Projection() = default;
  Projection(ad::ParamStore<T>& store, const std::string& prefix, std::size_t in_channels,
             std::size_t out_channels, const ProjectionConfig& cfg)
      : cfg_(cfg), in_channels_(in_channels) {
    weight_ = conv_weight(store, prefix + "conv.weight", cfg.kernel, in_channels, out_channels);
    bias_ = store.zeros(prefix + "conv.bias", {out_channels});
    gamma_ = store.constant(prefix + "norm.weight", {out_channels}, T(1));
    beta_ = store.zeros(prefix + "norm.bias", {out_channels});
  }

  std::size_t in_channels() const { return in_channels_; }

  /// Convolution output before normalization.
  Tensor<T> pre_norm(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != in_channels_) {
      throw ShapeError("Projection: input " + ad::shape_str(x.shape()) + ", expected " +
                       std::to_string(in_channels_) + " channels");
    }
    const std::size_t pad = cfg_.kernel > cfg_.stride ? cfg_.kernel - cfg_.stride : 0;
    return ad::conv1d(x, weight_, bias_, {cfg_.stride, pad / 2, pad - pad / 2});
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return ad::relu(ad::group_norm(pre_norm(x), gamma_, beta_, cfg_.groups));
  }

 private:
  ProjectionConfig cfg_;
  std::size_t in_channels_ = 0;
  Tensor<T> weight_, bias_, gamma_, beta_;
};

// ------------------------------------------------------------------ fusion

/// e = λ·e_wifi + (1−λ)·e_imu.
template <typename T>
Tensor<T> fuse_weighted(const Tensor<T>& e_wifi, const Tensor<T>& e_imu, T lambda) {
  if (e_wifi.shape() != e_imu.shape()) throw ShapeError("fuse_weighted: branch shapes differ");
  return ad::add(ad::scale(e_wifi, lambda), ad::scale(e_imu, T(1) - lambda));
}

/// G = σ(W_g (e_imu + e_wifi) + b_g); e = FC(G ⊙ [e_imu, e_wifi]).
template <typename T>
struct LinearFusionWeights {
  Tensor<T> gate_weight;  // [D, 2D]
  Tensor<T> gate_bias;    // [2D]
  Tensor<T> fc_weight;    // [2D, D]
  Tensor<T> fc_bias;      // [D]

  static LinearFusionWeights create(ad::ParamStore<T>& store, const std::string& prefix, std::size_t D) {
    return {store.fan_in_uniform(prefix + "gate.weight", {D, 2 * D}, D),
            store.zeros(prefix + "gate.bias", {2 * D}),
            store.fan_in_uniform(prefix + "fc.weight", {2 * D, D}, 2 * D),
            store.zeros(prefix + "fc.bias", {D})};
  }
};

template <typename T>
Tensor<T> fuse_linear(const Tensor<T>& e_wifi, const Tensor<T>& e_imu, const LinearFusionWeights<T>& w) {
  if (e_wifi.shape() != e_imu.shape()) throw ShapeError("fuse_linear: branch shapes differ");
  const auto gate = ad::sigmoid(ad::linear(ad::add(e_imu, e_wifi), w.gate_weight, w.gate_bias));
  return ad::linear(ad::mul(gate, ad::concat_lastdim(e_imu, e_wifi)), w.fc_weight, w.fc_bias);
}

/// G_m = σ(conv_m(e_m)); e = G_wifi ⊙ e_wifi + G_imu ⊙ e_imu.
template <typename T>
struct GatedFusionWeights {
  Tensor<T> wifi_weight, wifi_bias;  // [K, D, D], [D]
  Tensor<T> imu_weight, imu_bias;
  std::size_t kernel = 3;

  static GatedFusionWeights create(ad::ParamStore<T>& store, const std::string& prefix, std::size_t D,
                                   std::size_t kernel) {
    return {conv_weight(store, prefix + "wifi_gate.weight", kernel, D, D),
            store.zeros(prefix + "wifi_gate.bias", {D}),
            conv_weight(store, prefix + "imu_gate.weight", kernel, D, D),
            store.zeros(prefix + "imu_gate.bias", {D}),
            kernel};
  }
};

template <typename T>
Tensor<T> fuse_gated(const Tensor<T>& e_wifi, const Tensor<T>& e_imu, const GatedFusionWeights<T>& w) {
  if (e_wifi.shape() != e_imu.shape()) throw ShapeError("fuse_gated: branch shapes differ");
  const auto geo = ad::Conv1dGeometry::same(w.kernel);
  const auto g_wifi = ad::sigmoid(ad::conv1d(e_wifi, w.wifi_weight, w.wifi_bias, geo));
  const auto g_imu = ad::sigmoid(ad::conv1d(e_imu, w.imu_weight, w.imu_bias, geo));
  return ad::add(ad::mul(g_wifi, e_wifi), ad::mul(g_imu, e_imu));
}

/// One of the three strategies. An absent branch (undefined tensor) makes the
/// fusion return the other branch unchanged.
template <typename T>
class Fusion {
 public:
  Fusion() = default;
  Fusion(ad::ParamStore<T>& store, const std::string& prefix, std::size_t D, const FusionConfig& cfg)
      : cfg_(cfg) {
    if (cfg.strategy == FusionStrategy::linear) linear_ = LinearFusionWeights<T>::create(store, prefix, D);
    if (cfg.strategy == FusionStrategy::gated) gated_ = GatedFusionWeights<T>::create(store, prefix, D, cfg.gate_kernel);
  }

  Tensor<T> forward(const Tensor<T>& e_wifi, const Tensor<T>& e_imu) const {
    if (!e_wifi.defined()) return e_imu;
    if (!e_imu.defined()) return e_wifi;
    switch (cfg_.strategy) {
      case FusionStrategy::weighted: return fuse_weighted(e_wifi, e_imu, static_cast<T>(cfg_.lambda));
      case FusionStrategy::linear: return fuse_linear(e_wifi, e_imu, linear_);
      case FusionStrategy::gated: return fuse_gated(e_wifi, e_imu, gated_);
    }
    throw ConfigError("Fusion: unknown strategy");
  }

  const FusionConfig& config() const { return cfg_; }
  LinearFusionWeights<T>& linear_weights() { return linear_; }
  GatedFusionWeights<T>& gated_weights() { return gated_; }

 private:
  FusionConfig cfg_;
  LinearFusionWeights<T> linear_;
  GatedFusionWeights<T> gated_;
};

// ------------------------------------------------------------------ TSSE

template <typename T>
struct TransformerLayer {
  Tensor<T> ln1_w, ln1_b, wq, wk, wv, wo, bo;
  Tensor<T> ln2_w, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
  std::size_t heads = 4;

  static TransformerLayer create(ad::ParamStore<T>& store, const std::string& p, std::size_t D,
                                 std::size_t heads, std::size_t ffn_mult) {
    TransformerLayer l;
    const std::size_t F = D * ffn_mult;
    l.heads = heads;
    l.ln1_w = store.constant(p + "ln1.weight", {D}, T(1));
    l.ln1_b = store.zeros(p + "ln1.bias", {D});
    l.wq = store.fan_in_uniform(p + "attn.q.weight", {D, D}, D);
    l.wk = store.fan_in_uniform(p + "attn.k.weight", {D, D}, D);
    l.wv = store.fan_in_uniform(p + "attn.v.weight", {D, D}, D);
    l.wo = store.fan_in_uniform(p + "attn.out.weight", {D, D}, D);
    l.bo = store.zeros(p + "attn.out.bias", {D});
    l.ln2_w = store.constant(p + "ln2.weight", {D}, T(1));
    l.ln2_b = store.zeros(p + "ln2.bias", {D});
    l.ff1_w = store.fan_in_uniform(p + "ffn.0.weight", {D, F}, D);
    l.ff1_b = store.zeros(p + "ffn.0.bias", {F});
    l.ff2_w = store.fan_in_uniform(p + "ffn.1.weight", {F, D}, F);
    l.ff2_b = store.zeros(p + "ffn.1.bias", {D});
    return l;
  }

  /// Pre-norm residual layer.
  Tensor<T> forward(const Tensor<T>& x) const {
    const auto h = ad::layer_norm(x, ln1_w, ln1_b);
    const auto a = ad::multihead_attention(ad::linear(h, wq), ad::linear(h, wk), ad::linear(h, wv), heads);
    const auto x1 = ad::add(x, ad::linear(a, wo, bo));
    const auto h2 = ad::layer_norm(x1, ln2_w, ln2_b);
    return ad::add(x1, ad::linear(ad::gelu(ad::linear(h2, ff1_w, ff1_b)), ff2_w, ff2_b));
  }
};

/// out = e + W_t·Transformer(e) + W_c·ConvStack(e). With zero-initialized
/// W_t, W_c the block starts as the identity.
template <typename T>
class TSSE {
 public:
  TSSE() = default;
  TSSE(ad::ParamStore<T>& store, const std::string& prefix, std::size_t D, const TSSEConfig& cfg) : cfg_(cfg) {
    for (std::size_t i = 0; i < cfg.transformer_layers; ++i) {
      layers_.push_back(TransformerLayer<T>::create(store, prefix + "global." + std::to_string(i) + ".", D,
                                                    cfg.heads, cfg.ffn_mult));
    }
    global_norm_w_ = store.constant(prefix + "global.norm.weight", {D}, T(1));
    global_norm_b_ = store.zeros(prefix + "global.norm.bias", {D});
    for (std::size_t i = 0; i < cfg.conv_layers; ++i) {
      const std::string p = prefix + "local." + std::to_string(i) + ".";
      conv_w_.push_back(conv_weight(store, p + "weight", cfg.conv_kernel, D, D));
      conv_b_.push_back(store.zeros(p + "bias", {D}));
    }
    if (cfg.zero_init_outputs) {
      global_out_ = store.zeros(prefix + "global.out.weight", {D, D});
      local_out_ = store.zeros(prefix + "local.out.weight", {D, D});
    } else {
      global_out_ = store.fan_in_uniform(prefix + "global.out.weight", {D, D}, D);
      local_out_ = store.fan_in_uniform(prefix + "local.out.weight", {D, D}, D);
    }
  }

  Tensor<T> global_stream(const Tensor<T>& e) const {
    auto x = e;
    for (const auto& l : layers_) x = l.forward(x);
    return ad::linear(ad::layer_norm(x, global_norm_w_, global_norm_b_), global_out_);
  }

  Tensor<T> local_stream(const Tensor<T>& e) const {
    auto x = e;
    const auto geo = ad::Conv1dGeometry::same(cfg_.conv_kernel);
    for (std::size_t i = 0; i < conv_w_.size(); ++i) x = ad::relu(ad::conv1d(x, conv_w_[i], conv_b_[i], geo));
    return ad::linear(x, local_out_);
  }

  Tensor<T> forward(const Tensor<T>& e) const {
    if (e.rank() != 3) throw ShapeError("TSSE: expected [B,L,D]");
    return ad::add(ad::add(e, global_stream(e)), local_stream(e));
  }

 private:
  TSSEConfig cfg_;
  std::vector<TransformerLayer<T>> layers_;
  Tensor<T> global_norm_w_, global_norm_b_;
  std::vector<Tensor<T>> conv_w_, conv_b_;
  Tensor<T> global_out_, local_out_;
};

// ------------------------------------------------------------------ backbone

/// Level 1 runs the DBM stack at full length; every later level halves the
/// length with a stride-2 convolution before its DBM stack. Each level's output
/// is layer-normalized into the pyramid feature f_i.
template <typename T>
class Backbone {
 public:
  Backbone() = default;
  /// Blocks are named `<block_prefix><layer>.` with a running layer index,
  /// level glue `<level_prefix><level>.`.
  Backbone(ad::ParamStore<T>& store, const std::string& block_prefix, const std::string& level_prefix,
           const ssm::DBMBlockConfig& dbm, const PyramidConfig& cfg)
      : cfg_(cfg) {
    const std::size_t D = dbm.model_dim;
    std::size_t layer = 0;
    for (std::size_t lvl = 0; lvl < cfg.levels; ++lvl) {
      const std::string p = level_prefix + std::to_string(lvl) + ".";
      Level level;
      if (lvl > 0) {
        level.down_w = conv_weight(store, p + "down.weight", 3, D, D);
        level.down_b = store.zeros(p + "down.bias", {D});
      }
      for (std::size_t b = 0; b < cfg.blocks_per_level; ++b) {
        level.blocks.emplace_back(store, block_prefix + std::to_string(layer++) + ".", dbm);
      }
      level.norm_w = store.constant(p + "norm.weight", {D}, T(1));
      level.norm_b = store.zeros(p + "norm.bias", {D});
      levels_.push_back(std::move(level));
    }
  }

  std::vector<Tensor<T>> forward(const Tensor<T>& e) const {
    const std::size_t L0 = e.dim(1);
    if (L0 % (std::size_t{1} << (cfg_.levels - 1)) != 0) {
      throw ShapeError("Backbone: length " + std::to_string(L0) + " not divisible by 2^(K-1)");
    }
    std::vector<Tensor<T>> pyramid;
    auto s = e;
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      const auto& level = levels_[i];
      if (i > 0) s = ad::conv1d(s, level.down_w, level.down_b, {2, 1, 1});
      for (const auto& block : level.blocks) s = block.forward(s);
      pyramid.push_back(ad::layer_norm(s, level.norm_w, level.norm_b));
    }
    return pyramid;
  }

  std::size_t levels() const { return levels_.size(); }

 private:
  struct Level {
    Tensor<T> down_w, down_b;
    std::vector<ssm::DBMBlock<T>> blocks;
    Tensor<T> norm_w, norm_b;
  };
  PyramidConfig cfg_;
  std::vector<Level> levels_;
};

// ------------------------------------------------------------------ heads

template <typename T>
struct LevelOutput {
  Tensor<T> logits;      // [B, L_i, classes]
  Tensor<T> regression;  // [B, L_i, 2], nonnegative
};

/// Classification and boundary-regression paths, shared by all pyramid levels.
template <typename T>
class Heads {
 public:
  Heads() = default;
  Heads(ad::ParamStore<T>& store, const std::string& prefix, std::size_t D, std::size_t classes,
        const HeadConfig& cfg)
      : cfg_(cfg) {
    const std::size_t K = cfg.kernel;
    cls_w0_ = conv_weight(store, prefix + "cls.0.weight", K, D, D);
    cls_b0_ = store.zeros(prefix + "cls.0.bias", {D});
    cls_w1_ = conv_weight(store, prefix + "cls.1.weight", K, D, classes);
    cls_b1_ = store.constant(prefix + "cls.1.bias", {classes},
                             static_cast<T>(-std::log((1.0 - cfg.prior_prob) / cfg.prior_prob)));
    reg_w0_ = conv_weight(store, prefix + "reg.0.weight", K, D, D);
    reg_b0_ = store.zeros(prefix + "reg.0.bias", {D});
    reg_w1_ = conv_weight(store, prefix + "reg.1.weight", K, D, 2);
    reg_b1_ = store.zeros(prefix + "reg.1.bias", {2});
  }

  LevelOutput<T> forward(const Tensor<T>& f) const {
    const auto geo = ad::Conv1dGeometry::same(cfg_.kernel);
    const auto c = ad::relu(ad::conv1d(f, cls_w0_, cls_b0_, geo));
    const auto r = ad::relu(ad::conv1d(f, reg_w0_, reg_b0_, geo));
    return {ad::conv1d(c, cls_w1_, cls_b1_, geo), ad::softplus(ad::conv1d(r, reg_w1_, reg_b1_, geo))};
  }

 private:
  HeadConfig cfg_;
  Tensor<T> cls_w0_, cls_b0_, cls_w1_, cls_b1_;
  Tensor<T> reg_w0_, reg_b0_, reg_w1_, reg_b1_;
};

}  // namespace xrf::model
