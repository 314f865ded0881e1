#pragma once

// The full network: per-branch projection, fusion at one of three positions,
// TSSE embedding, DBM feature pyramid and shared heads.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xrfmamba/data/datapipe.hpp"
#include "xrfmamba/model/modules.hpp"

namespace xrf::model {

template <typename T>
struct ModelInput {
  Tensor<T> wifi;  // [B, S, C_wifi]; undefined when Wi-Fi is masked off
  Tensor<T> imu;   // [B, S, 6 * active IMUs]; undefined when no IMU is active
};

template <typename T>
struct ModelOutput {
  std::vector<LevelOutput<T>> levels;
};

/// Stacks clips into branch tensors following the device mask.
template <typename T>
ModelInput<T> make_input(const std::vector<const data::Clip*>& clips, const ModelConfig& cfg) {
  ModelInput<T> in;
  if (clips.empty()) throw ShapeError("make_input: empty batch");
  const std::size_t B = clips.size(), S = cfg.clip_steps;
  auto fetch = [&](const data::Clip& c, ModalityKind m, std::size_t channels) -> const std::vector<float>& {
    auto it = c.arrays.find(m);
    if (it == c.arrays.end()) {
      throw SchemaError("clip " + c.sequence_id + " lacks stream " + std::string(data::modality_name(m)));
    }
    if (c.steps != S || it->second.size() != S * channels) {
      throw ShapeError("clip " + c.sequence_id + ": " + std::string(data::modality_name(m)) + " has " +
                       std::to_string(it->second.size()) + " values, expected " + std::to_string(S) + "x" +
                       std::to_string(channels));
    }
    return it->second;
  };
  if (cfg.devices.wifi()) {
    const std::size_t C = cfg.wifi_channels;
    ad::Buffer<T> v(B * S * C);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& src = fetch(*clips[b], ModalityKind::wifi_csi, C);
      std::copy(src.begin(), src.end(), v.begin() + static_cast<std::ptrdiff_t>(b * S * C));
    }
    in.wifi = Tensor<T>::from({B, S, C}, std::move(v));
  }
  const auto imus = cfg.devices.imu_devices();
  if (!imus.empty()) {
    const std::size_t c1 = cfg.imu_channels_per_device, C = c1 * imus.size();
    ad::Buffer<T> v(B * S * C);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t d = 0; d < imus.size(); ++d) {
        const auto& src = fetch(*clips[b], imus[d], c1);
        for (std::size_t t = 0; t < S; ++t) {
          std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(t * c1), c1,
                      v.begin() + static_cast<std::ptrdiff_t>((b * S + t) * C + d * c1));
        }
      }
    }
    in.imu = Tensor<T>::from({B, S, C}, std::move(v));
  }
  return in;
}

template <typename T>
class XRFMamba {
 public:
  explicit XRFMamba(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg), store_(seed) {
    cfg.validate();
    const std::size_t D = cfg.model_dim;
    // The Wi-Fi branch is built first so its initial weights do not depend on
    // which IMU devices are active.
    if (cfg.devices.wifi()) wifi_proj_.emplace(store_, "proj.wifi.", cfg.wifi_channels, D, cfg.projection);
    if (!cfg.devices.imu_devices().empty()) imu_proj_.emplace(store_, "proj.imu.", cfg.imu_in_channels(), D, cfg.projection);
    const bool two = cfg.devices.wifi() && !cfg.devices.imu_devices().empty();
    switch (cfg.fusion.position) {
      case FusionPosition::after_projection:
        fusion_ = Fusion<T>(store_, "fusion.", D, cfg.fusion);
        tsse_.emplace_back(store_, "tsse.", D, cfg.tsse);
        backbones_.emplace_back(store_, "dbm.", "pyramid.", cfg.dbm, cfg.pyramid);
        break;
      case FusionPosition::after_embedding:
        build_branches(two, /*with_backbone=*/false);
        fusion_ = Fusion<T>(store_, "fusion.", D, cfg.fusion);
        backbones_.emplace_back(store_, "dbm.", "pyramid.", cfg.dbm, cfg.pyramid);
        break;
      case FusionPosition::after_backbone:
        build_branches(two, /*with_backbone=*/true);
        fusion_ = Fusion<T>(store_, "fusion.", D, cfg.fusion);
        break;
    }
    heads_ = Heads<T>(store_, "heads.", D, cfg.num_classes, cfg.head);
  }

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore<T>& params() { return store_; }
  const ad::ParamStore<T>& params() const { return store_; }

  /// Projected branch embeddings (undefined for an inactive branch).
  std::pair<Tensor<T>, Tensor<T>> project(const ModelInput<T>& in) const {
    Tensor<T> w, i;
    if (wifi_proj_) {
      if (!in.wifi.defined()) throw ShapeError("XRFMamba: Wi-Fi input missing");
      w = wifi_proj_->forward(in.wifi);
    }
    if (imu_proj_) {
      if (!in.imu.defined()) throw ShapeError("XRFMamba: IMU input missing");
      i = imu_proj_->forward(in.imu);
    }
    return {w, i};
  }

  std::vector<Tensor<T>> pyramid(const ModelInput<T>& in) const {
    auto [w, i] = project(in);
    switch (cfg_.fusion.position) {
      case FusionPosition::after_projection:
        return backbones_[0].forward(tsse_[0].forward(fusion_.forward(w, i)));
      case FusionPosition::after_embedding: {
        std::size_t k = 0;
        if (w.defined()) w = tsse_[k++].forward(w);
        if (i.defined()) i = tsse_[k++].forward(i);
        return backbones_[0].forward(fusion_.forward(w, i));
      }
      case FusionPosition::after_backbone: {
        std::size_t k = 0;
        std::vector<Tensor<T>> pw, pi;
        if (w.defined()) {
          pw = backbones_[k].forward(tsse_[k].forward(w));
          ++k;
        }
        if (i.defined()) pi = backbones_[k].forward(tsse_[k].forward(i));
        if (pw.empty()) return pi;
        if (pi.empty()) return pw;
        std::vector<Tensor<T>> fused;
        for (std::size_t l = 0; l < pw.size(); ++l) fused.push_back(fusion_.forward(pw[l], pi[l]));
        return fused;
      }
    }
    throw ConfigError("XRFMamba: unknown fusion position");
  }

  ModelOutput<T> forward(const ModelInput<T>& in) const {
    ModelOutput<T> out;
    for (const auto& f : pyramid(in)) out.levels.push_back(heads_.forward(f));
    return out;
  }

 private:
  void build_branches(bool two, bool with_backbone) {
    const std::size_t D = cfg_.model_dim;
    auto add_branch = [&](const std::string& tag) {
      const std::string t = two ? tag + "." : "";
      tsse_.emplace_back(store_, "tsse." + t, D, cfg_.tsse);
      if (with_backbone) backbones_.emplace_back(store_, "dbm." + t, "pyramid." + t, cfg_.dbm, cfg_.pyramid);
    };
    if (wifi_proj_) add_branch("wifi");
    if (imu_proj_) add_branch("imu");
  }

  ModelConfig cfg_;
  ad::ParamStore<T> store_;
  std::optional<Projection<T>> wifi_proj_, imu_proj_;
  Fusion<T> fusion_;
  std::vector<TSSE<T>> tsse_;
  std::vector<Backbone<T>> backbones_;
  Heads<T> heads_;
};

}  // namespace xrf::model
