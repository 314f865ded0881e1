#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "xrfmamba/data/dataset.hpp"
#include "xrfmamba/ssm/dbm.hpp"
#include "xrfmamba/util/json_strict.hpp"

namespace xrf::model {

using data::ModalityKind;
using util::json;

enum class FusionStrategy { weighted, linear, gated };
enum class FusionPosition { after_projection, after_embedding, after_backbone };

inline std::string_view strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::weighted: return "weighted";
    case FusionStrategy::linear: return "linear";
    case FusionStrategy::gated: return "gated";
  }
  return "";
}

inline std::string_view position_name(FusionPosition p) {
  switch (p) {
    case FusionPosition::after_projection: return "after_projection";
    case FusionPosition::after_embedding: return "after_embedding";
    case FusionPosition::after_backbone: return "after_backbone";
  }
  return "";
}

inline FusionStrategy parse_strategy(const std::string& s) {
  for (auto v : {FusionStrategy::weighted, FusionStrategy::linear, FusionStrategy::gated}) {
    if (strategy_name(v) == s) return v;
  }
  throw ConfigError("unknown fusion strategy '" + s + "'");
}

inline FusionPosition parse_position(const std::string& s) {
  for (auto v : {FusionPosition::after_projection, FusionPosition::after_embedding,
                 FusionPosition::after_backbone}) {
    if (position_name(v) == s) return v;
  }
  throw ConfigError("unknown fusion position '" + s + "'");
}

inline ssm::Discretization parse_discretization(const std::string& s) {
  if (s == "exp") return ssm::Discretization::exp_zoh;
  if (s == "literal") return ssm::Discretization::literal;
  throw ConfigError("unknown discretization '" + s + "' (expected exp or literal)");
}

inline std::string discretization_name(ssm::Discretization d) {
  return d == ssm::Discretization::exp_zoh ? "exp" : "literal";
}

struct ProjectionConfig {
  std::size_t kernel = 8;
  std::size_t stride = 8;
  std::size_t groups = 8;
};

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::weighted;
  FusionPosition position = FusionPosition::after_projection;
  double lambda = 0.2;  // Wi-Fi weight of the weighted strategy
  std::size_t gate_kernel = 3;
};

struct TSSEConfig {
  std::size_t transformer_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 2;
  std::size_t conv_layers = 2;
  std::size_t conv_kernel = 3;
  bool zero_init_outputs = false;
};

struct PyramidConfig {
  std::size_t levels = 6;  // K
  std::size_t blocks_per_level = 1;
};

struct HeadConfig {
  std::size_t kernel = 3;
  double prior_prob = 0.01;
};

/// Which devices feed the network. IMU devices are concatenated in the
/// kImuKinds order.
struct DeviceMask {
  std::vector<ModalityKind> active{data::kAllModalities.begin(), data::kAllModalities.end()};

  bool has(ModalityKind m) const { return std::find(active.begin(), active.end(), m) != active.end(); }
  bool wifi() const { return has(ModalityKind::wifi_csi); }
  std::vector<ModalityKind> imu_devices() const {
    std::vector<ModalityKind> out;
    for (auto m : data::kImuKinds) {
      if (has(m)) out.push_back(m);
    }
    return out;
  }
};

struct ModelConfig {
  std::size_t model_dim = 256;
  std::size_t num_classes = data::kNumClasses;
  std::size_t clip_steps = data::kClipSteps;
  double window_s = data::kWindowSeconds;
  std::size_t wifi_channels = 270;
  std::size_t imu_channels_per_device = 6;
  ProjectionConfig projection;
  FusionConfig fusion;
  TSSEConfig tsse;
  PyramidConfig pyramid;
  HeadConfig head;
  ssm::DBMBlockConfig dbm{256, 512, 16, 4, true, ssm::Discretization::exp_zoh, 1e-3, 1e-1};
  DeviceMask devices;

  std::size_t base_length() const { return clip_steps / projection.stride; }
  std::size_t level_length(std::size_t i) const { return base_length() >> i; }
  std::size_t imu_in_channels() const { return imu_channels_per_device * devices.imu_devices().size(); }

  void validate() const {
    if (model_dim == 0 || num_classes == 0) throw ConfigError("model: widths must be positive");
    if (projection.kernel == 0 || projection.stride == 0) throw ConfigError("model.projection: kernel/stride");
    if (clip_steps % projection.stride != 0 || clip_steps < projection.kernel) {
      throw ConfigError("model.projection: stride must divide clip_steps");
    }
    if (projection.groups == 0 || model_dim % projection.groups != 0) {
      throw ConfigError("model.projection.groups must divide model_dim");
    }
    if (pyramid.levels == 0) throw ConfigError("model.pyramid.levels must be >= 1");
    const std::size_t L0 = base_length();
    if (L0 % (std::size_t{1} << (pyramid.levels - 1)) != 0) {
      throw ConfigError("model: base length " + std::to_string(L0) + " not divisible by 2^(K-1)");
    }
    if (tsse.heads == 0 || model_dim % tsse.heads != 0) throw ConfigError("model.tsse.heads must divide model_dim");
    if (!(fusion.lambda >= 0.0 && fusion.lambda <= 1.0)) throw ConfigError("model.fusion.lambda must be in [0,1]");
    if (fusion.gate_kernel == 0 || head.kernel == 0 || tsse.conv_kernel == 0) throw ConfigError("model: kernel sizes");
    if (!(head.prior_prob > 0.0 && head.prior_prob < 1.0)) throw ConfigError("model.head.prior_prob in (0,1)");
    if (!devices.wifi() && devices.imu_devices().empty()) throw ConfigError("model.devices: no device active");
    if (dbm.model_dim != model_dim) throw ConfigError("model.dbm.model_dim must equal model_dim");
    dbm.validate();
  }
};

// ------------------------------------------------------------------ JSON

inline json to_json(const DeviceMask& m) {
  json arr = json::array();
  for (auto k : m.active) arr.push_back(std::string(data::modality_name(k)));
  return arr;
}

inline DeviceMask device_mask_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected a list of device names");
  DeviceMask m;
  m.active.clear();
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError(where + ": device names must be strings");
    const auto kind = data::parse_modality(v.get<std::string>());
    if (!kind) throw ConfigError(where + ": unknown device '" + v.get<std::string>() + "'");
    if (!m.has(*kind)) m.active.push_back(*kind);
  }
  return m;
}

inline json to_json(const ModelConfig& c) {
  return json{
      {"model_dim", c.model_dim},
      {"num_classes", c.num_classes},
      {"clip_steps", c.clip_steps},
      {"window_s", c.window_s},
      {"wifi_channels", c.wifi_channels},
      {"imu_channels_per_device", c.imu_channels_per_device},
      {"projection", {{"kernel", c.projection.kernel}, {"stride", c.projection.stride}, {"groups", c.projection.groups}}},
      {"fusion",
       {{"strategy", std::string(strategy_name(c.fusion.strategy))},
        {"position", std::string(position_name(c.fusion.position))},
        {"lambda", c.fusion.lambda},
        {"gate_kernel", c.fusion.gate_kernel}}},
      {"tsse",
       {{"transformer_layers", c.tsse.transformer_layers},
        {"heads", c.tsse.heads},
        {"ffn_mult", c.tsse.ffn_mult},
        {"conv_layers", c.tsse.conv_layers},
        {"conv_kernel", c.tsse.conv_kernel},
        {"zero_init_outputs", c.tsse.zero_init_outputs}}},
      {"pyramid", {{"levels", c.pyramid.levels}, {"blocks_per_level", c.pyramid.blocks_per_level}}},
      {"head", {{"kernel", c.head.kernel}, {"prior_prob", c.head.prior_prob}}},
      {"dbm",
       {{"inner_dim", c.dbm.inner_dim},
        {"state_dim", c.dbm.state_dim},
        {"conv_width", c.dbm.conv_width},
        {"share_directions", c.dbm.share_directions},
        {"discretization", discretization_name(c.dbm.discretization)},
        {"dt_min", c.dbm.dt_min},
        {"dt_max", c.dbm.dt_max}}},
      {"devices", to_json(c.devices)},
  };
}

inline ModelConfig model_config_from_json(const json& j, const std::string& where = "model") {
  using util::read_opt;
  util::reject_unknown_keys(j, {"model_dim", "num_classes", "clip_steps", "window_s", "wifi_channels",
                                "imu_channels_per_device", "projection", "fusion", "tsse", "pyramid",
                                "head", "dbm", "devices"},
                            where);
  ModelConfig c;
  read_opt(j, "model_dim", c.model_dim, where);
  read_opt(j, "num_classes", c.num_classes, where);
  read_opt(j, "clip_steps", c.clip_steps, where);
  read_opt(j, "window_s", c.window_s, where);
  read_opt(j, "wifi_channels", c.wifi_channels, where);
  read_opt(j, "imu_channels_per_device", c.imu_channels_per_device, where);
  if (j.contains("projection")) {
    const auto& p = j["projection"];
    const std::string w = where + ".projection";
    util::reject_unknown_keys(p, {"kernel", "stride", "groups"}, w);
    read_opt(p, "kernel", c.projection.kernel, w);
    read_opt(p, "stride", c.projection.stride, w);
    read_opt(p, "groups", c.projection.groups, w);
  }
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    const std::string w = where + ".fusion";
    util::reject_unknown_keys(f, {"strategy", "position", "lambda", "gate_kernel"}, w);
    std::string s(strategy_name(c.fusion.strategy)), p(position_name(c.fusion.position));
    read_opt(f, "strategy", s, w);
    read_opt(f, "position", p, w);
    c.fusion.strategy = parse_strategy(s);
    c.fusion.position = parse_position(p);
    read_opt(f, "lambda", c.fusion.lambda, w);
    read_opt(f, "gate_kernel", c.fusion.gate_kernel, w);
  }
  if (j.contains("tsse")) {
    const auto& t = j["tsse"];
    const std::string w = where + ".tsse";
    util::reject_unknown_keys(
        t, {"transformer_layers", "heads", "ffn_mult", "conv_layers", "conv_kernel", "zero_init_outputs"}, w);
    read_opt(t, "transformer_layers", c.tsse.transformer_layers, w);
    read_opt(t, "heads", c.tsse.heads, w);
    read_opt(t, "ffn_mult", c.tsse.ffn_mult, w);
    read_opt(t, "conv_layers", c.tsse.conv_layers, w);
    read_opt(t, "conv_kernel", c.tsse.conv_kernel, w);
    read_opt(t, "zero_init_outputs", c.tsse.zero_init_outputs, w);
  }
  if (j.contains("pyramid")) {
    const auto& p = j["pyramid"];
    const std::string w = where + ".pyramid";
    util::reject_unknown_keys(p, {"levels", "blocks_per_level"}, w);
    read_opt(p, "levels", c.pyramid.levels, w);
    read_opt(p, "blocks_per_level", c.pyramid.blocks_per_level, w);
  }
  if (j.contains("head")) {
    const auto& h = j["head"];
    const std::string w = where + ".head";
    util::reject_unknown_keys(h, {"kernel", "prior_prob"}, w);
    read_opt(h, "kernel", c.head.kernel, w);
    read_opt(h, "prior_prob", c.head.prior_prob, w);
  }
  // Default inner width follows model_dim (E = 2D) unless given explicitly.
  c.dbm.model_dim = c.model_dim;
  c.dbm.inner_dim = 2 * c.model_dim;
  if (j.contains("dbm")) {
    const auto& d = j["dbm"];
    const std::string w = where + ".dbm";
    util::reject_unknown_keys(
        d, {"inner_dim", "state_dim", "conv_width", "share_directions", "discretization", "dt_min", "dt_max"}, w);
    read_opt(d, "inner_dim", c.dbm.inner_dim, w);
    read_opt(d, "state_dim", c.dbm.state_dim, w);
    read_opt(d, "conv_width", c.dbm.conv_width, w);
    read_opt(d, "share_directions", c.dbm.share_directions, w);
    std::string disc = discretization_name(c.dbm.discretization);
    read_opt(d, "discretization", disc, w);
    c.dbm.discretization = parse_discretization(disc);
    read_opt(d, "dt_min", c.dbm.dt_min, w);
    read_opt(d, "dt_max", c.dbm.dt_max, w);
  }
  if (j.contains("devices")) c.devices = device_mask_from_json(j["devices"], where + ".devices");
  c.validate();
  return c;
}

}  // namespace xrf::model
