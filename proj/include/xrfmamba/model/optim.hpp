#pragma once

#include <cmath>
#include <vector>

#include "xrfmamba/autodiff/params.hpp"

namespace xrf::model {

/// lr0 · gamma^floor(epoch / step_epochs).
inline double step_lr(double lr0, std::size_t epoch, std::size_t step_epochs = 30, double gamma = 0.5) {
  return lr0 * std::pow(gamma, static_cast<double>(epoch / step_epochs));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled; applied to rank >= 2 weights only
};

template <typename T>
class AdamW {
 public:
  AdamW(ad::ParamStore<T>& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {
    for (const auto& e : store.entries()) {
      m_.emplace_back(e.tensor.size(), 0.0);
      v_.emplace_back(e.tensor.size(), 0.0);
    }
  }

  /// Global L2 norm of all gradients.
  double grad_norm() const {
    double s = 0.0;
    for (const auto& e : store_.entries()) {
      if (!e.tensor.has_grad()) continue;
      for (T g : e.tensor.grad()) s += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(s);
  }

  /// One update. Gradients are rescaled beforehand when their global norm
  /// exceeds `clip_norm` (disabled when clip_norm <= 0).
  void step(double lr, double clip_norm = 0.0) {
    ++t_;
    double scale = 1.0;
    if (clip_norm > 0.0) {
      const double n = grad_norm();
      if (n > clip_norm) scale = clip_norm / n;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const auto& entries = store_.entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      auto tensor = entries[p].tensor;
      if (!tensor.has_grad()) continue;
      auto& value = tensor.values();
      const auto grad = tensor.grad();
      const bool decay = tensor.rank() >= 2 && cfg_.weight_decay > 0.0;
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]) * scale;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        double x = static_cast<double>(value[i]);
        if (decay) x -= lr * cfg_.weight_decay * x;
        x -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        value[i] = static_cast<T>(x);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  ad::ParamStore<T>& store_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace xrf::model
