#pragma once

// Central finite-difference checks of reverse-mode gradients over every
// tensor of a parameter store.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "xrfmamba/autodiff/params.hpp"

namespace xrf::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "<tensor>[index]"
  std::size_t checked = 0;
  std::size_t refined = 0;  // entries re-measured with the smaller step
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning round-off into large relative errors.
inline double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// `loss` rebuilds the graph from the store's current values and returns a
/// scalar. `per_tensor` entries are sampled from each tensor (all when 0).
/// An entry whose error exceeds `refine_above` is measured again with step
/// h/10 and the smaller error kept: a ReLU or |x| kink inside [x-h, x+h]
/// biases the wide difference but not the narrow one.
inline GradCheckResult check_gradients(ad::ParamStore<double>& store,
                                       const std::function<ad::Tensor<double>()>& loss,
                                       std::size_t per_tensor = 0, double h = 1e-5, std::uint64_t seed = 0,
                                       double refine_above = 0.0) {
  store.zero_grad();
  auto l = loss();
  ad::backward(l);
  std::vector<std::vector<double>> analytic;
  for (const auto& e : store.entries()) {
    analytic.push_back(e.tensor.has_grad() ? std::vector<double>(e.tensor.grad().begin(), e.tensor.grad().end())
                                           : std::vector<double>(e.tensor.size(), 0.0));
  }
  GradCheckResult r;
  std::mt19937_64 rng(seed);
  const auto& entries = store.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto t = entries[k].tensor;
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (per_tensor > 0 && idx.size() > per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_tensor);
    }
    const auto central = [&](std::size_t i, double step) {
      const double orig = t.values()[i];
      t.values()[i] = orig + step;
      const double up = loss().item();
      t.values()[i] = orig - step;
      const double down = loss().item();
      t.values()[i] = orig;
      return (up - down) / (2.0 * step);
    };
    for (std::size_t i : idx) {
      double numeric = central(i, h);
      double e = rel_err(analytic[k][i], numeric);
      if (refine_above > 0.0 && e > refine_above) {
        const double fine = central(i, h / 10.0);
        const double e_fine = rel_err(analytic[k][i], fine);
        ++r.refined;
        if (e_fine < e) {
          e = e_fine;
          numeric = fine;
        }
      }
      ++r.checked;
      if (e > r.max_rel_err) {
        r.max_rel_err = e;
        r.worst = entries[k].name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[k][i]) +
                  " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

}  // namespace xrf::testing
