#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "xrfmamba/autodiff/tensor.hpp"

namespace xrf::ad {

/// Named trainable tensors in registration order, plus the RNG used to
/// initialize them. Modules register under dotted names (`dbm.0.norm.weight`).
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor<T> from_values(const std::string& name, Shape shape, Buffer<T> values) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return t;
  }

  Tensor<T> zeros(const std::string& name, Shape shape) { return constant(name, shape, T(0)); }

  Tensor<T> constant(const std::string& name, Shape shape, T value) {
    const auto n = numel(shape);
    return from_values(name, std::move(shape), Buffer<T>(n, value));
  }

  Tensor<T> normal(const std::string& name, Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Buffer<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return from_values(name, std::move(shape), std::move(v));
  }

  Tensor<T> uniform(const std::string& name, Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Buffer<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return from_values(name, std::move(shape), std::move(v));
  }

  /// Kaiming-uniform style init for a map with `fan_in` inputs.
  Tensor<T> fan_in_uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    return uniform(name, std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }

  std::mt19937_64& rng() { return rng_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Copies values by name from a store of possibly different precision.
  template <typename U>
  void copy_values_from(const ParamStore<U>& other) {
    for (auto& e : entries_) {
      const auto src = other.get(e.name);
      if (src.shape() != e.tensor.shape()) {
        throw ShapeError("parameter " + e.name + ": shape " + shape_str(src.shape()) +
                         " vs " + shape_str(e.tensor.shape()));
      }
      auto& dst = e.tensor.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.values()[i]);
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::mt19937_64 rng_;
};

}  // namespace xrf::ad
