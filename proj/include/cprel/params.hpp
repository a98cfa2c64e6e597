#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cprel/rng.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

enum class Init { Glorot, Zero };

// Named trainable tensors in insertion order. All model randomness at
// initialization flows from the store seed.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  Tensor add(const std::string& name, int rows, int cols, Init init);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const {
    return entries_;
  }

  void zero_grad();
  double grad_norm() const;
  // p -= lr * g / grad_scale, after clipping the scaled global norm.
  void sgd_step(double lr, double grad_scale, double clip_norm);
  void set_requires_grad(bool on);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  DetRng rng_;
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Max over all parameter entries of |analytic - central difference| /
// max(1e-8, |central difference|). f must rebuild the scalar loss from the
// store's current values; NaN anywhere propagates into the returned value.
double finite_diff_check(const std::function<Tensor()>& f, ParameterStore& params,
                         double h);

}  // namespace cprel
