#include "cprel/params.hpp"

#include <cmath>
#include <limits>

#include "cprel/error.hpp"

namespace cprel {

Tensor ParameterStore::add(const std::string& name, int rows, int cols, Init init) {
  if (index_.count(name)) throw ConfigError("parameter already registered: " + name);
  Tensor t = Tensor::zeros({rows, cols}, true);
  if (init == Init::Glorot) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    for (double& v : t.values()) v = rng_.uniform(-limit, limit);
  }
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return entries_[it->second].second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [name, t] : entries_) {
    if (!t.requires_grad()) continue;
    for (double g : t.grad()) s += g * g;
  }
  return std::sqrt(s);
}

void ParameterStore::sgd_step(double lr, double grad_scale, double clip_norm) {
  double s = 0.0;
  for (const auto& [name, t] : entries_) {
    if (!t.requires_grad()) continue;
    for (double g : t.grad()) {
      const double m = g / grad_scale;
      s += m * m;
    }
  }
  const double norm = std::sqrt(s);
  double factor = lr / grad_scale;
  if (clip_norm > 0.0 && norm > clip_norm) factor *= clip_norm / norm;
  for (auto& [name, t] : entries_) {
    if (!t.requires_grad()) continue;
    auto& v = t.values();
    const auto& g = t.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= factor * g[i];
  }
}

void ParameterStore::set_requires_grad(bool on) {
  for (auto& [name, t] : entries_) {
    auto impl = t.impl();
    if (on && !impl->requires_grad) {
      impl->requires_grad = true;
      impl->grad.assign(impl->values.size(), 0.0);
    } else if (!on && impl->requires_grad) {
      impl->requires_grad = false;
      impl->grad.clear();
      impl->grad.shrink_to_fit();
    }
  }
}

double finite_diff_check(const std::function<Tensor()>& f, ParameterStore& params,
                         double h) {
  params.zero_grad();
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, t] : params.entries()) {
    analytic.push_back(t.requires_grad() ? t.grad() : std::vector<double>());
  }

  double worst = 0.0;
  NoGradGuard ng;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params.entries()[pi].second;
    if (!t.requires_grad()) continue;
    auto& v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double up = f().value();
      v[i] = keep - h;
      const double down = f().value();
      v[i] = keep;
      const double central = (up - down) / (2.0 * h);
      const double err =
          std::fabs(analytic[pi][i] - central) / std::max(1e-8, std::fabs(central));
      if (std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace cprel
