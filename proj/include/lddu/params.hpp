#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lddu/tensor.hpp"

namespace lddu {

/// Named, insertion-ordered collection of trainable tensors. Names are the
/// checkpoint contract, so they must stay stable across versions.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("unknown parameter: " + name);
    return *params_[it->second];
  }
  const Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("unknown parameter: " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Glorot-uniform weights for a [fan_in x fan_out] linear map.
inline Matrix xavier_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Index i = 0; i < w.size(); ++i) w(i) = u(rng);
  return w;
}

inline Matrix normal_matrix(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) w(i) = n(rng);
  return w;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction; the learning rate is supplied per step so the
/// caller owns the schedule.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& store, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
      Parameter& p = store.at(i);
      Matrix g = p.grad;
      if (cfg_.weight_decay > 0.0) g += cfg_.weight_decay * p.value;
      p.adam_m = cfg_.beta1 * p.adam_m + (1.0 - cfg_.beta1) * g;
      p.adam_v = cfg_.beta2 * p.adam_v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      p.value.array() -= lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + cfg_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

/// Linear warm-up over the first `warmup_fraction` of steps, then cosine decay to 0.
inline double warmup_cosine_lr(double base_lr, long step, long total_steps, double warmup_fraction) {
  if (total_steps <= 0) return base_lr;
  const long warm = static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (warm > 0 && step < warm) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  const long span = std::max<long>(1, total_steps - warm);
  const double progress = std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(span));
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace lddu
