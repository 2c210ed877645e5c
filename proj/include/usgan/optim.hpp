#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "usgan/params.hpp"

namespace usgan {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over an ordered list of parameter sets. Moments are kept in the
/// order the sets (and their entries) were given.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamSet<T>*> sets, AdamConfig cfg) : sets_(std::move(sets)), cfg_(cfg) {
    for (auto* ps : sets_)
      for (const auto& [name, v] : *ps) {
        m_.emplace_back(v.value().size(), T(0));
        v_.emplace_back(v.value().size(), T(0));
      }
  }

  /// One update with the gradients currently accumulated; parameters
  /// without a gradient count as zero-gradient. Gradients are cleared.
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg_.eps);
    std::size_t k = 0;
    for (auto* ps : sets_)
      for (auto& [name, var] : *ps) {
        auto& m = m_[k];
        auto& v = v_[k];
        ++k;
        T* p = var.mutable_value().data();
        const bool has = var.has_grad();
        const T* g = has ? var.grad().data() : nullptr;
        for (std::size_t i = 0; i < m.size(); ++i) {
          const T gi = has ? g[i] : T(0);
          m[i] = b1 * m[i] + (T(1) - b1) * gi;
          v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
          if (lr != 0.0) p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
        }
        var.zero_grad();
      }
  }

  long steps() const noexcept { return t_; }
  std::vector<std::vector<T>>& first_moments() noexcept { return m_; }
  std::vector<std::vector<T>>& second_moments() noexcept { return v_; }
  const std::vector<std::vector<T>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<T>>& second_moments() const noexcept { return v_; }
  void set_steps(long t) noexcept { t_ = t; }

 private:
  std::vector<ParamSet<T>*> sets_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  long t_ = 0;
};

}  // namespace usgan
