#pragma once

// CycleGAN objective with an LSGAN adversary. Every norm is a mean over
// elements, so values do not depend on image size.

#include <cmath>
#include <string>

#include "usgan/json_util.hpp"
#include "usgan/ops.hpp"

namespace usgan {

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_iden = 5.0;

  void validate() const {
    if (!(lambda_cyc >= 0.0) || !(lambda_iden >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossReport {
  double cycle = 0;
  double identity = 0;
  double gen_adv = 0;
  double disc = 0;
  double total_gen = 0;

  OrderedJson to_json() const {
    return {{"cycle", cycle}, {"identity", identity}, {"gen_adv", gen_adv}, {"disc", disc}, {"total_gen", total_gen}};
  }
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// |y - y_cyc| + |x - x_cyc|, each a mean over elements.
template <typename T>
Var<T> cycle_loss(const Var<T>& y, const Var<T>& y_cyc, const Var<T>& x, const Var<T>& x_cyc) {
  return ops::add(ops::mean_abs_diff(y, y_cyc), ops::mean_abs_diff(x, x_cyc));
}

/// |y - G(y,K)| + |x - G(x,F)|.
template <typename T>
Var<T> identity_loss(const Var<T>& y, const Var<T>& y_id, const Var<T>& x, const Var<T>& x_id) {
  return ops::add(ops::mean_abs_diff(y, y_id), ops::mean_abs_diff(x, x_id));
}

/// mean((D(real) - 1)^2) + mean(D(fake)^2).
template <typename T>
Var<T> lsgan_d_loss(const Var<T>& d_real, const Var<T>& d_fake) {
  return ops::add(ops::mean_sq_to(d_real, T(1)), ops::mean_sq_to(d_fake, T(0)));
}

/// mean((D(fake) - 1)^2).
template <typename T>
Var<T> lsgan_g_loss(const Var<T>& d_fake) {
  return ops::mean_sq_to(d_fake, T(1));
}

/// lambda_cyc * cycle + gen_adv + lambda_iden * identity, where gen_adv
/// already sums both adversarial directions.
template <typename T>
Var<T> total_generator_loss(const Var<T>& cycle, const Var<T>& gen_adv, const Var<T>& identity, const LossWeights& w) {
  return ops::weighted_sum<T>({{static_cast<T>(w.lambda_cyc), cycle}, {T(1), gen_adv}, {static_cast<T>(w.lambda_iden), identity}});
}

inline double total_generator_loss(double cycle, double gen_adv, double identity, const LossWeights& w) {
  return w.lambda_cyc * cycle + gen_adv + w.lambda_iden * identity;
}

}  // namespace usgan
