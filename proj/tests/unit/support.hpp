#pragma once

// Shared helpers for the unit tests.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "usgan/autograd.hpp"
#include "usgan/image.hpp"
#include "usgan/models.hpp"

namespace usgan::testing {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

inline Image random_image(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  Image img(rows, cols);
  for (auto& v : img.pixels()) v = d(rng);
  return img;
}

/// <out, w> as a scalar, so any op can be reduced for a gradient check.
inline Var<double> project(const Var<double>& out, const Tensor<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += out.value()[i] * w[i];
  return make_result<double>(Tensor<double>({1}, std::vector<double>{s}), {out}, [w](Node<double>& self) {
    const double g = self.grad[0];
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
}

/// ||analytic - numeric|| / (||analytic|| + ||numeric||) over every element
/// of every input, with central differences of the given step.
inline double gradient_rel_error(const std::vector<Tensor<double>>& inputs,
                                 const std::function<Var<double>(const std::vector<Var<double>>&)>& f, double step = 1e-5) {
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(Var<double>::parameter(t));
  backward(f(vars));

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    NoGradGuard g;
    std::vector<Var<double>> c;
    for (const auto& t : xs) c.push_back(Var<double>::constant(t));
    return f(c).item();
  };
  double num2 = 0, ana2 = 0, diff2 = 0;
  std::vector<Tensor<double>> xs = inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t i = 0; i < xs[k].size(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + step;
      const double up = eval(xs);
      xs[k][i] = orig - step;
      const double down = eval(xs);
      xs[k][i] = orig;
      const double n = (up - down) / (2 * step);
      const double a = vars[k].has_grad() ? vars[k].grad()[i] : 0.0;
      num2 += n * n;
      ana2 += a * a;
      diff2 += (a - n) * (a - n);
    }
  }
  const double denom = std::sqrt(num2) + std::sqrt(ana2);
  return denom == 0 ? 0.0 : std::sqrt(diff2) / denom;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::string tag = name;
  if (info) tag += std::string("_") + info->test_suite_name() + "_" + info->name();
  auto p = std::filesystem::temp_directory_path() / ("usgan_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Tiny model configuration for fast tests.
inline ModelConfig tiny_config(int gen_c = 4, int disc_c = 4) {
  ModelConfig c;
  c.generator.base_channels = gen_c;
  c.discriminator.base_channels = disc_c;
  c.codegen.hidden_width = 16;
  return c;
}

/// Copy of `p` with the generator head filled with small random values, so
/// the residual branch is active.
template <typename T>
ParamSet<T> with_random_head(const ParamSet<T>& p, std::uint64_t seed, double scale = 0.05) {
  ParamSet<T> out = p.clone();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : out["generator.head.weight"].mutable_value().values()) v = static_cast<T>(d(rng));
  return out;
}

}  // namespace usgan::testing
