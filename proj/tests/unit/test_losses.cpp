#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "usgan/losses.hpp"
#include "usgan/optim.hpp"

using namespace usgan;
using usgan::testing::gradient_rel_error;
using usgan::testing::random_tensor;

namespace {

Var<double> c(const Tensor<double>& t) { return Var<double>::constant(t); }

double loop_mean_abs(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double loop_mean_sq(const Tensor<double>& a, double target) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - target) * (a[i] - target);
  return s / static_cast<double>(a.size());
}

Tensor<double> plus(Tensor<double> t, double v) {
  for (auto& x : t.values()) x += v;
  return t;
}

}  // namespace

TEST(CycleLoss, Examples) {
  std::mt19937_64 rng(1);
  auto y = random_tensor({1, 8, 8}, rng, 0, 1), x = random_tensor({1, 8, 8}, rng, 0, 1);
  EXPECT_EQ(cycle_loss(c(y), c(y), c(x), c(x)).item(), 0.0);
  EXPECT_NEAR(cycle_loss(c(y), c(y), c(x), c(plus(x, 0.1))).item(), 0.1, 1e-12);
}

TEST(CycleLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    auto y = random_tensor({1, 6, 9}, rng), yc = random_tensor({1, 6, 9}, rng);
    auto x = random_tensor({1, 6, 9}, rng), xc = random_tensor({1, 6, 9}, rng);
    EXPECT_NEAR(cycle_loss(c(y), c(yc), c(x), c(xc)).item(), loop_mean_abs(y, yc) + loop_mean_abs(x, xc), 1e-12);
    EXPECT_NEAR(identity_loss(c(y), c(yc), c(x), c(xc)).item(), loop_mean_abs(y, yc) + loop_mean_abs(x, xc), 1e-12);
  }
}

TEST(CycleLoss, ShapeMismatch) {
  EXPECT_THROW(cycle_loss(c(Tensor<double>({1, 4, 4})), c(Tensor<double>({1, 4, 5})), c(Tensor<double>({1, 4, 4})),
                          c(Tensor<double>({1, 4, 4}))),
               ShapeError);
}

TEST(IdentityLoss, Examples) {
  const Tensor<double> ones({1, 4, 4}, 1.0);
  const Tensor<double> zeros({1, 4, 4}, 0.0);
  EXPECT_EQ(identity_loss(c(ones), c(ones), c(zeros), c(zeros)).item(), 0.0);
  EXPECT_EQ(identity_loss(c(ones), c(zeros), c(zeros), c(zeros)).item(), 1.0);
}

TEST(LsganLoss, Examples) {
  const Tensor<double> ones({1, 6, 6}, 1.0), zeros({1, 6, 6}, 0.0);
  EXPECT_EQ(lsgan_d_loss(c(ones), c(zeros)).item(), 0.0);
  EXPECT_EQ(lsgan_d_loss(c(zeros), c(ones)).item(), 2.0);
  EXPECT_EQ(lsgan_g_loss(c(ones)).item(), 0.0);
  EXPECT_EQ(lsgan_g_loss(c(zeros)).item(), 1.0);
}

TEST(LsganLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    auto r = random_tensor({1, 5, 7}, rng, -2, 2), f = random_tensor({1, 5, 7}, rng, -2, 2);
    EXPECT_NEAR(lsgan_d_loss(c(r), c(f)).item(), loop_mean_sq(r, 1.0) + loop_mean_sq(f, 0.0), 1e-12);
    EXPECT_NEAR(lsgan_g_loss(c(f)).item(), loop_mean_sq(f, 1.0), 1e-12);
  }
}

TEST(TotalLoss, Examples) {
  const LossWeights w;
  EXPECT_EQ(w.lambda_cyc, 10.0);
  EXPECT_EQ(w.lambda_iden, 5.0);
  EXPECT_EQ(total_generator_loss(0, 0, 0, w), 0.0);
  EXPECT_EQ(total_generator_loss(1, 0, 1, w), 15.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 3);
  for (int t = 0; t < 10; ++t) {
    const double cy = u(rng), ad = u(rng), id = u(rng);
    const LossWeights w2{u(rng), u(rng)};
    EXPECT_EQ(total_generator_loss(cy, ad, id, w2), w2.lambda_cyc * cy + ad + w2.lambda_iden * id);
    const Tensor<double> tc({1}, cy), ta({1}, ad), ti({1}, id);
    EXPECT_NEAR(total_generator_loss(c(tc), c(ta), c(ti), w2).item(), w2.lambda_cyc * cy + ad + w2.lambda_iden * id, 1e-12);
  }
  EXPECT_THROW((LossWeights{-1, 5}.validate()), ConfigError);
}

TEST(Losses, NonNegative) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    auto a = random_tensor({1, 4, 4}, rng, -3, 3), b = random_tensor({1, 4, 4}, rng, -3, 3);
    EXPECT_GE(cycle_loss(c(a), c(b), c(b), c(a)).item(), 0.0);
    EXPECT_GE(lsgan_d_loss(c(a), c(b)).item(), 0.0);
    EXPECT_GE(lsgan_g_loss(c(a)).item(), 0.0);
  }
}

TEST(Losses, MeanReductionIsResolutionIndependent) {
  std::mt19937_64 rng(6);
  for (auto [h, w] : {std::pair{2, 3}, std::pair{16, 16}, std::pair{5, 41}}) {
    auto x = random_tensor({1, h, w}, rng);
    for (double k : {-0.3, 0.05, 2.0}) EXPECT_NEAR(cycle_loss(c(x), c(x), c(x), c(plus(x, k))).item(), std::abs(k), 1e-12);
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    std::vector<Tensor<double>> in;
    for (int i = 0; i < 4; ++i) in.push_back(random_tensor({1, 4, 5}, rng));
    EXPECT_LT(gradient_rel_error(in, [](const auto& v) { return cycle_loss(v[0], v[1], v[2], v[3]); }), 1e-4);
    EXPECT_LT(gradient_rel_error(in, [](const auto& v) { return identity_loss(v[0], v[1], v[2], v[3]); }), 1e-4);
    EXPECT_LT(gradient_rel_error({in[0], in[1]}, [](const auto& v) { return lsgan_d_loss(v[0], v[1]); }), 1e-4);
    EXPECT_LT(gradient_rel_error({in[2]}, [](const auto& v) { return lsgan_g_loss(v[0]); }), 1e-4);
    std::vector<Tensor<double>> parts{random_tensor({1}, rng), random_tensor({1}, rng), random_tensor({1}, rng)};
    EXPECT_LT(gradient_rel_error(parts, [](const auto& v) { return total_generator_loss(v[0], v[1], v[2], LossWeights{}); }), 1e-4);
  }
}

TEST(LossReport, JsonFields) {
  const LossReport r{1, 2, 3, 4, 5};
  const auto j = r.to_json();
  EXPECT_EQ(j["cycle"], 1.0);
  EXPECT_EQ(j["total_gen"], 5.0);
  EXPECT_EQ(j.size(), 5u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * sign(g) (up to eps).
  ParamSet<double> p;
  p.add("w", Tensor<double>({3}, std::vector<double>{1, 2, 3}));
  Adam<double> opt({&p}, AdamConfig{});
  p["w"].grad_buffer() = Tensor<double>({3}, std::vector<double>{0.5, -2, 0});
  opt.step(0.1);
  EXPECT_NEAR(p["w"].value()[0], 0.9, 1e-6);
  EXPECT_NEAR(p["w"].value()[1], 2.1, 1e-6);
  EXPECT_EQ(p["w"].value()[2], 3.0);
  EXPECT_FALSE(p["w"].has_grad());
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MatchesReferenceRecurrence) {
  ParamSet<double> p;
  p.add("w", Tensor<double>({1}, 0.0));
  const AdamConfig cfg{0.5, 0.999, 1e-8};
  Adam<double> opt({&p}, cfg);
  double w = 0, m = 0, v = 0;
  for (int t = 1; t <= 6; ++t) {
    const double g = std::sin(t) + 0.3 * w;
    p["w"].grad_buffer()[0] = g;
    opt.step(0.01);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t)), vh = v / (1 - std::pow(cfg.beta2, t));
    w -= 0.01 * mh / (std::sqrt(vh) + cfg.eps);
    EXPECT_NEAR(p["w"].value()[0], w, 1e-12);
  }
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  ParamSet<double> p;
  p.add("w", Tensor<double>({2}, 1.0));
  Adam<double> opt({&p}, AdamConfig{});
  p["w"].grad_buffer()[0] = 3.0;
  opt.step(0.0);
  EXPECT_EQ(p["w"].value()[0], 1.0);
  EXPECT_NE(opt.first_moments()[0][0], 0.0);
}
