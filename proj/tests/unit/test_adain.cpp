#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "usgan/adain.hpp"

using namespace usgan;
using usgan::testing::gradient_rel_error;
using usgan::testing::project;
using usgan::testing::random_tensor;

namespace {

AdaInCode<double> random_code(const std::vector<int>& ch, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mu(-2, 2), sd(0, 3);
  AdaInCode<double> c;
  for (int n : ch) {
    CodeSite<double> s;
    for (int i = 0; i < n; ++i) {
      s.mu.push_back(mu(rng));
      s.sigma.push_back(sd(rng));
    }
    c.sites.push_back(s);
  }
  return c;
}

const std::vector<int> kChannels{2, 3, 1, 4, 2, 2, 3, 1, 2};

}  // namespace

TEST(AdainTransform, ConstantCodeIsInstanceNorm) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    auto z = random_tensor({3, 6, 7}, rng, -4, 9);
    const auto out = adain_transform(z, constant_code_k<double>({3}).sites[0]);
    const auto st = instance_stats(out);
    for (int c = 0; c < 3; ++c) {
      EXPECT_LT(std::abs(st.mean[c]), 1e-12);
      EXPECT_LT(std::abs(st.std[c] - 1.0), 1e-3);
    }
  }
}

TEST(AdainTransform, ConstantChannelGivesCodeMean) {
  const Tensor<double> z({1, 4, 4}, 5.0);
  const auto out = adain_transform(z, CodeSite<double>{{2.0}, {3.0}});
  for (double v : out.values()) EXPECT_EQ(v, 2.0);
}

TEST(AdainTransform, ScalarLoopOracle) {
  // eps must be positive in the API; 1e-300 is below double resolution here.
  const Tensor<double> z({1, 1, 3}, std::vector<double>{1, 2, 3});
  const auto out = adain_transform(z, CodeSite<double>{{0.0}, {2.0}}, 1e-300);
  const double sd = std::sqrt(((1 - 2.0) * (1 - 2.0) + 0 + (3 - 2.0) * (3 - 2.0)) / 3.0);
  const double want[3] = {2 * (1 - 2) / sd, 0.0, 2 * (3 - 2) / sd};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(out[i], want[i], 1e-12);
}

TEST(AdainTransform, OwnStatisticsReturnInput) {
  std::mt19937_64 rng(2);
  const double eps = 1e-5;
  auto z = random_tensor({4, 5, 6}, rng, -3, 3);
  const auto st = instance_stats(z);
  const auto out = adain_transform(z, CodeSite<double>{st.mean, st.std}, eps);
  for (int c = 0; c < 4; ++c) {
    double max_dev = 0, max_err = 0;
    for (int i = 0; i < 30; ++i) {
      const double v = z[c * 30 + i];
      max_dev = std::max(max_dev, std::abs(v - st.mean[c]));
      max_err = std::max(max_err, std::abs(out[c * 30 + i] - v));
    }
    EXPECT_LE(max_err, eps * max_dev);
  }
}

TEST(AdainTransform, Errors) {
  const Tensor<double> z({2, 3, 3}, 1.0);
  EXPECT_THROW(adain_transform(z, CodeSite<double>{{0.0}, {1.0}}), ShapeError);
  EXPECT_THROW(adain_transform(z, CodeSite<double>{{0.0, 0.0}, {1.0, 1.0}}, 0.0), ArgumentError);
}

TEST(Adain, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    auto z = random_tensor({4, 5, 6}, rng, -2, 2);
    auto mu = random_tensor({4}, rng);
    auto sd = random_tensor({4}, rng, 0.1, 2);
    auto p = random_tensor({4, 5, 6}, rng);
    const double err =
        gradient_rel_error({z, mu, sd}, [&](const std::vector<Var<double>>& v) { return project(adain(v[0], v[1], v[2], 1e-5), p); });
    EXPECT_LT(err, 1e-4);
  }
}

TEST(Adain, DifferentiableMatchesPlainTransform) {
  std::mt19937_64 rng(4);
  auto z = random_tensor({3, 4, 4}, rng);
  CodeSite<double> s{{0.5, -1, 2}, {1.5, 0.2, 0}};
  NoGradGuard g;
  const auto a = adain(Var<double>::constant(z), Var<double>::constant(Tensor<double>({3}, s.mu)),
                       Var<double>::constant(Tensor<double>({3}, s.sigma)), 1e-5)
                     .value();
  EXPECT_EQ(a, adain_transform(z, s, 1e-5));
}

TEST(InterpolateCode, Endpoints) {
  std::mt19937_64 rng(5);
  const auto c = random_code(kChannels, rng);
  EXPECT_EQ(interpolate_code(c, 0.0), constant_code_k<double>(kChannels));
  EXPECT_EQ(interpolate_code(c, 1.0), c);
  const auto k = constant_code_k<double>(kChannels);
  EXPECT_EQ(interpolate_code(k, 0.37), k);
}

TEST(InterpolateCode, MidpointExample) {
  AdaInCode<double> c;
  for (int i = 0; i < kAdainSites; ++i) c.sites.push_back({{4.0}, {3.0}});
  const auto h = interpolate_code(c, 0.5);
  EXPECT_EQ(h.sites[0].mu[0], 2.0);
  EXPECT_EQ(h.sites[0].sigma[0], 2.0);
}

TEST(InterpolateCode, ExactlyAffine) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    const auto c = random_code(kChannels, rng);
    const double a1 = u(rng), a2 = u(rng);
    const auto h1 = interpolate_code(c, a1), h2 = interpolate_code(c, a2), hm = interpolate_code(c, (a1 + a2) / 2);
    for (std::size_t s = 0; s < c.sites.size(); ++s)
      for (std::size_t i = 0; i < c.sites[s].mu.size(); ++i) {
        EXPECT_NEAR(hm.sites[s].mu[i], (h1.sites[s].mu[i] + h2.sites[s].mu[i]) / 2, 1e-12);
        EXPECT_NEAR(hm.sites[s].sigma[i], (h1.sites[s].sigma[i] + h2.sites[s].sigma[i]) / 2, 1e-12);
      }
  }
}

TEST(InterpolateCode, RejectsOutOfRange) {
  const auto k = constant_code_k<double>(kChannels);
  EXPECT_THROW(interpolate_code(k, -0.01), ArgumentError);
  EXPECT_THROW(interpolate_code(k, 1.5), ArgumentError);
  EXPECT_THROW(interpolate_code(k, std::nan("")), ArgumentError);
}

TEST(AdaInCode, Validate) {
  auto k = constant_code_k<double>(kChannels);
  EXPECT_NO_THROW(k.validate());
  k.sites[2].sigma[0] = -1;
  EXPECT_THROW(k.validate(), ArgumentError);
  k.sites.pop_back();
  EXPECT_THROW(k.validate(), ShapeError);
}

TEST(RasterizeAlpha, Examples) {
  const auto f = rasterize_alpha({}, 0.7, 4, 5);
  for (double v : f.values.pixels()) EXPECT_EQ(v, 0.7);
  const auto full = rasterize_alpha({{Grid<std::uint8_t>(4, 5, 1), 1.0}}, 0.0, 4, 5);
  for (double v : full.values.pixels()) EXPECT_EQ(v, 1.0);
}

TEST(RasterizeAlpha, OverlappingRectanglesMatchPaintingOracle) {
  const int rows = 20, cols = 30;
  auto rect = [&](int r0, int c0, int r1, int c1) {
    Grid<std::uint8_t> m(rows, cols);
    for (int r = r0; r < r1; ++r)
      for (int c = c0; c < c1; ++c) m.at(r, c) = 1;
    return m;
  };
  const auto f = rasterize_alpha({{rect(2, 3, 12, 20), 0.3}, {rect(8, 10, 18, 28), 0.9}}, 0.1, rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double want = 0.1;
      if (r >= 2 && r < 12 && c >= 3 && c < 20) want = 0.3;
      if (r >= 8 && r < 18 && c >= 10 && c < 28) want = 0.9;
      EXPECT_EQ(f.values.at(r, c), want);
    }
}

TEST(RasterizeAlpha, Errors) {
  EXPECT_THROW(rasterize_alpha({{Grid<std::uint8_t>(3, 3, 1), 0.5}}, 0.0, 4, 4), ShapeError);
  EXPECT_THROW(rasterize_alpha({{Grid<std::uint8_t>(4, 4, 1), 1.5}}, 0.0, 4, 4), ArgumentError);
  EXPECT_THROW(rasterize_alpha({}, -0.1, 4, 4), ArgumentError);
}

TEST(DownsampleArea, PreservesMean) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  Grid<double> g(12, 18);
  for (auto& v : g.pixels()) v = u(rng);
  for (auto [r, c] : {std::pair{6, 9}, std::pair{3, 3}, std::pair{5, 7}, std::pair{1, 1}}) {
    const auto d = downsample_area(g, r, c);
    double a = 0, b = 0;
    for (double v : g.pixels()) a += v;
    for (double v : d.pixels()) b += v;
    EXPECT_NEAR(a / g.size(), b / d.size(), 1e-12);
  }
  const auto h = downsample_area(g, 6, 9);
  EXPECT_NEAR(h.at(1, 2), (g.at(2, 4) + g.at(2, 5) + g.at(3, 4) + g.at(3, 5)) / 4, 1e-12);
  EXPECT_THROW(downsample_area(g, 24, 9), ShapeError);
}

TEST(SpatialAdain, ZeroFieldIsConstantCode) {
  std::mt19937_64 rng(8);
  auto z = random_tensor({3, 8, 8}, rng);
  const auto site = random_code({3}, rng).sites[0];
  const auto out = spatial_adain(z, site, AlphaField::constant(16, 16, 0.0));
  const auto ref = adain_transform(z, constant_code_k<double>({3}).sites[0]);
  EXPECT_EQ(out, ref);
}

TEST(SpatialAdain, ConstantFieldMatchesInterpolatedCode) {
  std::mt19937_64 rng(9);
  for (double a : {0.0, 0.25, 0.6, 1.0}) {
    auto z = random_tensor({3, 8, 8}, rng, -5, 5);
    const auto code = random_code({3}, rng);
    const auto out = spatial_adain(z, code.sites[0], AlphaField::constant(8, 8, a));
    const auto ref = adain_transform(z, interpolate_code(code, a).sites[0]);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-6);
  }
}

TEST(SpatialAdain, CheckerboardSelectsPerPixel) {
  std::mt19937_64 rng(10);
  auto z = random_tensor({2, 6, 6}, rng);
  const auto code = random_code({2}, rng);
  Grid<double> field(6, 6);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) field.at(r, c) = (r + c) % 2;
  const auto out = spatial_adain(z, code.sites[0], AlphaField{field, {}});
  const auto k = adain_transform(z, constant_code_k<double>({2}).sites[0]);
  const auto f = adain_transform(z, code.sites[0]);
  for (int ch = 0; ch < 2; ++ch)
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) EXPECT_NEAR(out.at(ch, r, c), field.at(r, c) ? f.at(ch, r, c) : k.at(ch, r, c), 1e-12);
}

TEST(AnchoredAdain, SingleAnchorOfOwnStatsIsSpatialAdain) {
  std::mt19937_64 rng(11);
  auto z = random_tensor({2, 4, 4}, rng);
  const auto code = random_code({2}, rng);
  Grid<double> field(4, 4, 0.4);
  AnchoredStats<double> anchors{{0.4}, {instance_stats(z)}};
  EXPECT_EQ(anchored_adain_at(z, &code.sites[0], field, anchors, 1e-5), spatial_adain_at(z, code.sites[0], field, 1e-5));
}
