#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "support.hpp"
#include "usgan/training.hpp"

using namespace usgan;
using usgan::testing::random_image;
namespace fs = std::filesystem;

namespace {

TrainConfig small_train(int epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.decay_start_epoch = 0;
  c.patch_size = 32;
  c.checkpoint_every = 0;
  return c;
}

UnpairedData blobs(int n, std::uint64_t seed) {
  UnpairedData d;
  for (int i = 0; i < n; ++i) {
    d.degraded.push_back(random_image(40, 40, seed + 2 * i));
    d.sharp.push_back(random_image(40, 40, seed + 2 * i + 1));
  }
  return d;
}

// Sharp patch: bright disc; degraded: the same disc smeared and flattened.
Batch fixed_batch() {
  Batch b;
  Image x(32, 32, 0.2f), y(32, 32, 0.0f);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      if ((r - 12) * (r - 12) + (c - 18) * (c - 18) < 36) x.at(r, c) = 0.9f;
      y.at(r, c) = 0.35f + 0.2f * std::exp(-((r - 16) * (r - 16) + (c - 14) * (c - 14)) / 60.0f);
    }
  b.y.push_back(y);
  b.x.push_back(x);
  return b;
}

std::vector<Tensor<float>> snapshot(const ParamSet<float>& p) {
  std::vector<Tensor<float>> out;
  for (const auto& [name, v] : p) out.push_back(v.value());
  return out;
}

bool same(const std::vector<LossReport>& a, const std::vector<LossReport>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].to_json() != b[i].to_json()) return false;
  return true;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(LrSchedule, FlatThenLinearRamp) {
  TrainConfig c;
  EXPECT_EQ(lr_schedule(0, c), 1e-4);
  EXPECT_EQ(lr_schedule(9, c), 1e-4);
  EXPECT_NEAR(lr_schedule(30, c), 5e-5, 1e-18);
  EXPECT_NEAR(lr_schedule(10, c), 1e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(49, c), 1e-4 / 40, 1e-18);
  EXPECT_THROW(lr_schedule(50, c), ArgumentError);
  EXPECT_THROW(lr_schedule(-1, c), ArgumentError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.decay_start_epoch = 50;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.patch_size = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  auto n = Networks<float>::init(usgan::testing::tiny_config(), 1);
  auto opt = Optimizers<float>::make(n, TrainConfig{});
  const auto g = snapshot(n.generator), c = snapshot(n.codegen), dx = snapshot(n.disc_x), dy = snapshot(n.disc_y);
  const auto r = train_step(n, opt, fixed_batch(), 0.0, LossWeights{});
  EXPECT_EQ(snapshot(n.generator), g);
  EXPECT_EQ(snapshot(n.codegen), c);
  EXPECT_EQ(snapshot(n.disc_x), dx);
  EXPECT_EQ(snapshot(n.disc_y), dy);
  EXPECT_GT(r.gen_adv, 0.0);
  EXPECT_GT(r.disc, 0.0);
  EXPECT_TRUE(std::isfinite(r.total_gen));
  EXPECT_EQ(r.cycle, 0.0);  // identity generator at init
}

TEST(TrainStep, OverfitsOneBatch) {
  PhantomSpec spec;
  spec.seed = 11;
  const Volume sharp = generate_sharp(spec);
  spec.seed = 12;
  const Volume deg = degrade(generate_sharp(spec), spec.degradation, 12);
  Batch b;
  b.y.push_back(extract_plane(deg, PlaneKind::A, 32).data);
  b.x.push_back(extract_plane(sharp, PlaneKind::A, 32).data);
  auto n = Networks<float>::init(usgan::testing::tiny_config(), 0);
  auto opt = Optimizers<float>::make(n, TrainConfig{});
  const double first = train_step(n, opt, b, 1e-4, LossWeights{}, 0).total_gen;
  double last = first;
  for (long s = 1; s < 200; ++s) last = train_step(n, opt, b, 1e-4, LossWeights{}, s).total_gen;
  EXPECT_LT(last, first);
}

TEST(TrainStep, DiscriminatorPhaseLeavesGenerator) {
  auto n = Networks<float>::init(usgan::testing::tiny_config(), 2);
  n.generator = usgan::testing::with_random_head(n.generator, 3);
  auto opt = Optimizers<float>::make(n, TrainConfig{});
  const auto b = fixed_batch();
  const auto code = codegen_forward_var(n.codegen, n.config.codegen, kAdainSites);
  const auto k = VarCode<float>::constant(constant_code_k<float>(n.config.generator.site_channels()));
  std::vector<Translation<float>> batch{translate(n, b.y[0], b.x[0], code, k)};
  const auto g = snapshot(n.generator), c = snapshot(n.codegen), dx = snapshot(n.disc_x);
  discriminator_phase(n, opt.disc, batch, 1e-3, 0);
  EXPECT_EQ(snapshot(n.generator), g);
  EXPECT_EQ(snapshot(n.codegen), c);
  EXPECT_NE(snapshot(n.disc_x), dx);
  for (const auto& [name, v] : n.generator) EXPECT_FALSE(v.has_grad()) << name;
  for (const auto& [name, v] : n.codegen) EXPECT_FALSE(v.has_grad()) << name;
}

TEST(TrainStep, GeneratorPhaseLeavesDiscriminators) {
  auto n = Networks<float>::init(usgan::testing::tiny_config(), 2);
  auto opt = Optimizers<float>::make(n, TrainConfig{});
  const auto b = fixed_batch();
  const auto code = codegen_forward_var(n.codegen, n.config.codegen, kAdainSites);
  const auto k = VarCode<float>::constant(constant_code_k<float>(n.config.generator.site_channels()));
  std::vector<Translation<float>> batch{translate(n, b.y[0], b.x[0], code, k)};
  const auto dx = snapshot(n.disc_x), dy = snapshot(n.disc_y), g = snapshot(n.generator);
  generator_phase(n, opt.gen, batch, LossWeights{}, 1e-3, 0);
  EXPECT_EQ(snapshot(n.disc_x), dx);
  EXPECT_EQ(snapshot(n.disc_y), dy);
  EXPECT_NE(snapshot(n.generator), g);
  for (const auto& [name, v] : n.disc_x) EXPECT_FALSE(v.has_grad()) << name;
}

TEST(TrainStep, KPathGivesNoCodeGeneratorGradient) {
  auto n = Networks<float>::init(usgan::testing::tiny_config(), 4);
  n.generator = usgan::testing::with_random_head(n.generator, 5);
  const auto b = fixed_batch();
  const auto code = codegen_forward_var(n.codegen, n.config.codegen, kAdainSites);
  const auto k = VarCode<float>::constant(constant_code_k<float>(n.config.generator.site_channels()));
  const auto t = translate(n, b.y[0], b.x[0], code, k);
  // Losses built only from K-path calls.
  backward(ops::add(lsgan_g_loss(discriminator_forward(n.disc_y, t.fake_y, "disc_y")),
                    identity_loss(t.y, t.id_y, t.y, t.id_y)));
  for (const auto& [name, v] : n.codegen) EXPECT_TRUE(!v.has_grad() || v.grad() == Tensor<float>(v.shape())) << name;
  bool generator_moved = false;
  for (const auto& [name, v] : n.generator) generator_moved |= v.has_grad();
  EXPECT_TRUE(generator_moved);

  // The code path does reach the code generator.
  n.generator.zero_grad();
  backward(lsgan_g_loss(discriminator_forward(n.disc_x, t.fake_x, "disc_x")));
  bool reached = false;
  for (const auto& [name, v] : n.codegen)
    if (v.has_grad())
      for (float x : v.grad().values()) reached |= x != 0.0f;
  EXPECT_TRUE(reached);
}

TEST(TrainStep, NonFiniteInputAborts) {
  auto n = Networks<float>::init(usgan::testing::tiny_config(), 1);
  auto opt = Optimizers<float>::make(n, TrainConfig{});
  auto b = fixed_batch();
  b.y[0].at(3, 3) = std::nanf("");
  try {
    train_step(n, opt, b, 1e-4, LossWeights{}, 17);
    FAIL();
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.step(), 17);
  }
}

TEST(Trainer, DeterministicLossStream) {
  const auto cfg = small_train(1);
  Trainer a(usgan::testing::tiny_config(), cfg, blobs(6, 1), {}, usgan::testing::temp_dir("a"));
  Trainer b(usgan::testing::tiny_config(), cfg, blobs(6, 1), {}, usgan::testing::temp_dir("b"));
  std::vector<LossReport> ra, rb;
  for (int i = 0; i < 4; ++i) {
    ra.push_back(a.run_step());
    rb.push_back(b.run_step());
  }
  EXPECT_TRUE(same(ra, rb));
}

TEST(Trainer, ResumeReproducesLossStream) {
  auto cfg = small_train(2);
  cfg.seed = 3;
  const auto root = usgan::testing::temp_dir("resume");
  Trainer full(usgan::testing::tiny_config(), cfg, blobs(4, 2), {}, root / "full");
  std::vector<LossReport> want;
  for (int i = 0; i < 7; ++i) want.push_back(full.run_step());

  Trainer first(usgan::testing::tiny_config(), cfg, blobs(4, 2), {}, root / "first");
  for (int i = 0; i < 2; ++i) first.run_step();
  first.save_state(root / "state");

  Trainer second(usgan::testing::tiny_config(), cfg, blobs(4, 2), {}, root / "second");
  second.load_state(root / "state");
  EXPECT_EQ(second.step(), 2);
  std::vector<LossReport> got(want.begin(), want.begin() + 2);
  for (int i = 0; i < 5; ++i) got.push_back(second.run_step());
  EXPECT_TRUE(same(got, want));
  ASSERT_EQ(second.history().size(), 1u);
  EXPECT_EQ(second.history()[0].mean.to_json(), full.history()[0].mean.to_json());
}

TEST(Trainer, LogsOneLinePerStep) {
  for (int batch : {1, 3}) {
    auto cfg = small_train(1);
    cfg.batch_size = batch;
    const auto dir = usgan::testing::temp_dir("log" + std::to_string(batch));
    Trainer t(usgan::testing::tiny_config(), cfg, blobs(10, 4), {}, dir);
    t.run();
    const auto lines = read_lines(dir / "train.log");
    EXPECT_EQ(lines.size(), batch == 1 ? 10u : 4u);
    const auto last = Json::parse(lines.back());
    for (const char* k : {"step", "epoch", "lr", "cycle", "identity", "gen_adv", "disc", "total_gen", "wall_time_s"}) EXPECT_TRUE(last.contains(k)) << k;
  }
}

TEST(Trainer, FinalManifestRecordsBestEpoch) {
  const auto dir = usgan::testing::temp_dir("best");
  std::vector<ImagePair> val{{random_image(32, 32, 50), random_image(32, 32, 51)}};
  auto cfg = small_train(3);
  cfg.checkpoint_every = 2;
  Trainer t(usgan::testing::tiny_config(), cfg, blobs(2, 5), val, dir);
  const auto final_dir = t.run();
  EXPECT_EQ(final_dir, dir / "final");
  EXPECT_TRUE(fs::exists(dir / "epoch_0002" / kManifestFile));
  EXPECT_TRUE(fs::exists(dir / "best" / kManifestFile));
  const auto m = read_manifest(final_dir);
  ASSERT_TRUE(m.contains("best_epoch"));
  ASSERT_TRUE(m["best_epoch"].is_number_integer());
  int argmax = 0;
  for (int e = 1; e < 3; ++e)
    if (*t.history()[e].val_psnr_db > *t.history()[argmax].val_psnr_db) argmax = e;
  EXPECT_EQ(m["best_epoch"].get<int>(), argmax);
  EXPECT_EQ(m["history"].size(), 3u);
}

TEST(Trainer, EmptySplitsAreConfigError) {
  EXPECT_THROW(Trainer(usgan::testing::tiny_config(), small_train(), UnpairedData{}, {}, usgan::testing::temp_dir("empty")), ConfigError);
}

// Default optimiser settings on a reduced model and patch size.
TEST(Trainer, FiveHundredFiniteSteps) {
  auto cfg = small_train(1);
  cfg.lr0 = 1e-4;
  Trainer t(usgan::testing::tiny_config(), cfg, blobs(500, 9), {}, usgan::testing::temp_dir("long"));
  for (int i = 0; i < 500; ++i) {
    const auto r = t.run_step();
    ASSERT_TRUE(std::isfinite(r.total_gen) && std::isfinite(r.disc)) << "step " << i;
  }
}
