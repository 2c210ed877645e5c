#pragma once

// Alternating adversarial training. Each step updates both discriminators
// on detached translations, then the generator and the code generator
// jointly through the freshly updated discriminators.

#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "usgan/checkpoint.hpp"
#include "usgan/losses.hpp"
#include "usgan/metrics.hpp"
#include "usgan/optim.hpp"
#include "usgan/phantom.hpp"

namespace usgan {

struct TrainConfig {
  double lr0 = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 50;
  int decay_start_epoch = 10;
  int batch_size = 1;
  int patch_size = 256;
  bool augment = true;
  LossWeights weights;
  std::uint64_t seed = 0;
  int checkpoint_every = 5;  // epochs; 0 disables periodic snapshots

  void validate() const {
    if (!(lr0 >= 0.0)) throw ConfigError("train.lr0 must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta1/beta2 must lie in [0,1)");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (decay_start_epoch < 0 || decay_start_epoch >= epochs) throw ConfigError("train.decay_start_epoch must lie in [0, epochs)");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (patch_size < 32 || patch_size % 8 != 0) throw ConfigError("train.patch_size must be a multiple of 8 and >= 32");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    weights.validate();
  }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline OrderedJson to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epochs", c.epochs},
          {"decay_start_epoch", c.decay_start_epoch},
          {"batch_size", c.batch_size},
          {"patch_size", c.patch_size},
          {"augment", c.augment},
          {"weights", {{"lambda_cyc", c.weights.lambda_cyc}, {"lambda_iden", c.weights.lambda_iden}}},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

inline void read_train_config(JsonFields& f, TrainConfig& c) {
  f.read("lr0", c.lr0)
      .read("beta1", c.beta1)
      .read("beta2", c.beta2)
      .read("epochs", c.epochs)
      .read("decay_start_epoch", c.decay_start_epoch)
      .read("batch_size", c.batch_size)
      .read("patch_size", c.patch_size)
      .read("augment", c.augment)
      .read("seed", c.seed)
      .read("checkpoint_every", c.checkpoint_every);
  f.section("weights", [&](JsonFields& w) { w.read("lambda_cyc", c.weights.lambda_cyc).read("lambda_iden", c.weights.lambda_iden); });
}

/// lr0 until decay_start_epoch, then linear decay reaching 0 at `epochs`.
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) throw ArgumentError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  if (epoch < cfg.decay_start_epoch) return cfg.lr0;
  return cfg.lr0 * static_cast<double>(cfg.epochs - epoch) / static_cast<double>(cfg.epochs - cfg.decay_start_epoch);
}

// ---------------------------------------------------------------------------
// One step

/// y: degraded patches, x: sharp patches.
struct Batch {
  std::vector<Image> y;
  std::vector<Image> x;
};

/// Every generator pass of one sample. fake_x = G(y, F) enhances, fake_y =
/// G(x, K) degrades.
template <typename T>
struct Translation {
  Var<T> y, x;
  Var<T> fake_x, fake_y;
  Var<T> cyc_y, cyc_x;
  Var<T> id_y, id_x;
};

template <typename T>
Translation<T> translate(const Networks<T>& n, const Image& y, const Image& x, const VarCode<T>& code, const VarCode<T>& k) {
  Translation<T> t;
  t.y = Var<T>::constant(to_tensor<T>(y));
  t.x = Var<T>::constant(to_tensor<T>(x));
  t.fake_x = generator_forward(n.generator, t.y, code);
  t.fake_y = generator_forward(n.generator, t.x, k);
  t.cyc_y = generator_forward(n.generator, t.fake_x, k);
  t.cyc_x = generator_forward(n.generator, t.fake_y, code);
  t.id_y = generator_forward(n.generator, t.y, k);
  t.id_x = generator_forward(n.generator, t.x, code);
  return t;
}

namespace detail {
inline void check_finite(double v, long step, const char* component) {
  if (!std::isfinite(v)) throw NonFiniteLossError(step, component, v);
}
}  // namespace detail

/// Updates disc_x and disc_y on detached translations. Returns the mean
/// discriminator loss over the batch.
template <typename T>
double discriminator_phase(Networks<T>& n, Adam<T>& opt, const std::vector<Translation<T>>& batch, double lr, long step) {
  std::vector<std::pair<T, Var<T>>> terms;
  const T scale = T(1) / static_cast<T>(batch.size());
  for (const auto& t : batch) {
    const Var<T> dy = lsgan_d_loss(discriminator_forward(n.disc_y, t.y, "disc_y"), discriminator_forward(n.disc_y, t.fake_y.detach(), "disc_y"));
    const Var<T> dx = lsgan_d_loss(discriminator_forward(n.disc_x, t.x, "disc_x"), discriminator_forward(n.disc_x, t.fake_x.detach(), "disc_x"));
    terms.emplace_back(scale, ops::add(dy, dx));
  }
  const Var<T> loss = ops::weighted_sum(terms);
  detail::check_finite(static_cast<double>(loss.item()), step, "disc");
  backward(loss);
  opt.step(lr);
  return static_cast<double>(loss.item());
}

/// Joint generator and code-generator update. Fills everything but `disc`.
template <typename T>
LossReport generator_phase(Networks<T>& n, Adam<T>& opt, const std::vector<Translation<T>>& batch, const LossWeights& w, double lr, long step) {
  std::vector<std::pair<T, Var<T>>> cyc_terms, adv_terms, id_terms;
  const T scale = T(1) / static_cast<T>(batch.size());
  for (const auto& t : batch) {
    cyc_terms.emplace_back(scale, cycle_loss(t.y, t.cyc_y, t.x, t.cyc_x));
    id_terms.emplace_back(scale, identity_loss(t.y, t.id_y, t.x, t.id_x));
    adv_terms.emplace_back(scale, ops::add(lsgan_g_loss(discriminator_forward(n.disc_x, t.fake_x, "disc_x")),
                                           lsgan_g_loss(discriminator_forward(n.disc_y, t.fake_y, "disc_y"))));
  }
  const Var<T> cyc = ops::weighted_sum(cyc_terms), adv = ops::weighted_sum(adv_terms), iden = ops::weighted_sum(id_terms);
  const Var<T> total = total_generator_loss(cyc, adv, iden, w);
  LossReport r;
  r.cycle = static_cast<double>(cyc.item());
  r.identity = static_cast<double>(iden.item());
  r.gen_adv = static_cast<double>(adv.item());
  r.total_gen = static_cast<double>(total.item());
  detail::check_finite(r.cycle, step, "cycle");
  detail::check_finite(r.identity, step, "identity");
  detail::check_finite(r.gen_adv, step, "gen_adv");
  detail::check_finite(r.total_gen, step, "total_gen");
  backward(total);
  opt.step(lr);
  // Gradients that reached the discriminators belong to no update.
  n.disc_x.zero_grad();
  n.disc_y.zero_grad();
  return r;
}

/// Optimiser state for both players.
template <typename T>
struct Optimizers {
  Adam<T> disc;
  Adam<T> gen;

  static Optimizers make(Networks<T>& n, const TrainConfig& cfg) {
    const AdamConfig ac{cfg.beta1, cfg.beta2, 1e-8};
    return {Adam<T>({&n.disc_x, &n.disc_y}, ac), Adam<T>({&n.generator, &n.codegen}, ac)};
  }
};

/// One full training step on a batch.
template <typename T>
LossReport train_step(Networks<T>& n, Optimizers<T>& opt, const Batch& b, double lr, const LossWeights& w, long step = 0) {
  if (b.y.empty() || b.y.size() != b.x.size()) throw ArgumentError("train_step: batch needs equally many degraded and sharp patches");
  const VarCode<T> code = codegen_forward_var(n.codegen, n.config.codegen, kAdainSites);
  const VarCode<T> k = VarCode<T>::constant(constant_code_k<T>(n.config.generator.site_channels()));
  std::vector<Translation<T>> batch;
  for (std::size_t i = 0; i < b.y.size(); ++i) batch.push_back(translate(n, b.y[i], b.x[i], code, k));
  const double d = discriminator_phase(n, opt.disc, batch, lr, step);
  LossReport r = generator_phase(n, opt.gen, batch, w, lr, step);
  r.disc = d;
  return r;
}

// ---------------------------------------------------------------------------
// Data sampling

/// Draws one degraded and one sharp patch per sample from two independent
/// seeded streams.
class PatchSampler {
 public:
  PatchSampler(const UnpairedData* data, int patch, bool augment, std::uint64_t seed)
      : data_(data), patch_(patch), augment_(augment), deg_rng_(seed * 2 + 1), sharp_rng_(seed * 2 + 2) {}

  Batch next(int batch_size) {
    Batch b;
    for (int i = 0; i < batch_size; ++i) {
      b.y.push_back(draw(data_->degraded, deg_rng_));
      b.x.push_back(draw(data_->sharp, sharp_rng_));
    }
    return b;
  }

  std::string state() const {
    std::ostringstream os;
    os << deg_rng_ << ' ' << sharp_rng_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> deg_rng_ >> sharp_rng_;
    if (!is) throw IoError("corrupt sampler state");
  }

 private:
  Image draw(const std::vector<Image>& pool, std::mt19937_64& rng) {
    const auto idx = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const std::uint64_t patch_seed = rng();
    return extract_patches(pool[idx], patch_, 1, patch_seed, augment_).front().data;
  }

  const UnpairedData* data_;
  int patch_;
  bool augment_;
  std::mt19937_64 deg_rng_, sharp_rng_;
};

// ---------------------------------------------------------------------------
// Training run

/// Mean PSNR of the alpha = 1 enhancement against the paired sharp images.
inline double validation_psnr(const Networks<float>& n, const std::vector<ImagePair>& pairs) {
  const auto model = Model::from_networks(n, "");
  double s = 0;
  for (const auto& p : pairs) s += psnr(enhance(*model, p.degraded, 1.0), p.sharp);
  return pairs.empty() ? 0.0 : s / static_cast<double>(pairs.size());
}

struct EpochSummary {
  int epoch = 0;
  LossReport mean;
  std::optional<double> val_psnr_db;
};

/// Resumable single-process trainer writing to `out_dir`:
///   train.log               JSON lines, one per step
///   epoch_XXXX/, best/, final/   checkpoints
///   state/                  checkpoint plus optimiser and sampler state
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig cfg, UnpairedData data, std::vector<ImagePair> validation, std::filesystem::path out_dir)
      : cfg_(cfg), data_(std::move(data)), val_(std::move(validation)), out_(std::move(out_dir)) {
    cfg_.validate();
    model.validate();
    if (data_.degraded.empty() || data_.sharp.empty()) throw ConfigError("training needs nonempty degraded and sharp splits");
    nets_ = Networks<float>::init(model, cfg_.seed);
    opt_ = Optimizers<float>::make(nets_, cfg_);
    sampler_ = std::make_unique<PatchSampler>(&data_, cfg_.patch_size, cfg_.augment, cfg_.seed);
    std::filesystem::create_directories(out_);
  }
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  long steps_per_epoch() const { return static_cast<long>((data_.degraded.size() + cfg_.batch_size - 1) / cfg_.batch_size); }
  long total_steps() const { return steps_per_epoch() * cfg_.epochs; }
  long step() const noexcept { return step_; }
  int epoch() const noexcept { return static_cast<int>(step_ / steps_per_epoch()); }
  bool done() const { return step_ >= total_steps(); }
  const Networks<float>& networks() const noexcept { return nets_; }
  const std::vector<EpochSummary>& history() const noexcept { return history_; }
  const std::vector<LossReport>& epoch_reports() const noexcept { return current_; }
  std::optional<int> best_epoch() const noexcept { return best_epoch_; }

  /// Runs one step; closes the epoch (validation, snapshots) when it ends.
  LossReport run_step() {
    if (done()) throw ArgumentError("training already finished");
    const int ep = epoch();
    const double lr = lr_schedule(ep, cfg_);
    const auto t0 = std::chrono::steady_clock::now();
    const Batch b = sampler_->next(cfg_.batch_size);
    const LossReport r = train_step(nets_, opt_, b, lr, cfg_.weights, step_);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++step_;
    current_.push_back(r);
    OrderedJson line{{"step", step_}, {"epoch", ep}, {"lr", lr}};
    const auto losses = r.to_json();
    for (auto& [k, v] : losses.items()) line[k] = v;
    line["wall_time_s"] = secs;
    append_log(line);
    if (step_ % steps_per_epoch() == 0) close_epoch(ep);
    return r;
  }

  /// Trains to the end and returns the final checkpoint directory.
  std::filesystem::path run(const std::function<void(const EpochSummary&)>& on_epoch = {}) {
    std::size_t seen = history_.size();
    while (!done()) {
      run_step();
      if (on_epoch && history_.size() > seen) on_epoch(history_.back());
      seen = history_.size();
    }
    return out_ / "final";
  }

  /// Saves everything needed to continue bit-identically.
  void save_state(const std::filesystem::path& dir) const {
    save_checkpoint(dir, nets_, meta());
    Bytes blob;
    auto put = [&](const std::vector<std::vector<float>>& moments) {
      for (const auto& m : moments) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(m.data());
        blob.insert(blob.end(), p, p + m.size() * sizeof(float));
      }
    };
    put(opt_.disc.first_moments());
    put(opt_.disc.second_moments());
    put(opt_.gen.first_moments());
    put(opt_.gen.second_moments());
    write_file(dir / "train_state.bin", blob);
    OrderedJson st{{"step", step_},
                   {"adam_disc_steps", opt_.disc.steps()},
                   {"adam_gen_steps", opt_.gen.steps()},
                   {"sampler", sampler_->state()},
                   {"state_checksum", hex32(crc32_of(blob.data(), blob.size()))},
                   {"epoch_reports", OrderedJson::array()}};
    for (const auto& r : current_) st["epoch_reports"].push_back(r.to_json());
    const std::string text = st.dump(2) + "\n";
    write_file(dir / "train_state.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  void load_state(const std::filesystem::path& dir) {
    Checkpoint ck = load_checkpoint(dir);
    if (!(ck.meta.config == nets_.config)) throw ConfigError("saved state was trained with a different model config");
    nets_ = std::move(ck.nets);
    opt_ = Optimizers<float>::make(nets_, cfg_);
    std::ifstream in(dir / "train_state.json");
    if (!in) throw IoError("missing " + (dir / "train_state.json").string());
    const OrderedJson st = OrderedJson::parse(in);
    const Bytes blob = read_file(dir / "train_state.bin");
    if (st.at("state_checksum") != hex32(crc32_of(blob.data(), blob.size()))) throw IoError("train_state.bin checksum mismatch");
    std::size_t off = 0;
    auto get = [&](std::vector<std::vector<float>>& moments) {
      for (auto& m : moments) {
        const std::size_t bytes = m.size() * sizeof(float);
        if (off + bytes > blob.size()) throw IoError("train_state.bin is truncated");
        std::memcpy(m.data(), blob.data() + off, bytes);
        off += bytes;
      }
    };
    get(opt_.disc.first_moments());
    get(opt_.disc.second_moments());
    get(opt_.gen.first_moments());
    get(opt_.gen.second_moments());
    opt_.disc.set_steps(st.at("adam_disc_steps").get<long>());
    opt_.gen.set_steps(st.at("adam_gen_steps").get<long>());
    sampler_->set_state(st.at("sampler").get<std::string>());
    step_ = st.at("step").get<long>();
    current_.clear();
    for (const auto& r : st.at("epoch_reports"))
      current_.push_back({r.at("cycle").get<double>(), r.at("identity").get<double>(), r.at("gen_adv").get<double>(), r.at("disc").get<double>(),
                          r.at("total_gen").get<double>()});
    history_.clear();
    best_epoch_.reset();
    best_psnr_ = -std::numeric_limits<double>::infinity();
    if (ck.meta.extra.contains("history"))
      for (const auto& h : ck.meta.extra["history"]) {
        EpochSummary s;
        s.epoch = h.at("epoch").get<int>();
        const auto& l = h.at("loss");
        s.mean = {l.at("cycle").get<double>(), l.at("identity").get<double>(), l.at("gen_adv").get<double>(), l.at("disc").get<double>(),
                  l.at("total_gen").get<double>()};
        if (h.contains("val_psnr_db") && !h["val_psnr_db"].is_null()) s.val_psnr_db = h["val_psnr_db"].get<double>();
        history_.push_back(s);
      }
    if (ck.meta.extra.contains("best_epoch") && !ck.meta.extra["best_epoch"].is_null()) {
      best_epoch_ = ck.meta.extra["best_epoch"].get<int>();
      best_psnr_ = ck.meta.extra.value("best_val_psnr_db", best_psnr_);
    }
  }

 private:
  CheckpointMeta meta() const {
    CheckpointMeta m;
    m.config = nets_.config;
    m.step = step_;
    m.epoch = epoch();
    m.seed = cfg_.seed;
    m.extra["train_config"] = to_json(cfg_);
    m.extra["best_epoch"] = best_epoch_ ? OrderedJson(*best_epoch_) : OrderedJson(nullptr);
    if (best_epoch_) m.extra["best_val_psnr_db"] = best_psnr_;
    OrderedJson hist = OrderedJson::array();
    for (const auto& h : history_)
      hist.push_back({{"epoch", h.epoch}, {"loss", h.mean.to_json()}, {"val_psnr_db", h.val_psnr_db ? OrderedJson(*h.val_psnr_db) : OrderedJson(nullptr)}});
    m.extra["history"] = std::move(hist);
    return m;
  }

  void append_log(const OrderedJson& line) const {
    std::ofstream log(out_ / "train.log", std::ios::app);
    log << line.dump() << '\n';
  }

  void close_epoch(int ep) {
    EpochSummary s;
    s.epoch = ep;
    for (const auto& r : current_) {
      s.mean.cycle += r.cycle;
      s.mean.identity += r.identity;
      s.mean.gen_adv += r.gen_adv;
      s.mean.disc += r.disc;
      s.mean.total_gen += r.total_gen;
    }
    const double n = static_cast<double>(current_.size());
    s.mean.cycle /= n;
    s.mean.identity /= n;
    s.mean.gen_adv /= n;
    s.mean.disc /= n;
    s.mean.total_gen /= n;
    current_.clear();
    if (!val_.empty()) {
      s.val_psnr_db = validation_psnr(nets_, val_);
      if (*s.val_psnr_db > best_psnr_) {
        best_psnr_ = *s.val_psnr_db;
        best_epoch_ = ep;
      }
    }
    history_.push_back(s);
    spdlog::info("epoch {} done: total_gen {:.4f} cycle {:.4f} identity {:.4f} gen_adv {:.4f} disc {:.4f}{}", ep, s.mean.total_gen, s.mean.cycle,
                 s.mean.identity, s.mean.gen_adv, s.mean.disc, s.val_psnr_db ? fmt::format(" val_psnr {:.3f} dB", *s.val_psnr_db) : "");
    if (best_epoch_ == ep) save_checkpoint(out_ / "best", nets_, meta());
    if (cfg_.checkpoint_every > 0 && (ep + 1) % cfg_.checkpoint_every == 0) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "epoch_%04d", ep + 1);
      save_checkpoint(out_ / buf, nets_, meta());
    }
    if (done()) save_checkpoint(out_ / "final", nets_, meta());
  }

  TrainConfig cfg_;
  UnpairedData data_;
  std::vector<ImagePair> val_;
  std::filesystem::path out_;
  Networks<float> nets_;
  Optimizers<float> opt_;
  std::unique_ptr<PatchSampler> sampler_;
  long step_ = 0;
  std::vector<LossReport> current_;
  std::vector<EpochSummary> history_;
  std::optional<int> best_epoch_;
  double best_psnr_ = -std::numeric_limits<double>::infinity();
};

/// Trains on a dataset directory and returns the final checkpoint path.
/// The paired split is used only to pick the best epoch.
inline std::filesystem::path run_training(const DatasetManifest& manifest, const ModelConfig& model, const TrainConfig& cfg,
                                          const std::filesystem::path& out_dir) {
  Trainer t(model, cfg, load_unpaired(manifest), load_eval_pairs(manifest), out_dir);
  return t.run();
}

}  // namespace usgan
