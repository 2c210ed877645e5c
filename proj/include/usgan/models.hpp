#pragma once

// The three networks: the AdaIN-switched residual U-Net generator, the
// PatchGAN discriminator and the AdaIN code generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "usgan/adain.hpp"
#include "usgan/ops.hpp"
#include "usgan/params.hpp"

namespace usgan {

struct GeneratorConfig {
  int base_channels = 64;
  int levels = 3;
  int adain_sites = kAdainSites;
  int in_channels = 1;
  int out_channels = 1;

  void validate() const {
    if (base_channels < 1) throw ConfigError("generator.base_channels must be >= 1");
    if (levels != 3) throw ConfigError("generator.levels must be 3");
    if (adain_sites != kAdainSites) throw ConfigError("generator.adain_sites must be 9");
    if (in_channels != 1 || out_channels != 1) throw ConfigError("generator in/out channels must be 1");
  }

  /// Channel count at each AdaIN site: three encoder levels, three
  /// bottleneck residual blocks, three decoder levels.
  std::vector<int> site_channels() const {
    const int c = base_channels;
    return {c, 2 * c, 4 * c, 4 * c, 4 * c, 4 * c, 2 * c, c, c};
  }

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct DiscriminatorConfig {
  int base_channels = 64;

  void validate() const {
    if (base_channels < 1) throw ConfigError("discriminator.base_channels must be >= 1");
  }
  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

struct CodeGenConfig {
  int input_dim = 128;
  int hidden_layers = 4;
  int hidden_width = 128;

  void validate() const {
    if (input_dim < 1 || hidden_layers < 1 || hidden_width < 1) throw ConfigError("codegen dimensions must be >= 1");
  }
  friend bool operator==(const CodeGenConfig&, const CodeGenConfig&) = default;
};

struct ModelConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  CodeGenConfig codegen;

  void validate() const {
    generator.validate();
    discriminator.validate();
    codegen.validate();
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kLeakySlope = 0.2;

// ---------------------------------------------------------------------------
// Parameter layout and initialisation

struct ConvSpec {
  std::string name;
  int cin, cout, kernel;
};

inline std::vector<ConvSpec> generator_layout(const GeneratorConfig& cfg) {
  const int c = cfg.base_channels;
  std::vector<ConvSpec> l{{"stem", 1, c, 3}, {"down1", c, c, 3}, {"down2", c, 2 * c, 3}, {"down3", 2 * c, 4 * c, 3}};
  for (int i = 0; i < 3; ++i) {
    l.push_back({"res" + std::to_string(i) + ".conv1", 4 * c, 4 * c, 3});
    l.push_back({"res" + std::to_string(i) + ".conv2", 4 * c, 4 * c, 3});
  }
  l.push_back({"up1.conv", 4 * c, 2 * c, 3});
  l.push_back({"up1.merge", 4 * c, 2 * c, 3});
  l.push_back({"up2.conv", 2 * c, c, 3});
  l.push_back({"up2.merge", 2 * c, c, 3});
  l.push_back({"up3.conv", c, c, 3});
  l.push_back({"up3.merge", 2 * c, c, 3});
  l.push_back({"head", c, 1, 3});
  return l;
}

inline std::vector<ConvSpec> discriminator_layout(const DiscriminatorConfig& cfg) {
  const int c = cfg.base_channels;
  return {{"conv1", 1, c, 4}, {"conv2", c, 2 * c, 4}, {"conv3", 2 * c, 4 * c, 4}, {"conv4", 4 * c, 8 * c, 4}, {"out", 8 * c, 1, 4}};
}

namespace detail {
template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

// He initialisation for a leaky-ReLU network.
inline double he_std(int fan_in) { return std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope) / fan_in); }

template <typename T>
void add_conv(ParamSet<T>& p, const std::string& prefix, const ConvSpec& s, std::mt19937_64& rng, bool zero) {
  Shape ws{s.cout, s.cin, s.kernel, s.kernel};
  p.add(prefix + s.name + ".weight", zero ? Tensor<T>(ws) : normal_tensor<T>(ws, he_std(s.cin * s.kernel * s.kernel), rng));
  p.add(prefix + s.name + ".bias", Tensor<T>({s.cout}));
}
}  // namespace detail

/// Seeded generator parameters. The final convolution starts at zero so the
/// network is the identity map until trained.
template <typename T>
ParamSet<T> init_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet<T> p;
  for (const auto& s : generator_layout(cfg)) detail::add_conv(p, "generator.", s, rng, s.name == "head");
  return p;
}

template <typename T>
ParamSet<T> init_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed, const std::string& prefix) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet<T> p;
  for (const auto& s : discriminator_layout(cfg)) detail::add_conv(p, prefix + ".", s, rng, false);
  return p;
}

/// Code generator: a shared fully connected trunk fed with the constant
/// all-ones vector, then one (mean, variance) head pair per AdaIN site. The
/// variance heads start near 1 and the mean heads near 0, so the initial
/// code is close to K.
template <typename T>
ParamSet<T> init_codegen(const CodeGenConfig& cfg, const std::vector<int>& site_channels, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  ParamSet<T> p;
  int in = cfg.input_dim;
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    const std::string n = "codegen.fc" + std::to_string(i);
    p.add(n + ".weight", detail::normal_tensor<T>({cfg.hidden_width, in}, std::sqrt(2.0 / in), rng));
    p.add(n + ".bias", Tensor<T>({cfg.hidden_width}));
    in = cfg.hidden_width;
  }
  const double head_std = 0.1 / std::sqrt(static_cast<double>(in));
  for (std::size_t s = 0; s < site_channels.size(); ++s) {
    const std::string n = "codegen.site" + std::to_string(s);
    const int c = site_channels[s];
    p.add(n + ".mean.weight", detail::normal_tensor<T>({c, in}, head_std, rng));
    p.add(n + ".mean.bias", Tensor<T>({c}));
    p.add(n + ".var.weight", detail::normal_tensor<T>({c, in}, head_std, rng));
    p.add(n + ".var.bias", Tensor<T>({c}, T(1)));
  }
  return p;
}

/// All learnable state of the switchable CycleGAN.
template <typename T>
struct Networks {
  ModelConfig config;
  ParamSet<T> generator;
  ParamSet<T> codegen;
  ParamSet<T> disc_x;  // judges the sharp domain
  ParamSet<T> disc_y;  // judges the degraded domain

  static Networks init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Networks n;
    n.config = cfg;
    std::seed_seq seq{seed, std::uint64_t{0x5eed}};
    std::vector<std::uint64_t> sub(4);
    seq.generate(sub.begin(), sub.end());
    n.generator = init_generator<T>(cfg.generator, sub[0]);
    n.codegen = init_codegen<T>(cfg.codegen, cfg.generator.site_channels(), sub[1]);
    n.disc_x = init_discriminator<T>(cfg.discriminator, sub[2], "disc_x");
    n.disc_y = init_discriminator<T>(cfg.discriminator, sub[3], "disc_y");
    return n;
  }

  Networks clone() const { return {config, generator.clone(), codegen.clone(), disc_x.clone(), disc_y.clone()}; }
};

// ---------------------------------------------------------------------------
// Code generator

/// Code whose entries may carry gradients back to the code generator.
template <typename T>
struct VarCode {
  std::vector<Var<T>> mu;
  std::vector<Var<T>> sigma;

  static VarCode constant(const AdaInCode<T>& code) {
    VarCode v;
    for (const auto& s : code.sites) {
      v.mu.push_back(Var<T>::constant(Tensor<T>({s.channels()}, s.mu)));
      v.sigma.push_back(Var<T>::constant(Tensor<T>({s.channels()}, s.sigma)));
    }
    return v;
  }

  AdaInCode<T> values() const {
    AdaInCode<T> code;
    for (std::size_t i = 0; i < mu.size(); ++i) code.sites.push_back({mu[i].value().storage(), sigma[i].value().storage()});
    return code;
  }
};

template <typename T>
VarCode<T> codegen_forward_var(const ParamSet<T>& p, const CodeGenConfig& cfg, int sites) {
  Var<T> h = Var<T>::constant(Tensor<T>({cfg.input_dim}, T(1)));
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    const std::string n = "codegen.fc" + std::to_string(i);
    h = ops::linear(h, p[n + ".weight"], p[n + ".bias"]);
    if (i + 1 < cfg.hidden_layers) h = ops::relu(h);
  }
  VarCode<T> code;
  for (int s = 0; s < sites; ++s) {
    const std::string n = "codegen.site" + std::to_string(s);
    code.mu.push_back(ops::linear(h, p[n + ".mean.weight"], p[n + ".mean.bias"]));
    code.sigma.push_back(ops::sqrt_relu(ops::linear(h, p[n + ".var.weight"], p[n + ".var.bias"])));
  }
  return code;
}

template <typename T>
AdaInCode<T> codegen_forward(const ParamSet<T>& p, const CodeGenConfig& cfg = {}, int sites = kAdainSites) {
  NoGradGuard guard;
  return codegen_forward_var(p, cfg, sites).values();
}

// ---------------------------------------------------------------------------
// Generator

namespace detail {

template <typename T>
Var<T> conv(const ParamSet<T>& p, const std::string& name, const Var<T>& x, int stride) {
  const auto& w = p["generator." + name + ".weight"];
  return ops::conv2d(x, w, p["generator." + name + ".bias"], stride, w.shape()[2] / 2);
}

/// Generator body. `norm(z, site)` normalises z; site is the AdaIN site index
/// or -1 for a plain instance normalisation.
template <typename T, typename Norm>
Var<T> generator_body(const ParamSet<T>& p, const Var<T>& y, Norm&& norm) {
  const T slope = static_cast<T>(kLeakySlope);
  auto act = [slope](const Var<T>& v) { return ops::leaky_relu(v, slope); };

  Var<T> s0 = act(norm(conv(p, "stem", y, 1), -1));
  Var<T> d1 = act(norm(conv(p, "down1", s0, 2), 0));
  Var<T> d2 = act(norm(conv(p, "down2", d1, 2), 1));
  Var<T> h = act(norm(conv(p, "down3", d2, 2), 2));
  for (int i = 0; i < 3; ++i) {
    const std::string r = "res" + std::to_string(i);
    Var<T> t = act(norm(conv(p, r + ".conv1", h, 1), 3 + i));
    t = norm(conv(p, r + ".conv2", t, 1), -1);
    h = ops::add(h, t);
  }
  const Var<T>* skips[3] = {&d2, &d1, &s0};
  for (int u = 0; u < 3; ++u) {
    const std::string n = "up" + std::to_string(u + 1);
    Var<T> t = act(norm(conv(p, n + ".conv", ops::upsample2x(h), 1), 6 + u));
    h = act(norm(conv(p, n + ".merge", ops::concat_channels(t, *skips[u]), 1), -1));
  }
  return ops::add(y, conv(p, "head", h, 1));
}

inline void check_generator_input(const Shape& s) {
  if (s.size() != 3 || s[0] != 1) throw ShapeError("generator expects a [1,H,W] image, got " + shape_str(s));
  if (s[1] % 8 != 0 || s[2] % 8 != 0 || s[1] == 0 || s[2] == 0)
    throw ShapeError("generator input " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                     " must have extents that are multiples of 8; pad the image first (see pad_to_multiple)");
}

template <typename T>
class UnitCodeCache {
 public:
  const Var<T>& zeros(int c) { return get(zeros_, c, T(0)); }
  const Var<T>& ones(int c) { return get(ones_, c, T(1)); }

 private:
  const Var<T>& get(std::map<int, Var<T>>& m, int c, T v) {
    auto it = m.find(c);
    if (it == m.end()) it = m.emplace(c, Var<T>::constant(Tensor<T>({c}, v))).first;
    return it->second;
  }
  std::map<int, Var<T>> zeros_, ones_;
};

}  // namespace detail

/// Differentiable generator pass y + f(y, code). The output is unclamped.
template <typename T>
Var<T> generator_forward(const ParamSet<T>& p, const Var<T>& y, const VarCode<T>& code) {
  detail::check_generator_input(y.shape());
  if (code.mu.size() != kAdainSites) throw ShapeError("generator needs a 9-site code");
  const T eps = static_cast<T>(kAdainEps);
  detail::UnitCodeCache<T> units;
  return detail::generator_body<T>(p, y, [&](const Var<T>& z, int site) {
    if (site < 0) return adain(z, units.zeros(z.shape()[0]), units.ones(z.shape()[0]), eps);
    return adain(z, code.mu[static_cast<std::size_t>(site)], code.sigma[static_cast<std::size_t>(site)], eps);
  });
}

/// Inference pass with a fixed code.
template <typename T>
Tensor<T> generator_forward(const ParamSet<T>& p, const Tensor<T>& y, const AdaInCode<T>& code) {
  code.validate();
  NoGradGuard guard;
  return generator_forward(p, Var<T>::constant(y), VarCode<T>::constant(code)).value();
}

/// Instance statistics of every normalisation layer, in call order.
template <typename T>
using NormTrace = std::vector<InstanceStats<T>>;

/// Inference pass with a fixed code that also records the statistics seen by
/// every normalisation layer.
template <typename T>
Tensor<T> generator_forward_traced(const ParamSet<T>& p, const Tensor<T>& y, const AdaInCode<T>& code, NormTrace<T>& trace) {
  code.validate();
  detail::check_generator_input(y.shape());
  NoGradGuard guard;
  const VarCode<T> vcode = VarCode<T>::constant(code);
  const T eps = static_cast<T>(kAdainEps);
  detail::UnitCodeCache<T> units;
  trace.clear();
  return detail::generator_body<T>(p, Var<T>::constant(y), [&](const Var<T>& z, int site) {
           trace.push_back(instance_stats(z.value()));
           if (site < 0) return adain(z, units.zeros(z.shape()[0]), units.ones(z.shape()[0]), eps);
           return adain(z, vcode.mu[static_cast<std::size_t>(site)], vcode.sigma[static_cast<std::size_t>(site)], eps);
         })
      .value();
}

/// Spatially controlled pass. Each AdaIN site blends the K-path and the
/// code-path per pixel with the field area-averaged to that site's
/// resolution. Normalisation statistics come from reference passes at the
/// anchor alphas (every distinct field value, or a uniform grid when the
/// field is too finely graded), interpolated per pixel in a(p), so
/// features far from a region boundary match the global pass at that alpha.
template <typename T>
Tensor<T> generator_forward_spatial(const ParamSet<T>& p, const Tensor<T>& y, const AdaInCode<T>& code, const Grid<double>& field,
                                    std::size_t max_anchors = 16) {
  code.validate();
  detail::check_generator_input(y.shape());
  if (field.rows() != y.dim(1) || field.cols() != y.dim(2))
    throw ShapeError("alpha field " + extent_str(field.rows(), field.cols()) + " does not match image " + shape_str(y.shape()));

  std::vector<double> anchors(field.pixels().begin(), field.pixels().end());
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
  if (anchors.size() > max_anchors) {
    const std::size_t n = std::max<std::size_t>(max_anchors, 2);
    anchors.clear();
    for (std::size_t i = 0; i < n; ++i) anchors.push_back(static_cast<double>(i) / static_cast<double>(n - 1));
  }

  std::vector<AnchoredStats<T>> per_layer;
  for (double a : anchors) {
    NormTrace<T> trace;
    generator_forward_traced(p, y, interpolate_code(code, a), trace);
    if (per_layer.empty()) per_layer.resize(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      per_layer[i].alphas.push_back(a);
      per_layer[i].stats.push_back(std::move(trace[i]));
    }
  }

  NoGradGuard guard;
  const T eps = static_cast<T>(kAdainEps);
  std::map<std::pair<int, int>, Grid<double>> grids;
  std::size_t layer = 0;
  return detail::generator_body<T>(p, Var<T>::constant(y), [&](const Var<T>& z, int site) {
           const int h = z.shape()[1], w = z.shape()[2];
           auto it = grids.find({h, w});
           if (it == grids.end()) it = grids.emplace(std::pair{h, w}, downsample_area(field, h, w)).first;
           const CodeSite<T>* cs = site < 0 ? nullptr : &code.sites[static_cast<std::size_t>(site)];
           return Var<T>::constant(anchored_adain_at(z.value(), cs, it->second, per_layer.at(layer++), eps));
         })
      .value();
}

// ---------------------------------------------------------------------------
// Discriminator

/// PatchGAN: three 4x4 stride-2 convolutions, one 4x4 stride-1, then a 4x4
/// stride-1 projection to one channel; padding 1 throughout.
template <typename T>
Var<T> discriminator_forward(const ParamSet<T>& p, const Var<T>& x, const std::string& prefix) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[0] != 1) throw ShapeError("discriminator expects [1,H,W], got " + shape_str(s));
  if (s[1] < 32 || s[2] < 32) throw ShapeError("discriminator input must be at least 32x32, got " + shape_str(s));
  const T slope = static_cast<T>(kLeakySlope);
  auto conv = [&](const std::string& n, const Var<T>& v, int stride) {
    return ops::conv2d(v, p[prefix + "." + n + ".weight"], p[prefix + "." + n + ".bias"], stride, 1);
  };
  Var<T> h = ops::leaky_relu(conv("conv1", x, 2), slope);
  h = ops::leaky_relu(conv("conv2", h, 2), slope);
  h = ops::leaky_relu(conv("conv3", h, 2), slope);
  h = ops::leaky_relu(conv("conv4", h, 1), slope);
  return conv("out", h, 1);
}

template <typename T>
Tensor<T> discriminator_forward(const ParamSet<T>& p, const Tensor<T>& x, const std::string& prefix) {
  NoGradGuard guard;
  return discriminator_forward(p, Var<T>::constant(x), prefix).value();
}

/// Closed-form PatchGAN output extent for one spatial axis.
inline int discriminator_output_extent(int n) {
  for (int stride : {2, 2, 2, 1, 1}) n = (n + 2 - 4) / stride + 1;
  return n;
}

}  // namespace usgan
