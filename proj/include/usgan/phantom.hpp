#pragma once

// Synthetic ultrasound-like volumes. A sharp phantom is a speckled
// background holding anechoic ellipsoids with bright walls; degradation
// blurs (strongest along elevation), decimates the elevation axis, adds
// lateral sidelobe haze and flattens contrast.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "usgan/imaging.hpp"
#include "usgan/json_util.hpp"
#include "usgan/png_io.hpp"

namespace usgan {

struct DegradationSpec {
  double blur_sigma_elevation = 2.5;
  double blur_sigma_lateral = 1.0;
  int elevation_decimation = 3;
  double sidelobe_strength = 0.15;
  double contrast_gamma = 1.6;  // >1 flattens contrast about 0.5

  void validate() const {
    if (!(blur_sigma_elevation >= 0.0) || !(blur_sigma_lateral >= 0.0)) throw ConfigError("degradation blur sigmas must be >= 0");
    if (blur_sigma_elevation < blur_sigma_lateral) throw ConfigError("degradation: blur_sigma_elevation must be >= blur_sigma_lateral");
    if (elevation_decimation < 1) throw ConfigError("degradation: elevation_decimation must be >= 1");
    if (!(sidelobe_strength >= 0.0)) throw ConfigError("degradation: sidelobe_strength must be >= 0");
    if (!(contrast_gamma > 0.0)) throw ConfigError("degradation: contrast_gamma must be > 0");
  }

  static DegradationSpec identity() { return {0.0, 0.0, 1, 0.0, 1.0}; }
  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

struct PhantomSpec {
  std::uint64_t seed = 0;
  int n_structures = 4;
  std::array<int, 3> extent{64, 64, 64};  // axial, lateral, elevation
  double speckle_strength = 0.5;
  DegradationSpec degradation;

  void validate() const {
    if (n_structures < 0) throw ConfigError("phantom: n_structures must be >= 0");
    for (int e : extent)
      if (e < Volume::kMinExtent) throw ConfigError("phantom: every extent must be >= " + std::to_string(Volume::kMinExtent));
    if (!(speckle_strength >= 0.0)) throw ConfigError("phantom: speckle_strength must be >= 0");
    degradation.validate();
  }
  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

inline constexpr float kBackgroundLevel = 0.4f;
inline constexpr float kInteriorLevel = 0.05f;
inline constexpr float kWallLevel = 0.95f;
/// Every wall voxel lies above this value and nothing else does.
inline constexpr float kWallThreshold = 0.8f;

inline OrderedJson to_json(const DegradationSpec& d) {
  return {{"blur_sigma_elevation", d.blur_sigma_elevation},
          {"blur_sigma_lateral", d.blur_sigma_lateral},
          {"elevation_decimation", d.elevation_decimation},
          {"sidelobe_strength", d.sidelobe_strength},
          {"contrast_gamma", d.contrast_gamma}};
}

inline OrderedJson to_json(const PhantomSpec& s) {
  return {{"seed", s.seed},
          {"n_structures", s.n_structures},
          {"extent", s.extent},
          {"speckle_strength", s.speckle_strength},
          {"degradation", to_json(s.degradation)}};
}

inline void read_phantom_spec(JsonFields& f, PhantomSpec& s) {
  f.read("seed", s.seed).read("n_structures", s.n_structures).read("extent", s.extent).read("speckle_strength", s.speckle_strength);
  f.section("degradation", [&](JsonFields& d) {
    d.read("blur_sigma_elevation", s.degradation.blur_sigma_elevation)
        .read("blur_sigma_lateral", s.degradation.blur_sigma_lateral)
        .read("elevation_decimation", s.degradation.elevation_decimation)
        .read("sidelobe_strength", s.degradation.sidelobe_strength)
        .read("contrast_gamma", s.degradation.contrast_gamma);
  });
}

// ---------------------------------------------------------------------------
// Separable filtering on the volume grid

/// Normalised Gaussian taps exp(-k^2 / (2 sigma^2)) for |k| <= ceil(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) sum += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

/// Gaussian blur along one axis (0 axial, 1 lateral, 2 elevation) with
/// edge-replicated borders.
inline void blur_axis(Volume& v, int axis, double sigma) {
  if (!(sigma > 0.0)) return;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int n = v.extent(axis);
  const std::size_t stride = axis == 1 ? 1 : axis == 0 ? static_cast<std::size_t>(v.lateral())
                                                       : static_cast<std::size_t>(v.axial()) * v.lateral();
  std::vector<double> line(static_cast<std::size_t>(n));
  auto& d = v.data();
  auto run = [&](std::size_t base) {
    for (int i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = d[base + i * stride];
    for (int i = 0; i < n; ++i) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) acc += k[static_cast<std::size_t>(t + radius)] * line[static_cast<std::size_t>(std::clamp(i + t, 0, n - 1))];
      d[base + i * stride] = static_cast<float>(acc);
    }
  };
  for (int e = 0; e < (axis == 2 ? 1 : v.elevation()); ++e)
    for (int a = 0; a < (axis == 0 ? 1 : v.axial()); ++a)
      for (int l = 0; l < (axis == 1 ? 1 : v.lateral()); ++l) run(v.index(a, l, e));
}

/// Keeps every `factor`-th elevation slice and linearly re-interpolates the
/// rest; slices past the last kept one repeat it.
inline void decimate_elevation(Volume& v, int factor) {
  if (factor <= 1) return;
  const Volume src = v;
  const int n = v.elevation();
  const int last_kept = ((n - 1) / factor) * factor;
  for (int e = 0; e < n; ++e) {
    if (e % factor == 0) continue;
    const int e0 = (e / factor) * factor;
    const int e1 = e0 + factor;
    for (int a = 0; a < v.axial(); ++a)
      for (int l = 0; l < v.lateral(); ++l) {
        if (e0 >= last_kept) {
          v.at(a, l, e) = src.at(a, l, last_kept);
        } else {
          const double t = static_cast<double>(e - e0) / factor;
          v.at(a, l, e) = static_cast<float>((1 - t) * src.at(a, l, e0) + t * src.at(a, l, e1));
        }
      }
  }
}

// ---------------------------------------------------------------------------

struct Ellipsoid {
  std::array<double, 3> center;  // axial, lateral, elevation
  std::array<double, 3> radius;
};

/// Non-overlapping ellipsoids fully inside the volume, drawn from `seed`.
inline std::vector<Ellipsoid> place_structures(const PhantomSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  const int min_ext = *std::min_element(spec.extent.begin(), spec.extent.end());
  const double rmin = std::max(3.0, 0.06 * min_ext);
  const double rmax = std::max(rmin, 0.18 * min_ext);
  std::uniform_real_distribution<double> rdist(rmin, rmax);
  std::vector<Ellipsoid> out;
  for (int attempt = 0; static_cast<int>(out.size()) < spec.n_structures; ++attempt) {
    if (attempt > 2000 * (spec.n_structures + 1))
      throw ConfigError("phantom: cannot place " + std::to_string(spec.n_structures) + " separate structures in the volume");
    Ellipsoid e;
    for (auto& r : e.radius) r = rdist(rng);
    const double reach = *std::max_element(e.radius.begin(), e.radius.end());
    bool fits = true;
    for (int ax = 0; ax < 3; ++ax) {
      const double lo = reach + 1.0, hi = spec.extent[static_cast<std::size_t>(ax)] - 2.0 - reach;
      if (hi <= lo) fits = false;
      e.center[static_cast<std::size_t>(ax)] = fits ? std::uniform_real_distribution<double>(lo, hi)(rng) : 0.0;
    }
    if (!fits) continue;
    for (const auto& o : out) {
      double d2 = 0;
      for (int ax = 0; ax < 3; ++ax) d2 += std::pow(e.center[static_cast<std::size_t>(ax)] - o.center[static_cast<std::size_t>(ax)], 2);
      const double oreach = *std::max_element(o.radius.begin(), o.radius.end());
      if (std::sqrt(d2) < reach + oreach + 3.0) fits = false;
    }
    if (fits) out.push_back(e);
  }
  return out;
}

/// Smoothed Gaussian noise with unit standard deviation.
inline std::vector<float> speckle_texture(int axial, int lateral, int elevation, std::uint64_t seed) {
  Volume tex(axial, lateral, elevation);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& v : tex.data()) v = static_cast<float>(n01(rng));
  for (int ax = 0; ax < 3; ++ax) blur_axis(tex, ax, 1.0);
  double s = 0, s2 = 0;
  for (float v : tex.data()) s += v, s2 += static_cast<double>(v) * v;
  const double n = static_cast<double>(tex.data().size());
  const double sd = std::sqrt(std::max(1e-12, s2 / n - (s / n) * (s / n)));
  for (auto& v : tex.data()) v = static_cast<float>(v / sd);
  return std::move(tex.data());
}

inline Volume generate_sharp(const PhantomSpec& spec) {
  spec.validate();
  const int A = spec.extent[0], L = spec.extent[1], E = spec.extent[2];
  const auto structures = place_structures(spec);
  std::vector<float> tex;
  if (spec.speckle_strength > 0) tex = speckle_texture(A, L, E, spec.seed);
  const float s = static_cast<float>(spec.speckle_strength);
  Volume v(A, L, E);
  for (int e = 0; e < E; ++e)
    for (int a = 0; a < A; ++a)
      for (int l = 0; l < L; ++l) {
        // 0 background, 1 interior, 2 wall
        int cls = 0;
        for (const auto& st : structures) {
          const double p[3] = {a - st.center[0], l - st.center[1], e - st.center[2]};
          double q = 0;
          for (int ax = 0; ax < 3; ++ax) q += p[ax] * p[ax] / (st.radius[static_cast<std::size_t>(ax)] * st.radius[static_cast<std::size_t>(ax)]);
          q = std::sqrt(q);
          if (q >= 1.0) continue;
          const double rsmall = *std::min_element(st.radius.begin(), st.radius.end());
          cls = q >= 1.0 - 1.5 / rsmall ? 2 : 1;
          break;
        }
        const std::size_t i = v.index(a, l, e);
        const float g = tex.empty() ? 0.0f : tex[i];
        switch (cls) {
          case 0: v.data()[i] = std::clamp(kBackgroundLevel * (1.0f + s * g), 0.02f, 0.7f); break;
          case 1: v.data()[i] = std::clamp(kInteriorLevel * (1.0f + s * g), 0.0f, 0.15f); break;
          default: v.data()[i] = std::clamp(kWallLevel * (1.0f + 0.25f * s * g), 0.85f, 1.0f); break;
        }
      }
  return v;
}

/// Applies the degradation model; `seed` drives the haze modulation.
inline Volume degrade(const Volume& input, const DegradationSpec& d, std::uint64_t seed) {
  d.validate();
  Volume v = input;
  blur_axis(v, 2, d.blur_sigma_elevation);
  blur_axis(v, 1, d.blur_sigma_lateral);
  decimate_elevation(v, d.elevation_decimation);
  if (d.sidelobe_strength > 0) {
    Volume haze = v;
    blur_axis(haze, 1, 6.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mod(0.3, 1.0);
    for (int e = 0; e < v.elevation(); ++e)
      for (int a = 0; a < v.axial(); ++a) {
        const float m = static_cast<float>(d.sidelobe_strength * mod(rng));
        for (int l = 0; l < v.lateral(); ++l) v.at(a, l, e) += m * haze.at(a, l, e);
      }
  }
  if (d.contrast_gamma != 1.0) {
    const float inv = static_cast<float>(1.0 / d.contrast_gamma);
    for (auto& x : v.data()) x = 0.5f + (x - 0.5f) * inv;
  }
  for (auto& x : v.data()) x = std::clamp(x, 0.0f, 1.0f);
  return v;
}

// ---------------------------------------------------------------------------
// Dataset

inline constexpr int kDatasetVersion = 1;

struct DatasetConfig {
  int n_train = 20;
  int n_eval = 2;
  int slices_per_volume = 10;
  PhantomSpec spec;

  void validate() const {
    if (n_train < 1 || n_eval < 0 || slices_per_volume < 1) throw ConfigError("dataset: n_train >= 1, n_eval >= 0, slices_per_volume >= 1");
    spec.validate();
  }
};

struct PairPaths {
  std::string degraded, sharp;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> train_degraded;
  std::vector<std::string> train_sharp;
  std::vector<PairPaths> eval_paired;
  OrderedJson raw;
};

/// Which slices a volume contributes: kinds cycle A, B, C; indices spread
/// over the middle of the orthogonal axis.
inline std::vector<std::pair<PlaneKind, int>> slice_plan(const Volume& v, int count) {
  std::vector<std::pair<PlaneKind, int>> out;
  for (int j = 0; j < count; ++j) {
    const auto kind = static_cast<PlaneKind>(j % 3);
    const int n = kind == PlaneKind::A ? v.elevation() : kind == PlaneKind::B ? v.lateral() : v.axial();
    const int margin = n / 8;
    const double pos = (j + 0.5) / count;
    out.emplace_back(kind, margin + std::min(n - 2 * margin - 1, static_cast<int>(pos * (n - 2 * margin))));
  }
  return out;
}

inline std::string slice_name(int volume, PlaneKind kind, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "vol%04d_%c_%04d.png", volume, plane_letter(kind), index);
  return buf;
}

/// Writes train/degraded, train/sharp (from different phantoms) and
/// eval/paired/{degraded,sharp} plus manifest.json under `out_dir`.
inline DatasetManifest build_dataset(const std::filesystem::path& out_dir, const DatasetConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  const auto& base = cfg.spec;
  for (const char* sub : {"train/degraded", "train/sharp", "eval/paired/degraded", "eval/paired/sharp"}) {
    std::error_code ec;
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  DatasetManifest m;
  m.root = out_dir;
  OrderedJson src_deg = OrderedJson::array(), src_sharp = OrderedJson::array(), src_eval = OrderedJson::array();
  auto spec_for = [&](std::uint64_t seed) {
    PhantomSpec s = base;
    s.seed = seed;
    return s;
  };
  auto emit = [&](const Volume& vol, int id, const std::string& dir, std::vector<std::string>& list) {
    for (auto [kind, idx] : slice_plan(vol, cfg.slices_per_volume)) {
      const std::string rel = dir + "/" + slice_name(id, kind, idx);
      write_png(out_dir / rel, extract_plane(vol, kind, idx).data);
      list.push_back(rel);
    }
  };
  const auto n_train = static_cast<std::uint64_t>(cfg.n_train);
  for (int i = 0; i < cfg.n_train; ++i) {
    const std::uint64_t seed = base.seed + 1 + static_cast<std::uint64_t>(i);
    emit(degrade(generate_sharp(spec_for(seed)), base.degradation, seed), i, "train/degraded", m.train_degraded);
    src_deg.push_back(seed);
  }
  for (int i = 0; i < cfg.n_train; ++i) {
    const std::uint64_t seed = base.seed + 1 + n_train + static_cast<std::uint64_t>(i);
    emit(generate_sharp(spec_for(seed)), i, "train/sharp", m.train_sharp);
    src_sharp.push_back(seed);
  }
  for (int i = 0; i < cfg.n_eval; ++i) {
    const std::uint64_t seed = base.seed + 1 + 2 * n_train + static_cast<std::uint64_t>(i);
    const Volume sharp = generate_sharp(spec_for(seed));
    const Volume deg = degrade(sharp, base.degradation, seed);
    std::vector<std::string> d, s;
    emit(deg, i, "eval/paired/degraded", d);
    emit(sharp, i, "eval/paired/sharp", s);
    for (std::size_t k = 0; k < d.size(); ++k) m.eval_paired.push_back({d[k], s[k]});
    src_eval.push_back(seed);
  }

  OrderedJson pairs = OrderedJson::array();
  for (const auto& p : m.eval_paired) pairs.push_back({{"degraded", p.degraded}, {"sharp", p.sharp}});
  m.raw = {{"version", kDatasetVersion},
           {"splits", {{"train_degraded", m.train_degraded}, {"train_sharp", m.train_sharp}, {"eval_paired", pairs}}},
           {"sources", {{"train_degraded", src_deg}, {"train_sharp", src_sharp}, {"eval_paired", src_eval}}},
           {"flags", {{"eval_paired", {{"trainer_readable", false}, {"purpose", "metrics and model selection"}}}}},
           {"slices_per_volume", cfg.slices_per_volume},
           {"spec_template", to_json(base)}};
  const std::string text = m.raw.dump(2) + "\n";
  write_file(out_dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return m;
}

inline DatasetManifest load_dataset_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw NotFoundError("no dataset manifest at " + path.string());
  DatasetManifest m;
  m.root = dir;
  try {
    std::ifstream in(path);
    m.raw = OrderedJson::parse(in);
    const auto& sp = m.raw.at("splits");
    m.train_degraded = sp.at("train_degraded").get<std::vector<std::string>>();
    m.train_sharp = sp.at("train_sharp").get<std::vector<std::string>>();
    for (const auto& p : sp.at("eval_paired")) m.eval_paired.push_back({p.at("degraded").get<std::string>(), p.at("sharp").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

/// Unpaired training images. Only the two train splits are read.
struct UnpairedData {
  std::vector<Image> degraded;
  std::vector<Image> sharp;
};

inline UnpairedData load_unpaired(const DatasetManifest& m) {
  if (m.train_degraded.empty() || m.train_sharp.empty()) throw ConfigError("dataset has an empty training split");
  UnpairedData d;
  for (const auto& p : m.train_degraded) d.degraded.push_back(read_png(m.root / p));
  for (const auto& p : m.train_sharp) d.sharp.push_back(read_png(m.root / p));
  return d;
}

struct ImagePair {
  Image degraded;
  Image sharp;
};

/// Paired evaluation images, for metrics and checkpoint selection only.
inline std::vector<ImagePair> load_eval_pairs(const DatasetManifest& m) {
  std::vector<ImagePair> out;
  for (const auto& p : m.eval_paired) out.push_back({read_png(m.root / p.degraded), read_png(m.root / p.sharp)});
  return out;
}

}  // namespace usgan
