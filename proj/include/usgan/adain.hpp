#pragma once

// Adaptive instance normalisation: the per-channel re-statistics that switch
// the shared generator between its two translation directions.
//
//   T(z, (mu, sigma)) = sigma * (z - mean(z)) / (std(z) + eps) + mu
//
// with instance statistics taken over each channel's spatial extent. The
// constant code K = (0, 1) reduces T to plain instance normalisation and the
// interpolated code H(c, alpha) = (1 - alpha) K + alpha c moves continuously
// between the two.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "usgan/autograd.hpp"
#include "usgan/image.hpp"

namespace usgan {

inline constexpr int kAdainSites = 9;
inline constexpr double kAdainEps = 1e-5;

template <typename T>
struct CodeSite {
  std::vector<T> mu;
  std::vector<T> sigma;

  int channels() const { return static_cast<int>(mu.size()); }
  friend bool operator==(const CodeSite&, const CodeSite&) = default;
};

/// Ordered (mean, std) pairs, one per AdaIN site of the generator.
template <typename T>
struct AdaInCode {
  std::vector<CodeSite<T>> sites;

  std::vector<int> channels() const {
    std::vector<int> c;
    for (const auto& s : sites) c.push_back(s.channels());
    return c;
  }

  void validate() const {
    if (sites.size() != kAdainSites)
      throw ShapeError("AdaIN code must have " + std::to_string(kAdainSites) + " sites, got " + std::to_string(sites.size()));
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (sites[i].mu.size() != sites[i].sigma.size()) throw ShapeError("AdaIN site " + std::to_string(i) + ": mean/std length mismatch");
      for (T s : sites[i].sigma)
        if (!(s >= T(0))) throw ArgumentError("AdaIN site " + std::to_string(i) + ": negative or NaN std");
    }
  }

  friend bool operator==(const AdaInCode&, const AdaInCode&) = default;
};

/// K: zero mean, unit std at every site.
template <typename T>
AdaInCode<T> constant_code_k(const std::vector<int>& channels) {
  AdaInCode<T> k;
  for (int c : channels) k.sites.push_back({std::vector<T>(static_cast<std::size_t>(c), T(0)), std::vector<T>(static_cast<std::size_t>(c), T(1))});
  return k;
}

namespace detail {
// Shared by the scalar and the spatial paths so that both evaluate the
// same expression for the same alpha.
inline double blended_scale(double alpha, double sigma) { return (1.0 - alpha) + alpha * sigma; }
inline double blended_shift(double alpha, double mu) { return alpha * mu + 0.0; }  // no -0 at alpha = 0
}  // namespace detail

/// H(code, alpha) = (1 - alpha) K + alpha code.
template <typename T>
AdaInCode<T> interpolate_code(const AdaInCode<T>& code, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0,1], got " + std::to_string(alpha));
  AdaInCode<T> out = code;
  for (auto& site : out.sites) {
    for (auto& m : site.mu) m = static_cast<T>(detail::blended_shift(alpha, m));
    for (auto& s : site.sigma) s = static_cast<T>(detail::blended_scale(alpha, s));
  }
  return out;
}

template <typename T>
struct InstanceStats {
  std::vector<T> mean;
  std::vector<T> std;
};

/// Per-channel mean and population standard deviation of a [C,H,W] map.
template <typename T>
InstanceStats<T> instance_stats(const Tensor<T>& z) {
  if (z.rank() != 3) throw ShapeError("instance_stats expects [C,H,W], got " + shape_str(z.shape()));
  const int c = z.dim(0);
  const std::size_t hw = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
  InstanceStats<T> st{std::vector<T>(static_cast<std::size_t>(c)), std::vector<T>(static_cast<std::size_t>(c))};
  for (int ch = 0; ch < c; ++ch) {
    const T* p = z.data() + ch * hw;
    double s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += p[i];
    const double mean = s / static_cast<double>(hw);
    double v = 0;
    for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mean) * (p[i] - mean);
    st.mean[ch] = static_cast<T>(mean);
    st.std[ch] = static_cast<T>(std::sqrt(v / static_cast<double>(hw)));
  }
  return st;
}

namespace detail {
template <typename T>
Tensor<T> apply_channel_affine(const Tensor<T>& z, const InstanceStats<T>& st, const std::vector<T>& scale,
                               const std::vector<T>& shift, T eps) {
  Tensor<T> out(z.shape());
  const int c = z.dim(0);
  const std::size_t hw = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
  for (int ch = 0; ch < c; ++ch) {
    const T mu = st.mean[ch];
    const T inv = T(1) / (st.std[ch] + eps);
    const T s = scale[ch], b = shift[ch];
    const T* src = z.data() + ch * hw;
    T* dst = out.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = s * ((src[i] - mu) * inv) + b;
  }
  return out;
}

template <typename T>
void check_site(const Tensor<T>& z, const CodeSite<T>& site) {
  if (z.rank() != 3) throw ShapeError("AdaIN expects a [C,H,W] map, got " + shape_str(z.shape()));
  if (site.mu.size() != static_cast<std::size_t>(z.dim(0)) || site.sigma.size() != site.mu.size())
    throw ShapeError("AdaIN code site has " + std::to_string(site.mu.size()) + " channels, feature map has " +
                     std::to_string(z.dim(0)));
}
}  // namespace detail

/// Non-differentiable AdaIN on a [C,H,W] map.
template <typename T>
Tensor<T> adain_transform(const Tensor<T>& z, const CodeSite<T>& site, T eps = static_cast<T>(kAdainEps)) {
  detail::check_site(z, site);
  if (!(eps > T(0))) throw ArgumentError("AdaIN eps must be positive");
  return detail::apply_channel_affine(z, instance_stats(z), site.sigma, site.mu, eps);
}

/// Differentiable AdaIN. `mu` and `sigma` are [C] variables; pass constants
/// for K or any fixed code.
template <typename T>
Var<T> adain(const Var<T>& z, const Var<T>& mu, const Var<T>& sigma, T eps) {
  const auto& zv = z.value();
  if (zv.rank() != 3 || mu.value().size() != static_cast<std::size_t>(zv.dim(0)) || sigma.value().size() != mu.value().size())
    throw ShapeError("adain: feature map " + shape_str(zv.shape()) + " vs code of " + std::to_string(mu.value().size()) + " channels");
  auto st = instance_stats(zv);
  Tensor<T> out = detail::apply_channel_affine(zv, st, sigma.value().storage(), mu.value().storage(), eps);
  return make_result<T>(std::move(out), {z, mu, sigma}, [st = std::move(st), eps](Node<T>& self) {
    Node<T>& zn = *self.parents[0];
    Node<T>& mn = *self.parents[1];
    Node<T>& sn = *self.parents[2];
    const int c = zn.value.dim(0);
    const std::size_t hw = static_cast<std::size_t>(zn.value.dim(1)) * zn.value.dim(2);
    const T n_inv = T(1) / static_cast<T>(hw);
    for (int ch = 0; ch < c; ++ch) {
      const T mu = st.mean[ch];
      const T sd = st.std[ch];
      const T r = T(1) / (sd + eps);
      const T* z = zn.value.data() + ch * hw;
      const T* g = self.grad.data() + ch * hw;
      T sum_g = 0, sum_gn = 0, sum_gd = 0;
      for (std::size_t i = 0; i < hw; ++i) {
        const T d = z[i] - mu;
        sum_g += g[i];
        sum_gn += g[i] * d * r;
        sum_gd += g[i] * d;
      }
      if (mn.requires_grad) mn.grad_buffer()[ch] += sum_g;
      if (sn.requires_grad) sn.grad_buffer()[ch] += sum_gn;
      if (zn.requires_grad) {
        // y = s * (z - mu) r + m,  r = 1 / (sd + eps),  d sd / dz_j = (z_j - mu) / (N sd)
        const T s = sn.value[ch];
        const T mean_g = sum_g * n_inv;
        const T k = sd > T(0) ? r * r * sum_gd * n_inv / sd : T(0);
        T* gz = zn.grad_buffer().data() + ch * hw;
        for (std::size_t i = 0; i < hw; ++i) gz[i] += s * (r * (g[i] - mean_g) - k * (z[i] - mu));
      }
    }
  });
}

struct AlphaRegion {
  Grid<std::uint8_t> mask;  // nonzero = inside
  double alpha = 0.0;
};

/// Per-pixel enhancement strength in [0,1].
struct AlphaField {
  Grid<double> values;
  std::vector<AlphaRegion> region_table;

  static AlphaField constant(int rows, int cols, double alpha) { return {Grid<double>(rows, cols, alpha), {}}; }

  void validate() const {
    for (double v : values.pixels())
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("alpha field values must lie in [0,1]");
  }
};

/// Paints regions in order onto a field filled with `default_alpha`; later
/// regions overwrite earlier ones.
inline AlphaField rasterize_alpha(const std::vector<AlphaRegion>& regions, double default_alpha, int rows, int cols) {
  if (!(default_alpha >= 0.0 && default_alpha <= 1.0)) throw ArgumentError("default alpha must lie in [0,1]");
  AlphaField field{Grid<double>(rows, cols, default_alpha), regions};
  for (std::size_t k = 0; k < regions.size(); ++k) {
    const auto& r = regions[k];
    if (r.mask.rows() != rows || r.mask.cols() != cols)
      throw ShapeError("region " + std::to_string(k) + " mask is " + extent_str(r.mask.rows(), r.mask.cols()) + ", field is " +
                       extent_str(rows, cols));
    if (!(r.alpha >= 0.0 && r.alpha <= 1.0)) throw ArgumentError("region " + std::to_string(k) + " alpha outside [0,1]");
    for (std::size_t i = 0; i < r.mask.size(); ++i)
      if (r.mask[i]) field.values[i] = r.alpha;
  }
  return field;
}

/// Area-average resampling of a field to (rows, cols).
inline Grid<double> downsample_area(const Grid<double>& src, int rows, int cols) {
  if (rows <= 0 || cols <= 0 || rows > src.rows() || cols > src.cols())
    throw ShapeError("downsample_area: cannot map " + extent_str(src.rows(), src.cols()) + " to " + extent_str(rows, cols));
  if (rows == src.rows() && cols == src.cols()) return src;
  // 1-D overlap weights between destination cells and source pixels.
  auto weights = [](int n_src, int n_dst) {
    std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(n_dst));
    const double step = static_cast<double>(n_src) / n_dst;
    for (int d = 0; d < n_dst; ++d) {
      const double lo = d * step, hi = (d + 1) * step;
      for (int s = static_cast<int>(std::floor(lo)); s < std::min(n_src, static_cast<int>(std::ceil(hi))); ++s) {
        const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (overlap > 0) w[static_cast<std::size_t>(d)].emplace_back(s, overlap / step);
      }
    }
    return w;
  };
  const auto wr = weights(src.rows(), rows);
  const auto wc = weights(src.cols(), cols);
  Grid<double> out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0;
      for (auto [sr, a] : wr[static_cast<std::size_t>(r)])
        for (auto [sc, b] : wc[static_cast<std::size_t>(c)]) acc += a * b * src.at(sr, sc);
      out.at(r, c) = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

namespace detail {
template <typename T>
void check_alpha_extent(const Tensor<T>& z, const Grid<double>& a) {
  if (a.rows() != z.dim(1) || a.cols() != z.dim(2))
    throw ShapeError("alpha grid " + extent_str(a.rows(), a.cols()) + " does not match feature map " + shape_str(z.shape()));
}
}  // namespace detail

/// Spatially varying AdaIN with an alpha grid already at the feature map's
/// resolution: out(p) = (1 - a(p)) T(z, K)(p) + a(p) T(z, code)(p), both
/// transforms sharing the instance statistics of z.
template <typename T>
Tensor<T> spatial_adain_at(const Tensor<T>& z, const CodeSite<T>& site, const Grid<double>& alpha, T eps) {
  detail::check_site(z, site);
  detail::check_alpha_extent(z, alpha);
  const auto st = instance_stats(z);
  Tensor<T> out(z.shape());
  const int c = z.dim(0);
  const std::size_t hw = alpha.size();
  for (int ch = 0; ch < c; ++ch) {
    const T mu = st.mean[ch];
    const T inv = T(1) / (st.std[ch] + eps);
    const T* src = z.data() + ch * hw;
    T* dst = out.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const T s = static_cast<T>(detail::blended_scale(alpha[i], site.sigma[ch]));
      const T b = static_cast<T>(detail::blended_shift(alpha[i], site.mu[ch]));
      dst[i] = s * ((src[i] - mu) * inv) + b;
    }
  }
  return out;
}

/// Spatially varying AdaIN taking a full-resolution field, which is
/// area-averaged down to the feature map's resolution.
template <typename T>
Tensor<T> spatial_adain(const Tensor<T>& z, const CodeSite<T>& site, const AlphaField& field, T eps = static_cast<T>(kAdainEps)) {
  detail::check_site(z, site);
  return spatial_adain_at(z, site, downsample_area(field.values, z.dim(1), z.dim(2)), eps);
}

/// Instance statistics recorded at fixed alpha values ("anchors"), used to
/// normalise spatially controlled passes without letting one region's
/// features leak into another region's statistics.
template <typename T>
struct AnchoredStats {
  std::vector<double> alphas;  // ascending
  std::vector<InstanceStats<T>> stats;
};

/// Like spatial_adain_at, but every pixel is normalised with statistics
/// interpolated (piecewise linearly in a(p)) between the anchors. Without a
/// code site the call is a plain instance normalisation.
template <typename T>
Tensor<T> anchored_adain_at(const Tensor<T>& z, const CodeSite<T>* site, const Grid<double>& alpha, const AnchoredStats<T>& anchors,
                            T eps) {
  if (site) detail::check_site(z, *site);
  detail::check_alpha_extent(z, alpha);
  if (anchors.alphas.empty() || anchors.alphas.size() != anchors.stats.size()) throw ArgumentError("anchored_adain_at: no anchors");
  const int c = z.dim(0);
  const std::size_t hw = alpha.size();
  // Bracketing anchor and weight per pixel.
  std::vector<int> lo(hw);
  std::vector<double> t(hw);
  const auto& xs = anchors.alphas;
  for (std::size_t i = 0; i < hw; ++i) {
    const double a = alpha[i];
    if (xs.size() == 1 || a <= xs.front()) {
      lo[i] = 0;
      t[i] = 0;
    } else if (a >= xs.back()) {
      lo[i] = static_cast<int>(xs.size()) - 1;
      t[i] = 0;
    } else {
      auto it = std::upper_bound(xs.begin(), xs.end(), a);
      const int k = static_cast<int>(it - xs.begin()) - 1;
      lo[i] = k;
      t[i] = (a - xs[k]) / (xs[k + 1] - xs[k]);
    }
  }
  Tensor<T> out(z.shape());
  for (int ch = 0; ch < c; ++ch) {
    const T* src = z.data() + ch * hw;
    T* dst = out.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const auto& s0 = anchors.stats[static_cast<std::size_t>(lo[i])];
      T mu = s0.mean[ch], sd = s0.std[ch];
      if (t[i] > 0) {
        const auto& s1 = anchors.stats[static_cast<std::size_t>(lo[i]) + 1];
        mu = static_cast<T>((1 - t[i]) * s0.mean[ch] + t[i] * s1.mean[ch]);
        sd = static_cast<T>((1 - t[i]) * s0.std[ch] + t[i] * s1.std[ch]);
      }
      const T inv = T(1) / (sd + eps);
      if (site) {
        const T s = static_cast<T>(detail::blended_scale(alpha[i], site->sigma[ch]));
        const T b = static_cast<T>(detail::blended_shift(alpha[i], site->mu[ch]));
        dst[i] = s * ((src[i] - mu) * inv) + b;
      } else {
        dst[i] = T(1) * ((src[i] - mu) * inv) + T(0);
      }
    }
  }
  return out;
}

}  // namespace usgan
