#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "usgan/inference.hpp"
#include "usgan/phantom.hpp"

namespace usgan {

/// 10 log10(1 / MSE) for images in [0,1]; +infinity for identical images.
inline double psnr(const Image& a, const Image& b) {
  require_same_extent(a, b, "psnr");
  if (a.empty()) throw ShapeError("psnr: empty image");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / se);
}

inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over every 8x8 window position (stride 1, dynamic range 1,
/// population moments inside each window).
inline double ssim(const Image& a, const Image& b) {
  require_same_extent(a, b, "ssim");
  const int w = kSsimWindow;
  if (a.rows() < w || a.cols() < w) throw ShapeError("ssim: images must be at least 8x8");
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  const int rows = a.rows(), cols = a.cols();
  // Summed-area tables of a, b, a^2, b^2, ab.
  auto table = [&](auto f) {
    std::vector<double> t(static_cast<std::size_t>(rows + 1) * (cols + 1), 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        t[static_cast<std::size_t>(r + 1) * (cols + 1) + c + 1] = f(r, c) + t[static_cast<std::size_t>(r) * (cols + 1) + c + 1] +
                                                                 t[static_cast<std::size_t>(r + 1) * (cols + 1) + c] -
                                                                 t[static_cast<std::size_t>(r) * (cols + 1) + c];
    return t;
  };
  const auto sa = table([&](int r, int c) { return static_cast<double>(a.at(r, c)); });
  const auto sb = table([&](int r, int c) { return static_cast<double>(b.at(r, c)); });
  const auto saa = table([&](int r, int c) { return static_cast<double>(a.at(r, c)) * a.at(r, c); });
  const auto sbb = table([&](int r, int c) { return static_cast<double>(b.at(r, c)) * b.at(r, c); });
  const auto sab = table([&](int r, int c) { return static_cast<double>(a.at(r, c)) * b.at(r, c); });
  auto box = [&](const std::vector<double>& t, int r, int c) {
    const auto W = static_cast<std::size_t>(cols + 1);
    return t[(r + w) * W + c + w] - t[r * W + c + w] - t[(r + w) * W + c] + t[r * W + c];
  };
  const double n = static_cast<double>(w * w);
  double total = 0;
  long count = 0;
  for (int r = 0; r + w <= rows; ++r)
    for (int c = 0; c + w <= cols; ++c) {
      const double ma = box(sa, r, c) / n, mb = box(sb, r, c) / n;
      const double va = std::max(0.0, box(saa, r, c) / n - ma * ma);
      const double vb = std::max(0.0, box(sbb, r, c) / n - mb * mb);
      const double cov = box(sab, r, c) / n - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

inline double mean_abs(const Image& a, const Image& b) {
  require_same_extent(a, b, "mean_abs");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

struct SweepRow {
  double alpha = 0;
  double psnr_db = 0;
  double ssim = 0;
  double l1_from_alpha0 = 0;
};

/// Enhances one degraded image at every alpha and scores it against the
/// paired sharp image.
inline std::vector<SweepRow> alpha_sweep_report(const ImagePair& pair, const Model& m, const std::vector<double>& alphas) {
  const Image base = enhance(m, pair.degraded, 0.0);
  std::vector<SweepRow> rows;
  for (double a : alphas) {
    const Image out = a == 0.0 ? base : enhance(m, pair.degraded, a);
    rows.push_back({a, psnr(out, pair.sharp), ssim(out, pair.sharp), mean_abs(out, base)});
  }
  return rows;
}

/// Sweep over an evaluation set: per-image rows plus per-alpha means and
/// the unenhanced baseline.
struct EvalReport {
  std::vector<double> alphas;
  std::vector<std::vector<SweepRow>> per_image;  // [image][alpha]
  std::vector<SweepRow> mean;                    // [alpha]
  double baseline_psnr_db = 0;                   // degraded vs sharp
  double baseline_ssim = 0;

  OrderedJson to_json() const {
    auto row_json = [](const SweepRow& r) {
      return OrderedJson{{"alpha", r.alpha}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}, {"l1_from_alpha0", r.l1_from_alpha0}};
    };
    OrderedJson j{{"baseline", {{"psnr_db", baseline_psnr_db}, {"ssim", baseline_ssim}}}, {"mean", OrderedJson::array()}, {"per_image", OrderedJson::array()}};
    for (const auto& r : mean) j["mean"].push_back(row_json(r));
    for (std::size_t i = 0; i < per_image.size(); ++i)
      for (const auto& r : per_image[i]) {
        auto rj = row_json(r);
        rj["image"] = i;
        j["per_image"].push_back(rj);
      }
    return j;
  }

  /// One row per alpha.
  std::string to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "alpha,psnr_db,ssim,l1_from_alpha0,baseline_psnr_db\n";
    for (const auto& r : mean) os << r.alpha << ',' << r.psnr_db << ',' << r.ssim << ',' << r.l1_from_alpha0 << ',' << baseline_psnr_db << '\n';
    return os.str();
  }
};

inline EvalReport evaluate(const std::vector<ImagePair>& pairs, const Model& m, const std::vector<double>& alphas) {
  if (pairs.empty()) throw ConfigError("evaluation set is empty");
  EvalReport rep;
  rep.alphas = alphas;
  rep.mean.assign(alphas.size(), SweepRow{});
  for (const auto& p : pairs) {
    rep.baseline_psnr_db += psnr(p.degraded, p.sharp);
    rep.baseline_ssim += ssim(p.degraded, p.sharp);
    rep.per_image.push_back(alpha_sweep_report(p, m, alphas));
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      const auto& r = rep.per_image.back()[k];
      rep.mean[k].alpha = r.alpha;
      rep.mean[k].psnr_db += r.psnr_db;
      rep.mean[k].ssim += r.ssim;
      rep.mean[k].l1_from_alpha0 += r.l1_from_alpha0;
    }
  }
  const double n = static_cast<double>(pairs.size());
  rep.baseline_psnr_db /= n;
  rep.baseline_ssim /= n;
  for (auto& r : rep.mean) {
    r.psnr_db /= n;
    r.ssim /= n;
    r.l1_from_alpha0 /= n;
  }
  return rep;
}

}  // namespace usgan
