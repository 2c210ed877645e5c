#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "usgan/image.hpp"

namespace usgan {

/// Cross-section of `v` orthogonal to the axis that `kind` leaves out.
inline PlaneImage extract_plane(const Volume& v, PlaneKind kind, int index) {
  const int axis = kind == PlaneKind::A ? 2 : kind == PlaneKind::B ? 1 : 0;
  if (index < 0 || index >= v.extent(axis))
    throw BoundsError(std::string("plane ") + plane_letter(kind) + ": index " + std::to_string(index) + " outside " +
                      std::string(Volume::axis_names[axis]) + " extent " + std::to_string(v.extent(axis)));
  PlaneImage out;
  out.kind = kind;
  out.source_index = index;
  switch (kind) {
    case PlaneKind::A: {
      out.data = Image(v.axial(), v.lateral());
      const float* src = v.data().data() + v.index(0, 0, index);
      std::copy(src, src + out.data.size(), out.data.pixels().begin());
      break;
    }
    case PlaneKind::B:
      out.data = Image(v.axial(), v.elevation());
      for (int a = 0; a < v.axial(); ++a)
        for (int e = 0; e < v.elevation(); ++e) out.data.at(a, e) = v.at(a, index, e);
      break;
    case PlaneKind::C:
      out.data = Image(v.elevation(), v.lateral());
      for (int e = 0; e < v.elevation(); ++e)
        for (int l = 0; l < v.lateral(); ++l) out.data.at(e, l) = v.at(index, l, e);
      break;
  }
  return out;
}

/// Rebuilds a volume from its A-planes ordered along elevation.
inline Volume stack_a_planes(const std::vector<Image>& planes, std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  if (planes.empty()) throw ShapeError("stack_a_planes: no planes");
  const int rows = planes.front().rows(), cols = planes.front().cols();
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(rows) * cols * planes.size());
  for (const auto& p : planes) {
    if (p.rows() != rows || p.cols() != cols) throw ShapeError("stack_a_planes: plane extents differ");
    data.insert(data.end(), p.pixels().begin(), p.pixels().end());
  }
  Volume v(rows, cols, static_cast<int>(planes.size()), std::move(data));
  v.spacing = spacing;
  return v;
}

/// Horizontal flip, then vertical flip, then `quarter_turns` counter-clockwise
/// 90-degree rotations. Square inputs keep their extent.
inline Image augment(const Image& img, bool flip_h, bool flip_v, int quarter_turns) {
  const int n = img.rows(), m = img.cols();
  Image out(n, m);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < m; ++c) out.at(r, c) = img.at(flip_v ? n - 1 - r : r, flip_h ? m - 1 - c : c);
  for (int t = 0; t < ((quarter_turns % 4) + 4) % 4; ++t) {
    Image rot(out.cols(), out.rows());
    for (int r = 0; r < rot.rows(); ++r)
      for (int c = 0; c < rot.cols(); ++c) rot.at(r, c) = out.at(c, out.cols() - 1 - r);
    out = std::move(rot);
  }
  return out;
}

inline Image crop(const Image& img, int row, int col, int rows, int cols) {
  if (row < 0 || col < 0 || row + rows > img.rows() || col + cols > img.cols())
    throw BoundsError("crop window outside image " + extent_str(img.rows(), img.cols()));
  Image out(rows, cols);
  for (int r = 0; r < rows; ++r)
    std::copy_n(&img.at(row + r, col), cols, &out.at(r, 0));
  return out;
}

/// Draws `count` square patches at uniformly random valid origins. With
/// `augment_patches`, each patch then draws flip_h, flip_v and a quarter-turn
/// count, in that order, from the same stream.
inline std::vector<Patch> extract_patches(const Image& img, int size, int count, std::uint64_t seed, bool augment_patches) {
  if (size <= 0) throw ArgumentError("patch size must be positive");
  if (img.rows() < size || img.cols() < size)
    throw SizeError("image " + extent_str(img.rows(), img.cols()) + " is smaller than patch size " + std::to_string(size));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row_dist(0, img.rows() - size);
  std::uniform_int_distribution<int> col_dist(0, img.cols() - size);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> turns(0, 3);
  std::vector<Patch> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    Patch p;
    p.row = row_dist(rng);
    p.col = col_dist(rng);
    p.data = crop(img, p.row, p.col, size, size);
    if (augment_patches) {
      const bool fh = coin(rng) == 1;
      const bool fv = coin(rng) == 1;
      const int k = turns(rng);
      p.data = augment(p.data, fh, fv, k);
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<Patch> extract_patches(const PlaneImage& img, int size, int count, std::uint64_t seed, bool augment_patches) {
  return extract_patches(img.data, size, count, seed, augment_patches);
}

/// Affine map of [in_min, in_max] onto [0,1]; values outside are clamped.
inline Image normalize(const Grid<double>& raw, double in_min, double in_max) {
  if (!(in_max > in_min)) throw ArgumentError("normalize: in_max must exceed in_min");
  Image out(raw.rows(), raw.cols());
  const double range = in_max - in_min;
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = static_cast<float>(std::clamp((raw[i] - in_min) / range, 0.0, 1.0));
  return out;
}

}  // namespace usgan
