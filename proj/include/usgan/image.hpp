#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "usgan/errors.hpp"
#include "usgan/tensor.hpp"

namespace usgan {

/// Row-major 2-D grid.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T(0)) : rows_(rows), cols_(cols), px_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw ShapeError("negative grid extent");
  }
  Grid(int rows, int cols, std::vector<T> px) : rows_(rows), cols_(cols), px_(std::move(px)) {
    if (px_.size() != static_cast<std::size_t>(rows) * cols) throw ShapeError("grid data does not match extent");
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return px_.size(); }
  bool empty() const noexcept { return px_.empty(); }

  T& at(int r, int c) noexcept { return px_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& at(int r, int c) const noexcept { return px_[static_cast<std::size_t>(r) * cols_ + c]; }
  T& operator[](std::size_t i) noexcept { return px_[i]; }
  const T& operator[](std::size_t i) const noexcept { return px_[i]; }
  std::vector<T>& pixels() noexcept { return px_; }
  const std::vector<T>& pixels() const noexcept { return px_; }

  bool same_extent(const Grid& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.px_ == b.px_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> px_;
};

/// Intensities in [0,1].
using Image = Grid<float>;

inline std::string extent_str(int rows, int cols) { return std::to_string(rows) + "x" + std::to_string(cols); }

inline void require_same_extent(const Image& a, const Image& b, std::string_view what) {
  if (!a.same_extent(b))
    throw ShapeError(std::string(what) + ": extent " + extent_str(a.rows(), a.cols()) + " vs " + extent_str(b.rows(), b.cols()));
}

/// [1,H,W] tensor view of an image (copy).
template <typename T = float>
Tensor<T> to_tensor(const Image& img) {
  std::vector<T> data(img.pixels().begin(), img.pixels().end());
  return Tensor<T>({1, img.rows(), img.cols()}, std::move(data));
}

template <typename T>
Image from_tensor(const Tensor<T>& t) {
  if (t.rank() != 3 || t.dim(0) != 1) throw ShapeError("expected a [1,H,W] tensor, got " + shape_str(t.shape()));
  std::vector<float> px(t.values().begin(), t.values().end());
  return Image(t.dim(1), t.dim(2), std::move(px));
}

inline Image clamp01(Image img) {
  for (auto& v : img.pixels()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

enum class PlaneKind { A, B, C };

inline char plane_letter(PlaneKind k) { return k == PlaneKind::A ? 'A' : k == PlaneKind::B ? 'B' : 'C'; }

inline PlaneKind parse_plane_kind(std::string_view s) {
  if (s == "A" || s == "a") return PlaneKind::A;
  if (s == "B" || s == "b") return PlaneKind::B;
  if (s == "C" || s == "c") return PlaneKind::C;
  throw ArgumentError("unknown plane kind '" + std::string(s) + "' (expected A, B or C)");
}

/// A: (axial, lateral) rows x cols; B: (axial, elevation); C: (elevation, lateral).
struct PlaneImage {
  Image data;
  PlaneKind kind = PlaneKind::A;
  int source_index = 0;
};

struct Patch {
  Image data;
  int row = 0;
  int col = 0;
};

/// Scalar volume over (axial, lateral, elevation). Storage keeps every
/// elevation slice (an A-plane) contiguous: index = (e * A + a) * L + l.
class Volume {
 public:
  static constexpr std::array<std::string_view, 3> axis_names{"axial", "lateral", "elevation"};
  static constexpr int kMinExtent = 8;

  Volume() = default;
  Volume(int axial, int lateral, int elevation, float fill = 0.0f)
      : axial_(axial), lateral_(lateral), elevation_(elevation),
        data_(static_cast<std::size_t>(axial) * lateral * elevation, fill) {
    check_extents();
  }
  Volume(int axial, int lateral, int elevation, std::vector<float> data)
      : axial_(axial), lateral_(lateral), elevation_(elevation), data_(std::move(data)) {
    check_extents();
    if (data_.size() != static_cast<std::size_t>(axial) * lateral * elevation) throw ShapeError("volume data does not match extent");
  }

  int axial() const noexcept { return axial_; }
  int lateral() const noexcept { return lateral_; }
  int elevation() const noexcept { return elevation_; }
  int extent(int axis) const { return axis == 0 ? axial_ : axis == 1 ? lateral_ : elevation_; }

  std::size_t index(int a, int l, int e) const noexcept {
    return (static_cast<std::size_t>(e) * axial_ + a) * lateral_ + l;
  }
  float& at(int a, int l, int e) noexcept { return data_[index(a, l, e)]; }
  float at(int a, int l, int e) const noexcept { return data_[index(a, l, e)]; }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  bool in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
  }

  friend bool operator==(const Volume& a, const Volume& b) {
    return a.axial_ == b.axial_ && a.lateral_ == b.lateral_ && a.elevation_ == b.elevation_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    if (axial_ < kMinExtent || lateral_ < kMinExtent || elevation_ < kMinExtent)
      throw ShapeError("volume extents must all be >= " + std::to_string(kMinExtent) + ", got " + std::to_string(axial_) + "x" +
                       std::to_string(lateral_) + "x" + std::to_string(elevation_));
  }

  int axial_ = 0;
  int lateral_ = 0;
  int elevation_ = 0;
  std::vector<float> data_;
};

}  // namespace usgan
