#pragma once

// Differentiable tensor ops used by the networks and losses.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "usgan/autograd.hpp"

namespace usgan::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

inline int conv_out_extent(int n, int kernel, int stride, int pad) { return (n + 2 * pad - kernel) / stride + 1; }

// Upper bound on the im2col buffer, in elements.
inline constexpr std::size_t kColumnBudget = std::size_t{1} << 23;

struct ConvGeometry {
  int cin, h, w, k, stride, pad, ho, wo;
  int rows() const { return cin * k * k; }
  int tile_rows() const {
    const std::size_t per_row = static_cast<std::size_t>(rows()) * wo;
    return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1, ho));
  }
};

inline int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
inline int ceil_div(int a, int b) { return -floor_div(-a, b); }

template <typename T>
void im2col(const T* x, const ConvGeometry& g, int oy0, int oy1, T* cols) {
  const int n = (oy1 - oy0) * g.wo;
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * n;
        // Valid output columns: 0 <= ox*stride - pad + kx < w.
        const int lo = std::clamp(ceil_div(g.pad - kx, g.stride), 0, g.wo);
        const int hi = std::clamp(floor_div(g.w - 1 + g.pad - kx, g.stride) + 1, lo, g.wo);
        for (int oy = oy0; oy < oy1; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy - oy0) * g.wo;
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::memcpy(dst + lo, src + lo - g.pad + kx, sizeof(T) * static_cast<std::size_t>(hi - lo));
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride - g.pad + kx];
          }
          std::fill(dst + hi, dst + g.wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, int oy0, int oy1, T* dx) {
  const int n = (oy1 - oy0) * g.wo;
  for (int ci = 0; ci < g.cin; ++ci) {
    T* plane = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((ci * g.k + ky) * g.k + kx) * n;
        const int lo = std::clamp(ceil_div(g.pad - kx, g.stride), 0, g.wo);
        const int hi = std::clamp(floor_div(g.w - 1 + g.pad - kx, g.stride) + 1, lo, g.wo);
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy - oy0) * g.wo;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride - g.pad + kx] += src[ox];
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution with zero padding. x: [Cin,H,W], weight: [Cout,Cin,K,K],
/// bias: [Cout] (may be undefined).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0] || ws[2] != ws[3])
    throw ShapeError("conv2d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  detail::ConvGeometry g{xs[0], xs[1], xs[2], ws[2], stride, pad, 0, 0};
  g.ho = detail::conv_out_extent(g.h, g.k, stride, pad);
  g.wo = detail::conv_out_extent(g.w, g.k, stride, pad);
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: input " + shape_str(xs) + " too small for kernel " + std::to_string(g.k));
  const int cout = ws[0];
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != cout))
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));

  Tensor<T> out({cout, g.ho, g.wo});
  const int tile = g.tile_rows();
  std::vector<T> cols(static_cast<std::size_t>(g.rows()) * tile * g.wo);
  const Eigen::Map<const detail::RowMat<T>> wmat(weight.value().data(), cout, g.rows());
  const long plane_out = static_cast<long>(g.ho) * g.wo;
  for (int oy0 = 0; oy0 < g.ho; oy0 += tile) {
    const int oy1 = std::min(g.ho, oy0 + tile);
    const int n = (oy1 - oy0) * g.wo;
    detail::im2col(x.value().data(), g, oy0, oy1, cols.data());
    Eigen::Map<const detail::RowMat<T>> cmat(cols.data(), g.rows(), n);
    detail::StridedMap<T> omat(out.data() + static_cast<std::size_t>(oy0) * g.wo, cout, n, Eigen::OuterStride<>(plane_out));
    omat.noalias() = wmat * cmat;
  }
  if (has_bias) {
    for (int co = 0; co < cout; ++co) {
      const T b = bias.value()[co];
      T* p = out.data() + static_cast<std::size_t>(co) * plane_out;
      for (long i = 0; i < plane_out; ++i) p[i] += b;
    }
  }

  std::vector<Var<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result<T>(std::move(out), std::move(parents), [g, cout, has_bias](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& wn = *self.parents[1];
    const Tensor<T>& gout = self.grad;
    const long plane_out = static_cast<long>(g.ho) * g.wo;
    if (has_bias && self.parents[2]->requires_grad) {
      Tensor<T>& gb = self.parents[2]->grad_buffer();
      for (int co = 0; co < cout; ++co) {
        const T* p = gout.data() + static_cast<std::size_t>(co) * plane_out;
        T s = 0;
        for (long i = 0; i < plane_out; ++i) s += p[i];
        gb[co] += s;
      }
    }
    const bool need_w = wn.requires_grad;
    const bool need_x = xn.requires_grad;
    if (!need_w && !need_x) return;
    const int tile = g.tile_rows();
    std::vector<T> cols(static_cast<std::size_t>(g.rows()) * tile * g.wo);
    const Eigen::Map<const detail::RowMat<T>> wmat(wn.value.data(), cout, g.rows());
    T* gw = need_w ? wn.grad_buffer().data() : nullptr;
    T* gx = need_x ? xn.grad_buffer().data() : nullptr;
    for (int oy0 = 0; oy0 < g.ho; oy0 += tile) {
      const int oy1 = std::min(g.ho, oy0 + tile);
      const int n = (oy1 - oy0) * g.wo;
      detail::ConstStridedMap<T> gmat(gout.data() + static_cast<std::size_t>(oy0) * g.wo, cout, n,
                                      Eigen::OuterStride<>(plane_out));
      Eigen::Map<detail::RowMat<T>> cmat(cols.data(), g.rows(), n);
      if (need_w) {
        detail::im2col(xn.value.data(), g, oy0, oy1, cols.data());
        Eigen::Map<detail::RowMat<T>> gwmat(gw, cout, g.rows());
        gwmat.noalias() += gmat * cmat.transpose();
      }
      if (need_x) {
        cmat.noalias() = wmat.transpose() * gmat;
        detail::col2im_add(cols.data(), g, oy0, oy1, gx);
      }
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = v > T(0) ? v : slope * v;
  return make_result<T>(std::move(out), {x}, [slope](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    auto& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xn.value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return leaky_relu<T>(x, T(0));
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_buffer() += self.grad;
  });
}

/// Concatenates two [C,H,W] maps along channels.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[1] != bs[1] || as[2] != bs[2])
    throw ShapeError("concat_channels: " + shape_str(as) + " vs " + shape_str(bs));
  std::vector<T> data;
  data.reserve(a.value().size() + b.value().size());
  data.insert(data.end(), a.value().storage().begin(), a.value().storage().end());
  data.insert(data.end(), b.value().storage().begin(), b.value().storage().end());
  const std::size_t na = a.value().size();
  return make_result<T>(Tensor<T>({as[0] + bs[0], as[1], as[2]}, std::move(data)), {a, b}, [na](Node<T>& self) {
    if (self.parents[0]->requires_grad) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

namespace detail {
struct Tap {
  int i0, i1;
  double w0, w1;
};
// Half-pixel-centred bilinear taps for a 2x enlargement.
inline std::vector<Tap> upsample_taps(int n) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    double src = std::max(0.0, (o + 0.5) / 2.0 - 0.5);
    int i0 = std::min(static_cast<int>(src), n - 1);
    int i1 = std::min(i0 + 1, n - 1);
    double f = src - i0;
    taps[o] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}
}  // namespace detail

/// Bilinear 2x enlargement of a [C,H,W] map.
template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 3) throw ShapeError("upsample2x: expected [C,H,W], got " + shape_str(s));
  const int c = s[0], h = s[1], w = s[2];
  auto ty = detail::upsample_taps(h);
  auto tx = detail::upsample_taps(w);
  Tensor<T> out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy) {
      const auto& a = ty[oy];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const auto& b = tx[ox];
        const T v = static_cast<T>(a.w0 * b.w0) * x.value().at(ch, a.i0, b.i0) +
                    static_cast<T>(a.w0 * b.w1) * x.value().at(ch, a.i0, b.i1) +
                    static_cast<T>(a.w1 * b.w0) * x.value().at(ch, a.i1, b.i0) +
                    static_cast<T>(a.w1 * b.w1) * x.value().at(ch, a.i1, b.i1);
        out.at(ch, oy, ox) = v;
      }
    }
  return make_result<T>(std::move(out), {x}, [c, h, w, ty = std::move(ty), tx = std::move(tx)](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < 2 * h; ++oy) {
        const auto& a = ty[oy];
        for (int ox = 0; ox < 2 * w; ++ox) {
          const auto& b = tx[ox];
          const T g = self.grad.at(ch, oy, ox);
          gx.at(ch, a.i0, b.i0) += static_cast<T>(a.w0 * b.w0) * g;
          gx.at(ch, a.i0, b.i1) += static_cast<T>(a.w0 * b.w1) * g;
          gx.at(ch, a.i1, b.i0) += static_cast<T>(a.w1 * b.w0) * g;
          gx.at(ch, a.i1, b.i1) += static_cast<T>(a.w1 * b.w1) * g;
        }
      }
  });
}

/// Fully connected layer: x [N] -> W [M,N] x + b [M].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& ws = weight.shape();
  if (ws.size() != 2 || x.value().size() != static_cast<std::size_t>(ws[1]) || bias.value().size() != static_cast<std::size_t>(ws[0]))
    throw ShapeError("linear: weight " + shape_str(ws) + " input " + shape_str(x.shape()));
  const int m = ws[0], n = ws[1];
  Tensor<T> out({m});
  for (int i = 0; i < m; ++i) {
    T s = bias.value()[i];
    for (int j = 0; j < n; ++j) s += weight.value()[static_cast<std::size_t>(i) * n + j] * x.value()[j];
    out[i] = s;
  }
  return make_result<T>(std::move(out), {x, weight, bias}, [m, n](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    Node<T>& wn = *self.parents[1];
    Node<T>& bn = *self.parents[2];
    if (bn.requires_grad) bn.grad_buffer() += self.grad;
    if (wn.requires_grad) {
      auto& gw = wn.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gw[static_cast<std::size_t>(i) * n + j] += self.grad[i] * xn.value[j];
    }
    if (xn.requires_grad) {
      auto& gx = xn.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gx[j] += self.grad[i] * wn.value[static_cast<std::size_t>(i) * n + j];
    }
  });
}

/// sqrt(max(v, 0)); the derivative is taken as zero wherever v <= 0.
template <typename T>
Var<T> sqrt_relu(const Var<T>& v) {
  Tensor<T> out = v.value();
  for (auto& e : out.values()) e = e > T(0) ? std::sqrt(e) : T(0);
  return make_result<T>(std::move(out), {v}, [](Node<T>& self) {
    auto& gv = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gv.size(); ++i)
      if (self.parents[0]->value[i] > T(0)) gv[i] += self.grad[i] * T(0.5) / std::sqrt(self.parents[0]->value[i]);
  });
}

/// Scalar sum of all elements.
template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s}), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& e : g.values()) e += self.grad[0];
  });
}

/// Scalar mean |a - b|.
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
  a.value().require_same_shape(b.value(), "mean_abs_diff");
  const std::size_t n = a.value().size();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s / static_cast<T>(n)}), {a, b}, [n](Node<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    Node<T>& an = *self.parents[0];
    Node<T>& bn = *self.parents[1];
    for (int side = 0; side < 2; ++side) {
      Node<T>& tgt = side == 0 ? an : bn;
      if (!tgt.requires_grad) continue;
      auto& gt = tgt.grad_buffer();
      const T sign = side == 0 ? T(1) : T(-1);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = an.value[i] - bn.value[i];
        if (d > T(0)) gt[i] += sign * g;
        else if (d < T(0)) gt[i] -= sign * g;
      }
    }
  });
}

/// Scalar mean (a - target)^2.
template <typename T>
Var<T> mean_sq_to(const Var<T>& a, T target) {
  const std::size_t n = a.value().size();
  T s = 0;
  for (T v : a.value().values()) s += (v - target) * (v - target);
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s / static_cast<T>(n)}), {a}, [n, target](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    auto& g = an.grad_buffer();
    const T k = T(2) * self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) g[i] += k * (an.value[i] - target);
  });
}

/// Weighted sum of scalar variables.
template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms) {
  T s = 0;
  std::vector<Var<T>> parents;
  std::vector<T> weights;
  for (const auto& [w, v] : terms) {
    if (v.value().size() != 1) throw ShapeError("weighted_sum expects scalars");
    s += w * v.item();
    parents.push_back(v);
    weights.push_back(w);
  }
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s}), std::move(parents), [weights](Node<T>& self) {
    for (std::size_t i = 0; i < weights.size(); ++i)
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer()[0] += weights[i] * self.grad[0];
  });
}

}  // namespace usgan::ops
