#pragma once

// Tunable enhancement of whole images and volumes. Images are reflect-padded
// to a multiple of 8, run through the generator at full size and cropped
// back; the output is clamped to [0,1] only here.

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "usgan/checkpoint.hpp"
#include "usgan/imaging.hpp"

namespace usgan {

/// Original extent of an image before padding.
struct CropRecord {
  int rows = 0;
  int cols = 0;
  bool padded = false;
};

namespace detail {
// Mirror index without repeating the edge sample: -1 -> 1, n -> n - 2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}
}  // namespace detail

/// Reflect-pads bottom and right up to the next multiple of m.
template <typename P>
std::pair<Grid<P>, CropRecord> pad_to_multiple(const Grid<P>& img, int m = 8) {
  if (m < 1) throw ArgumentError("pad_to_multiple: m must be >= 1");
  const int rows = (img.rows() + m - 1) / m * m, cols = (img.cols() + m - 1) / m * m;
  CropRecord rec{img.rows(), img.cols(), rows != img.rows() || cols != img.cols()};
  if (!rec.padded) return {img, rec};
  Grid<P> out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = img.at(detail::reflect_index(r, img.rows()), detail::reflect_index(c, img.cols()));
  return {std::move(out), rec};
}

template <typename P>
Grid<P> crop_to(const Grid<P>& img, const CropRecord& rec) {
  if (!rec.padded) return img;
  if (rec.rows > img.rows() || rec.cols > img.cols()) throw ShapeError("crop record larger than image");
  Grid<P> out(rec.rows, rec.cols);
  for (int r = 0; r < rec.rows; ++r)
    for (int c = 0; c < rec.cols; ++c) out.at(r, c) = img.at(r, c);
  return out;
}

/// A frozen generator plus its learned code, ready for inference.
struct Model {
  ModelConfig config;
  ParamSet<float> generator;
  AdaInCode<float> code;
  std::string checkpoint_id;

  static std::shared_ptr<const Model> from_networks(const Networks<float>& nets, std::string id) {
    auto m = std::make_shared<Model>();
    m->config = nets.config;
    m->generator = nets.generator.clone();
    m->code = codegen_forward(nets.codegen, nets.config.codegen, kAdainSites);
    m->checkpoint_id = std::move(id);
    return m;
  }

  static std::shared_ptr<const Model> load(const std::filesystem::path& dir) {
    Checkpoint ck = load_checkpoint(dir);
    return from_networks(ck.nets, ck.id);
  }
};

/// Generator output for a scalar alpha, unclamped, at the padded size.
inline Tensor<float> generator_at_alpha(const Model& m, const Image& padded, double alpha) {
  return generator_forward(m.generator, to_tensor<float>(padded), interpolate_code(m.code, alpha));
}

inline Image enhance(const Model& m, const Image& img, double alpha) {
  auto [padded, rec] = pad_to_multiple(img, 8);
  return clamp01(crop_to(from_tensor(generator_at_alpha(m, padded, alpha)), rec));
}

inline Image enhance(const Model& m, const Image& img, const AlphaField& field) {
  field.validate();
  if (field.values.rows() != img.rows() || field.values.cols() != img.cols())
    throw ShapeError("alpha field " + extent_str(field.values.rows(), field.values.cols()) + " does not match image " +
                     extent_str(img.rows(), img.cols()));
  auto [padded, rec] = pad_to_multiple(img, 8);
  auto [pfield, frec] = pad_to_multiple(field.values, 8);
  return clamp01(crop_to(from_tensor(generator_forward_spatial(m.generator, to_tensor<float>(padded), m.code, pfield)), rec));
}

struct EnhanceRequest {
  PlaneImage image;
  std::optional<double> alpha;
  std::optional<AlphaField> alpha_field;
  std::string checkpoint_id;  // empty: whichever model is current
};

inline PlaneImage enhance_image(const EnhanceRequest& req, const Model& m) {
  if (req.alpha.has_value() == req.alpha_field.has_value()) throw ArgumentError("exactly one of alpha and alpha_field must be given");
  if (!req.checkpoint_id.empty() && req.checkpoint_id != m.checkpoint_id) throw NotFoundError("unknown checkpoint '" + req.checkpoint_id + "'");
  PlaneImage out{Image(), req.image.kind, req.image.source_index};
  if (req.alpha) {
    if (!(*req.alpha >= 0.0 && *req.alpha <= 1.0)) throw ArgumentError("alpha must lie in [0,1]");
    out.data = enhance(m, req.image.data, *req.alpha);
  } else {
    out.data = enhance(m, req.image.data, *req.alpha_field);
  }
  return out;
}

/// Enhances every A-plane independently and restacks along elevation.
inline Volume enhance_volume(const Volume& v, double alpha, const Model& m) {
  std::vector<Image> planes;
  planes.reserve(static_cast<std::size_t>(v.elevation()));
  for (int e = 0; e < v.elevation(); ++e) {
    try {
      planes.push_back(enhance(m, extract_plane(v, PlaneKind::A, e).data, alpha));
    } catch (const std::exception& ex) {
      throw std::runtime_error("slice " + std::to_string(e) + ": " + ex.what());
    }
  }
  return stack_a_planes(planes, v.spacing);
}

/// Holds the current model. Swapping installs a new immutable model; calls
/// already holding the old pointer finish on it.
class ModelStore {
 public:
  std::shared_ptr<const Model> current() const {
    std::lock_guard lock(mu_);
    return model_;
  }
  void swap(std::shared_ptr<const Model> m) {
    std::lock_guard lock(mu_);
    model_ = std::move(m);
  }
  PlaneImage enhance(const EnhanceRequest& req) const {
    auto m = current();
    if (!m) throw NotFoundError("no checkpoint loaded");
    return enhance_image(req, *m);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Model> model_;
};

/// Wall time of one call in seconds.
template <typename F>
double time_seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace usgan
