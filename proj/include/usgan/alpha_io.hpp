#pragma once

// AlphaField carriers: an 8-bit PNG holding round(255 a) plus an optional
// JSON region table
//   {"default_alpha": d, "regions": [{"alpha": a, "rect": [r0, c0, r1, c1]}
//                                    | {"alpha": a, "mask": "<file or base64 PNG>"}]}
// Rectangles are half-open; mask pixels > 0 are inside. When a table is
// present the field is rasterised from it, so region alphas stay exact.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "usgan/adain.hpp"
#include "usgan/json_util.hpp"
#include "usgan/png_io.hpp"

namespace usgan {

inline Grid<std::uint8_t> quantize_alpha(const Grid<double>& a) {
  Grid<std::uint8_t> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(a[i], 0.0, 1.0) * 255.0));
  return out;
}

inline Grid<double> alpha_from_u8(const Grid<std::uint8_t>& g) {
  Grid<double> out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / 255.0;
  return out;
}

inline Bytes encode_alpha_png(const AlphaField& f) { return encode_png_u8(quantize_alpha(f.values)); }

inline Grid<std::uint8_t> rect_mask(int rows, int cols, int r0, int c0, int r1, int c1) {
  if (r0 < 0 || c0 < 0 || r1 > rows || c1 > cols || r0 >= r1 || c0 >= c1)
    throw ArgumentError("rect [" + std::to_string(r0) + "," + std::to_string(c0) + "," + std::to_string(r1) + "," + std::to_string(c1) +
                        "] is empty or outside " + extent_str(rows, cols));
  Grid<std::uint8_t> m(rows, cols);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.at(r, c) = 1;
  return m;
}

/// Parses a region table. `load_mask` turns a region's "mask" string into
/// PNG bytes (a file path for the CLI, base64 for the HTTP API).
inline AlphaField alpha_field_from_table(const Json& table, int rows, int cols, const Grid<double>* base,
                                        const std::function<Bytes(const std::string&)>& load_mask) {
  if (!table.is_object()) throw ArgumentError("alpha region table must be an object");
  double def = 0.0;
  if (table.contains("default_alpha")) {
    if (!table["default_alpha"].is_number()) throw ArgumentError("default_alpha must be a number");
    def = table["default_alpha"].get<double>();
  }
  std::vector<AlphaRegion> regions;
  if (table.contains("regions")) {
    if (!table["regions"].is_array()) throw ArgumentError("regions must be an array");
    for (const auto& r : table["regions"]) {
      if (!r.is_object() || !r.contains("alpha") || !r["alpha"].is_number()) throw ArgumentError("every region needs a numeric alpha");
      AlphaRegion reg;
      reg.alpha = r["alpha"].get<double>();
      if (r.contains("rect")) {
        const auto& q = r["rect"];
        if (!q.is_array() || q.size() != 4 || !std::all_of(q.begin(), q.end(), [](const Json& v) { return v.is_number_integer(); }))
          throw ArgumentError("rect must be [r0, c0, r1, c1]");
        reg.mask = rect_mask(rows, cols, q[0].get<int>(), q[1].get<int>(), q[2].get<int>(), q[3].get<int>());
      } else if (r.contains("mask") && r["mask"].is_string()) {
        reg.mask = decode_png_u8(load_mask(r["mask"].get<std::string>()));
      } else {
        throw ArgumentError("every region needs a rect or a mask");
      }
      regions.push_back(std::move(reg));
    }
  }
  AlphaField f = rasterize_alpha(regions, def, rows, cols);
  if (base) {
    // Regions paint over a supplied base field instead of the default.
    if (base->rows() != rows || base->cols() != cols) throw ShapeError("alpha base field does not match image");
    Grid<double> painted = *base;
    for (const auto& reg : regions)
      for (std::size_t i = 0; i < reg.mask.size(); ++i)
        if (reg.mask[i]) painted[i] = reg.alpha;
    f.values = std::move(painted);
  }
  f.validate();
  return f;
}

inline std::filesystem::path alpha_sidecar_path(const std::filesystem::path& png) {
  auto p = png;
  return p.replace_extension(".json");
}

/// Loads a mask PNG and, when present, its .json region table.
inline AlphaField load_alpha_field(const std::filesystem::path& png) {
  const auto g = decode_png_u8(read_file(png));
  const auto side = alpha_sidecar_path(png);
  if (!std::filesystem::exists(side)) return {alpha_from_u8(g), {}};
  Json table;
  try {
    std::ifstream in(side);
    table = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(side.string() + ": " + e.what());
  }
  AlphaField f = alpha_field_from_table(table, g.rows(), g.cols(), nullptr, [&](const std::string& rel) {
    const std::filesystem::path p = std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : png.parent_path() / rel;
    return read_file(p);
  });
  // The PNG must agree with the table up to its 8-bit quantisation.
  const auto q = quantize_alpha(f.values);
  if (!(q == g)) throw ArgumentError(png.string() + " does not match the region table in " + side.string());
  return f;
}

inline void save_alpha_field(const std::filesystem::path& png, const AlphaField& f, const Json& table = nullptr) {
  write_file(png, encode_alpha_png(f));
  if (!table.is_null()) {
    const std::string text = table.dump(2) + "\n";
    write_file(alpha_sidecar_path(png), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
}

}  // namespace usgan
