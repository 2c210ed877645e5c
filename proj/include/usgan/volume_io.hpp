#pragma once

// Volume directory format: one 8-bit PNG per elevation index named
// slice_%04d.png (each an A-plane, axial rows x lateral columns) plus a
// volume.json sidecar {"axes":[...],"spacing":[...]}.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "usgan/imaging.hpp"
#include "usgan/png_io.hpp"

namespace usgan {

inline std::string slice_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "slice_%04d.png", index);
  return buf;
}

inline constexpr const char* kVolumeSidecar = "volume.json";

inline nlohmann::json volume_sidecar(const Volume& v) {
  return nlohmann::json{{"axes", {"axial", "lateral", "elevation"}},
                        {"spacing", {v.spacing[0], v.spacing[1], v.spacing[2]}}};
}

inline void write_volume_dir(const std::filesystem::path& dir, const Volume& v) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (int e = 0; e < v.elevation(); ++e) write_png(dir / slice_filename(e), extract_plane(v, PlaneKind::A, e).data);
  std::ofstream meta(dir / kVolumeSidecar, std::ios::trunc);
  if (!meta) throw IoError("cannot write " + (dir / kVolumeSidecar).string());
  meta << volume_sidecar(v).dump(2) << '\n';
}

/// Validates a sidecar and returns its spacing.
inline std::array<double, 3> parse_volume_sidecar(std::string_view text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": " + e.what());
  }
  if (!j.is_object() || j.value("axes", nlohmann::json::array()) != nlohmann::json{"axial", "lateral", "elevation"})
    throw IoError(origin + ": axes must be [\"axial\",\"lateral\",\"elevation\"]");
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  if (j.contains("spacing")) {
    const auto& s = j.at("spacing");
    if (!s.is_array() || s.size() != 3 || !std::all_of(s.begin(), s.end(), [](const auto& v) { return v.is_number(); }))
      throw IoError(origin + ": spacing must hold 3 numbers");
    for (std::size_t i = 0; i < 3; ++i) spacing[i] = s[i].get<double>();
  }
  return spacing;
}

inline Volume read_volume_dir(const std::filesystem::path& dir) {
  const auto meta_path = dir / kVolumeSidecar;
  if (!std::filesystem::exists(meta_path)) throw IoError("missing sidecar " + meta_path.string());
  const Bytes meta = read_file(meta_path);
  const auto spacing = parse_volume_sidecar(std::string_view(reinterpret_cast<const char*>(meta.data()), meta.size()), meta_path.string());
  std::vector<Image> planes;
  for (int e = 0; std::filesystem::exists(dir / slice_filename(e)); ++e) planes.push_back(read_png(dir / slice_filename(e)));
  if (planes.empty()) throw IoError("no slices in " + dir.string());
  return stack_a_planes(planes, spacing);
}

}  // namespace usgan
