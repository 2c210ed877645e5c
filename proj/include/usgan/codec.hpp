#pragma once

// Base64 (OpenSSL) and a minimal ustar archive reader/writer for volume
// uploads.

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "usgan/volume_io.hpp"

namespace usgan {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline Bytes base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  // Tolerate a data-URL prefix.
  if (auto comma = clean.find(','); clean.rfind("data:", 0) == 0 && comma != std::string::npos) clean.erase(0, comma + 1);
  if (clean.size() % 4 != 0) throw ArgumentError("invalid base64 length");
  Bytes out(clean.size() / 4 * 3);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw ArgumentError("invalid base64 data");
  std::size_t pad = 0;
  if (!clean.empty() && clean.back() == '=') ++pad;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

// ---------------------------------------------------------------------------
// ustar

struct TarEntry {
  std::string name;
  Bytes data;
};

namespace detail {
inline std::uint64_t parse_octal(const char* p, std::size_t n) {
  std::uint64_t v = 0;
  std::size_t i = 0;
  while (i < n && (p[i] == ' ' || p[i] == '\0')) ++i;
  for (; i < n && p[i] >= '0' && p[i] <= '7'; ++i) v = v * 8 + static_cast<std::uint64_t>(p[i] - '0');
  return v;
}
inline std::string field_str(const char* p, std::size_t n) { return std::string(p, strnlen(p, n)); }
}  // namespace detail

/// Regular files of a ustar/GNU tar stream; directories and extended
/// headers are skipped.
inline std::vector<TarEntry> read_tar(std::span<const std::uint8_t> tar) {
  std::vector<TarEntry> out;
  std::size_t pos = 0;
  while (pos + 512 <= tar.size()) {
    const char* h = reinterpret_cast<const char*>(tar.data() + pos);
    if (std::all_of(h, h + 512, [](char c) { return c == 0; })) break;
    unsigned sum = 0;
    for (int i = 0; i < 512; ++i) sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(h[i]);
    if (sum != detail::parse_octal(h + 148, 8)) throw ArgumentError("tar header checksum mismatch at offset " + std::to_string(pos));
    const std::uint64_t size = detail::parse_octal(h + 124, 12);
    std::string name = detail::field_str(h, 100);
    if (std::memcmp(h + 257, "ustar", 5) == 0) {
      const std::string prefix = detail::field_str(h + 345, 155);
      if (!prefix.empty()) name = prefix + "/" + name;
    }
    const char type = h[156];
    pos += 512;
    if (pos + size > tar.size()) throw ArgumentError("tar entry '" + name + "' is truncated");
    if (type == '0' || type == '\0') out.push_back({name, Bytes(tar.begin() + static_cast<std::ptrdiff_t>(pos), tar.begin() + static_cast<std::ptrdiff_t>(pos + size))});
    pos += (size + 511) / 512 * 512;
  }
  return out;
}

inline Bytes write_tar(const std::vector<TarEntry>& entries) {
  Bytes out;
  for (const auto& e : entries) {
    if (e.name.size() >= 100) throw ArgumentError("tar entry name too long: " + e.name);
    char h[512] = {};
    std::memcpy(h, e.name.data(), e.name.size());
    std::snprintf(h + 100, 8, "%07o", 0644);
    std::snprintf(h + 108, 8, "%07o", 0);
    std::snprintf(h + 116, 8, "%07o", 0);
    std::snprintf(h + 124, 12, "%011llo", static_cast<unsigned long long>(e.data.size()));
    std::snprintf(h + 136, 12, "%011o", 0);
    h[156] = '0';
    std::memcpy(h + 257, "ustar", 6);
    std::memcpy(h + 263, "00", 2);
    std::memset(h + 148, ' ', 8);
    unsigned sum = 0;
    for (char c : h) sum += static_cast<unsigned char>(c);
    std::snprintf(h + 148, 8, "%06o", sum);
    h[155] = ' ';
    out.insert(out.end(), h, h + 512);
    out.insert(out.end(), e.data.begin(), e.data.end());
    out.resize((out.size() + 511) / 512 * 512, 0);
  }
  out.resize(out.size() + 1024, 0);
  return out;
}

/// Builds a volume from an archive holding volume.json and
/// slice_0000.png, slice_0001.png, ... (directory prefixes are ignored).
inline Volume volume_from_archive(std::span<const std::uint8_t> tar) {
  std::map<std::string, const Bytes*> files;
  const auto entries = read_tar(tar);
  for (const auto& e : entries) {
    const auto slash = e.name.find_last_of('/');
    files[slash == std::string::npos ? e.name : e.name.substr(slash + 1)] = &e.data;
  }
  auto meta = files.find(kVolumeSidecar);
  if (meta == files.end()) throw ArgumentError("archive has no volume.json");
  const auto spacing = parse_volume_sidecar(std::string_view(reinterpret_cast<const char*>(meta->second->data()), meta->second->size()), "volume.json");
  std::vector<Image> planes;
  for (int e = 0;; ++e) {
    auto it = files.find(slice_filename(e));
    if (it == files.end()) break;
    planes.push_back(decode_png(*it->second));
  }
  if (planes.empty()) throw ArgumentError("archive has no slice_0000.png");
  return stack_a_planes(planes, spacing);
}

inline Bytes volume_to_archive(const Volume& v) {
  std::vector<TarEntry> entries;
  const std::string meta = volume_sidecar(v).dump(2) + "\n";
  entries.push_back({kVolumeSidecar, Bytes(meta.begin(), meta.end())});
  for (int e = 0; e < v.elevation(); ++e) entries.push_back({slice_filename(e), encode_png(extract_plane(v, PlaneKind::A, e).data)});
  return write_tar(entries);
}

}  // namespace usgan
