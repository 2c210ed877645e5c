#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "usgan/autograd.hpp"

namespace usgan {

/// Named learnable tensors in a fixed insertion order. Names are stable
/// path strings such as "generator.down1.weight".
template <typename T>
class ParamSet {
 public:
  Var<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ArgumentError("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.emplace_back(name, Var<T>::parameter(std::move(value)));
    return entries_.back().second;
  }

  const Var<T>& operator[](const std::string& name) const { return entries_[position(name)].second; }
  Var<T>& operator[](const std::string& name) { return entries_[position(name)].second; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (const auto& e : entries_) n.push_back(e.first);
    return n;
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      for (T v : e.second.value().values())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// Deep copy with fresh leaves (no shared storage, no gradients).
  ParamSet clone() const {
    ParamSet out;
    for (const auto& [name, v] : entries_) out.add(name, v.value());
    return out;
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, v] : entries_) out.add(name, v.value().template cast<U>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i)
      if (a.entries_[i].first != b.entries_[i].first || !(a.entries_[i].second.value() == b.entries_[i].second.value())) return false;
    return true;
  }

 private:
  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw NotFoundError("no parameter named '" + name + "'");
    return it->second;
  }

  std::vector<std::pair<std::string, Var<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace usgan
