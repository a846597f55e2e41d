#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lit/error.hpp"
#include "lit/ops.hpp"
#include "lit/tensor.hpp"

namespace lit {

// Named parameters in insertion order. Iteration order is the order in which
// paths were added, which the model builders keep fixed, so serialisation is
// reproducible across runs and platforms.
template <class T>
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string path, Tensor<T> value) {
    if (index_.count(path)) throw StructuralError("duplicate parameter path: " + path);
    index_.emplace(path, entries_.size());
    entries_.emplace_back(std::move(path), std::move(value));
  }

  bool contains(const std::string& path) const { return index_.count(path) > 0; }

  const Tensor<T>& get(const std::string& path) const { return entries_[lookup(path)].second; }
  Tensor<T>& get(const std::string& path) { return entries_[lookup(path)].second; }
  // Undefined tensor when absent.
  Tensor<T> find(const std::string& path) const {
    auto it = index_.find(path);
    return it == index_.end() ? Tensor<T>() : entries_[it->second].second;
  }

  void set(const std::string& path, Tensor<T> value) {
    auto& slot = get(path);
    if (slot.shape() != value.shape()) {
      throw StructuralError("shape mismatch for " + path + ": " + to_string(slot.shape()) +
                            " vs " + to_string(value.shape()));
    }
    const bool rg = slot.requires_grad();
    slot = value.detach();
    slot.set_requires_grad(rg);
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  // Deep copy: fresh leaves with the same values and requires_grad flags.
  ParamStore clone() const {
    ParamStore out;
    for (const auto& [path, t] : entries_) {
      Tensor<T> c = t.detach();
      c.set_requires_grad(t.requires_grad());
      out.add(path, std::move(c));
    }
    return out;
  }

  void set_requires_grad(bool flag) {
    for (auto& e : entries_) e.second.set_requires_grad(flag);
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

 private:
  std::size_t lookup(const std::string& path) const {
    auto it = index_.find(path);
    if (it == index_.end()) throw StructuralError("missing parameter path: " + path);
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class U, class T>
ParamStore<U> cast_store(const ParamStore<T>& in) {
  ParamStore<U> out;
  for (const auto& [path, t] : in) out.add(path, cast<U>(t));
  return out;
}

template <class T>
bool bitwise_equal(const ParamStore<T>& a, const ParamStore<T>& b) {
  if (a.size() != b.size()) return false;
  auto ib = b.begin();
  for (const auto& [path, t] : a) {
    if (path != ib->first || !bitwise_equal(t, ib->second)) return false;
    ++ib;
  }
  return true;
}

using ParamStoreF = ParamStore<float>;
using ParamStoreD = ParamStore<double>;

}  // namespace lit
