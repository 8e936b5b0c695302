#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "adfnet/tensor.hpp"

namespace adfnet {

template <class T>
struct ParamEntry {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
};

/// Named learnable tensors in definition order, each with its gradient and
/// ADAM moments (all four share one shape).
template <class T>
class ParamStore {
 public:
  ParamEntry<T>& add(std::string name, BasicTensor<T> value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const ParamEntry<T>& entry(const std::string& name) const;
  ParamEntry<T>& entry(const std::string& name);
  const BasicTensor<T>& value(const std::string& name) const { return entry(name).value; }
  BasicTensor<T>& value(const std::string& name) { return entry(name).value; }

  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  void fill_values(T v);

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) {
      auto& o = out.add(e.name, e.value.template cast<U>());
      o.adam_m = e.adam_m.template cast<U>();
      o.adam_v = e.adam_v.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace adfnet
