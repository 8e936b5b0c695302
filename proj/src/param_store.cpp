#include "adfnet/param_store.hpp"

namespace adfnet {

template <class T>
ParamEntry<T>& ParamStore<T>::add(std::string name, BasicTensor<T> value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  const Shape s = value.shape();
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), BasicTensor<T>(s), BasicTensor<T>(s),
                      BasicTensor<T>(s)});
  return entries_.back();
}

template <class T>
const ParamEntry<T>& ParamStore<T>::entry(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second];
}

template <class T>
ParamEntry<T>& ParamStore<T>::entry(const std::string& name) {
  return const_cast<ParamEntry<T>&>(static_cast<const ParamStore&>(*this).entry(name));
}

template <class T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += e.value.size();
  return total;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_)
    for (auto& g : e.grad.values()) g = T(0);
}

template <class T>
void ParamStore<T>::fill_values(T v) {
  for (auto& e : entries_)
    for (auto& x : e.value.values()) x = v;
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace adfnet
