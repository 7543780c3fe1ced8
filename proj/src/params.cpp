#include "cmma/params.hpp"

#include <algorithm>

#include "cmma/errors.hpp"

namespace cmma {

Parameter& ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ValueError("duplicate parameter name: " + name);
  items_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  index_[name] = items_.size() - 1;
  return *items_.back();
}

Parameter& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter: " + name);
  return *items_[it->second];
}

const Parameter& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValueError("unknown parameter: " + name);
  return *items_[it->second];
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p->value.numel();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& p : items_) std::fill(p->grad.vec().begin(), p->grad.vec().end(), 0.0);
}

}  // namespace cmma
