#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmma/tensor.hpp"

namespace cmma {

/// Named trainable tensor with its gradient accumulator. Names are
/// dot-separated paths ("f.mu.W") and unique within one ParamSet.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // always the same shape as value

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}
};

/// Ordered collection of parameters. Order is creation order and determines
/// both the flattened coordinate layout used by finite differences and the
/// consumption order of the init RNG stream.
class ParamSet {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  Parameter& operator[](std::size_t i) { return *items_[i]; }
  const Parameter& operator[](std::size_t i) const { return *items_[i]; }

  void zero_grads();

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cmma
