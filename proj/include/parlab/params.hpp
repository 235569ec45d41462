#pragma once

#include <string>
#include <utility>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

// Ordered name -> tensor table; registration order is the checkpoint order.
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(const std::string& name, Tensor t) {
    for (const auto& [n, _] : items)
      if (n == name) throw ConfigError("duplicate parameter name: " + name);
    t.named(name);
    items.emplace_back(name, std::move(t));
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  std::vector<Tensor> trainable() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : items)
      if (t.requires_grad()) out.push_back(t);
    return out;
  }

  std::vector<Tensor> all() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : items) out.push_back(t);
    return out;
  }

  void set_requires_grad_prefix(const std::string& prefix, bool rg) {
    for (auto& [n, t] : items)
      if (n.rfind(prefix, 0) == 0) t.set_requires_grad(rg);
  }

  void zero_grads() {
    for (auto& [n, t] : items) t.zero_grad();
  }
};

}  // namespace parlab
