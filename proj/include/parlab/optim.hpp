#pragma once

#include <cmath>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

// Bias-corrected Adam, no weight decay.
struct AdamState {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  int64_t t = 0;
  std::vector<std::vector<Real>> m, v;

  void init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(static_cast<std::size_t>(p.numel()), Real(0));
      v.emplace_back(static_cast<std::size_t>(p.numel()), Real(0));
    }
    t = 0;
  }
};

// One in-place update; grads are left untouched (the caller zeroes them).
inline void adam_step(std::vector<Tensor>& params, AdamState& s) {
  if (s.m.size() != params.size()) throw Error("adam_step: state not initialized for params");
  s.t += 1;
  Real bc1 = Real(1) - std::pow(s.beta1, static_cast<Real>(s.t));
  Real bc2 = Real(1) - std::pow(s.beta2, static_cast<Real>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& m = s.m[i];
    auto& v = s.v[i];
    const auto& g = p.grad();
    auto& val = p.values();
    for (std::size_t j = 0; j < val.size(); ++j) {
      Real gj = g.empty() ? Real(0) : g[j];
      m[j] = s.beta1 * m[j] + (Real(1) - s.beta1) * gj;
      v[j] = s.beta2 * v[j] + (Real(1) - s.beta2) * gj * gj;
      Real mhat = m[j] / bc1;
      Real vhat = v[j] / bc2;
      val[j] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

}  // namespace parlab
