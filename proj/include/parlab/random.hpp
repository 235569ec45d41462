#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "parlab/tensor.hpp"

namespace parlab {

// Deterministic RNG. Distributions are hand-rolled on top of mt19937_64 so
// that streams are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {  // Box-Muller
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  int64_t index(int64_t n) { return static_cast<int64_t>(gen_() % static_cast<uint64_t>(n)); }

  bool coin(double p) { return uniform() < p; }

  Rng fork(uint64_t salt) { return Rng(gen_() ^ (salt * 0x9e3779b97f4a7c15ull)); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = index(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

inline Tensor randn(Shape shape, Rng& rng, Real std_dev = 1.0, bool requires_grad = false) {
  int64_t n = shape_numel(shape);
  std::vector<Real> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<Real>(rng.normal()) * std_dev;
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Tensor rand_uniform(Shape shape, Rng& rng, Real lo, Real hi, bool requires_grad = false) {
  int64_t n = shape_numel(shape);
  std::vector<Real> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Xavier-uniform for ordinary projections.
inline Tensor init_linear_weight(int64_t fan_in, int64_t fan_out, Rng& rng) {
  Real s = static_cast<Real>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return rand_uniform({fan_in, fan_out}, rng, -s, s, true);
}

// Kaiming-uniform for load-bearing adapters.
inline Tensor init_kaiming_weight(int64_t fan_in, int64_t fan_out, Rng& rng) {
  Real s = static_cast<Real>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  return rand_uniform({fan_in, fan_out}, rng, -s, s, true);
}

}  // namespace parlab
