#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

// Central-difference gradient check against the tape.
//
// f must build a scalar loss from x (using the active tape). Returns the max
// relative error over checked coordinates, denominator max(|a|, |n|, 1e-8).
// With max_coords > 0 only an evenly strided subset of coordinates is probed.
inline Real grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, Real h,
                       int64_t max_coords = 0) {
  std::vector<Real> analytic;
  {
    GradTape tape;
    TapeUse use(tape);
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor loss = f(x);
    if (loss.numel() != 1) throw Error("grad_check: f must be scalar-valued");
    tape.backward(loss);
    analytic = x.grad();
    if (analytic.empty()) analytic.assign(static_cast<std::size_t>(x.numel()), Real(0));
  }
  int64_t n = x.numel();
  int64_t stride = 1;
  if (max_coords > 0 && n > max_coords) stride = (n + max_coords - 1) / max_coords;
  Real worst = 0;
  NoGradGuard ng;
  for (int64_t i = 0; i < n; i += stride) {
    Real saved = x.at(i);
    x.at(i) = saved + h;
    Real fp = f(x).v(0);
    x.at(i) = saved - h;
    Real fm = f(x).v(0);
    x.at(i) = saved;
    Real numeric = (fp - fm) / (2 * h);
    Real a = analytic[static_cast<std::size_t>(i)];
    Real denom = std::max({std::fabs(a), std::fabs(numeric), Real(1e-8)});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace parlab
