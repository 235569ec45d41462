#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "parlab/ops.hpp"
#include "parlab/params.hpp"
#include "parlab/random.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// Prediction head. Two wirings:
//   pooled        — mean-pool tokens, one linear map to L logits (vision-only)
//   per_attribute — attribute j's own feature row -> its own logit
// ---------------------------------------------------------------------------

enum class HeadMode { pooled, per_attribute };

struct ParHead {
  HeadMode mode = HeadMode::pooled;
  int64_t feature_dim = 0;
  int64_t attrs = 0;
  Tensor w;  // pooled: [D x L]; per_attribute: [L x D]
  Tensor b;  // pooled: [1 x L]; per_attribute: [L]

  static ParHead init(HeadMode mode, int64_t feature_dim, int64_t attrs, Rng& rng,
                      ParamRegistry& reg, const std::string& prefix) {
    ParHead h;
    h.mode = mode;
    h.feature_dim = feature_dim;
    h.attrs = attrs;
    if (mode == HeadMode::pooled) {
      h.w = init_linear_weight(feature_dim, attrs, rng);
      h.b = Tensor::zeros({1, attrs}, true);
    } else {
      h.w = init_linear_weight(feature_dim, attrs, rng);
      h.w = transpose(h.w);
      h.w.set_requires_grad(true);
      h.b = Tensor::zeros({attrs}, true);
    }
    reg.add(prefix + ".w", h.w);
    reg.add(prefix + ".b", h.b);
    return h;
  }

  // features: pooled mode [T x D] (any T); per_attribute mode [L x D]
  Tensor logits(const Tensor& features) const {
    if (mode == HeadMode::pooled) {
      Tensor pooled = mean_axis0(features);          // [1 x D]
      return reshape(add(matmul(pooled, w), b), {attrs});
    }
    detail::require(features.rank() == 2 && features.dim(0) == attrs,
                    "per-attribute head: expected one feature row per attribute");
    return add(sum_axis1(mul(features, w)), b);      // [L]
  }
};

inline Tensor head_forward(const Tensor& features, const ParHead& head) {
  return sigmoid(head.logits(features));
}

// ---------------------------------------------------------------------------
// Positive-ratio weighted binary cross entropy.
// ---------------------------------------------------------------------------

enum class WeightMode { deepmar, literal, uniform };

inline WeightMode weight_mode_from(const std::string& s) {
  if (s == "deepmar") return WeightMode::deepmar;
  if (s == "literal") return WeightMode::literal;
  if (s == "uniform") return WeightMode::uniform;
  throw ConfigError("unknown weight mode: " + s);
}

inline std::vector<Real> positive_ratios(const std::vector<std::vector<uint8_t>>& labels) {
  if (labels.empty()) throw ConfigError("positive_ratios: empty label set");
  std::size_t L = labels[0].size();
  std::vector<Real> r(L, Real(0));
  for (const auto& row : labels) {
    if (row.size() != L) throw ShapeError("positive_ratios: ragged label rows");
    for (std::size_t j = 0; j < L; ++j) r[j] += row[j] ? Real(1) : Real(0);
  }
  for (auto& v : r) v /= static_cast<Real>(labels.size());
  return r;
}

struct LossWeights {
  std::vector<Real> ratio;
  WeightMode mode = WeightMode::deepmar;

  // weight applied to the y=1 / y=0 term of attribute j
  Real pos(std::size_t j) const {
    switch (mode) {
      case WeightMode::deepmar: return std::exp(Real(1) - ratio[j]);
      case WeightMode::literal: return std::exp(ratio[j]);
      case WeightMode::uniform: return Real(1);
    }
    return Real(1);
  }
  Real neg(std::size_t j) const {
    switch (mode) {
      case WeightMode::deepmar: return std::exp(ratio[j]);
      case WeightMode::literal: return std::exp(ratio[j]);
      case WeightMode::uniform: return Real(1);
    }
    return Real(1);
  }

  static LossWeights uniform(std::size_t attrs) {
    return LossWeights{std::vector<Real>(attrs, Real(0)), WeightMode::uniform};
  }
};

inline constexpr Real kProbClamp = Real(1e-7);

// probs: [L] or [S x L]; labels flattened to match. Mean over samples.
inline Tensor weighted_bce(const Tensor& probs, const std::vector<uint8_t>& labels,
                           const LossWeights& weights) {
  int64_t L = probs.dim(probs.rank() - 1);
  int64_t S = probs.numel() / L;
  detail::require(static_cast<int64_t>(labels.size()) == S * L,
                  "weighted_bce: labels do not match probabilities");
  detail::require(static_cast<int64_t>(weights.ratio.size()) == L,
                  "weighted_bce: weights sized for a different attribute count");
  check_finite(probs, "weighted_bce probabilities");
  // fold labels into constant per-cell coefficients
  std::vector<Real> cpos(static_cast<std::size_t>(S * L)), cneg(cpos.size());
  for (int64_t s = 0; s < S; ++s)
    for (int64_t j = 0; j < L; ++j) {
      std::size_t i = static_cast<std::size_t>(s * L + j);
      bool y = labels[i] != 0;
      cpos[i] = y ? weights.pos(static_cast<std::size_t>(j)) : Real(0);
      cneg[i] = y ? Real(0) : weights.neg(static_cast<std::size_t>(j));
    }
  Tensor wp = Tensor::from(probs.shape(), std::move(cpos));
  Tensor wn = Tensor::from(probs.shape(), std::move(cneg));
  Tensor p = clamp(probs, kProbClamp, Real(1) - kProbClamp);
  Tensor ones = Tensor::full(probs.shape(), Real(1));
  Tensor loss_terms = add(mul(wp, log_t(p)), mul(wn, log_t(sub(ones, p))));
  return scale(sum_all(loss_terms), Real(-1) / static_cast<Real>(S));
}

}  // namespace parlab
