#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "parlab/ops.hpp"
#include "parlab/random.hpp"
#include "parlab/tensor.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// Continuous diagonal state space model per channel:
//   h'(t) = A h(t) + B x(t),  y(t) = <C, h(t)> + D x(t)
// A is stored as a vector of diagonal entries, all strictly negative.
// ---------------------------------------------------------------------------

struct ContinuousSSM {
  std::vector<Real> a;  // diagonal of A, entries < 0
  std::vector<Real> b;
  std::vector<Real> c;
  Real d = Real(1);

  int64_t state_size() const { return static_cast<int64_t>(a.size()); }
};

struct DiscreteSSM {
  std::vector<Real> abar;
  std::vector<Real> bbar;
  std::vector<Real> cbar;  // equals the continuous C
  Real delta = Real(0);
};

// phi(z) = (e^z - 1)/z with a 3-term series near zero to dodge cancellation.
inline Real zoh_phi(Real z) {
  if (std::fabs(z) < Real(1e-6)) return Real(1) + z / Real(2) + z * z / Real(6);
  return std::expm1(z) / z;
}

// Zero-order hold: abar = exp(dA), bbar = (dA)^-1 (exp(dA) - 1) dB.
inline std::pair<std::vector<Real>, std::vector<Real>> zoh_discretize(
    const std::vector<Real>& a, const std::vector<Real>& b, Real delta) {
  if (!(delta > Real(0))) throw DomainError("zoh_discretize: delta must be > 0");
  if (a.size() != b.size()) throw ShapeError("zoh_discretize: A and B sizes differ");
  std::vector<Real> abar(a.size()), bbar(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    Real z = delta * a[i];
    abar[i] = std::exp(z);
    bbar[i] = zoh_phi(z) * delta * b[i];
  }
  return {std::move(abar), std::move(bbar)};
}

inline DiscreteSSM discretize(const ContinuousSSM& ssm, Real delta) {
  auto [abar, bbar] = zoh_discretize(ssm.a, ssm.b, delta);
  return DiscreteSSM{std::move(abar), std::move(bbar), ssm.c, delta};
}

// h_t = abar ⊙ h_{t-1} + bbar * x_t;  y_t = <cbar, h_t> + feedthrough * x_t.
inline std::pair<std::vector<Real>, std::vector<Real>> sequential_recurrence(
    const DiscreteSSM& ssm, const std::vector<Real>& x, std::vector<Real> h0,
    Real feedthrough = Real(0)) {
  std::size_t n = ssm.abar.size();
  if (h0.empty()) h0.assign(n, Real(0));
  std::vector<Real> y(x.size());
  std::vector<Real> h = std::move(h0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    Real acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = ssm.abar[i] * h[i] + ssm.bbar[i] * x[t];
      acc += ssm.cbar[i] * h[i];
    }
    y[t] = acc + feedthrough * x[t];
  }
  return {std::move(y), std::move(h)};
}

// ---------------------------------------------------------------------------
// Associative scan over the affine maps h -> a*h + b.
// ---------------------------------------------------------------------------

struct ScanElement {
  Real a = Real(1);
  Real b = Real(0);

  // Apply `next` after `first`: (next ∘ first)(h) = next.a*(first.a*h + first.b) + next.b
  static ScanElement compose(const ScanElement& next, const ScanElement& first) {
    return {first.a * next.a, next.a * first.b + next.b};
  }
  Real apply(Real h) const { return a * h + b; }
};

inline constexpr int64_t kScanChunk = 64;

// Chunked O(L) scan: per chunk compose the affine maps sequentially, carry
// the state across chunks via the compositions, then fill chunk interiors.
// a, b, h are row-major [L x N]; h0 has N entries (empty means zero).
inline std::vector<Real> parallel_scan(const std::vector<Real>& a, const std::vector<Real>& b,
                                       std::vector<Real> h0, int64_t L, int64_t N) {
  if (a.size() != b.size() || static_cast<int64_t>(a.size()) != L * N)
    throw ShapeError("parallel_scan: coefficient shapes disagree");
  if (h0.empty()) h0.assign(static_cast<std::size_t>(N), Real(0));
  std::vector<Real> h(static_cast<std::size_t>(L * N));
  int64_t nchunks = (L + kScanChunk - 1) / kScanChunk;
  std::vector<Real> carry = std::move(h0);         // state entering the current chunk
  std::vector<Real> ca(static_cast<std::size_t>(N));  // chunk composition
  std::vector<Real> cb(static_cast<std::size_t>(N));
  for (int64_t c = 0; c < nchunks; ++c) {
    int64_t t0 = c * kScanChunk;
    int64_t t1 = std::min(L, t0 + kScanChunk);
    std::fill(ca.begin(), ca.end(), Real(1));
    std::fill(cb.begin(), cb.end(), Real(0));
    for (int64_t t = t0; t < t1; ++t) {
      const Real* at = a.data() + t * N;
      const Real* bt = b.data() + t * N;
      for (int64_t n = 0; n < N; ++n) {
        // compose step t onto the running chunk map
        ca[static_cast<std::size_t>(n)] *= at[n];
        cb[static_cast<std::size_t>(n)] = at[n] * cb[static_cast<std::size_t>(n)] + bt[n];
      }
    }
    // interior states from the carry
    std::vector<Real> run = carry;
    for (int64_t t = t0; t < t1; ++t) {
      const Real* at = a.data() + t * N;
      const Real* bt = b.data() + t * N;
      Real* ht = h.data() + t * N;
      for (int64_t n = 0; n < N; ++n) {
        run[static_cast<std::size_t>(n)] = at[n] * run[static_cast<std::size_t>(n)] + bt[n];
        ht[n] = run[static_cast<std::size_t>(n)];
      }
    }
    // advance the carry with the composed chunk map
    for (int64_t n = 0; n < N; ++n)
      carry[static_cast<std::size_t>(n)] =
          ca[static_cast<std::size_t>(n)] * carry[static_cast<std::size_t>(n)] +
          cb[static_cast<std::size_t>(n)];
  }
  return h;
}

// ---------------------------------------------------------------------------
// Exact simulation of the continuous system under piecewise-constant input;
// reference path for validating the discretization.
// ---------------------------------------------------------------------------

inline std::vector<Real> continuous_simulate(const ContinuousSSM& ssm, const std::vector<Real>& x,
                                             Real delta) {
  std::size_t n = ssm.a.size();
  std::vector<Real> h(n, Real(0));
  std::vector<Real> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      Real ad = ssm.a[i] * delta;
      Real decay = std::exp(ad);
      // integral of e^{A s} over the step, exact for A != 0
      Real integ = (ssm.a[i] == Real(0)) ? delta : std::expm1(ad) / ssm.a[i];
      h[i] = decay * h[i] + integ * ssm.b[i] * x[t];
    }
    Real acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += ssm.c[i] * h[i];
    y[t] = acc + ssm.d * x[t];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Differentiable first-order linear recurrence (tape op).
//   h_t = a_t ⊙ h_{t-1} + b_t, zero initial state; forward via parallel_scan.
// ---------------------------------------------------------------------------

inline Tensor linear_scan(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && a.shape() == b.shape(), "linear_scan: want equal [LxN]");
  int64_t L = a.dim(0), N = a.dim(1);
  std::vector<Real> h = parallel_scan(a.values(), b.values(), {}, L, N);
  Tensor t = Tensor::from({L, N}, std::move(h));
  Tensor ta = a, tb = b;
  record_op("linear_scan", t, {a, b}, [ta, tb, t, L, N]() mutable {
    // adjoint recurrence: s_t = g_t + a_{t+1} ⊙ s_{t+1}
    const auto& gy = t.grad();
    const Real* pa = ta.data();
    const Real* ph = t.data();
    std::vector<Real> s(static_cast<std::size_t>(N), Real(0));
    bool need_a = ta.requires_grad();
    bool need_b = tb.requires_grad();
    auto* ga = need_a ? &ta.grad_buf() : nullptr;
    auto* gb = need_b ? &tb.grad_buf() : nullptr;
    for (int64_t tt = L - 1; tt >= 0; --tt) {
      for (int64_t n = 0; n < N; ++n) {
        Real st = gy[static_cast<std::size_t>(tt * N + n)] +
                  (tt + 1 < L ? pa[(tt + 1) * N + n] * s[static_cast<std::size_t>(n)] : Real(0));
        s[static_cast<std::size_t>(n)] = st;
        if (need_a) {
          Real hprev = tt > 0 ? ph[(tt - 1) * N + n] : Real(0);
          (*ga)[static_cast<std::size_t>(tt * N + n)] += st * hprev;
        }
        if (need_b) (*gb)[static_cast<std::size_t>(tt * N + n)] += st;
      }
    }
  });
  return t;
}

// ---------------------------------------------------------------------------
// Selective scan. Timescale, input and output projections are functions of
// the input sequence:
//   delta_t = softplus(x_t . w_delta + b_delta)          (scalar per step)
//   B_t     = x_t . w_b   (N per step),  C_t = x_t . w_c (N per step)
//   abar[t,d,n] = exp(delta_t * A[d,n]),  A = -exp(a_log)
//   bbar[t,d,n] * x = delta_t * B_t[n] * x[t,d]          (Euler form)
//   y[t,d] = <C_t, h[t,d,:]> + d_skip[d] * x[t,d]
// ---------------------------------------------------------------------------

struct SelectiveSSMParams {
  Tensor w_delta;  // [D x 1]
  Tensor b_delta;  // [1]
  Tensor w_b;      // [D x N]
  Tensor w_c;      // [D x N]
  Tensor a_log;    // [D x N], A = -exp(a_log)
  Tensor d_skip;   // [1 x D]
  int64_t dim = 0;
  int64_t state = 0;

  static SelectiveSSMParams init(int64_t dim, int64_t state, Rng& rng, Real delta_init = Real(0.1)) {
    SelectiveSSMParams p;
    p.dim = dim;
    p.state = state;
    Real s = static_cast<Real>(std::sqrt(1.0 / static_cast<double>(dim)));
    p.w_delta = rand_uniform({dim, 1}, rng, -s, s, true);
    p.b_delta = Tensor::full({1}, detail::softplus_inv(delta_init), true);
    p.w_b = rand_uniform({dim, state}, rng, -s, s, true);
    p.w_c = rand_uniform({dim, state}, rng, -s, s, true);
    std::vector<Real> alog(static_cast<std::size_t>(dim * state));
    for (int64_t d = 0; d < dim; ++d)
      for (int64_t n = 0; n < state; ++n)
        alog[static_cast<std::size_t>(d * state + n)] =
            static_cast<Real>(std::log(static_cast<double>(n + 1)));
    p.a_log = Tensor::from({dim, state}, std::move(alog), true);
    p.d_skip = Tensor::full({1, dim}, Real(1), true);
    return p;
  }

  std::vector<Tensor> tensors() const { return {w_delta, b_delta, w_b, w_c, a_log, d_skip}; }
};

inline Tensor selective_scan(const Tensor& x, const SelectiveSSMParams& p) {
  detail::require(x.rank() == 2 && x.dim(1) == p.dim, "selective_scan: input dim mismatch");
  int64_t L = x.dim(0), D = p.dim, N = p.state;
  Tensor delta_raw = add(matmul(x, p.w_delta), p.b_delta);       // [L x 1]
  Tensor delta = softplus(reshape(delta_raw, {L}));              // [L], > 0
  Tensor b_t = matmul(x, p.w_b);                                 // [L x N]
  Tensor c_t = matmul(x, p.w_c);                                 // [L x N]
  Tensor a = neg(exp_t(p.a_log));                                // [D x N]
  Tensor da = matmul(reshape(delta, {L, 1}), reshape(a, {1, D * N}));  // [L x D*N]
  Tensor abar = exp_t(da);
  Tensor db = scale_rows(b_t, delta);                            // [L x N]
  Tensor bbar_x = rowwise_kron(x, db);                           // [L x D*N]
  Tensor h = linear_scan(abar, bbar_x);                          // [L x D*N]
  Tensor y = rowwise_contract(h, c_t, D);                        // [L x D]
  return add(y, mul(x, p.d_skip));
}

}  // namespace parlab
