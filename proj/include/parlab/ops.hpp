#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

namespace detail {

// Leading-1 broadcast of b onto a: align shapes on the right; b may carry
// extra/unequal extents only as 1s on the left.
inline bool broadcastable_onto(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  std::size_t off = a.size() - b.size();
  std::size_t first_real = 0;
  while (first_real < b.size() && b[first_real] == 1) ++first_real;
  for (std::size_t i = first_real; i < b.size(); ++i)
    if (b[i] != a[off + i]) return false;
  return true;
}

// Sums grad over the broadcast leading extents of b.
inline void reduce_to_shape(const std::vector<Real>& gy, const Shape& a, const Shape& b,
                            std::vector<Real>& gb) {
  int64_t nb = shape_numel(b);
  int64_t na = shape_numel(a);
  int64_t repeat = na / nb;
  for (int64_t r = 0; r < repeat; ++r) {
    const Real* src = gy.data() + r * nb;
    for (int64_t i = 0; i < nb; ++i) gb[static_cast<std::size_t>(i)] += src[i];
  }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// construction helpers
// ---------------------------------------------------------------------------

inline Tensor constant(Shape shape, Real v) { return Tensor::full(std::move(shape), v); }

inline Tensor from_vec(Shape shape, std::vector<Real> data, bool requires_grad = false) {
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

// ---------------------------------------------------------------------------
// elementwise binary ops (same shape, or leading-1 broadcast of one side)
// ---------------------------------------------------------------------------

namespace detail {

template <class FwdF, class BwdA, class BwdB>
inline Tensor binary_op(const char* tag, const Tensor& a, const Tensor& b, FwdF f, BwdA ga,
                        BwdB gb) {
  const Tensor *big = &a, *small = &b;
  bool b_is_small = true;
  if (a.shape() == b.shape()) {
    // plain case
  } else if (broadcastable_onto(a.shape(), b.shape())) {
    // b broadcasts
  } else if (broadcastable_onto(b.shape(), a.shape())) {
    big = &b;
    small = &a;
    b_is_small = false;
  } else {
    throw ShapeError(std::string(tag) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are not broadcast-compatible");
  }
  int64_t n = big->numel();
  int64_t m = small->numel();
  std::vector<Real> out(static_cast<std::size_t>(n));
  const Real* pb = big->data();
  const Real* ps = small->data();
  for (int64_t i = 0; i < n; ++i) {
    Real x = b_is_small ? pb[i] : ps[i % m];
    Real y = b_is_small ? ps[i % m] : pb[i];
    out[static_cast<std::size_t>(i)] = f(x, y);
  }
  Tensor t = Tensor::from(big->shape(), std::move(out));
  Tensor ta = a, tb = b;
  record_op(tag, t, {a, b}, [ta, tb, t, ga, gb]() mutable {
    const auto& gy = t.grad();
    int64_t n = t.numel();
    int64_t ma = ta.numel(), mb = tb.numel();
    if (ta.requires_grad()) {
      auto& g = ta.grad_buf();
      const Real* pa = ta.data();
      const Real* pb2 = tb.data();
      for (int64_t i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i % ma)] +=
            gy[static_cast<std::size_t>(i)] *
            ga(pa[i % ma], pb2[i % mb]);
    }
    if (tb.requires_grad()) {
      auto& g = tb.grad_buf();
      const Real* pa = ta.data();
      const Real* pb2 = tb.data();
      for (int64_t i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i % mb)] +=
            gy[static_cast<std::size_t>(i)] *
            gb(pa[i % ma], pb2[i % mb]);
    }
  });
  return t;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(1); });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real(1); },
      [](Real, Real) { return Real(-1); });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

template <class FwdF, class BwdF>
inline Tensor unary_op(const char* tag, const Tensor& x, FwdF f, BwdF df) {
  int64_t n = x.numel();
  std::vector<Real> out(static_cast<std::size_t>(n));
  const Real* px = x.data();
  for (int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = f(px[i]);
  Tensor t = Tensor::from(x.shape(), std::move(out));
  Tensor tx = x;
  record_op(tag, t, {x}, [tx, t, df]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    const Real* px = tx.data();
    const Real* py = t.data();
    int64_t n = tx.numel();
    for (int64_t i = 0; i < n; ++i)
      g[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)] * df(px[i], py[i]);
  });
  return t;
}

inline Real sigmoid_s(Real x) {
  if (x >= 0) {
    Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

inline Real softplus_s(Real x) {
  // log(1 + e^x), stable both tails
  if (x > Real(30)) return x;
  if (x < Real(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline Real softplus_inv(Real y) {
  // inverse of softplus for y > 0
  if (y > Real(30)) return y;
  return y + std::log(-std::expm1(-y));
}

constexpr Real kInvSqrt2 = Real(0.7071067811865475244);
constexpr Real kInvSqrt2Pi = Real(0.3989422804014326779);

}  // namespace detail

inline Tensor neg(const Tensor& x) {
  return detail::unary_op(
      "neg", x, [](Real v) { return -v; }, [](Real, Real) { return Real(-1); });
}

inline Tensor scale(const Tensor& x, Real c) {
  return detail::unary_op(
      "scale", x, [c](Real v) { return c * v; }, [c](Real, Real) { return c; });
}

inline Tensor add_const(const Tensor& x, Real c) {
  return detail::unary_op(
      "add_const", x, [c](Real v) { return v + c; }, [](Real, Real) { return Real(1); });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      "sigmoid", x, [](Real v) { return detail::sigmoid_s(v); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary_op(
      "silu", x, [](Real v) { return v * detail::sigmoid_s(v); },
      [](Real v, Real) {
        Real s = detail::sigmoid_s(v);
        return s + v * s * (Real(1) - s);
      });
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary_op(
      "softplus", x, [](Real v) { return detail::softplus_s(v); },
      [](Real v, Real) { return detail::sigmoid_s(v); });
}

inline Tensor exp_t(const Tensor& x) {
  return detail::unary_op(
      "exp", x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

inline Tensor log_t(const Tensor& x) {
  return detail::unary_op(
      "log", x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

inline Tensor gelu(const Tensor& x) {
  return detail::unary_op(
      "gelu", x,
      [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * detail::kInvSqrt2)); },
      [](Real v, Real) {
        Real cdf = Real(0.5) * (Real(1) + std::erf(v * detail::kInvSqrt2));
        Real pdf = detail::kInvSqrt2Pi * std::exp(Real(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

inline Tensor clamp(const Tensor& x, Real lo, Real hi) {
  return detail::unary_op(
      "clamp", x, [lo, hi](Real v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](Real v, Real) { return (v > lo && v < hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// matmul and friends
// ---------------------------------------------------------------------------

namespace detail {

inline void gemm_acc(const Real* A, const Real* B, Real* C, int64_t M, int64_t K, int64_t N) {
  // C (MxN) += A (MxK) * B (KxN), row-major
  for (int64_t i = 0; i < M; ++i) {
    const Real* a = A + i * K;
    Real* c = C + i * N;
    for (int64_t k = 0; k < K; ++k) {
      Real av = a[k];
      const Real* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

inline void gemm_acc_nt(const Real* A, const Real* B, Real* C, int64_t M, int64_t K, int64_t N) {
  // C (MxN) += A (MxK) * B^T where B is (NxK)
  for (int64_t i = 0; i < M; ++i) {
    const Real* a = A + i * K;
    Real* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const Real* b = B + j * K;
      Real acc = 0;
      for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

inline void gemm_acc_tn(const Real* A, const Real* B, Real* C, int64_t M, int64_t K, int64_t N) {
  // C (MxN) += A^T * B where A is (KxM), B is (KxN)
  for (int64_t k = 0; k < K; ++k) {
    const Real* a = A + k * M;
    const Real* b = B + k * N;
    for (int64_t i = 0; i < M; ++i) {
      Real av = a[i];
      Real* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2,
                  "matmul: operands must be rank-2, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  int64_t M = a.dim(0), K = a.dim(1), K2 = b.dim(0), N = b.dim(1);
  detail::require(K == K2, "matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
                               shape_str(b.shape()));
  std::vector<Real> out(static_cast<std::size_t>(M * N), Real(0));
  detail::gemm_acc(a.data(), b.data(), out.data(), M, K, N);
  Tensor t = Tensor::from({M, N}, std::move(out));
  Tensor ta = a, tb = b;
  record_op("matmul", t, {a, b}, [ta, tb, t, M, K, N]() mutable {
    const Real* gy = t.grad().data();
    if (ta.requires_grad())  // dA = dY * B^T
      detail::gemm_acc_nt(gy, tb.data(), ta.grad_buf().data(), M, N, K);
    if (tb.requires_grad())  // dB = A^T * dY
      detail::gemm_acc_tn(ta.data(), gy, tb.grad_buf().data(), K, M, N);
  });
  return t;
}

inline Tensor transpose(const Tensor& x) {
  detail::require(x.rank() == 2, "transpose: rank-2 required");
  int64_t R = x.dim(0), C = x.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(R * C));
  const Real* p = x.data();
  for (int64_t i = 0; i < R; ++i)
    for (int64_t j = 0; j < C; ++j) out[static_cast<std::size_t>(j * R + i)] = p[i * C + j];
  Tensor t = Tensor::from({C, R}, std::move(out));
  Tensor tx = x;
  record_op("transpose", t, {x}, [tx, t, R, C]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    for (int64_t i = 0; i < R; ++i)
      for (int64_t j = 0; j < C; ++j)
        g[static_cast<std::size_t>(i * C + j)] += gy[static_cast<std::size_t>(j * R + i)];
  });
  return t;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  detail::require(shape_numel(shape) == x.numel(),
                  "reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                      shape_str(shape));
  Tensor t = Tensor::from(std::move(shape), x.values());
  Tensor tx = x;
  record_op("reshape", t, {x}, [tx, t]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
  });
  return t;
}

// ---------------------------------------------------------------------------
// reductions and row/column ops (row-major 2-D conventions)
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  Real s = 0;
  for (Real v : x.values()) s += v;
  Tensor t = Tensor::from({1}, {s});
  Tensor tx = x;
  record_op("sum_all", t, {x}, [tx, t]() mutable {
    if (!tx.requires_grad()) return;
    Real gy = t.grad()[0];
    auto& g = tx.grad_buf();
    for (auto& v : g) v += gy;
  });
  return t;
}

inline Tensor mean_axis0(const Tensor& x) {
  // [T x D] -> [1 x D]
  detail::require(x.rank() == 2, "mean_axis0: rank-2 required");
  int64_t T = x.dim(0), D = x.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(D), Real(0));
  const Real* p = x.data();
  for (int64_t t = 0; t < T; ++t)
    for (int64_t d = 0; d < D; ++d) out[static_cast<std::size_t>(d)] += p[t * D + d];
  for (auto& v : out) v /= static_cast<Real>(T);
  Tensor t = Tensor::from({1, D}, std::move(out));
  Tensor tx = x;
  record_op("mean_axis0", t, {x}, [tx, t, T, D]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    Real inv = Real(1) / static_cast<Real>(T);
    for (int64_t tt = 0; tt < T; ++tt)
      for (int64_t d = 0; d < D; ++d)
        g[static_cast<std::size_t>(tt * D + d)] += gy[static_cast<std::size_t>(d)] * inv;
  });
  return t;
}

inline Tensor sum_axis1(const Tensor& x) {
  // [T x D] -> [T]
  detail::require(x.rank() == 2, "sum_axis1: rank-2 required");
  int64_t T = x.dim(0), D = x.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(T), Real(0));
  const Real* p = x.data();
  for (int64_t t = 0; t < T; ++t) {
    Real s = 0;
    for (int64_t d = 0; d < D; ++d) s += p[t * D + d];
    out[static_cast<std::size_t>(t)] = s;
  }
  Tensor t = Tensor::from({T}, std::move(out));
  Tensor tx = x;
  record_op("sum_axis1", t, {x}, [tx, t, T, D]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    for (int64_t tt = 0; tt < T; ++tt)
      for (int64_t d = 0; d < D; ++d)
        g[static_cast<std::size_t>(tt * D + d)] += gy[static_cast<std::size_t>(tt)];
  });
  return t;
}

inline Tensor scale_rows(const Tensor& x, const Tensor& s) {
  // y[t, m] = x[t, m] * s[t]
  detail::require(x.rank() == 2 && s.rank() == 1 && s.dim(0) == x.dim(0),
                  "scale_rows: want [TxM] and [T]");
  int64_t T = x.dim(0), M = x.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(T * M));
  const Real* px = x.data();
  const Real* ps = s.data();
  for (int64_t t = 0; t < T; ++t)
    for (int64_t m = 0; m < M; ++m)
      out[static_cast<std::size_t>(t * M + m)] = px[t * M + m] * ps[t];
  Tensor t = Tensor::from({T, M}, std::move(out));
  Tensor tx = x, ts = s;
  record_op("scale_rows", t, {x, s}, [tx, ts, t, T, M]() mutable {
    const auto& gy = t.grad();
    if (tx.requires_grad()) {
      auto& g = tx.grad_buf();
      const Real* ps = ts.data();
      for (int64_t tt = 0; tt < T; ++tt)
        for (int64_t m = 0; m < M; ++m)
          g[static_cast<std::size_t>(tt * M + m)] +=
              gy[static_cast<std::size_t>(tt * M + m)] * ps[tt];
    }
    if (ts.requires_grad()) {
      auto& g = ts.grad_buf();
      const Real* px = tx.data();
      for (int64_t tt = 0; tt < T; ++tt) {
        Real acc = 0;
        for (int64_t m = 0; m < M; ++m)
          acc += gy[static_cast<std::size_t>(tt * M + m)] * px[tt * M + m];
        g[static_cast<std::size_t>(tt)] += acc;
      }
    }
  });
  return t;
}

inline Tensor rowwise_kron(const Tensor& x, const Tensor& u) {
  // y[t, d*N + n] = x[t, d] * u[t, n]
  detail::require(x.rank() == 2 && u.rank() == 2 && x.dim(0) == u.dim(0),
                  "rowwise_kron: want [TxD] and [TxN]");
  int64_t T = x.dim(0), D = x.dim(1), N = u.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(T * D * N));
  const Real* px = x.data();
  const Real* pu = u.data();
  for (int64_t t = 0; t < T; ++t)
    for (int64_t d = 0; d < D; ++d) {
      Real xv = px[t * D + d];
      const Real* ur = pu + t * N;
      Real* o = out.data() + (t * D + d) * N;
      for (int64_t n = 0; n < N; ++n) o[n] = xv * ur[n];
    }
  Tensor t = Tensor::from({T, D * N}, std::move(out));
  Tensor tx = x, tu = u;
  record_op("rowwise_kron", t, {x, u}, [tx, tu, t, T, D, N]() mutable {
    const auto& gy = t.grad();
    if (tx.requires_grad()) {
      auto& g = tx.grad_buf();
      const Real* pu = tu.data();
      for (int64_t tt = 0; tt < T; ++tt)
        for (int64_t d = 0; d < D; ++d) {
          const Real* gr = gy.data() + (tt * D + d) * N;
          const Real* ur = pu + tt * N;
          Real acc = 0;
          for (int64_t n = 0; n < N; ++n) acc += gr[n] * ur[n];
          g[static_cast<std::size_t>(tt * D + d)] += acc;
        }
    }
    if (tu.requires_grad()) {
      auto& g = tu.grad_buf();
      const Real* px = tx.data();
      for (int64_t tt = 0; tt < T; ++tt)
        for (int64_t d = 0; d < D; ++d) {
          Real xv = px[tt * D + d];
          const Real* gr = gy.data() + (tt * D + d) * N;
          Real* gu = g.data() + tt * N;
          for (int64_t n = 0; n < N; ++n) gu[n] += gr[n] * xv;
        }
    }
  });
  return t;
}

inline Tensor rowwise_contract(const Tensor& h, const Tensor& c, int64_t D) {
  // h: [T x D*N], c: [T x N] -> y[t, d] = sum_n h[t, d*N+n] * c[t, n]
  detail::require(h.rank() == 2 && c.rank() == 2 && h.dim(0) == c.dim(0),
                  "rowwise_contract: want [TxD*N] and [TxN]");
  int64_t T = h.dim(0), N = c.dim(1);
  detail::require(h.dim(1) == D * N, "rowwise_contract: inner dim mismatch");
  std::vector<Real> out(static_cast<std::size_t>(T * D), Real(0));
  const Real* ph = h.data();
  const Real* pc = c.data();
  for (int64_t t = 0; t < T; ++t)
    for (int64_t d = 0; d < D; ++d) {
      const Real* hr = ph + (t * D + d) * N;
      const Real* cr = pc + t * N;
      Real acc = 0;
      for (int64_t n = 0; n < N; ++n) acc += hr[n] * cr[n];
      out[static_cast<std::size_t>(t * D + d)] = acc;
    }
  Tensor t = Tensor::from({T, D}, std::move(out));
  Tensor th = h, tc = c;
  record_op("rowwise_contract", t, {h, c}, [th, tc, t, T, D, N]() mutable {
    const auto& gy = t.grad();
    if (th.requires_grad()) {
      auto& g = th.grad_buf();
      const Real* pc = tc.data();
      for (int64_t tt = 0; tt < T; ++tt)
        for (int64_t d = 0; d < D; ++d) {
          Real gv = gy[static_cast<std::size_t>(tt * D + d)];
          const Real* cr = pc + tt * N;
          Real* gh = g.data() + (tt * D + d) * N;
          for (int64_t n = 0; n < N; ++n) gh[n] += gv * cr[n];
        }
    }
    if (tc.requires_grad()) {
      auto& g = tc.grad_buf();
      const Real* ph = th.data();
      for (int64_t tt = 0; tt < T; ++tt)
        for (int64_t d = 0; d < D; ++d) {
          Real gv = gy[static_cast<std::size_t>(tt * D + d)];
          const Real* hr = ph + (tt * D + d) * N;
          Real* gc = g.data() + tt * N;
          for (int64_t n = 0; n < N; ++n) gc[n] += gv * hr[n];
        }
    }
  });
  return t;
}

// ---------------------------------------------------------------------------
// shape surgery: reverse / concat / slice
// ---------------------------------------------------------------------------

inline Tensor reverse_rows(const Tensor& x) {
  detail::require(x.rank() == 2, "reverse_rows: rank-2 required");
  int64_t T = x.dim(0), D = x.dim(1);
  std::vector<Real> out(static_cast<std::size_t>(T * D));
  const Real* p = x.data();
  for (int64_t t = 0; t < T; ++t)
    std::memcpy(out.data() + (T - 1 - t) * D, p + t * D, sizeof(Real) * static_cast<std::size_t>(D));
  Tensor t = Tensor::from({T, D}, std::move(out));
  Tensor tx = x;
  record_op("reverse_rows", t, {x}, [tx, t, T, D]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    for (int64_t tt = 0; tt < T; ++tt)
      for (int64_t d = 0; d < D; ++d)
        g[static_cast<std::size_t>(tt * D + d)] += gy[static_cast<std::size_t>((T - 1 - tt) * D + d)];
  });
  return t;
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
                  "concat_rows: column counts differ");
  int64_t Ta = a.dim(0), Tb = b.dim(0), D = a.dim(1);
  std::vector<Real> out;
  out.reserve(static_cast<std::size_t>((Ta + Tb) * D));
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  Tensor t = Tensor::from({Ta + Tb, D}, std::move(out));
  Tensor ta = a, tb = b;
  record_op("concat_rows", t, {a, b}, [ta, tb, t, Ta, Tb, D]() mutable {
    const auto& gy = t.grad();
    if (ta.requires_grad()) {
      auto& g = ta.grad_buf();
      for (int64_t i = 0; i < Ta * D; ++i) g[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(i)];
    }
    if (tb.requires_grad()) {
      auto& g = tb.grad_buf();
      for (int64_t i = 0; i < Tb * D; ++i)
        g[static_cast<std::size_t>(i)] += gy[static_cast<std::size_t>(Ta * D + i)];
    }
  });
  return t;
}

inline Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
  detail::require(x.rank() == 2 && 0 <= r0 && r0 < r1 && r1 <= x.dim(0),
                  "slice_rows: bad range");
  int64_t D = x.dim(1), T = r1 - r0;
  std::vector<Real> out(x.values().begin() + r0 * D, x.values().begin() + r1 * D);
  Tensor t = Tensor::from({T, D}, std::move(out));
  Tensor tx = x;
  record_op("slice_rows", t, {x}, [tx, t, r0, T, D]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    for (int64_t i = 0; i < T * D; ++i)
      g[static_cast<std::size_t>(r0 * D + i)] += gy[static_cast<std::size_t>(i)];
  });
  return t;
}

inline Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  detail::require(x.rank() == 2 && 0 <= c0 && c0 < c1 && c1 <= x.dim(1),
                  "slice_cols: bad range");
  int64_t T = x.dim(0), D = x.dim(1), W = c1 - c0;
  std::vector<Real> out(static_cast<std::size_t>(T * W));
  const Real* p = x.data();
  for (int64_t t = 0; t < T; ++t)
    std::memcpy(out.data() + t * W, p + t * D + c0, sizeof(Real) * static_cast<std::size_t>(W));
  Tensor t = Tensor::from({T, W}, std::move(out));
  Tensor tx = x;
  record_op("slice_cols", t, {x}, [tx, t, c0, T, D, W]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    for (int64_t tt = 0; tt < T; ++tt)
      for (int64_t j = 0; j < W; ++j)
        g[static_cast<std::size_t>(tt * D + c0 + j)] += gy[static_cast<std::size_t>(tt * W + j)];
  });
  return t;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  int64_t T = parts[0].dim(0), D = 0;
  for (const auto& p : parts) {
    detail::require(p.rank() == 2 && p.dim(0) == T, "concat_cols: row counts differ");
    D += p.dim(1);
  }
  std::vector<Real> out(static_cast<std::size_t>(T * D));
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t W = p.dim(1);
    for (int64_t t = 0; t < T; ++t)
      std::memcpy(out.data() + t * D + off, p.data() + t * W,
                  sizeof(Real) * static_cast<std::size_t>(W));
    off += W;
  }
  Tensor t = Tensor::from({T, D}, std::move(out));
  std::vector<Tensor> held = parts;
  record_op("concat_cols", t, parts, [held, t, T, D]() mutable {
    const auto& gy = t.grad();
    int64_t off = 0;
    for (auto& p : held) {
      int64_t W = p.dim(1);
      if (p.requires_grad()) {
        auto& g = p.grad_buf();
        for (int64_t tt = 0; tt < T; ++tt)
          for (int64_t j = 0; j < W; ++j)
            g[static_cast<std::size_t>(tt * W + j)] += gy[static_cast<std::size_t>(tt * D + off + j)];
      }
      off += W;
    }
  });
  return t;
}

// ---------------------------------------------------------------------------
// normalization and softmax
// ---------------------------------------------------------------------------

inline constexpr Real kLayerNormEps = Real(1e-5);  // denominator floor is sqrt(var + eps^2)

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  detail::require(x.rank() >= 1, "layer_norm: rank >= 1 required");
  int64_t D = x.dim(x.rank() - 1);
  detail::require(gamma.numel() == D && beta.numel() == D,
                  "layer_norm: gamma/beta must have last-axis size");
  int64_t rows = x.numel() / D;
  std::vector<Real> out(static_cast<std::size_t>(x.numel()));
  std::vector<Real> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<Real> inv_sigma(static_cast<std::size_t>(rows));
  const Real* px = x.data();
  const Real* pg = gamma.data();
  const Real* pb = beta.data();
  const Real eps2 = kLayerNormEps * kLayerNormEps;
  for (int64_t r = 0; r < rows; ++r) {
    const Real* row = px + r * D;
    Real mu = 0;
    for (int64_t d = 0; d < D; ++d) mu += row[d];
    mu /= static_cast<Real>(D);
    Real var = 0;
    for (int64_t d = 0; d < D; ++d) {
      Real c = row[d] - mu;
      var += c * c;
    }
    var /= static_cast<Real>(D);
    Real inv = Real(1) / std::sqrt(var + eps2);
    inv_sigma[static_cast<std::size_t>(r)] = inv;
    for (int64_t d = 0; d < D; ++d) {
      Real h = (row[d] - mu) * inv;
      xhat[static_cast<std::size_t>(r * D + d)] = h;
      out[static_cast<std::size_t>(r * D + d)] = h * pg[d] + pb[d];
    }
  }
  Tensor t = Tensor::from(x.shape(), std::move(out));
  Tensor tx = x, tg = gamma, tb = beta;
  auto sh = std::make_shared<std::vector<Real>>(std::move(xhat));
  auto si = std::make_shared<std::vector<Real>>(std::move(inv_sigma));
  record_op("layer_norm", t, {x, gamma, beta}, [tx, tg, tb, t, sh, si, rows, D]() mutable {
    const auto& gy = t.grad();
    const Real* pg = tg.data();
    if (tg.requires_grad()) {
      auto& g = tg.grad_buf();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t d = 0; d < D; ++d)
          g[static_cast<std::size_t>(d)] += gy[static_cast<std::size_t>(r * D + d)] *
                                            (*sh)[static_cast<std::size_t>(r * D + d)];
    }
    if (tb.requires_grad()) {
      auto& g = tb.grad_buf();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t d = 0; d < D; ++d)
          g[static_cast<std::size_t>(d)] += gy[static_cast<std::size_t>(r * D + d)];
    }
    if (tx.requires_grad()) {
      auto& g = tx.grad_buf();
      for (int64_t r = 0; r < rows; ++r) {
        Real mean_gh = 0, mean_ghh = 0;
        for (int64_t d = 0; d < D; ++d) {
          Real gh = gy[static_cast<std::size_t>(r * D + d)] * pg[d];
          Real h = (*sh)[static_cast<std::size_t>(r * D + d)];
          mean_gh += gh;
          mean_ghh += gh * h;
        }
        mean_gh /= static_cast<Real>(D);
        mean_ghh /= static_cast<Real>(D);
        Real inv = (*si)[static_cast<std::size_t>(r)];
        for (int64_t d = 0; d < D; ++d) {
          Real gh = gy[static_cast<std::size_t>(r * D + d)] * pg[d];
          Real h = (*sh)[static_cast<std::size_t>(r * D + d)];
          g[static_cast<std::size_t>(r * D + d)] += inv * (gh - mean_gh - h * mean_ghh);
        }
      }
    }
  });
  return t;
}

inline Tensor softmax(const Tensor& x, int64_t axis) {
  int64_t rk = x.rank();
  if (axis < 0) axis += rk;
  detail::require(axis >= 0 && axis < rk, "softmax: bad axis");
  int64_t n = x.dim(axis);
  int64_t inner = 1;
  for (int64_t i = axis + 1; i < rk; ++i) inner *= x.dim(i);
  int64_t outer = x.numel() / (n * inner);
  std::vector<Real> out(static_cast<std::size_t>(x.numel()));
  const Real* px = x.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      auto idx = [&](int64_t k) { return (o * n + k) * inner + in; };
      Real mx = px[idx(0)];
      for (int64_t k = 1; k < n; ++k) mx = std::max(mx, px[idx(k)]);
      Real z = 0;
      for (int64_t k = 0; k < n; ++k) {
        Real e = std::exp(px[idx(k)] - mx);
        out[static_cast<std::size_t>(idx(k))] = e;
        z += e;
      }
      Real invz = Real(1) / z;
      for (int64_t k = 0; k < n; ++k) out[static_cast<std::size_t>(idx(k))] *= invz;
    }
  Tensor t = Tensor::from(x.shape(), std::move(out));
  Tensor tx = x;
  record_op("softmax", t, {x}, [tx, t, n, inner, outer]() mutable {
    if (!tx.requires_grad()) return;
    auto& g = tx.grad_buf();
    const auto& gy = t.grad();
    const Real* py = t.data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t in = 0; in < inner; ++in) {
        auto idx = [&](int64_t k) { return (o * n + k) * inner + in; };
        Real dot = 0;
        for (int64_t k = 0; k < n; ++k)
          dot += gy[static_cast<std::size_t>(idx(k))] * py[idx(k)];
        for (int64_t k = 0; k < n; ++k)
          g[static_cast<std::size_t>(idx(k))] +=
              py[idx(k)] * (gy[static_cast<std::size_t>(idx(k))] - dot);
      }
  });
  return t;
}

// ---------------------------------------------------------------------------
// causal depthwise conv1d: y[t,d] = sum_j w[j,d] * x[t-k+1+j, d] + b[d]
// with zero left padding.
// ---------------------------------------------------------------------------

inline Tensor conv1d_causal_depthwise(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1),
                  "conv1d: want x [LxD], w [kxD]");
  detail::require(b.numel() == x.dim(1), "conv1d: bias must have D entries");
  int64_t L = x.dim(0), D = x.dim(1), k = w.dim(0);
  detail::require(k >= 1, "conv1d: kernel size must be >= 1");
  std::vector<Real> out(static_cast<std::size_t>(L * D));
  const Real* px = x.data();
  const Real* pw = w.data();
  const Real* pb = b.data();
  for (int64_t t = 0; t < L; ++t)
    for (int64_t d = 0; d < D; ++d) {
      Real acc = pb[d];
      for (int64_t j = 0; j < k; ++j) {
        int64_t tau = t - k + 1 + j;
        if (tau >= 0) acc += pw[j * D + d] * px[tau * D + d];
      }
      out[static_cast<std::size_t>(t * D + d)] = acc;
    }
  Tensor t = Tensor::from({L, D}, std::move(out));
  Tensor tx = x, tw = w, tb = b;
  record_op("conv1d", t, {x, w, b}, [tx, tw, tb, t, L, D, k]() mutable {
    const auto& gy = t.grad();
    const Real* px = tx.data();
    const Real* pw = tw.data();
    if (tx.requires_grad()) {
      auto& g = tx.grad_buf();
      for (int64_t tt = 0; tt < L; ++tt)
        for (int64_t j = 0; j < k; ++j) {
          int64_t tau = tt - k + 1 + j;
          if (tau < 0) continue;
          for (int64_t d = 0; d < D; ++d)
            g[static_cast<std::size_t>(tau * D + d)] +=
                gy[static_cast<std::size_t>(tt * D + d)] * pw[j * D + d];
        }
    }
    if (tw.requires_grad()) {
      auto& g = tw.grad_buf();
      for (int64_t tt = 0; tt < L; ++tt)
        for (int64_t j = 0; j < k; ++j) {
          int64_t tau = tt - k + 1 + j;
          if (tau < 0) continue;
          for (int64_t d = 0; d < D; ++d)
            g[static_cast<std::size_t>(j * D + d)] +=
                gy[static_cast<std::size_t>(tt * D + d)] * px[tau * D + d];
        }
    }
    if (tb.requires_grad()) {
      auto& g = tb.grad_buf();
      for (int64_t tt = 0; tt < L; ++tt)
        for (int64_t d = 0; d < D; ++d)
          g[static_cast<std::size_t>(d)] += gy[static_cast<std::size_t>(tt * D + d)];
    }
  });
  return t;
}

// ---------------------------------------------------------------------------
// embedding lookup: rows of table gathered by id
// ---------------------------------------------------------------------------

inline Tensor embedding(const Tensor& table, const std::vector<int64_t>& ids) {
  detail::require(table.rank() == 2, "embedding: table must be [VxE]");
  int64_t V = table.dim(0), E = table.dim(1);
  int64_t n = static_cast<int64_t>(ids.size());
  detail::require(n >= 1, "embedding: empty id list");
  std::vector<Real> out(static_cast<std::size_t>(n * E));
  for (int64_t i = 0; i < n; ++i) {
    detail::require(ids[static_cast<std::size_t>(i)] >= 0 && ids[static_cast<std::size_t>(i)] < V,
                    "embedding: id out of range");
    std::memcpy(out.data() + i * E, table.data() + ids[static_cast<std::size_t>(i)] * E,
                sizeof(Real) * static_cast<std::size_t>(E));
  }
  Tensor t = Tensor::from({n, E}, std::move(out));
  Tensor tt = table;
  auto held = std::make_shared<std::vector<int64_t>>(ids);
  record_op("embedding", t, {table}, [tt, t, held, E]() mutable {
    if (!tt.requires_grad()) return;
    auto& g = tt.grad_buf();
    const auto& gy = t.grad();
    for (std::size_t i = 0; i < held->size(); ++i) {
      int64_t id = (*held)[i];
      for (int64_t e = 0; e < E; ++e)
        g[static_cast<std::size_t>(id * E + e)] += gy[i * static_cast<std::size_t>(E) + static_cast<std::size_t>(e)];
    }
  });
  return t;
}

// linear layer helper: x [TxD] * W [DxM] + b [M]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace parlab
