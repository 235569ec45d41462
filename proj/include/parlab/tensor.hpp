#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace parlab {

#if defined(PARLAB_REAL_FLOAT)
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<int64_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct FaultError : Error { using Error::Error; };

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Live-bytes accounting (tensor value buffers only); read by the bench.
inline std::atomic<int64_t>& live_tensor_bytes() {
  static std::atomic<int64_t> v{0};
  return v;
}
inline std::atomic<int64_t>& peak_tensor_bytes() {
  static std::atomic<int64_t> v{0};
  return v;
}
inline void reset_peak_tensor_bytes() {
  peak_tensor_bytes().store(live_tensor_bytes().load());
}
inline void note_tensor_bytes(int64_t delta) {
  int64_t live = live_tensor_bytes().fetch_add(delta) + delta;
  if (delta > 0) {
    int64_t peak = peak_tensor_bytes().load();
    while (live > peak && !peak_tensor_bytes().compare_exchange_weak(peak, live)) {
    }
  }
}

struct TensorData {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until first needed, then same size as value
  bool requires_grad = false;
  std::string name;

  TensorData(Shape s, std::vector<Real> v) : shape(std::move(s)), value(std::move(v)) {
    if (shape_numel(shape) != static_cast<int64_t>(value.size()))
      throw ShapeError("tensor data size does not match shape " + shape_str(shape));
    for (int64_t e : shape)
      if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
    note_tensor_bytes(static_cast<int64_t>(value.size() * sizeof(Real)));
  }
  ~TensorData() { note_tensor_bytes(-static_cast<int64_t>(value.size() * sizeof(Real))); }
  TensorData(const TensorData&) = delete;
  TensorData& operator=(const TensorData&) = delete;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  std::vector<Real>& grad_buf() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

  static Tensor from(Shape shape, std::vector<Real> data, bool requires_grad = false) {
    Tensor t(std::make_shared<TensorData>(std::move(shape), std::move(data)));
    t.d_->requires_grad = requires_grad;
    return t;
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<Real>(static_cast<std::size_t>(n), Real(0)),
                requires_grad);
  }
  static Tensor full(Shape shape, Real v, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<Real>(static_cast<std::size_t>(n), v),
                requires_grad);
  }
  static Tensor scalar(Real v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(d_); }
  TensorData& d() const { return *d_; }
  TensorData* ptr() const { return d_.get(); }
  const std::shared_ptr<TensorData>& shared() const { return d_; }

  const Shape& shape() const { return d_->shape; }
  int64_t rank() const { return static_cast<int64_t>(d_->shape.size()); }
  int64_t dim(int64_t i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int64_t numel() const { return d_->numel(); }

  Real* data() { return d_->value.data(); }
  const Real* data() const { return d_->value.data(); }
  std::vector<Real>& values() { return d_->value; }
  const std::vector<Real>& values() const { return d_->value; }
  Real v(int64_t i) const { return d_->value[static_cast<std::size_t>(i)]; }
  Real& at(int64_t i) { return d_->value[static_cast<std::size_t>(i)]; }
  Real at2(int64_t r, int64_t c) const {
    return d_->value[static_cast<std::size_t>(r * dim(rank() - 1) + c)];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    return *this;
  }
  bool has_grad() const { return !d_->grad.empty(); }
  const std::vector<Real>& grad() const { return d_->grad; }
  std::vector<Real>& grad_buf() { return d_->grad_buf(); }
  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), Real(0));
  }

  Tensor& named(std::string n) {
    d_->name = std::move(n);
    return *this;
  }
  const std::string& name() const { return d_->name; }

 private:
  std::shared_ptr<TensorData> d_;
};

inline bool all_finite(const Tensor& t) {
  for (Real x : t.values())
    if (!std::isfinite(x)) return false;
  return true;
}

// Debug hook: faults on the first NaN/Inf found.
inline void check_finite(const Tensor& t, const std::string& what) {
  const auto& v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw FaultError("non-finite value in " + what + " at flat index " + std::to_string(i));
}

// ---------------------------------------------------------------------------
// Reverse-mode tape. Entries are appended in construction order, which is a
// topological order of the graph, so one reverse sweep suffices.
// ---------------------------------------------------------------------------

struct TapeEntry {
  std::string tag;
  std::shared_ptr<TensorData> out;
  std::vector<std::shared_ptr<TensorData>> inputs;
  std::function<void()> backward;
};

class GradTape;

inline GradTape*& active_tape_slot() {
  static thread_local GradTape* t = nullptr;
  return t;
}
inline bool& grad_enabled_slot() {
  static thread_local bool enabled = true;
  return enabled;
}

class GradTape {
 public:
  static GradTape* active() { return active_tape_slot(); }
  static bool recording() { return active_tape_slot() != nullptr && grad_enabled_slot(); }

  void push(TapeEntry e) { entries_.push_back(std::move(e)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)=1 and sweeps the tape in reverse. Leaf gradients accumulate
  // across repeated calls; intermediate gradients are per-call.
  void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw Error("backward: loss must be scalar, got " + shape_str(loss.shape()));
    for (auto& e : entries_)
      if (!e.out->grad.empty()) std::fill(e.out->grad.begin(), e.out->grad.end(), Real(0));
    loss.d().grad_buf()[0] += Real(1);
    std::unordered_set<TensorData*> needed;
    needed.insert(loss.ptr());
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (needed.find(it->out.get()) == needed.end()) continue;
      if (it->out->grad.empty()) continue;
      it->backward();
      for (auto& in : it->inputs)
        if (in->requires_grad) needed.insert(in.get());
    }
  }

  // Diagnostic used by the training loop's NaN abort.
  std::optional<std::string> first_nonfinite() const {
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      const auto& e = entries_[k];
      for (Real x : e.out->value)
        if (!std::isfinite(x))
          return e.tag + "#" + std::to_string(k) +
                 (e.out->name.empty() ? "" : " (" + e.out->name + ")");
    }
    return std::nullopt;
  }

 private:
  std::vector<TapeEntry> entries_;
};

struct TapeUse {
  explicit TapeUse(GradTape& t) : prev_(active_tape_slot()) { active_tape_slot() = &t; }
  ~TapeUse() { active_tape_slot() = prev_; }
  TapeUse(const TapeUse&) = delete;
  TapeUse& operator=(const TapeUse&) = delete;

 private:
  GradTape* prev_;
};

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled_slot()) { grad_enabled_slot() = false; }
  ~NoGradGuard() { grad_enabled_slot() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Records `out = op(inputs...)` on the active tape. The backward closure must
// accumulate (+=) into input grad buffers, reading out's grad buffer.
inline void record_op(std::string tag, Tensor& out, std::vector<Tensor> inputs,
                      std::function<void()> backward) {
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any || !GradTape::recording()) {
    out.set_requires_grad(false);
    return;
  }
  out.set_requires_grad(true);
  TapeEntry e;
  e.tag = std::move(tag);
  e.out = out.shared();
  e.inputs.reserve(inputs.size());
  for (auto& in : inputs) e.inputs.push_back(in.shared());
  e.backward = std::move(backward);
  GradTape::active()->push(std::move(e));
}

inline void backward(const Tensor& loss) {
  GradTape* t = GradTape::active();
  if (!t) throw Error("backward: no active tape");
  t->backward(loss);
}

}  // namespace parlab
