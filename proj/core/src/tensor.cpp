#include "tunet/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tunet/fft.hpp"

namespace tunet::ad {

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape) : s_(std::make_shared<Storage<T>>()) {
  s_->data.assign(numel_of(shape), T(0));
  s_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage<T>>()) {
  if (numel_of(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " needs " +
                                std::to_string(numel_of(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  s_->shape = std::move(shape);
  s_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.s_->data.begin(), t.s_->data.end(), value);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw std::invalid_argument("item(): tensor of shape " + shape_str(shape()) + " is not a scalar");
  return s_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(s_->shape, s_->data);
}

// ---------------------------------------------------------------------------
// Tape

namespace {
template <typename T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}
}  // namespace

namespace {
thread_local RegimeRecorder* regime_slot = nullptr;

template <typename T>
void note_signs(const Tensor<T>& a) {
  auto* rec = RegimeRecorder::active();
  if (!rec) return;
  std::uint64_t word = 0;
  std::size_t k = 0;
  for (T v : a.data()) {
    word = (word << 1) | (v > T(0) ? 1u : 0u);
    if (++k % 64 == 0) rec->note(word), word = 0;
  }
  rec->note(word ^ k);
}
}  // namespace

RegimeRecorder::RegimeRecorder() : previous_(regime_slot) { regime_slot = this; }
RegimeRecorder::~RegimeRecorder() { regime_slot = previous_; }
RegimeRecorder* RegimeRecorder::active() { return regime_slot; }

template <typename T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}
template <typename T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(tape_slot<T>()) {
  tape_slot<T>() = nullptr;
}
template <typename T>
NoGradScope<T>::~NoGradScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
void Tape<T>::record(std::shared_ptr<Storage<T>> output, std::function<void()> adjoint) {
  entries_.push_back({std::move(output), std::move(adjoint)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;  // constant loss: every gradient stays zero
  for (auto& e : entries_) e.output->grad.clear();
  loss.storage()->ensure_grad();
  loss.storage()->grad[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output->grad.empty()) it->adjoint();
  }
}

template <typename T>
void Tape<T>::clear() {
  entries_.clear();
}

// ---------------------------------------------------------------------------
// Op plumbing

namespace {

template <typename T>
using Ptr = std::shared_ptr<Storage<T>>;

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!active_tape<T>()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
Tensor<T> finish(Tensor<T> out, bool record, std::function<void()> adjoint,
                 std::initializer_list<const Tensor<T>*> /*inputs*/) {
  if (record) {
    out.set_requires_grad(true);
    active_tape<T>()->record(out.storage(), std::move(adjoint));
  }
  return out;
}

// Gradient sink that ignores inputs outside the graph.
template <typename T>
struct Sink {
  Ptr<T> s;
  bool on;
  explicit Sink(const Tensor<T>& t) : s(t.storage()), on(t.requires_grad()) {}
  T* grad() {
    s->ensure_grad();
    return s->grad.data();
  }
};

template <typename T>
Shape broadcast_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const Shape& longer = sa.size() >= sb.size() ? sa : sb;
  const Shape& shorter = sa.size() >= sb.size() ? sb : sa;
  if (!std::equal(shorter.rbegin(), shorter.rend(), longer.rbegin())) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                                shape_str(sb));
  }
  return longer;
}

template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd f, Da da, Db db) {
  Shape shape = broadcast_shape(a, b, name);
  Tensor<T> out(shape);
  const std::size_t n = out.numel(), na = a.numel(), nb = b.numel();
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.mutable_data().data();
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i % na], pb[i % nb]);
  }
  const bool rec = should_record<T>({&a, &b});
  auto adj = [ga = Sink<T>(a), gb = Sink<T>(b), o = out.storage(), n, na, nb, da, db]() mutable {
    const T* pa = ga.s->data.data();
    const T* pb = gb.s->data.data();
    const T* go = o->grad.data();
    if (ga.on) {
      T* g = ga.grad();
      for (std::size_t i = 0; i < n; ++i) g[i % na] += go[i] * da(pa[i % na], pb[i % nb]);
    }
    if (gb.on) {
      T* g = gb.grad();
      for (std::size_t i = 0; i < n; ++i) g[i % nb] += go[i] * db(pa[i % na], pb[i % nb]);
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&a, &b});
}

// Elementwise op whose derivative is expressed through input x and output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, Fwd f, Deriv d) {
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), n, d]() mutable {
    const T* x = ga.s->data.data();
    const T* y = o->data.data();
    const T* go = o->grad.data();
    T* g = ga.grad();
    for (std::size_t i = 0; i < n; ++i) g[i] += go[i] * d(x[i], y[i]);
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                shape_str(a.shape()));
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
                [](T, T) { return T(1); });
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
                [](T, T) { return T(-1); });
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                [](T x, T) { return x; });
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
                [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}
template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}
template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  // Adjoint at 0 is taken as 0 so that exact matches stay finite.
  return unary(a, [](T x) { return std::sqrt(x); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}
template <typename T>
Tensor<T> pow(const Tensor<T>& a, T p) {
  return unary(a, [p](T x) { return std::pow(x, p); },
               [p](T x, T) { return p * std::pow(x, p - T(1)); });
}
template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}
template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  note_signs(a);
  return unary(a, [](T x) { return std::abs(x); }, [](T x, T) { return x > T(0) ? T(1) : x < T(0) ? T(-1) : T(0); });
}
template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  note_signs(a);
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  note_signs(a);
  return unary(a, [slope](T x) { return x > T(0) ? x : slope * x; },
               [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage()]() mutable {
    const T g0 = o->grad[0];
    T* g = ga.grad();
    for (std::size_t i = 0; i < ga.s->data.size(); ++i) g[i] += g0;
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  return mul_scalar(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> sum_last(const Tensor<T>& a) {
  if (a.rank() == 0) throw std::invalid_argument("sum_last: scalar input");
  const std::size_t n = a.shape().back();
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  Tensor<T> out(shape);
  const std::size_t rows = out.numel();
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (std::size_t j = 0; j < n; ++j) acc += pa[r * n + j];
    po[r] = acc;
  }
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), rows, n]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += go[r];
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> mean_last(const Tensor<T>& a) {
  if (a.rank() == 0 || a.shape().back() == 0) throw std::invalid_argument("mean_last: empty trailing axis");
  return mul_scalar(sum_last(a), T(1) / static_cast<T>(a.shape().back()));
}

template <typename T>
Tensor<T> max_last(const Tensor<T>& a) {
  if (a.rank() == 0 || a.shape().back() == 0) throw std::invalid_argument("max_last: empty trailing axis");
  const std::size_t n = a.shape().back();
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  Tensor<T> out(shape);
  const std::size_t rows = out.numel();
  auto argmax = std::make_shared<std::vector<std::size_t>>(rows);
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (pa[r * n + j] > pa[r * n + best]) best = j;
    }
    (*argmax)[r] = r * n + best;
    po[r] = pa[r * n + best];
  }
  if (auto* regime = RegimeRecorder::active()) {
    for (std::size_t r = 0; r < rows; ++r) regime->note((*argmax)[r]);
  }
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), argmax, rows]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t r = 0; r < rows; ++r) g[(*argmax)[r]] += go[r];
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> repeat_last(const Tensor<T>& a, std::size_t n) {
  Shape shape = a.shape();
  shape.push_back(n);
  Tensor<T> out(shape);
  const std::size_t rows = a.numel();
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) std::fill(po + r * n, po + (r + 1) * n, pa[r]);
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), rows, n]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += go[r * n + j];
      g[r] += acc;
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                                shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Tensor<T> out({a.dim(0), b.dim(1)});
  Eigen::Map<const RowMat<T>> ma(a.data().data(), m, k);
  Eigen::Map<const RowMat<T>> mb(b.data().data(), k, n);
  Eigen::Map<RowMat<T>> mo(out.mutable_data().data(), m, n);
  mo.noalias() = ma * mb;
  const bool rec = should_record<T>({&a, &b});
  auto adj = [ga = Sink<T>(a), gb = Sink<T>(b), o = out.storage(), m, k, n]() mutable {
    Eigen::Map<const RowMat<T>> go(o->grad.data(), m, n);
    if (ga.on) {
      Eigen::Map<RowMat<T>> g(ga.grad(), m, k);
      Eigen::Map<const RowMat<T>> mb(gb.s->data.data(), k, n);
      g.noalias() += go * mb.transpose();
    }
    if (gb.on) {
      Eigen::Map<RowMat<T>> g(gb.grad(), k, n);
      Eigen::Map<const RowMat<T>> ma(ga.s->data.data(), m, k);
      g.noalias() += ma.transpose() * go;
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&a, &b});
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor<T> out({c, r});
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) po[j * r + i] = pa[i * c + j];
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), r, c]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += go[j * r + i];
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()));
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage()]() mutable {
    T* g = ga.grad();
    for (std::size_t i = 0; i < o->grad.size(); ++i) g[i] += o->grad[i];
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

namespace {
struct AxisSplit {
  std::size_t outer, len, inner;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}
}  // namespace

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin > end || end > a.dim(axis)) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") on axis " + std::to_string(axis) + " invalid for shape " +
                                shape_str(a.shape()));
  }
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = end - begin;
  Tensor<T> out(shape);
  const std::size_t w = (end - begin) * sp.inner;
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(pa + (o * sp.len + begin) * sp.inner, w, po + o * w);
  }
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), sp, begin, w]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t q = 0; q < sp.outer; ++q) {
      T* dst = g + (q * sp.len + begin) * sp.inner;
      for (std::size_t i = 0; i < w; ++i) dst[i] += go[q * w + i];
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw std::invalid_argument("concat: axis out of range for " + shape_str(ref));
  Shape shape = ref;
  shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != ref.size()) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(ref) + " vs " + shape_str(s));
    }
    s[axis] = ref[axis];
    if (s != ref) throw std::invalid_argument("concat: shapes " + shape_str(ref) + " and " + shape_str(p.shape()) +
                                              " differ off the concat axis");
    shape[axis] += p.dim(axis);
  }
  Tensor<T> out(shape);
  const AxisSplit sp = split_axis(shape, axis);
  T* po = out.mutable_data().data();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.dim(axis) * sp.inner;
    const T* pp = p.data().data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pp + o * w, w, po + (o * sp.len + off) * sp.inner);
    }
    off += p.dim(axis);
  }
  bool rec = false;
  if (active_tape<T>()) {
    for (const auto& p : parts) rec = rec || p.requires_grad();
  }
  std::vector<Sink<T>> sinks;
  sinks.reserve(parts.size());
  for (const auto& p : parts) sinks.emplace_back(p);
  auto adj = [sinks = std::move(sinks), offsets, o = out.storage(), sp, axis]() mutable {
    const T* go = o->grad.data();
    for (std::size_t i = 0; i < sinks.size(); ++i) {
      if (!sinks[i].on) continue;
      const std::size_t w = sinks[i].s->shape[axis] * sp.inner;
      T* g = sinks[i].grad();
      for (std::size_t q = 0; q < sp.outer; ++q) {
        const T* src = go + (q * sp.len + offsets[i]) * sp.inner;
        for (std::size_t j = 0; j < w; ++j) g[q * w + j] += src[j];
      }
    }
  };
  if (rec) {
    out.set_requires_grad(true);
    active_tape<T>()->record(out.storage(), std::move(adj));
  }
  return out;
}

template <typename T>
Tensor<T> pad(const Tensor<T>& a, std::size_t left, std::size_t right) {
  if (a.rank() == 0) throw std::invalid_argument("pad: scalar input");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(n, 1);
  Shape shape = a.shape();
  shape.back() = n + left + right;
  Tensor<T> out(shape);
  const std::size_t w = shape.back();
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(pa + r * n, n, po + r * w + left);
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), rows, n, w, left]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += go[r * w + left + j];
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::shared_ptr<const std::vector<std::size_t>> index, Shape out_shape) {
  if (numel_of(out_shape) != index->size()) {
    throw std::invalid_argument("gather: index count " + std::to_string(index->size()) +
                                " does not fill shape " + shape_str(out_shape));
  }
  Tensor<T> out(std::move(out_shape));
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  const std::size_t na = a.numel();
  for (std::size_t i = 0; i < index->size(); ++i) {
    if ((*index)[i] >= na) throw std::out_of_range("gather: index out of range");
    po[i] = pa[(*index)[i]];
  }
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), index]() mutable {
    T* g = ga.grad();
    const T* go = o->grad.data();
    for (std::size_t i = 0; i < index->size(); ++i) g[(*index)[i]] += go[i];
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

// ---------------------------------------------------------------------------
// Convolution patches

namespace {
template <typename T>
void unfold_into(const T* x, std::size_t channels, std::size_t len, std::size_t kernel, std::size_t stride,
                 std::size_t pad, std::size_t out_len, T* cols) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * len;
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = cols + (c * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
        row[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? xc[src] : T(0);
      }
    }
  }
}

template <typename T>
void fold_into(const T* cols, std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t pad,
               std::size_t cols_len, std::size_t len, T* x) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* xc = x + c * len;
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* row = cols + (c * kernel + k) * cols_len;
      for (std::size_t t = 0; t < cols_len; ++t) {
        const std::ptrdiff_t dst = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
        if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(len)) xc[dst] += row[t];
      }
    }
  }
}
}  // namespace

template <typename T>
Tensor<T> unfold1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require_rank(x, 2, "unfold1d");
  if (kernel == 0 || stride == 0) throw std::invalid_argument("unfold1d: kernel and stride must be positive");
  const std::size_t channels = x.dim(0), len = x.dim(1);
  if (len + 2 * pad < kernel) {
    throw std::invalid_argument("unfold1d: input length " + std::to_string(len) + " too short; need at least " +
                                std::to_string(kernel > 2 * pad ? kernel - 2 * pad : 0));
  }
  const std::size_t out_len = (len + 2 * pad - kernel) / stride + 1;
  Tensor<T> out({channels * kernel, out_len});
  unfold_into(x.data().data(), channels, len, kernel, stride, pad, out_len, out.mutable_data().data());
  const bool rec = should_record<T>({&x});
  auto adj = [gx = Sink<T>(x), o = out.storage(), channels, kernel, stride, pad, out_len, len]() mutable {
    fold_into(o->grad.data(), channels, kernel, stride, pad, out_len, len, gx.grad());
  };
  return finish(std::move(out), rec, std::move(adj), {&x});
}

template <typename T>
Tensor<T> fold1d(const Tensor<T>& cols, std::size_t kernel, std::size_t stride, std::size_t pad,
                 std::size_t out_len) {
  require_rank(cols, 2, "fold1d");
  if (kernel == 0 || stride == 0 || cols.dim(0) % kernel != 0) {
    throw std::invalid_argument("fold1d: rows " + std::to_string(cols.dim(0)) + " not a multiple of kernel " +
                                std::to_string(kernel));
  }
  const std::size_t channels = cols.dim(0) / kernel, cols_len = cols.dim(1);
  Tensor<T> out({channels, out_len});
  fold_into(cols.data().data(), channels, kernel, stride, pad, cols_len, out_len, out.mutable_data().data());
  const bool rec = should_record<T>({&cols});
  auto adj = [gc = Sink<T>(cols), o = out.storage(), channels, kernel, stride, pad, cols_len, out_len]() mutable {
    std::vector<T> tmp(channels * kernel * cols_len);
    unfold_into(o->grad.data(), channels, out_len, kernel, stride, pad, cols_len, tmp.data());
    T* g = gc.grad();
    for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
  };
  return finish(std::move(out), rec, std::move(adj), {&cols});
}

// ---------------------------------------------------------------------------
// Fused row ops

template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& a, T eps) {
  require_rank(a, 2, "layer_norm_rows");
  const std::size_t rows = a.dim(0), d = a.dim(1);
  Tensor<T> out(a.shape());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = pa + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) po[r * d + j] = (x[j] - mu) * is;
  }
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), inv_std, rows, d]() mutable {
    T* g = ga.grad();
    const T* y = o->data.data();
    const T* gy = o->grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T mg = T(0), mgy = T(0);
      for (std::size_t j = 0; j < d; ++j) {
        mg += gy[r * d + j];
        mgy += gy[r * d + j] * y[r * d + j];
      }
      mg /= static_cast<T>(d);
      mgy /= static_cast<T>(d);
      for (std::size_t j = 0; j < d; ++j) {
        g[r * d + j] += (*inv_std)[r] * (gy[r * d + j] - mg - y[r * d + j] * mgy);
      }
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, std::shared_ptr<const std::vector<char>> keep) {
  require_rank(a, 2, "softmax_rows");
  if (keep && keep->size() != a.numel()) throw std::invalid_argument("softmax_rows: mask size mismatch");
  const std::size_t rows = a.dim(0), d = a.dim(1);
  Tensor<T> out(a.shape());
  const T* pa = a.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < d; ++j) {
      if (!keep || (*keep)[r * d + j]) mx = std::max(mx, pa[r * d + j]);
    }
    T z = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const bool on = !keep || (*keep)[r * d + j];
      po[r * d + j] = on ? std::exp(pa[r * d + j] - mx) : T(0);
      z += po[r * d + j];
    }
    for (std::size_t j = 0; j < d; ++j) po[r * d + j] /= z;
  }
  const bool rec = should_record<T>({&a});
  auto adj = [ga = Sink<T>(a), o = out.storage(), rows, d]() mutable {
    T* g = ga.grad();
    const T* p = o->data.data();
    const T* gp = o->grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t j = 0; j < d; ++j) dot += p[r * d + j] * gp[r * d + j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += p[r * d + j] * (gp[r * d + j] - dot);
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&a});
}

template <typename T>
Tensor<T> power_spectrum(const Tensor<T>& frames) {
  require_rank(frames, 2, "power_spectrum");
  const std::size_t rows = frames.dim(0), n = frames.dim(1), bins = n / 2 + 1;
  Tensor<T> out({rows, bins});
  auto spectra = std::make_shared<std::vector<std::complex<double>>>(rows * bins);
  std::vector<double> buf(n);
  const T* pf = frames.data().data();
  T* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(pf + r * n, n, buf.begin());
    std::span<std::complex<double>> spec(spectra->data() + r * bins, bins);
    fft::rfft(buf, spec);
    for (std::size_t k = 0; k < bins; ++k) po[r * bins + k] = static_cast<T>(std::norm(spec[k]));
  }
  const bool rec = should_record<T>({&frames});
  auto adj = [gf = Sink<T>(frames), o = out.storage(), spectra, rows, n, bins]() mutable {
    T* g = gf.grad();
    const T* go = o->grad.data();
    std::vector<std::complex<double>> c(n), x(n);
    for (std::size_t r = 0; r < rows; ++r) {
      std::fill(c.begin(), c.end(), std::complex<double>(0.0));
      for (std::size_t k = 0; k < bins; ++k) {
        c[k] = 2.0 * static_cast<double>(go[r * bins + k]) * (*spectra)[r * bins + k];
      }
      fft::inverse_dft(c, x);
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += static_cast<T>(x[j].real());
    }
  };
  return finish(std::move(out), rec, std::move(adj), {&frames});
}

// ---------------------------------------------------------------------------
// Instantiations

#define TUNET_INSTANTIATE(T)                                                                         \
  template class Tensor<T>;                                                                          \
  template class Tape<T>;                                                                            \
  template class TapeScope<T>;                                                                       \
  template class NoGradScope<T>;                                                                     \
  template Tape<T>* active_tape<T>();                                                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> neg(const Tensor<T>&);                                                          \
  template Tensor<T> exp(const Tensor<T>&);                                                          \
  template Tensor<T> log(const Tensor<T>&);                                                          \
  template Tensor<T> sqrt(const Tensor<T>&);                                                         \
  template Tensor<T> pow(const Tensor<T>&, T);                                                       \
  template Tensor<T> square(const Tensor<T>&);                                                       \
  template Tensor<T> abs(const Tensor<T>&);                                                          \
  template Tensor<T> tanh(const Tensor<T>&);                                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&);                                                         \
  template Tensor<T> sum_last(const Tensor<T>&);                                                     \
  template Tensor<T> mean_last(const Tensor<T>&);                                                    \
  template Tensor<T> max_last(const Tensor<T>&);                                                     \
  template Tensor<T> repeat_last(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> transpose(const Tensor<T>&);                                                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                               \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                             \
  template Tensor<T> pad(const Tensor<T>&, std::size_t, std::size_t);                                \
  template Tensor<T> gather(const Tensor<T>&, std::shared_ptr<const std::vector<std::size_t>>, Shape); \
  template Tensor<T> unfold1d(const Tensor<T>&, std::size_t, std::size_t, std::size_t);              \
  template Tensor<T> fold1d(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);   \
  template Tensor<T> layer_norm_rows(const Tensor<T>&, T);                                           \
  template Tensor<T> softmax_rows(const Tensor<T>&, std::shared_ptr<const std::vector<char>>);       \
  template Tensor<T> power_spectrum(const Tensor<T>&);

TUNET_INSTANTIATE(float)
TUNET_INSTANTIATE(double)

#undef TUNET_INSTANTIATE

}  // namespace tunet::ad
