#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tunet::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized lazily on first accumulation
  bool requires_grad = false;

  void accumulate_grad(std::size_t i, T v) {
    ensure_grad();
    grad[i] += v;
  }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

// Dense row-major array sharing its storage on copy. Tensors produced while a
// Tape is active and fed by grad-requiring inputs record their adjoint on it.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor({}, {value}); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<const T> data() const { return s_->data; }
  // Writable view; only meant for leaves (parameters, inputs, perturbation).
  std::span<T> mutable_data() { return s_->data; }
  T item() const;
  T operator[](std::size_t i) const { return s_->data[i]; }

  bool requires_grad() const { return s_ && s_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    s_->requires_grad = on;
    return *this;
  }
  // Empty span when no adjoint has reached this tensor.
  std::span<const T> grad() const { return s_->grad; }
  std::span<T> mutable_grad() {
    s_->ensure_grad();
    return s_->grad;
  }
  void zero_grad() { s_->grad.clear(); }

  // Deep copy outside any tape.
  Tensor detach() const;
  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

  const std::shared_ptr<Storage<T>>& storage() const { return s_; }
  static Tensor wrap(std::shared_ptr<Storage<T>> s) {
    Tensor t;
    t.s_ = std::move(s);
    return t;
  }

 private:
  std::shared_ptr<Storage<T>> s_;
};

// Ordered record of adjoint closures. Entries are appended in forward order,
// so the recorded sequence is already topologically sorted.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<Storage<T>> output, std::function<void()> adjoint);
  // Seeds d(loss)=1 and runs adjoints in reverse. Intermediate gradients are
  // reset first; leaf gradients accumulate across calls.
  void backward(const Tensor<T>& loss);
  void clear();
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<Storage<T>> output;
    std::function<void()> adjoint;
  };
  std::vector<Entry> entries_;
};

template <typename T>
Tape<T>* active_tape();

// Makes `tape` the recording target for the current thread until destroyed.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Suspends recording for the current thread (inference blocks).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

// While alive, relu/leaky_relu/abs/max_last fold which side of their kink
// each element sits on (argmax for max_last) into `signature`. Lets a
// finite-difference probe tell whether a perturbation crossed a kink.
class RegimeRecorder {
 public:
  RegimeRecorder();
  ~RegimeRecorder();
  RegimeRecorder(const RegimeRecorder&) = delete;
  RegimeRecorder& operator=(const RegimeRecorder&) = delete;
  std::uint64_t signature() const { return hash_; }
  static RegimeRecorder* active();
  void note(std::uint64_t v) { hash_ = (hash_ ^ v) * 0x100000001b3ull; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
  RegimeRecorder* previous_;
};

// ---------------------------------------------------------------------------
// Primitive ops. Binary elementwise ops accept equal shapes, or one operand
// whose shape is a suffix of the other's (repeated over leading dimensions).

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> neg(const Tensor<T>& a);

template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
template <typename T> Tensor<T> pow(const Tensor<T>& a, T exponent);
template <typename T> Tensor<T> square(const Tensor<T>& a);
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
// Subgradient at 0 is 0 (left-continuous).
template <typename T> Tensor<T> relu(const Tensor<T>& a);
// Subgradient at 0 is `negative_slope` (left-continuous).
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T negative_slope);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
// Reduce / expand over the trailing axis: (..., n) <-> (...).
template <typename T> Tensor<T> sum_last(const Tensor<T>& a);
template <typename T> Tensor<T> mean_last(const Tensor<T>& a);
// Ties route the adjoint to the lowest index.
template <typename T> Tensor<T> max_last(const Tensor<T>& a);
template <typename T> Tensor<T> repeat_last(const Tensor<T>& a, std::size_t n);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
// Zero padding of the trailing axis.
template <typename T> Tensor<T> pad(const Tensor<T>& a, std::size_t left, std::size_t right);
// out.flat[i] = a.flat[index[i]]; adjoint scatter-adds.
template <typename T>
Tensor<T> gather(const Tensor<T>& a, std::shared_ptr<const std::vector<std::size_t>> index,
                 Shape out_shape);

// (C, T) -> (C*K, T') patch matrix with implicit zero padding `pad` per side;
// row c*K + k, column t holds x[c, t*stride + k - pad].
template <typename T>
Tensor<T> unfold1d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t pad);
// Adjoint of unfold1d: scatter-adds (C*K, T') patches into (C, out_len).
template <typename T>
Tensor<T> fold1d(const Tensor<T>& cols, std::size_t kernel, std::size_t stride, std::size_t pad,
                 std::size_t out_len);

// Row-wise (x - mean) / sqrt(var + eps) on a 2-D tensor.
template <typename T> Tensor<T> layer_norm_rows(const Tensor<T>& a, T eps);
// Row-wise softmax on a 2-D tensor; masked-out entries get probability 0.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a, std::shared_ptr<const std::vector<char>> keep = {});
// |rfft(row)|^2 for each row of (R, N), giving (R, N/2+1).
template <typename T> Tensor<T> power_spectrum(const Tensor<T>& frames);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

}  // namespace tunet::ad
