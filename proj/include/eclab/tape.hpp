#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "eclab/tensor.hpp"

namespace eclab {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

#ifdef NDEBUG
inline constexpr bool kCheckFiniteDefault = false;
#else
inline constexpr bool kCheckFiniteDefault = true;
#endif

/// Linear record of primitive operations. Nodes are appended in evaluation
/// order, which is a topological order, so backward() replays them in reverse.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool check_finite = kCheckFiniteDefault) : check_finite_(check_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  /// Leaf whose gradient is tracked (parameters, inputs under test).
  Var<T> variable(Tensor<T> value);

  /// Appends an op output. `backward` is dropped when no input requires grad.
  Var<T> record(const char* op, Tensor<T> value, bool requires_grad, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulator for `id`, allocated on first use; nullptr when the
  /// node does not require a gradient.
  T* grad_accumulator(std::size_t id);
  const Tensor<T>& grad_of(std::size_t id) const { return grads_[id]; }

  void backward(Var<T> loss);
  /// Gradient of the last backward() loss w.r.t. `v`; zeros when unreachable.
  Tensor<T> grad(Var<T> v) const;

  /// Smallest |a - b| seen by a max/min on a gradient path. Finite-difference
  /// checks are only meaningful when this stays well above the step size.
  double kink_margin() const noexcept { return kink_margin_; }
  void note_kink(double margin) noexcept {
    if (margin < kink_margin_) kink_margin_ = margin;
  }

  bool check_finite() const noexcept { return check_finite_; }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  bool check_finite_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace eclab
