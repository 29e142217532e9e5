#include "eclab/tape.hpp"

#include <algorithm>

namespace eclab {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return record("constant", std::move(value), false, nullptr);
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  if (check_finite_ && !value.all_finite()) throw Error("variable: non-finite leaf value");
  nodes_.push_back(Node{std::move(value), true, nullptr});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, bool requires_grad, BackwardFn backward) {
  if (check_finite_ && !value.all_finite()) {
    throw Error(std::string(op) + ": non-finite output of shape " + to_string(value.shape()));
  }
  if (!requires_grad) backward = nullptr;
  nodes_.push_back(Node{std::move(value), requires_grad, std::move(backward)});
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
T* Tape<T>::grad_accumulator(std::size_t id) {
  if (!nodes_[id].requires_grad) return nullptr;
  auto& g = grads_[id];
  if (g.size() != nodes_[id].value.size()) g = Tensor<T>(nodes_[id].value.shape());
  return g.data().data();
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw Error("backward: loss was recorded on a different tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(nodes_[loss.id].value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor<T>());
  if (!nodes_[loss.id].requires_grad) return;
  grads_[loss.id] = Tensor<T>(nodes_[loss.id].value.shape(), T{1});
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (nodes_[i].backward && grads_[i].size() != 0) nodes_[i].backward(*this, i);
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  if (v.id < grads_.size() && grads_[v.id].size() == nodes_[v.id].value.size()) return grads_[v.id];
  return Tensor<T>(nodes_[v.id].value.shape());
}

template class Tape<float>;
template class Tape<double>;

}  // namespace eclab
