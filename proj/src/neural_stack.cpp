#include "eclab/neural_stack.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "eclab/ops.hpp"

namespace eclab {
namespace {

template <typename T>
void require_column(const char* op, const char* what, Var<T> x, std::size_t batch) {
  const auto& v = x.value();
  if (v.rank() != 2 || v.rows() != batch || v.cols() != 1) {
    throw ShapeError(std::string(op) + ": " + what + " has shape " + to_string(v.shape()) + ", expected [" +
                     std::to_string(batch) + ",1]");
  }
}

template <typename T>
void require_nonnegative(const char* op, const char* what, Var<T> x) {
  for (T s : x.value().data()) {
    if (s < T{0}) throw Error(std::string(op) + ": negative " + what + " strength " + std::to_string(s));
  }
}

}  // namespace

template <typename T>
StackState<T> make_stack(std::size_t batch, std::size_t width) {
  StackState<T> s;
  s.batch = batch;
  s.width = width;
  return s;
}

template <typename T>
StackState<T> stack_pop(const StackState<T>& state, Var<T> u) {
  require_column("stack_pop", "u", u, state.batch);
  require_nonnegative("stack_pop", "pop", u);
  StackState<T> out = state;
  if (state.empty()) return out;
  // Walk top-down; `above` holds the sum of the old strengths above entry i.
  std::optional<Var<T>> above;
  for (std::size_t i = state.depth(); i-- > 0;) {
    const Var<T> s = state.entries[i].strength;
    Var<T> remaining = above ? ops::maximum(u - *above, T{0}) : u;
    out.entries[i].strength = ops::maximum(s - remaining, T{0});
    above = above ? *above + s : s;
  }
  return out;
}

template <typename T>
StackState<T> stack_push(const StackState<T>& state, Var<T> v, Var<T> d) {
  require_column("stack_push", "d", d, state.batch);
  require_nonnegative("stack_push", "push", d);
  const auto& vv = v.value();
  if (vv.rank() != 2 || vv.rows() != state.batch || vv.cols() != state.width) {
    throw ShapeError("stack_push: value has shape " + to_string(vv.shape()) + ", stack is [" +
                     std::to_string(state.batch) + "," + std::to_string(state.width) + "]");
  }
  StackState<T> out = state;
  out.entries.push_back({v, d});
  return out;
}

namespace {

// min(strength, budget) with ties to the strength. An entry exhausted by this
// step's pop has strength exactly 0 and weight 0 on both sides of the min, so
// it is left out of the kink margin; the pop's own clamp already recorded it.
template <typename T>
Var<T> read_weight(Tape<T>& tape, Var<T> strength, Var<T> budget) {
  const auto& s = strength.value();
  const auto& b = budget.value();
  Tensor<T> out(s.shape());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = s[i] <= b[i] ? s[i] : b[i];
    if (s[i] != T{0}) margin = std::min(margin, static_cast<double>(std::abs(s[i] - b[i])));
  }
  const bool needs = strength.requires_grad() || budget.requires_grad();
  if (needs) tape.note_kink(margin);
  const std::size_t is = strength.id, ib = budget.id;
  return tape.record("read_weight", std::move(out), needs, [is, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& s = t.value(is);
    const auto& b = t.value(ib);
    T* gs = t.grad_accumulator(is);
    T* gb = t.grad_accumulator(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (s[i] <= b[i]) {
        if (gs) gs[i] += g[i];
      } else if (gb) {
        gb[i] += g[i];
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> stack_read(Tape<T>& tape, const StackState<T>& state, Var<T> r) {
  require_column("stack_read", "r", r, state.batch);
  require_nonnegative("stack_read", "read", r);
  std::optional<Var<T>> acc;
  std::optional<Var<T>> above;
  for (std::size_t i = state.depth(); i-- > 0;) {
    const auto& e = state.entries[i];
    Var<T> budget = above ? ops::maximum(r - *above, T{0}) : r;
    Var<T> weight = read_weight(tape, e.strength, budget);
    Var<T> term = ops::scale_rows(e.value, weight);
    acc = acc ? *acc + term : term;
    above = above ? *above + e.strength : e.strength;
  }
  if (!acc) return tape.constant(Tensor<T>::matrix(state.batch, state.width));
  return *acc;
}

template <typename T>
StackStepResult<T> stack_step(Tape<T>& tape, const StackState<T>& state, const StackDirectives<T>& directives) {
  StackState<T> next = stack_push(stack_pop(state, directives.pop), directives.value, directives.push);
  Var<T> read = stack_read(tape, next, directives.read);
  return {prune(next), read};
}

template <typename T>
Var<T> total_strength(Tape<T>& tape, const StackState<T>& state) {
  if (state.empty()) return tape.constant(Tensor<T>::matrix(state.batch, 1));
  Var<T> acc = state.entries[0].strength;
  for (std::size_t i = 1; i < state.depth(); ++i) acc = acc + state.entries[i].strength;
  return acc;
}

template <typename T>
StackState<T> prune(const StackState<T>& state, double threshold) {
  StackState<T> out;
  out.batch = state.batch;
  out.width = state.width;
  for (const auto& e : state.entries) {
    bool live = false;
    for (T s : e.strength.value().data()) live = live || static_cast<double>(s) >= threshold;
    if (live) out.entries.push_back(e);
  }
  return out;
}

#define ECLAB_INSTANTIATE_STACK(T)                                                                   \
  template StackState<T> make_stack<T>(std::size_t, std::size_t);                                   \
  template StackState<T> stack_pop<T>(const StackState<T>&, Var<T>);                                 \
  template StackState<T> stack_push<T>(const StackState<T>&, Var<T>, Var<T>);                        \
  template Var<T> stack_read<T>(Tape<T>&, const StackState<T>&, Var<T>);                             \
  template StackStepResult<T> stack_step<T>(Tape<T>&, const StackState<T>&, const StackDirectives<T>&); \
  template Var<T> total_strength<T>(Tape<T>&, const StackState<T>&);                                 \
  template StackState<T> prune<T>(const StackState<T>&, double);

ECLAB_INSTANTIATE_STACK(float)
ECLAB_INSTANTIATE_STACK(double)

}  // namespace eclab
