#pragma once

#include <cstddef>
#include <vector>

#include "eclab/tape.hpp"

namespace eclab {

/// Continuous stack whose operation strengths may exceed 1. All operations
/// are batched: every value is [batch, width] and every strength [batch, 1].
/// Entries are ordered bottom (index 0) to top.
template <typename T>
struct StackEntry {
  Var<T> value;
  Var<T> strength;
};

template <typename T>
struct StackState {
  std::size_t batch = 1;
  std::size_t width = 0;
  std::vector<StackEntry<T>> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t depth() const noexcept { return entries.size(); }
};

struct StackCaps {
  double pop = 2.0;
  double push = 2.0;
  double read = 2.0;
};

/// Per-step inputs: v [batch, width]; u, d, r [batch, 1].
template <typename T>
struct StackDirectives {
  Var<T> value;
  Var<T> pop;
  Var<T> push;
  Var<T> read;
};

template <typename T>
struct StackStepResult {
  StackState<T> state;
  Var<T> read;
};

/// Strengths below this (in every batch row) are pruned after stack_step.
inline constexpr double kPruneThreshold = 1e-9;

template <typename T>
StackState<T> make_stack(std::size_t batch, std::size_t width);

/// s'[i] = max(0, s[i] - max(0, u - sum_{j>i} s[j])); values untouched.
template <typename T>
StackState<T> stack_pop(const StackState<T>& state, Var<T> u);

template <typename T>
StackState<T> stack_push(const StackState<T>& state, Var<T> v, Var<T> d);

/// sum_i min(s[i], max(0, r - sum_{j>i} s[j])) * V[i]; zeros when empty.
template <typename T>
Var<T> stack_read(Tape<T>& tape, const StackState<T>& state, Var<T> r);

/// Pop, push, read in that order, then prune exhausted entries.
template <typename T>
StackStepResult<T> stack_step(Tape<T>& tape, const StackState<T>& state, const StackDirectives<T>& directives);

/// [batch, 1] sum of strengths.
template <typename T>
Var<T> total_strength(Tape<T>& tape, const StackState<T>& state);

/// Drops entries whose strength is below `threshold` in every row.
template <typename T>
StackState<T> prune(const StackState<T>& state, double threshold = kPruneThreshold);

}  // namespace eclab
