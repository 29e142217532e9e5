#pragma once

#include <span>
#include <vector>

#include "eclab/tape.hpp"

namespace eclab::ops {

// Every op checks shapes and throws ShapeError naming the op and both shapes.
// Only scalar-vs-tensor broadcasting exists; row/column expansion is spelled
// out by add_bias and scale_rows.

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> add_scalar(Var<T> a, T s);
template <typename T> Var<T> scale(Var<T> a, T s);

// Subgradient: the selected branch gets the full gradient, ties go to `a`.
template <typename T> Var<T> maximum(Var<T> a, Var<T> b);
template <typename T> Var<T> minimum(Var<T> a, Var<T> b);
template <typename T> Var<T> maximum(Var<T> a, T s);
template <typename T> Var<T> minimum(Var<T> a, T s);

template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);
template <typename T> Var<T> log(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);

// Over the last axis.
template <typename T> Var<T> softmax(Var<T> a);
template <typename T> Var<T> log_softmax(Var<T> a);

/// Concatenates along the last axis; all parts need the same row count.
template <typename T> Var<T> concat(std::span<const Var<T>> parts);
/// Columns [begin, end) of the last axis.
template <typename T> Var<T> slice(Var<T> a, std::size_t begin, std::size_t end);

/// Sum / mean of every element, as a rank-0 tensor.
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
/// Sum over the last axis: [rows, cols] -> [rows, 1].
template <typename T> Var<T> row_sum(Var<T> a);

/// a[rows, n] + bias[n] added to each row.
template <typename T> Var<T> add_bias(Var<T> a, Var<T> bias);
/// a[rows, n] with row i multiplied by c[i].
template <typename T> Var<T> scale_rows(Var<T> a, Var<T> c);
/// out[i] = a(i, index[i]) as [rows, 1].
template <typename T> Var<T> pick(Var<T> a, std::span<const int> index);
/// out row i = table row index[i].
template <typename T> Var<T> gather_rows(Var<T> table, std::span<const int> index);

template <typename T> inline Var<T> concat(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat<T>(std::span<const Var<T>>(v));
}

}  // namespace eclab::ops

namespace eclab {

template <typename T> inline Var<T> operator+(Var<T> a, Var<T> b) { return ops::add(a, b); }
template <typename T> inline Var<T> operator-(Var<T> a, Var<T> b) { return ops::sub(a, b); }
template <typename T> inline Var<T> operator*(Var<T> a, Var<T> b) { return ops::mul(a, b); }
template <typename T> inline Var<T> operator-(Var<T> a) { return ops::scale(a, T{-1}); }

}  // namespace eclab
