#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "eclab/tensor.hpp"

namespace eclab {

struct AdamConfig {
  double learning_rate = 1e-4;
  double l2 = 1e-4;  // added to the gradient as l2 * param before the moment update
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

/// One bias-corrected Adam update, in place. Moments are allocated lazily on
/// the first call and must keep matching the parameter shapes afterwards.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, AdamState<T>& state);

extern template void adam_step<float>(std::span<Tensor<float>>, std::span<const Tensor<float>>, AdamState<float>&);
extern template void adam_step<double>(std::span<Tensor<double>>, std::span<const Tensor<double>>, AdamState<double>&);

}  // namespace eclab
