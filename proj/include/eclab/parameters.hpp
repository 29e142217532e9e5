#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "eclab/tape.hpp"

namespace eclab {

/// Named, owned parameter tensors. Modules keep indices into the set and
/// bind it to a fresh Tape once per forward pass.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor<T> init) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    return values_.size() - 1;
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& value(std::size_t i) { return values_.at(i); }
  const Tensor<T>& value(std::size_t i) const { return values_.at(i); }
  std::vector<Tensor<T>>& values() noexcept { return values_; }
  const std::vector<Tensor<T>>& values() const noexcept { return values_; }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  std::size_t element_count() const noexcept {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  /// Every parameter as a leaf, in index order. Untracked leaves make the
  /// tape skip all backward bookkeeping (evaluation passes).
  std::vector<Var<T>> bind(Tape<T>& tape, bool track_gradients = true) const {
    std::vector<Var<T>> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(track_gradients ? tape.variable(v) : tape.constant(v));
    return out;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
};

}  // namespace eclab
