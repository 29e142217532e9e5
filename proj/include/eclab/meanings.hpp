#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace eclab {

enum class MeaningKind { AttrVal, Dyck };

/// Attribute-value tuple (value index per attribute) or Dyck token sequence.
/// Dyck tokens: open_i = i, close_i = k + i for i in [0, k).
using Meaning = std::vector<int>;

inline constexpr std::size_t kDefaultMeaningCap = 1'000'000;

struct MeaningSpace {
  MeaningKind kind = MeaningKind::AttrVal;
  int n_att = 0;
  int n_val = 0;
  int k = 0;
  int l_max = 0;
  std::vector<Meaning> meanings;  // canonical order
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const noexcept { return meanings.size(); }
  /// Width of the concatenated one-hot input (attribute-value only).
  std::size_t one_hot_width() const noexcept { return static_cast<std::size_t>(n_att) * n_val; }
  /// Number of parenthesis tokens, 2k (Dyck only).
  int token_count() const noexcept { return 2 * k; }
  bool contains(const Meaning& m) const;
  std::string format(const Meaning& m) const;
};

std::uint64_t catalan(int n);
/// sum_{n=0}^{l_max/2} Catalan(n) * k^n
std::uint64_t dyck_count(int k, int l_max);

/// All n_val^n_att tuples in lexicographic order.
MeaningSpace enumerate_attr_val(int n_att, int n_val, std::size_t cap = kDefaultMeaningCap);
/// All Dyck-k strings of length <= l_max, ordered by length then token index.
MeaningSpace enumerate_dyck(int k, int l_max, std::size_t cap = kDefaultMeaningCap);

/// Throws Error on tokens outside [0, 2k).
bool is_dyck(std::span<const int> tokens, int k);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle; the first ceil(size/10) indices go to test.
Split split(const MeaningSpace& space, std::uint64_t seed);
void apply_split(MeaningSpace& space, std::uint64_t seed);

struct MeaningInput {
  std::vector<float> one_hot;  // attribute-major, attribute-value spaces
  std::vector<int> tokens;     // Dyck spaces
};

MeaningInput encode_meaning(const Meaning& meaning, const MeaningSpace& space);

/// One meaning per line: comma-separated values or space-separated tokens.
void export_meanings(const MeaningSpace& space, const std::filesystem::path& path);

}  // namespace eclab
