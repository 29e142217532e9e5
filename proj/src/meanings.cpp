#include "eclab/meanings.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "eclab/rng.hpp"
#include "eclab/tensor.hpp"

namespace eclab {
namespace {

void dyck_extend(int k, int length, Meaning& prefix, std::vector<int>& open, std::vector<Meaning>& out) {
  const int remaining = length - static_cast<int>(prefix.size());
  if (remaining == 0) {
    out.push_back(prefix);
    return;
  }
  // Token order is open_0..open_{k-1}, close_0..close_{k-1}; only one close
  // is legal at any point, so iterating opens then the close is lexicographic.
  if (static_cast<int>(open.size()) < remaining) {
    for (int i = 0; i < k; ++i) {
      prefix.push_back(i);
      open.push_back(i);
      dyck_extend(k, length, prefix, open, out);
      open.pop_back();
      prefix.pop_back();
    }
  }
  if (!open.empty()) {
    const int top = open.back();
    prefix.push_back(k + top);
    open.pop_back();
    dyck_extend(k, length, prefix, open, out);
    open.push_back(top);
    prefix.pop_back();
  }
}

}  // namespace

std::uint64_t catalan(int n) {
  std::uint64_t c = 1;
  for (int i = 0; i < n; ++i) c = c * 2 * (2 * i + 1) / (i + 2);
  return c;
}

std::uint64_t dyck_count(int k, int l_max) {
  std::uint64_t total = 0, power = 1;
  for (int n = 0; n <= l_max / 2; ++n) {
    total += catalan(n) * power;
    power *= static_cast<std::uint64_t>(k);
  }
  return total;
}

bool MeaningSpace::contains(const Meaning& m) const {
  if (kind == MeaningKind::AttrVal) {
    if (static_cast<int>(m.size()) != n_att) return false;
    return std::all_of(m.begin(), m.end(), [&](int v) { return v >= 0 && v < n_val; });
  }
  if (static_cast<int>(m.size()) > l_max) return false;
  if (std::any_of(m.begin(), m.end(), [&](int t) { return t < 0 || t >= 2 * k; })) return false;
  return is_dyck(m, k);
}

std::string MeaningSpace::format(const Meaning& m) const {
  std::ostringstream out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (kind == MeaningKind::AttrVal) {
      if (i) out << ',';
      out << m[i];
    } else {
      if (i) out << ' ';
      out << (m[i] < k ? '(' : ')') << (m[i] % k) + 1;
    }
  }
  return out.str();
}

MeaningSpace enumerate_attr_val(int n_att, int n_val, std::size_t cap) {
  if (n_att < 1 || n_val < 2) {
    throw Error("enumerate_attr_val: need n_att >= 1 and n_val >= 2, got (" + std::to_string(n_att) + ", " +
                std::to_string(n_val) + ")");
  }
  std::size_t size = 1;
  for (int a = 0; a < n_att; ++a) {
    if (size > cap / static_cast<std::size_t>(n_val)) {
      throw Error("enumerate_attr_val: space exceeds the size cap of " + std::to_string(cap));
    }
    size *= static_cast<std::size_t>(n_val);
  }
  MeaningSpace space;
  space.kind = MeaningKind::AttrVal;
  space.n_att = n_att;
  space.n_val = n_val;
  space.meanings.reserve(size);
  Meaning m(n_att, 0);
  for (std::size_t i = 0; i < size; ++i) {
    space.meanings.push_back(m);
    for (int a = n_att - 1; a >= 0; --a) {
      if (++m[a] < n_val) break;
      m[a] = 0;
    }
  }
  return space;
}

MeaningSpace enumerate_dyck(int k, int l_max, std::size_t cap) {
  if (k < 1 || l_max < 0 || l_max % 2 != 0) {
    throw Error("enumerate_dyck: need k >= 1 and even l_max >= 0, got (" + std::to_string(k) + ", " +
                std::to_string(l_max) + ")");
  }
  // Overflow-safe size check before enumerating.
  std::uint64_t total = 0, power = 1;
  for (int n = 0; n <= l_max / 2; ++n) {
    const std::uint64_t c = catalan(n);
    if (power > cap || c > cap || c * power > cap || total + c * power > cap) {
      throw Error("enumerate_dyck: space exceeds the size cap of " + std::to_string(cap));
    }
    total += c * power;
    power *= static_cast<std::uint64_t>(k);
  }
  MeaningSpace space;
  space.kind = MeaningKind::Dyck;
  space.k = k;
  space.l_max = l_max;
  space.meanings.reserve(total);
  Meaning prefix;
  std::vector<int> open;
  for (int length = 0; length <= l_max; length += 2) dyck_extend(k, length, prefix, open, space.meanings);
  return space;
}

bool is_dyck(std::span<const int> tokens, int k) {
  std::vector<int> open;
  for (int t : tokens) {
    if (t < 0 || t >= 2 * k) throw Error("is_dyck: unknown token " + std::to_string(t) + " for k = " + std::to_string(k));
    if (t < k) {
      open.push_back(t);
    } else {
      if (open.empty() || open.back() != t - k) return false;
      open.pop_back();
    }
  }
  return open.empty();
}

Split split(const MeaningSpace& space, std::uint64_t seed) {
  std::vector<std::size_t> order(space.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t n_test = (space.size() + 9) / 10;
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  return s;
}

void apply_split(MeaningSpace& space, std::uint64_t seed) {
  auto s = split(space, seed);
  space.train = std::move(s.train);
  space.test = std::move(s.test);
}

MeaningInput encode_meaning(const Meaning& meaning, const MeaningSpace& space) {
  if (!space.contains(meaning)) throw Error("encode_meaning: meaning '" + space.format(meaning) + "' is not in the space");
  MeaningInput in;
  if (space.kind == MeaningKind::AttrVal) {
    in.one_hot.assign(space.one_hot_width(), 0.0f);
    for (int a = 0; a < space.n_att; ++a) in.one_hot[static_cast<std::size_t>(a) * space.n_val + meaning[a]] = 1.0f;
  } else {
    in.tokens = meaning;
  }
  return in;
}

void export_meanings(const MeaningSpace& space, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("export_meanings: cannot open " + path.string());
  for (const auto& m : space.meanings) out << space.format(m) << '\n';
  if (!out) throw Error("export_meanings: write failed for " + path.string());
}

}  // namespace eclab
