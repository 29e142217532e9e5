#include "eclab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace eclab::ops {
namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMajor<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMajor<T>>;

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

template <typename T>
void require_same_tape(const char* op, Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw Error(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  require_same_tape(op, a, b);
  if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
}

template <typename T>
Shape matrix_shape(std::size_t rows, std::size_t cols) {
  return Shape{rows, cols};
}

// Elementwise unary op whose derivative is expressed through input x and
// output y.
template <typename T, typename F, typename D>
Var<T> unary(const char* name, Var<T> a, F f, D dfdx) {
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id;
  return a.tape->record(name, std::move(out), a.requires_grad(), [ia, dfdx](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value(ia);
    const auto& y = t.value(self);
    T* ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

template <typename T, bool kMax>
Var<T> extremum(const char* name, Var<T> a, Var<T> b) {
  require_same_shape(name, a, b);
  const auto& x = a.value();
  const auto& y = b.value();
  Tensor<T> out(x.shape());
  bool needs = a.requires_grad() || b.requires_grad();
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kMax ? (x[i] >= y[i] ? x[i] : y[i]) : (x[i] <= y[i] ? x[i] : y[i]);
    margin = std::min(margin, static_cast<double>(std::abs(x[i] - y[i])));
  }
  if (needs) a.tape->note_kink(margin);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(name, std::move(out), needs, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value(ia);
    const auto& y = t.value(ib);
    T* ga = t.grad_accumulator(ia);
    T* gb = t.grad_accumulator(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      bool first = kMax ? x[i] >= y[i] : x[i] <= y[i];
      if (first) {
        if (ga) ga[i] += g[i];
      } else if (gb) {
        gb[i] += g[i];
      }
    }
  });
}

template <typename T, bool kMax>
Var<T> extremum_scalar(const char* name, Var<T> a, T s) {
  const auto& x = a.value();
  Tensor<T> out(x.shape());
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = kMax ? (x[i] >= s ? x[i] : s) : (x[i] <= s ? x[i] : s);
    margin = std::min(margin, static_cast<double>(std::abs(x[i] - s)));
  }
  if (a.requires_grad()) a.tape->note_kink(margin);
  const std::size_t ia = a.id;
  return a.tape->record(name, std::move(out), a.requires_grad(), [ia, s](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value(ia);
    T* ga = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (kMax ? x[i] >= s : x[i] <= s) ga[i] += g[i];
    }
  });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape("matmul", a, b);
  const auto& x = a.value();
  const auto& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) shape_mismatch("matmul", x.shape(), y.shape());
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor<T> out(matrix_shape<T>(m, n));
  MutMap<T>(out.data().data(), m, n).noalias() = ConstMap<T>(x.data().data(), m, k) * ConstMap<T>(y.data().data(), k, n);
  const std::size_t ia = a.id, ib = b.id;
  bool needs = a.requires_grad() || b.requires_grad();
  return a.tape->record("matmul", std::move(out), needs, [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
    ConstMap<T> g(t.grad_of(self).data().data(), m, n);
    if (T* ga = t.grad_accumulator(ia)) {
      MutMap<T>(ga, m, k).noalias() += g * ConstMap<T>(t.value(ib).data().data(), k, n).transpose();
    }
    if (T* gb = t.grad_accumulator(ib)) {
      MutMap<T>(gb, k, n).noalias() += ConstMap<T>(t.value(ia).data().data(), m, k).transpose() * g;
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("add", std::move(out), a.requires_grad() || b.requires_grad(),
                        [ia, ib](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_of(self);
                          if (T* ga = t.grad_accumulator(ia))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          if (T* gb = t.grad_accumulator(ib))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                        });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  Tensor<T> out(a.shape());
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("sub", std::move(out), a.requires_grad() || b.requires_grad(),
                        [ia, ib](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_of(self);
                          if (T* ga = t.grad_accumulator(ia))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          if (T* gb = t.grad_accumulator(ib))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                        });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  const auto& x = a.value();
  const auto& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("mul", std::move(out), a.requires_grad() || b.requires_grad(),
                        [ia, ib](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_of(self);
                          const auto& x = t.value(ia);
                          const auto& y = t.value(ib);
                          if (T* ga = t.grad_accumulator(ia))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                          if (T* gb = t.grad_accumulator(ib))
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                        });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  return unary<T>("add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return unary<T>("scale", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T> Var<T> maximum(Var<T> a, Var<T> b) { return extremum<T, true>("maximum", a, b); }
template <typename T> Var<T> minimum(Var<T> a, Var<T> b) { return extremum<T, false>("minimum", a, b); }
template <typename T> Var<T> maximum(Var<T> a, T s) { return extremum_scalar<T, true>("maximum", a, s); }
template <typename T> Var<T> minimum(Var<T> a, T s) { return extremum_scalar<T, false>("minimum", a, s); }

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= 0) return T{1} / (T{1} + std::exp(-x));
        T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary<T>("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> softmax(Var<T> a) {
  const auto& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * cols;
    T* yr = out.data().data() + r * cols;
    T mx = *std::max_element(xr, xr + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += (yr[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= z;
  }
  const std::size_t ia = a.id;
  return a.tape->record("softmax", std::move(out), a.requires_grad(), [ia, rows, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value(self);
    T* ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

template <typename T>
Var<T> log_softmax(Var<T> a) {
  const auto& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * cols;
    T* yr = out.data().data() + r * cols;
    T mx = *std::max_element(xr, xr + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(xr[c] - mx);
    T lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) yr[c] = xr[c] - lse;
  }
  const std::size_t ia = a.id;
  return a.tape->record("log_softmax", std::move(out), a.requires_grad(),
                        [ia, rows, cols](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_of(self);
                          const auto& y = t.value(self);
                          T* ga = t.grad_accumulator(ia);
                          for (std::size_t r = 0; r < rows; ++r) {
                            T gsum = 0;
                            for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
                            for (std::size_t c = 0; c < cols; ++c)
                              ga[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gsum;
                          }
                        });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    require_same_tape("concat", parts[0], p);
    if (p.rows() != rows || p.value().rank() != 2) shape_mismatch("concat", parts[0].shape(), p.shape());
    cols += p.cols();
    needs = needs || p.requires_grad();
  }
  Tensor<T> out(matrix_shape<T>(rows, cols));
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    const std::size_t w = v.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * w, w, out.data().data() + r * cols + offset);
    offset += w;
    ids.push_back(p.id);
    widths.push_back(w);
  }
  return parts[0].tape->record("concat", std::move(out), needs,
                               [ids, widths, rows, cols](Tape<T>& t, std::size_t self) {
                                 const auto& g = t.grad_of(self);
                                 std::size_t off = 0;
                                 for (std::size_t k = 0; k < ids.size(); ++k) {
                                   if (T* gp = t.grad_accumulator(ids[k])) {
                                     for (std::size_t r = 0; r < rows; ++r)
                                       for (std::size_t c = 0; c < widths[k]; ++c)
                                         gp[r * widths[k] + c] += g[r * cols + off + c];
                                   }
                                   off += widths[k];
                                 }
                               });
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin > end || end > cols) {
    throw ShapeError("slice: columns [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor<T> out(matrix_shape<T>(rows, w));
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * cols + begin, w, out.data().data() + r * w);
  const std::size_t ia = a.id;
  return a.tape->record("slice", std::move(out), a.requires_grad(), [ia, rows, cols, begin, w](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    T* ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const auto& x = a.value();
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  const std::size_t ia = a.id;
  return a.tape->record("sum", Tensor<T>::scalar(s), a.requires_grad(), [ia](Tape<T>& t, std::size_t self) {
    const T g = t.grad_of(self)[0];
    T* ga = t.grad_accumulator(ia);
    const std::size_t n = t.value(ia).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <typename T>
Var<T> row_sum(Var<T> a) {
  const auto& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor<T> out(matrix_shape<T>(rows, 1));
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += x(r, c);
    out[r] = s;
  }
  const std::size_t ia = a.id;
  return a.tape->record("row_sum", std::move(out), a.requires_grad(), [ia, rows, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    T* ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
  });
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  require_same_tape("add_bias", a, bias);
  const auto& x = a.value();
  const auto& b = bias.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (b.size() != cols) shape_mismatch("add_bias", x.shape(), b.shape());
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(r, c) + b[c];
  const std::size_t ia = a.id, ib = bias.id;
  return a.tape->record("add_bias", std::move(out), a.requires_grad() || bias.requires_grad(),
                        [ia, ib, rows, cols](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_of(self);
                          if (T* ga = t.grad_accumulator(ia))
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                          if (T* gb = t.grad_accumulator(ib))
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                        });
}

template <typename T>
Var<T> scale_rows(Var<T> a, Var<T> c) {
  require_same_tape("scale_rows", a, c);
  const auto& x = a.value();
  const auto& s = c.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (s.size() != rows || s.cols() != 1) shape_mismatch("scale_rows", x.shape(), s.shape());
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < cols; ++k) out(r, k) = x(r, k) * s[r];
  const std::size_t ia = a.id, ic = c.id;
  return a.tape->record("scale_rows", std::move(out), a.requires_grad() || c.requires_grad(),
                        [ia, ic, rows, cols](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_of(self);
                          const auto& x = t.value(ia);
                          const auto& s = t.value(ic);
                          if (T* ga = t.grad_accumulator(ia))
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t k = 0; k < cols; ++k) ga[r * cols + k] += g[r * cols + k] * s[r];
                          if (T* gc = t.grad_accumulator(ic))
                            for (std::size_t r = 0; r < rows; ++r) {
                              T acc = 0;
                              for (std::size_t k = 0; k < cols; ++k) acc += g[r * cols + k] * x[r * cols + k];
                              gc[r] += acc;
                            }
                        });
}

template <typename T>
Var<T> pick(Var<T> a, std::span<const int> index) {
  const auto& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (index.size() != rows) {
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for " + to_string(x.shape()));
  }
  Tensor<T> out(matrix_shape<T>(rows, 1));
  std::vector<int> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw ShapeError("pick: index " + std::to_string(idx[r]) + " out of range for " + to_string(x.shape()));
    }
    out[r] = x(r, idx[r]);
  }
  const std::size_t ia = a.id;
  return a.tape->record("pick", std::move(out), a.requires_grad(), [ia, cols, idx = std::move(idx)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    T* ga = t.grad_accumulator(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) ga[r * cols + idx[r]] += g[r];
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> index) {
  const auto& x = table.value();
  const std::size_t n = x.rows(), cols = x.cols();
  Tensor<T> out(matrix_shape<T>(index.size(), cols));
  std::vector<int> idx(index.begin(), index.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= n) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " + to_string(x.shape()));
    }
    std::copy_n(x.data().data() + idx[r] * cols, cols, out.data().data() + r * cols);
  }
  const std::size_t ia = table.id;
  return table.tape->record("gather_rows", std::move(out), table.requires_grad(),
                            [ia, cols, idx = std::move(idx)](Tape<T>& t, std::size_t self) {
                              const auto& g = t.grad_of(self);
                              T* ga = t.grad_accumulator(ia);
                              for (std::size_t r = 0; r < idx.size(); ++r)
                                for (std::size_t c = 0; c < cols; ++c) ga[idx[r] * cols + c] += g[r * cols + c];
                            });
}

#define ECLAB_INSTANTIATE_OPS(T)                                    \
  template Var<T> matmul(Var<T>, Var<T>);                           \
  template Var<T> add(Var<T>, Var<T>);                              \
  template Var<T> sub(Var<T>, Var<T>);                              \
  template Var<T> mul(Var<T>, Var<T>);                              \
  template Var<T> add_scalar(Var<T>, T);                            \
  template Var<T> scale(Var<T>, T);                                 \
  template Var<T> maximum(Var<T>, Var<T>);                          \
  template Var<T> minimum(Var<T>, Var<T>);                          \
  template Var<T> maximum(Var<T>, T);                               \
  template Var<T> minimum(Var<T>, T);                               \
  template Var<T> sigmoid(Var<T>);                                  \
  template Var<T> tanh(Var<T>);                                     \
  template Var<T> log(Var<T>);                                      \
  template Var<T> exp(Var<T>);                                      \
  template Var<T> softmax(Var<T>);                                  \
  template Var<T> log_softmax(Var<T>);                              \
  template Var<T> concat(std::span<const Var<T>>);                  \
  template Var<T> slice(Var<T>, std::size_t, std::size_t);          \
  template Var<T> sum(Var<T>);                                      \
  template Var<T> mean(Var<T>);                                     \
  template Var<T> row_sum(Var<T>);                                  \
  template Var<T> add_bias(Var<T>, Var<T>);                         \
  template Var<T> scale_rows(Var<T>, Var<T>);                       \
  template Var<T> pick(Var<T>, std::span<const int>);               \
  template Var<T> gather_rows(Var<T>, std::span<const int>);

ECLAB_INSTANTIATE_OPS(float)
ECLAB_INSTANTIATE_OPS(double)

}  // namespace eclab::ops
