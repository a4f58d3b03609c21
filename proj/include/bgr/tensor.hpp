#pragma once

// Dense double-precision arrays and the handful of kernels everything else
// builds on. Storage is row-major; node i of an h x w map is pixel
// (y = i / w, x = i % w).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "bgr/errors.hpp"
#include "bgr/instrument.hpp"
#include "bgr/rng.hpp"

namespace bgr {

using Buffer = std::vector<double, TrackedAllocator<double>>;

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::span<const double> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const { return data_.size(); }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool operator==(const Vector&) const = default;

 private:
  Buffer data_;
};

class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::span<const double> values)
      : rows_(rows), cols_(cols), data_(values.begin(), values.end()) {
    if (data_.size() != rows * cols)
      throw ShapeError("Tensor2: " + std::to_string(values.size()) + " values for shape " +
                       detail::dims(rows, cols));
  }

  /// Row-wise literal, e.g. Tensor2::from_rows({{1, 2}, {3, 4}}).
  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Tensor2 t(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("Tensor2::from_rows: ragged rows");
      std::copy(row.begin(), row.end(), t.row(i++).begin());
    }
    return t;
  }

  static Tensor2 identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  /// Column vector view of a Vector (len x 1).
  static Tensor2 column(const Vector& v) { return Tensor2(v.size(), 1, v.values()); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool operator==(const Tensor2&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Buffer data_;
};

/// h x w x c map stored as (y, x, channel), channel fastest.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : h_(h), w_(w), c_(c), data_(h * w * c, fill) {}
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, std::span<const double> values)
      : h_(h), w_(w), c_(c), data_(values.begin(), values.end()) {
    if (data_.size() != h * w * c) throw ShapeError("FeatureMap: value count does not match h*w*c");
  }

  std::size_t h() const { return h_; }
  std::size_t w() const { return w_; }
  std::size_t c() const { return c_; }
  std::size_t pixels() const { return h_ * w_; }

  double operator()(std::size_t y, std::size_t x, std::size_t ch) const {
    return data_[(y * w_ + x) * c_ + ch];
  }
  double& operator()(std::size_t y, std::size_t x, std::size_t ch) {
    return data_[(y * w_ + x) * c_ + ch];
  }
  std::span<const double> pixel(std::size_t i) const { return {data_.data() + i * c_, c_}; }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t h_ = 0, w_ = 0, c_ = 0;
  Buffer data_;
};

// ---------------------------------------------------------------------------
// kernels

/// a * b. Counts m*n*(2k-1) flops.
inline Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + detail::dims(a.rows(), a.cols()) + " * " +
                     detail::dims(b.rows(), b.cols()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor2 out(m, n);
  if (k == 0) return out;
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.row(i).data();
    const double* ar = a.row(i).data();
    const double* b0 = b.row(0).data();
    const double a0 = ar[0];
    for (std::size_t j = 0; j < n; ++j) o[j] = a0 * b0[j];
    for (std::size_t p = 1; p < k; ++p) {
      const double av = ar[p];
      const double* br = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  detail::count_flops(static_cast<std::uint64_t>(m) * n * (2 * k - 1));
  return out;
}

/// a^T * b without materializing the transpose.
inline Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + detail::dims(a.rows(), a.cols()) + "^T * " +
                     detail::dims(b.rows(), b.cols()));
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor2 out(m, n);
  if (k == 0) return out;
  for (std::size_t p = 0; p < k; ++p) {
    const double* ar = a.row(p).data();
    const double* br = b.row(p).data();
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ar[i];
      double* o = out.row(i).data();
      if (p == 0)
        for (std::size_t j = 0; j < n; ++j) o[j] = av * br[j];
      else
        for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  detail::count_flops(static_cast<std::uint64_t>(m) * n * (2 * k - 1));
  return out;
}

inline Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// a * b^T. Copies b^T once so the product runs row-by-row.
inline Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + detail::dims(a.rows(), a.cols()) + " * " +
                     detail::dims(b.rows(), b.cols()) + "^T");
  return matmul(a, transpose(b));
}

/// out[i, j] = a[i, j] * s[i].
inline Tensor2 row_scale(const Tensor2& a, const Vector& s) {
  if (s.size() != a.rows())
    throw ShapeError("row_scale: vector of " + std::to_string(s.size()) + " for " +
                     std::to_string(a.rows()) + " rows");
  Tensor2 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double si = s[i];
    auto src = a.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = src[j] * si;
  }
  detail::count_flops(a.size());
  return out;
}

inline Tensor2 add(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b))
    throw ShapeError("add: " + detail::dims(a.rows(), a.cols()) + " + " +
                     detail::dims(b.rows(), b.cols()));
  Tensor2 out(a.rows(), a.cols());
  auto x = a.values(), y = b.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  detail::count_flops(a.size());
  return out;
}

inline Tensor2 relu(const Tensor2& a) {
  Tensor2 out(a.rows(), a.cols());
  auto x = a.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
  detail::count_flops(a.size());
  return out;
}

/// Column sums, i.e. a^T * 1 computed with additions only.
inline Vector column_sums(const Tensor2& a) {
  Vector out(a.cols());
  if (a.rows() == 0) return out;
  for (std::size_t j = 0; j < a.cols(); ++j) out[j] = a(0, j);
  for (std::size_t i = 1; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j];
  }
  detail::count_flops(static_cast<std::uint64_t>(a.cols()) * (a.rows() - 1));
  return out;
}

/// a * v for a column vector v.
inline Vector matvec(const Tensor2& a, const Vector& v) {
  if (a.cols() != v.size()) throw ShapeError("matvec: length mismatch");
  Vector out(a.rows());
  const std::size_t k = a.cols();
  if (k == 0) return out;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    double s = r[0] * v[0];
    for (std::size_t p = 1; p < k; ++p) s += r[p] * v[p];
    out[i] = s;
  }
  detail::count_flops(static_cast<std::uint64_t>(a.rows()) * (2 * k - 1));
  return out;
}

inline double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// pixel <-> node layout

inline Tensor2 reshape_hw_to_nodes(const FeatureMap& x) {
  return Tensor2(x.pixels(), x.c(), x.values());
}

inline FeatureMap reshape_nodes_to_hw(const Tensor2& nodes, std::size_t h, std::size_t w) {
  if (nodes.rows() != h * w)
    throw ShapeError("reshape_nodes_to_hw: " + std::to_string(nodes.rows()) + " nodes for " +
                     detail::dims(h, w) + " map");
  return FeatureMap(h, w, nodes.cols(), nodes.values());
}

// ---------------------------------------------------------------------------
// deterministic fixtures

enum class Distribution { uniform, normal };

/// rows x cols tensor filled in row-major order from SplitMix64(seed).
/// uniform draws from [-scale, scale); normal from N(0, scale^2).
inline Tensor2 seeded_random(std::size_t rows, std::size_t cols, std::uint64_t seed,
                             Distribution dist = Distribution::uniform, double scale = 1.0) {
  SplitMix64 rng(seed);
  Tensor2 t(rows, cols);
  for (double& v : t.values())
    v = dist == Distribution::uniform ? rng.uniform(-scale, scale) : rng.normal(0.0, scale);
  return t;
}

inline Vector seeded_uniform_vector(std::size_t len, std::uint64_t seed, double lo, double hi) {
  SplitMix64 rng(seed);
  Vector v(len);
  for (double& x : v.values()) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace bgr
