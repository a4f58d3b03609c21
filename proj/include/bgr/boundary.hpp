#pragma once

// Boundary score maps: binary masks from label maps (supervision) and the
// learned per-pixel branch linear -> BN -> ReLU -> linear -> sigmoid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "bgr/errors.hpp"
#include "bgr/io.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

struct LabelMap {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t K = 0;
  std::vector<int> labels;  // row-major, pixel order matches reshape_hw_to_nodes

  LabelMap() = default;
  LabelMap(std::size_t h_, std::size_t w_, std::size_t k, std::vector<int> l)
      : h(h_), w(w_), K(k), labels(std::move(l)) {
    validate();
  }

  int operator()(std::size_t y, std::size_t x) const { return labels[y * w + x]; }
  std::size_t pixels() const { return h * w; }

  void validate() const {
    if (labels.size() != h * w) throw ShapeError("LabelMap: label count does not match h*w");
    for (int l : labels)
      if (l < 0 || static_cast<std::size_t>(l) >= K)
        throw DomainError("LabelMap: label " + std::to_string(l) + " outside [0, " +
                          std::to_string(K) + ")");
  }

  bool operator==(const LabelMap&) const = default;
};

/// 1 where some pixel within Chebyshev distance `radius` carries a different label.
inline Vector extract_gt_boundary(const LabelMap& labels, std::size_t radius = 1) {
  if (radius < 1) throw DomainError("extract_gt_boundary: radius must be >= 1");
  const auto h = static_cast<std::ptrdiff_t>(labels.h);
  const auto w = static_cast<std::ptrdiff_t>(labels.w);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  Vector mask(labels.pixels());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const int own = labels.labels[y * w + x];
      bool edge = false;
      for (std::ptrdiff_t yy = std::max<std::ptrdiff_t>(0, y - r);
           !edge && yy <= std::min(h - 1, y + r); ++yy)
        for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, x - r);
             xx <= std::min(w - 1, x + r); ++xx)
          if (labels.labels[yy * w + xx] != own) {
            edge = true;
            break;
          }
      mask[y * w + x] = edge ? 1.0 : 0.0;
    }
  }
  return mask;
}

struct BoundaryBranchParams {
  Tensor2 w1;  // c x m
  Vector b1;   // m
  Vector bn_gamma, bn_beta;
  Vector bn_running_mean, bn_running_var;
  Tensor2 w2;  // m x 1
  Vector b2;   // 1

  static constexpr double bn_epsilon = 1e-5;
  static constexpr double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch

  std::size_t in_dim() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }

  void validate() const {
    const std::size_t m = w1.cols();
    if (b1.size() != m || bn_gamma.size() != m || bn_beta.size() != m ||
        bn_running_mean.size() != m || bn_running_var.size() != m || w2.rows() != m ||
        w2.cols() != 1 || b2.size() != 1)
      throw ShapeError("BoundaryBranchParams: dimension chain inconsistent");
    for (double v : bn_running_var.values())
      if (!(v >= 0.0)) throw DomainError("BoundaryBranchParams: negative running variance");
  }

  /// Fresh branch: uniform(+-1/sqrt(fan_in)) weights, zero biases, unit BN.
  static BoundaryBranchParams init(std::size_t c, std::size_t m, std::uint64_t seed) {
    BoundaryBranchParams p;
    p.w1 = seeded_random(c, m, seed, Distribution::uniform, 1.0 / std::sqrt(double(c)));
    p.b1 = Vector(m);
    p.bn_gamma = Vector(m, 1.0);
    p.bn_beta = Vector(m);
    p.bn_running_mean = Vector(m);
    p.bn_running_var = Vector(m, 1.0);
    p.w2 = seeded_random(m, 1, seed + 1, Distribution::uniform, 1.0 / std::sqrt(double(m)));
    p.b2 = Vector(1);
    return p;
  }
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct BatchNormStats {
  Vector mean;
  Vector var;  // biased, over the rows of the batch
  std::size_t count = 0;
};

/// Column mean / biased variance over rows.
inline BatchNormStats batch_statistics(const Tensor2& z) {
  const std::size_t n = z.rows(), m = z.cols();
  BatchNormStats s{Vector(m), Vector(m), n};
  if (n == 0) return s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += z(i, j);
  for (std::size_t j = 0; j < m; ++j) s.mean[j] /= double(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = z(i, j) - s.mean[j];
      s.var[j] += d * d;
    }
  for (std::size_t j = 0; j < m; ++j) s.var[j] /= double(n);
  return s;
}

/// Folds batch statistics into the running estimates (unbiased variance).
inline void update_running_stats(BoundaryBranchParams& p, const BatchNormStats& s) {
  const double mo = BoundaryBranchParams::bn_momentum;
  const double unbias = s.count > 1 ? double(s.count) / double(s.count - 1) : 1.0;
  for (std::size_t j = 0; j < s.mean.size(); ++j) {
    p.bn_running_mean[j] = mo * p.bn_running_mean[j] + (1.0 - mo) * s.mean[j];
    p.bn_running_var[j] = mo * p.bn_running_var[j] + (1.0 - mo) * s.var[j] * unbias;
  }
}

namespace detail {

inline Vector boundary_head(const Tensor2& z, const BoundaryBranchParams& p, const Vector& mean,
                            const Vector& var) {
  const std::size_t n = z.rows(), m = z.cols();
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double logit = p.b2[0];
    for (std::size_t j = 0; j < m; ++j) {
      double a = (z(i, j) - mean[j]) / std::sqrt(var[j] + BoundaryBranchParams::bn_epsilon);
      a = p.bn_gamma[j] * a + p.bn_beta[j];
      if (a > 0.0) logit += a * p.w2(j, 0);
    }
    out[i] = sigmoid(logit);
  }
  return out;
}

inline Tensor2 boundary_hidden(const Tensor2& rows, const BoundaryBranchParams& p) {
  p.validate();
  if (rows.cols() != p.in_dim())
    throw ShapeError("boundary branch: " + std::to_string(rows.cols()) +
                     " input channels, w1 expects " + std::to_string(p.in_dim()));
  Tensor2 z = matmul(rows, p.w1);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += p.b1[j];
  return z;
}

}  // namespace detail

/// Scores for every row of `rows` (pixels, possibly from several images).
/// Training mode normalizes with batch statistics over all rows and updates
/// the running estimates; eval mode uses the running estimates only.
inline Vector boundary_branch_rows(const Tensor2& rows, BoundaryBranchParams& p, bool training) {
  const Tensor2 z = detail::boundary_hidden(rows, p);
  if (!training) return detail::boundary_head(z, p, p.bn_running_mean, p.bn_running_var);
  const BatchNormStats s = batch_statistics(z);
  Vector out = detail::boundary_head(z, p, s.mean, s.var);
  update_running_stats(p, s);
  return out;
}

inline Vector boundary_branch_forward(const FeatureMap& x, BoundaryBranchParams& p, bool training) {
  return boundary_branch_rows(reshape_hw_to_nodes(x), p, training);
}

/// Eval mode on const parameters.
inline Vector boundary_branch_forward(const FeatureMap& x, const BoundaryBranchParams& p) {
  const Tensor2 z = detail::boundary_hidden(reshape_hw_to_nodes(x), p);
  return detail::boundary_head(z, p, p.bn_running_mean, p.bn_running_var);
}

/// Mean binary cross-entropy. pred must lie strictly inside (0, 1).
inline double bce_loss(const Vector& pred, const Vector& target) {
  if (pred.size() != target.size())
    throw ShapeError("bce_loss: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(target.size()) + " targets");
  if (pred.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], t = target[i];
    if (!(p > 0.0 && p < 1.0))
      throw DomainError("bce_loss: prediction " + std::to_string(p) + " outside (0, 1)");
    total -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
  }
  return total / double(pred.size());
}

// ---------------------------------------------------------------------------
// files: "h w K" header then h*w integer labels; masks as binary PGM.

inline void write_label_map(std::ostream& os, const LabelMap& m) {
  os << m.h << ' ' << m.w << ' ' << m.K << '\n';
  for (std::size_t y = 0; y < m.h; ++y) {
    for (std::size_t x = 0; x < m.w; ++x) os << m(y, x) << (x + 1 == m.w ? '\n' : ' ');
  }
}

inline LabelMap read_label_map(std::istream& is) {
  std::size_t h = 0, w = 0, k = 0;
  if (!(is >> h >> w >> k)) throw DomainError("label map: missing 'h w K' header");
  std::vector<int> labels(h * w);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!(is >> labels[i])) throw DomainError("label map: expected " + std::to_string(h * w) + " labels");
  return LabelMap(h, w, k, std::move(labels));
}

inline LabelMap load_label_map(const std::string& path) {
  auto f = detail::open_in(path);
  return read_label_map(f);
}

/// Binary (P5) PGM with the given maxval.
inline void write_pgm(std::ostream& os, std::size_t h, std::size_t w,
                      const std::vector<std::uint8_t>& pixels, unsigned maxval = 255) {
  if (pixels.size() != h * w) throw ShapeError("write_pgm: pixel count does not match h*w");
  os << "P5\n" << w << ' ' << h << '\n' << maxval << '\n';
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

/// 0 / 255 mask image.
inline void save_mask_pgm(const std::string& path, std::size_t h, std::size_t w, const Vector& mask) {
  std::vector<std::uint8_t> px(mask.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask[i] >= 0.5 ? 255 : 0;
  auto f = detail::open_out(path, true);
  write_pgm(f, h, w, px);
}

/// Label ids stored directly as gray levels (maxval K - 1).
inline void save_label_pgm(const std::string& path, const LabelMap& m) {
  std::vector<std::uint8_t> px(m.labels.begin(), m.labels.end());
  auto f = detail::open_out(path, true);
  write_pgm(f, m.h, m.w, px, static_cast<unsigned>(std::max<std::size_t>(m.K, 2) - 1));
}

}  // namespace bgr
