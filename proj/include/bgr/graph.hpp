#pragma once

// Boundary-aware graph over pixel nodes.
//
// Edge weights are feature inner products, amplified where either endpoint is
// likely on a boundary:
//
//   A      = H H^T
//   A_bw   = (2 + B_i + B_j) * A_ij
//          = H_hat H^T + H H_hat^T,       H_hat = H (.) B + H
//   deg    = H_hat (H^T 1) + H (H_hat^T 1)
//
// The dense functions here materialize N x N matrices and serve as the
// reference path; hat_features and degree_factorized never do.

#include <cmath>
#include <string>

#include "bgr/errors.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

/// Per-pixel affine map (a 1x1 convolution): row = pixel * weight + bias.
struct EmbeddingParams {
  Tensor2 weight;  // c_in x c_out
  Vector bias;     // c_out

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  void validate() const {
    if (bias.size() != weight.cols())
      throw ShapeError("EmbeddingParams: bias length " + std::to_string(bias.size()) +
                       " != weight cols " + std::to_string(weight.cols()));
  }
};

struct BoundaryAwareGraph {
  Tensor2 H;
  Tensor2 H_hat;
  Vector B;
  Vector degrees;

  std::size_t nodes() const { return H.rows(); }
};

/// Rejects boundary scores outside [0, 1] (including NaN).
inline void validate_boundary_scores(const Vector& B) {
  for (std::size_t i = 0; i < B.size(); ++i) {
    if (!(B[i] >= 0.0 && B[i] <= 1.0))
      throw DomainError("boundary score B[" + std::to_string(i) + "] = " + std::to_string(B[i]) +
                        " outside [0, 1]");
  }
}

/// Affine map applied to each row of `nodes`.
inline Tensor2 affine_rows(const Tensor2& nodes, const EmbeddingParams& p) {
  p.validate();
  if (nodes.cols() != p.in_dim())
    throw ShapeError("affine: " + std::to_string(nodes.cols()) + " channels, weight expects " +
                     std::to_string(p.in_dim()));
  Tensor2 out = matmul(nodes, p.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += p.bias[j];
  }
  return out;
}

inline Tensor2 embed(const FeatureMap& x, const EmbeddingParams& p) {
  if (x.c() != p.in_dim())
    throw ShapeError("embed: feature map has " + std::to_string(x.c()) +
                     " channels, embedding expects " + std::to_string(p.in_dim()));
  return affine_rows(reshape_hw_to_nodes(x), p);
}

/// A = H H^T. Exactly symmetric: entry (i, j) and (j, i) run the same dot product.
inline Tensor2 similarity(const Tensor2& H) { return matmul_nt(H, H); }

/// A_bw[i, j] = (2 + (B_i + B_j)) * A[i, j].
inline Tensor2 boundary_reweight_dense(const Tensor2& A, const Vector& B) {
  if (A.rows() != A.cols()) throw ShapeError("boundary_reweight_dense: adjacency not square");
  if (B.size() != A.rows())
    throw ShapeError("boundary_reweight_dense: " + std::to_string(B.size()) + " scores for " +
                     std::to_string(A.rows()) + " nodes");
  validate_boundary_scores(B);
  const std::size_t n = A.rows();
  Tensor2 out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = A.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < n; ++j) dst[j] = (2.0 + (B[i] + B[j])) * src[j];
  }
  detail::count_flops(3ULL * n * n);
  return out;
}

/// H_hat = H (.) B + H, evaluated literally (one multiply and one add per entry).
inline Tensor2 hat_features(const Tensor2& H, const Vector& B) {
  if (B.size() != H.rows())
    throw ShapeError("hat_features: " + std::to_string(B.size()) + " scores for " +
                     std::to_string(H.rows()) + " nodes");
  validate_boundary_scores(B);
  Tensor2 out(H.rows(), H.cols());
  for (std::size_t i = 0; i < H.rows(); ++i) {
    auto src = H.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < H.cols(); ++j) dst[j] = src[j] * B[i] + src[j];
  }
  detail::count_flops(2ULL * H.size());
  return out;
}

/// deg = H_hat (H^T 1) + H (H_hat^T 1), inner brackets first: two length-c
/// column sums, two N x c mat-vecs, one length-N add. No N x N intermediate.
inline Vector degree_factorized(const Tensor2& H, const Tensor2& H_hat) {
  if (!H.same_shape(H_hat))
    throw ShapeError("degree_factorized: H is " + detail::dims(H.rows(), H.cols()) +
                     ", H_hat is " + detail::dims(H_hat.rows(), H_hat.cols()));
  const Vector h_sum = column_sums(H);
  const Vector hat_sum = column_sums(H_hat);
  Vector a = matvec(H_hat, h_sum);
  const Vector b = matvec(H, hat_sum);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  detail::count_flops(a.size());
  return a;
}

/// Row sums of a materialized adjacency.
inline Vector degree_dense(const Tensor2& A_bw) {
  if (A_bw.rows() != A_bw.cols())
    throw ShapeError("degree_dense: adjacency is " + detail::dims(A_bw.rows(), A_bw.cols()));
  const std::size_t n = A_bw.rows();
  Vector d(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = A_bw.row(i);
    double s = n ? r[0] : 0.0;
    for (std::size_t j = 1; j < n; ++j) s += r[j];
    d[i] = s;
  }
  if (n) detail::count_flops(static_cast<std::uint64_t>(n) * (n - 1));
  return d;
}

/// Builds (H, H_hat, B, degrees) from first-layer node features.
inline BoundaryAwareGraph build_graph(Tensor2 H, Vector B) {
  Tensor2 H_hat = hat_features(H, B);
  Vector d = degree_factorized(H, H_hat);
  return {std::move(H), std::move(H_hat), std::move(B), std::move(d)};
}

}  // namespace bgr
