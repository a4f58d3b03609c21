#pragma once

// Graph convolution on the boundary-aware graph.
//
//   naive:      sigma(D^-1/2 A_bw D^-1/2 H_l Theta)                    O(N^2)
//   efficient:  sigma([Q11 (Q12 H_l) + Q21 (Q22 H_l)] Theta)           O(N c^2)
//
//   Q11 = D^-1/2 H_hat    Q12 = (D^-1/2 H)^T
//   Q21 = D^-1/2 H        Q22 = (D^-1/2 H_hat)^T
//
// The efficient layer multiplies the c x N factors into H_l first, so its
// largest intermediate is N x c.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bgr/errors.hpp"
#include "bgr/graph.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

struct LayerParams {
  Tensor2 theta;  // c_in x c_out
};

struct QFactors {
  Tensor2 Q11;  // N x c
  Tensor2 Q12;  // c x N
  Tensor2 Q21;  // N x c
  Tensor2 Q22;  // c x N
};

enum class GcnPath { efficient, naive };

struct BgrConfig {
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 16;
  double degree_epsilon = 1e-6;
  GcnPath path = GcnPath::efficient;

  void validate() const {
    if (num_layers < 1) throw ConfigError("bgr.num_layers must be >= 1");
    if (hidden_dim < 1) throw ConfigError("bgr.hidden_dim must be >= 1");
    if (!(degree_epsilon > 0.0)) throw ConfigError("bgr.degree_epsilon must be > 0");
  }
};

/// 1 / sqrt(max(d_i, eps)). Non-positive degrees come from negative feature
/// inner products; `clamped`, when given, receives how many entries hit eps.
inline Vector normalize_degrees(const Vector& d, double eps, std::size_t* clamped = nullptr) {
  if (!(eps > 0.0)) throw DomainError("normalize_degrees: eps must be > 0");
  Vector out(d.size());
  std::size_t n_clamped = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double v = d[i];
    if (!(v > eps)) {
      v = eps;
      ++n_clamped;
    }
    out[i] = 1.0 / std::sqrt(v);
  }
  detail::count_flops(d.size());
  if (clamped) *clamped = n_clamped;
  return out;
}

/// Reference layer: materializes D^-1/2 A_bw D^-1/2 (N x N).
inline Tensor2 layer_naive(const Tensor2& H_l, const Tensor2& A_bw, const Vector& d,
                           const LayerParams& p, bool activate, double eps = 1e-6,
                           std::size_t* clamped = nullptr) {
  const std::size_t n = A_bw.rows();
  if (A_bw.cols() != n || d.size() != n || H_l.rows() != n)
    throw ShapeError("layer_naive: adjacency " + detail::dims(A_bw.rows(), A_bw.cols()) +
                     ", degrees " + std::to_string(d.size()) + ", features " +
                     detail::dims(H_l.rows(), H_l.cols()));
  if (p.theta.rows() != H_l.cols())
    throw ShapeError("layer_naive: theta expects " + std::to_string(p.theta.rows()) +
                     " input channels, got " + std::to_string(H_l.cols()));
  const Vector s = normalize_degrees(d, eps, clamped);
  Tensor2 P(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = A_bw.row(i);
    auto dst = P.row(i);
    for (std::size_t j = 0; j < n; ++j) dst[j] = s[i] * src[j] * s[j];
  }
  detail::count_flops(2ULL * n * n);
  Tensor2 out = matmul(matmul(P, H_l), p.theta);
  return activate ? relu(out) : out;
}

inline QFactors build_q_factors(const Tensor2& H, const Tensor2& H_hat, const Vector& d_inv_sqrt) {
  if (!H.same_shape(H_hat) || d_inv_sqrt.size() != H.rows())
    throw ShapeError("build_q_factors: H " + detail::dims(H.rows(), H.cols()) + ", H_hat " +
                     detail::dims(H_hat.rows(), H_hat.cols()) + ", degrees " +
                     std::to_string(d_inv_sqrt.size()));
  return {row_scale(H_hat, d_inv_sqrt), transpose(row_scale(H, d_inv_sqrt)),
          row_scale(H, d_inv_sqrt), transpose(row_scale(H_hat, d_inv_sqrt))};
}

inline Tensor2 layer_efficient(const Tensor2& H_l, const QFactors& q, const LayerParams& p,
                               bool activate) {
  const std::size_t n = q.Q11.rows();
  const std::size_t c = q.Q11.cols();
  if (H_l.rows() != n || q.Q21.rows() != n || q.Q21.cols() != c || q.Q12.rows() != c ||
      q.Q12.cols() != n || q.Q22.rows() != c || q.Q22.cols() != n)
    throw ShapeError("layer_efficient: inconsistent Q factors or features for N=" +
                     std::to_string(n));
  if (p.theta.rows() != H_l.cols())
    throw ShapeError("layer_efficient: theta expects " + std::to_string(p.theta.rows()) +
                     " input channels, got " + std::to_string(H_l.cols()));
  const Tensor2 left = matmul(q.Q11, matmul(q.Q12, H_l));
  const Tensor2 right = matmul(q.Q21, matmul(q.Q22, H_l));
  Tensor2 out = matmul(add(left, right), p.theta);
  return activate ? relu(out) : out;
}

/// Dense D^-1/2 A_bw D^-1/2 for features H and scores B.
inline Tensor2 propagation_matrix(const Tensor2& H, const Vector& B, double eps = 1e-6) {
  const Tensor2 A_bw = boundary_reweight_dense(similarity(H), B);
  const Vector s = normalize_degrees(degree_dense(A_bw), eps);
  const std::size_t n = A_bw.rows();
  Tensor2 P(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) P(i, j) = s[i] * A_bw(i, j) * s[j];
  return P;
}

struct BgrDiagnostics {
  std::size_t clamped_degrees = 0;
};

/// X_bar = X + reshape(project(H^(L+1))), H^(1) = embed(X). The graph is
/// built once from H^(1) and B and shared by every layer; each layer applies
/// ReLU, the projection back to X's channel count does not.
inline FeatureMap bgr_forward(const FeatureMap& x, const Vector& B, const EmbeddingParams& embed_p,
                              const std::vector<LayerParams>& layers, const EmbeddingParams& out_p,
                              const BgrConfig& cfg, BgrDiagnostics* diag = nullptr) {
  cfg.validate();
  if (B.size() != x.pixels())
    throw ShapeError("bgr_forward: " + std::to_string(B.size()) + " scores for " +
                     std::to_string(x.pixels()) + " pixels");
  if (layers.size() != cfg.num_layers)
    throw ShapeError("bgr_forward: config wants " + std::to_string(cfg.num_layers) +
                     " layers, got " + std::to_string(layers.size()));
  std::size_t width = embed_p.out_dim();
  for (const auto& l : layers) {
    if (l.theta.rows() != width) throw ShapeError("bgr_forward: layer dimension chain broken");
    width = l.theta.cols();
  }
  if (out_p.in_dim() != width || out_p.out_dim() != x.c())
    throw ShapeError("bgr_forward: projection must map " + std::to_string(width) + " -> " +
                     std::to_string(x.c()) + " channels");

  Tensor2 H = embed(x, embed_p);
  std::size_t clamped = 0;
  Tensor2 h_l = H;
  if (cfg.path == GcnPath::efficient) {
    const BoundaryAwareGraph g = build_graph(std::move(H), B);
    const Vector s = normalize_degrees(g.degrees, cfg.degree_epsilon, &clamped);
    const QFactors q = build_q_factors(g.H, g.H_hat, s);
    for (const auto& l : layers) h_l = layer_efficient(h_l, q, l, true);
  } else {
    const Tensor2 A_bw = boundary_reweight_dense(similarity(H), B);
    const Vector d = degree_dense(A_bw);
    for (const auto& l : layers) h_l = layer_naive(h_l, A_bw, d, l, true, cfg.degree_epsilon, &clamped);
  }
  if (diag) diag->clamped_degrees = clamped;

  const Tensor2 projected = affine_rows(h_l, out_p);
  FeatureMap out = x;
  auto o = out.values();
  auto p = projected.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += p[i];
  return out;
}

}  // namespace bgr
