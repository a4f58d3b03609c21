#pragma once

// Toy segmentation network used to exercise the BGR block end to end:
//
//   pixels -> affine+ReLU -> affine+ReLU            (encoder, per pixel)
//          -> boundary branch -> B                  (trained by BCE only)
//          -> BGR(features, stop_grad(B))           (bgr mode; identity in baseline)
//          -> affine -> K logits                    (classifier)
//
// Everything is recorded on an ad::Tape so the same code serves training,
// evaluation and gradient checks.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bgr/autodiff.hpp"
#include "bgr/boundary.hpp"
#include "bgr/errors.hpp"
#include "bgr/gcn.hpp"
#include "bgr/graph.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

enum class ModelMode { baseline, bgr };

inline const char* mode_name(ModelMode m) { return m == ModelMode::bgr ? "bgr" : "baseline"; }

struct ModelParams {
  EmbeddingParams enc1;           // in -> hidden
  EmbeddingParams enc2;           // hidden -> hidden
  BoundaryBranchParams boundary;  // hidden -> m -> 1
  EmbeddingParams bgr_embed;      // hidden -> hidden
  std::vector<LayerParams> bgr_layers;
  EmbeddingParams bgr_out;        // hidden -> hidden
  EmbeddingParams classifier;     // hidden -> K

  /// Uniform(+-1/sqrt(fan_in)) weights; zero biases except the BGR embedding,
  /// whose unit bias keeps initial feature inner products (and so degrees) positive.
  static ModelParams init(std::size_t in_channels, std::size_t hidden, std::size_t K,
                          std::size_t bgr_layers, std::uint64_t seed) {
    auto affine = [](std::size_t in, std::size_t out, std::uint64_t s, double bias = 0.0) {
      return EmbeddingParams{
          seeded_random(in, out, s, Distribution::uniform, 1.0 / std::sqrt(double(in))),
          Vector(out, bias)};
    };
    ModelParams p;
    p.enc1 = affine(in_channels, hidden, seed * 1000 + 1);
    p.enc2 = affine(hidden, hidden, seed * 1000 + 2);
    p.boundary = BoundaryBranchParams::init(hidden, hidden, seed * 1000 + 3);
    p.bgr_embed = affine(hidden, hidden, seed * 1000 + 5, 1.0);
    for (std::size_t l = 0; l < bgr_layers; ++l)
      p.bgr_layers.push_back({seeded_random(hidden, hidden, seed * 1000 + 10 + l,
                                            Distribution::uniform, 1.0 / std::sqrt(double(hidden)))});
    p.bgr_out = affine(hidden, hidden, seed * 1000 + 6);
    p.classifier = affine(hidden, K, seed * 1000 + 7);
    return p;
  }
};

/// One trainable tensor: where it lives and how it is shaped on the tape.
struct ParamRef {
  std::string name;
  std::string group;  // encoder | boundary_branch | classifier | bgr
  std::span<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Trainable tensors in canonical order. BN running statistics are state,
/// not parameters, and are excluded; so is the BGR block in baseline mode.
inline std::vector<ParamRef> parameters(ModelParams& p, ModelMode mode) {
  std::vector<ParamRef> out;
  auto mat = [&](std::string name, const char* group, Tensor2& t) {
    out.push_back({name, group, t.values(), t.rows(), t.cols()});
  };
  auto vec = [&](std::string name, const char* group, Vector& v) {
    out.push_back({name, group, v.values(), 1, v.size()});
  };
  mat("enc1.weight", "encoder", p.enc1.weight);
  vec("enc1.bias", "encoder", p.enc1.bias);
  mat("enc2.weight", "encoder", p.enc2.weight);
  vec("enc2.bias", "encoder", p.enc2.bias);
  mat("boundary.w1", "boundary_branch", p.boundary.w1);
  vec("boundary.b1", "boundary_branch", p.boundary.b1);
  vec("boundary.bn_gamma", "boundary_branch", p.boundary.bn_gamma);
  vec("boundary.bn_beta", "boundary_branch", p.boundary.bn_beta);
  mat("boundary.w2", "boundary_branch", p.boundary.w2);
  vec("boundary.b2", "boundary_branch", p.boundary.b2);
  mat("classifier.weight", "classifier", p.classifier.weight);
  vec("classifier.bias", "classifier", p.classifier.bias);
  if (mode == ModelMode::bgr) {
    mat("bgr.embed.weight", "bgr", p.bgr_embed.weight);
    vec("bgr.embed.bias", "bgr", p.bgr_embed.bias);
    for (std::size_t l = 0; l < p.bgr_layers.size(); ++l)
      mat("bgr.theta" + std::to_string(l), "bgr", p.bgr_layers[l].theta);
    mat("bgr.out.weight", "bgr", p.bgr_out.weight);
    vec("bgr.out.bias", "bgr", p.bgr_out.bias);
  }
  return out;
}

inline std::vector<Tensor2> parameter_tensors(const ModelParams& p, ModelMode mode) {
  std::vector<Tensor2> out;
  for (const auto& r : parameters(const_cast<ModelParams&>(p), mode))
    out.emplace_back(r.rows, r.cols, std::span<const double>(r.data));
  return out;
}

/// Parameters as tape variables, in the order of parameters().
struct BoundParams {
  ad::Var enc1_w, enc1_b, enc2_w, enc2_b;
  ad::Var bb_w1, bb_b1, bb_gamma, bb_beta, bb_w2, bb_b2;
  ad::Var cls_w, cls_b;
  ad::Var emb_w, emb_b;
  std::vector<ad::Var> thetas;
  ad::Var out_w, out_b;
  bool has_bgr = false;

  static BoundParams from_vars(std::span<const ad::Var> v, ModelMode mode, std::size_t layers) {
    const std::size_t want = 12 + (mode == ModelMode::bgr ? 4 + layers : 0);
    if (v.size() != want)
      throw ShapeError("BoundParams: expected " + std::to_string(want) + " variables, got " +
                       std::to_string(v.size()));
    BoundParams b;
    std::size_t i = 0;
    for (ad::Var* slot : {&b.enc1_w, &b.enc1_b, &b.enc2_w, &b.enc2_b, &b.bb_w1, &b.bb_b1,
                          &b.bb_gamma, &b.bb_beta, &b.bb_w2, &b.bb_b2, &b.cls_w, &b.cls_b})
      *slot = v[i++];
    if (mode == ModelMode::bgr) {
      b.has_bgr = true;
      b.emb_w = v[i++];
      b.emb_b = v[i++];
      for (std::size_t l = 0; l < layers; ++l) b.thetas.push_back(v[i++]);
      b.out_w = v[i++];
      b.out_b = v[i++];
    }
    return b;
  }
};

inline std::vector<ad::Var> bind_parameters(ad::Tape& tape, const ModelParams& p, ModelMode mode,
                                            bool requires_grad) {
  std::vector<ad::Var> vars;
  for (auto& t : parameter_tensors(p, mode)) vars.push_back(tape.input(std::move(t), requires_grad));
  return vars;
}

/// Differentiable BGR block on one image's features F (N x c). B enters
/// through the caller's stop_grad. Returns F + project(H^(L+1)).
inline ad::Var bgr_block(ad::Var F, ad::Var B, const BoundParams& bp, double eps,
                         std::size_t* clamped = nullptr) {
  using namespace ad;
  Var H = add_bias(matmul(F, bp.emb_w), bp.emb_b);
  Var H_hat = add(row_scale(H, B), H);
  Var d = add(matmul(H_hat, reduce_row_sum(transpose(H))),
              matmul(H, reduce_row_sum(transpose(H_hat))));
  if (clamped)
    for (double v : d.value().values()) *clamped += v > eps ? 0 : 1;
  Var s = rsqrt_clamp(d, eps);
  Var Q11 = row_scale(H_hat, s);
  Var Q21 = row_scale(H, s);
  // Theta is applied to the c x c intermediates; same product, fewer N-sized ops.
  Var h = H;
  for (Var theta : bp.thetas)
    h = relu(add(matmul(Q11, matmul(matmul_tn(Q21, h), theta)),
                 matmul(Q21, matmul(matmul_tn(Q11, h), theta))));
  return add(F, add_bias(matmul(h, bp.out_w), bp.out_b));
}

struct BatchForward {
  ad::Var logits;    // (images * N) x K
  ad::Var boundary;  // (images * N) x 1, before stop_grad
  BatchNormStats bn;
  std::size_t clamped_degrees = 0;
};

/// Forward pass for `images` stacked images of `pixels_per_image` rows each.
/// BN statistics span all rows of the batch in training mode.
inline BatchForward forward_batch(ad::Tape& tape, const BoundParams& bp, const ModelParams& p,
                                  const Tensor2& pixels, std::size_t pixels_per_image,
                                  ModelMode mode, bool training, double degree_eps) {
  using namespace ad;
  if (pixels_per_image == 0 || pixels.rows() % pixels_per_image != 0)
    throw ShapeError("forward_batch: row count is not a multiple of pixels_per_image");
  if (mode == ModelMode::bgr && !bp.has_bgr)
    throw UsageError("forward_batch: bgr mode needs bound BGR parameters");
  const std::size_t images = pixels.rows() / pixels_per_image;

  BatchForward out;
  Var x = tape.constant(pixels);
  Var f = relu(add_bias(matmul(x, bp.enc1_w), bp.enc1_b));
  f = relu(add_bias(matmul(f, bp.enc2_w), bp.enc2_b));

  Var z = add_bias(matmul(f, bp.bb_w1), bp.bb_b1);
  Var zn = training ? batch_norm(z, bp.bb_gamma, bp.bb_beta, BoundaryBranchParams::bn_epsilon, &out.bn)
                    : batch_norm(z, bp.bb_gamma, bp.bb_beta, BoundaryBranchParams::bn_epsilon,
                                 &out.bn, &p.boundary.bn_running_mean, &p.boundary.bn_running_var);
  out.boundary = sigmoid(add_bias(matmul(relu(zn), bp.bb_w2), bp.bb_b2));

  Var fused = f;
  if (mode == ModelMode::bgr) {
    Var b_const = stop_grad(out.boundary);
    std::vector<Var> parts;
    for (std::size_t k = 0; k < images; ++k) {
      const std::size_t off = k * pixels_per_image;
      parts.push_back(bgr_block(slice_rows(f, off, pixels_per_image),
                                slice_rows(b_const, off, pixels_per_image), bp, degree_eps,
                                &out.clamped_degrees));
    }
    fused = parts.size() == 1 ? parts[0] : concat_rows(parts);
  }
  out.logits = add_bias(matmul(fused, bp.cls_w), bp.cls_b);
  return out;
}

struct LossTerms {
  ad::Var total, seg, boundary;
};

/// Softmax cross-entropy on the logits plus BCE of B against the
/// ground-truth mask, both with weight 1.
inline LossTerms total_loss(ad::Var logits, ad::Var B, std::vector<int> labels, Vector gt_boundary) {
  LossTerms t;
  t.seg = ad::softmax_ce(logits, std::move(labels));
  t.boundary = ad::bce(B, std::move(gt_boundary));
  t.total = ad::add(t.seg, t.boundary);
  return t;
}

/// Mean softmax cross-entropy of plain logits (N x K); for checks outside a tape.
inline double softmax_cross_entropy(const Tensor2& logits, const std::vector<int>& labels) {
  ad::Tape t;
  return ad::softmax_ce(t.constant(logits), labels).value()(0, 0);
}

struct ModelOutput {
  Tensor2 logits;  // N x K
  Vector B;
};

/// Single-image forward outside of training.
inline ModelOutput model_forward(const FeatureMap& img, const ModelParams& p, ModelMode mode,
                                 bool training, double degree_eps = 1e-6) {
  if (img.c() != p.enc1.in_dim())
    throw ShapeError("model_forward: image has " + std::to_string(img.c()) +
                     " channels, encoder expects " + std::to_string(p.enc1.in_dim()));
  ad::Tape tape;
  auto vars = bind_parameters(tape, p, mode, false);
  auto bp = BoundParams::from_vars(vars, mode, p.bgr_layers.size());
  auto fw = forward_batch(tape, bp, p, reshape_hw_to_nodes(img), img.pixels(), mode, training,
                          degree_eps);
  const Tensor2& b = fw.boundary.value();
  return {fw.logits.value(), Vector(b.values())};
}

}  // namespace bgr
