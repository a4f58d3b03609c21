#pragma once

// Tensor-level reverse-mode differentiation.
//
// A Tape records nodes in creation order; every parent precedes its child, so
// backward() is a single reverse sweep. Each primitive carries its own adjoint.
// stop_grad passes its input forward and nothing backward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bgr/boundary.hpp"
#include "bgr/errors.hpp"
#include "bgr/rng.hpp"
#include "bgr/tensor.hpp"

namespace bgr::ad {

enum class Op {
  input,
  matmul,
  matmul_tn,
  add,
  add_bias,
  row_scale,
  relu,
  sigmoid,
  rsqrt_clamp,
  reduce_row_sum,
  reshape,
  transpose,
  stop_grad,
  softmax_ce,
  bce,
  scale,
  sum,
  batch_norm,
  slice_rows,
  concat_rows,
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor2& value() const;
  const Tensor2& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

struct Node;
using Adjoint = std::function<void(Tape&, const Node&)>;

struct Node {
  Op op = Op::input;
  std::vector<std::size_t> parents;
  Tensor2 value;
  Tensor2 grad;
  bool requires_grad = false;
  Adjoint adjoint;
};

class Tape {
 public:
  Var input(Tensor2 v, bool requires_grad = true) {
    Node n;
    n.op = Op::input;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return append(std::move(n));
  }
  Var constant(Tensor2 v) { return input(std::move(v), false); }

  /// Adds a derived node. It requires grad iff some parent does.
  Var push(Op op, std::vector<std::size_t> parents, Tensor2 value, Adjoint adjoint) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = false;
    for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_.at(p).requires_grad;
    n.parents = std::move(parents);
    if (n.requires_grad) n.adjoint = std::move(adjoint);
    return append(std::move(n));
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  const Tensor2& value(Var v) const { return nodes_.at(v.id).value; }

  /// Gradient after backward(); zeros for nodes the loss does not reach.
  const Tensor2& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (!n.value.same_shape(n.grad)) n.grad = Tensor2(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  void accumulate(std::size_t id, const Tensor2& g) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return;
    if (!n.grad.same_shape(n.value)) {
      n.grad = g;
      return;
    }
    auto dst = n.grad.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  void accumulate(std::size_t id, Tensor2&& g) {
    Node& n = nodes_.at(id);
    if (n.requires_grad && !n.grad.same_shape(n.value)) {
      n.grad = std::move(g);
      return;
    }
    accumulate(id, static_cast<const Tensor2&>(g));
  }
  /// Raw access to a parent's gradient buffer for adjoints that scatter;
  /// allocated as zeros on first use.
  Tensor2& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad.same_shape(n.value)) n.grad = Tensor2(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Gradients are allocated lazily: a node the sweep never reaches keeps an
  /// empty buffer and its adjoint is skipped.
  void backward(Var loss) {
    if (loss.tape != this) throw UsageError("backward: loss belongs to another tape");
    const Node& l = nodes_.at(loss.id);
    if (l.value.rows() != 1 || l.value.cols() != 1)
      throw UsageError("backward: loss must be 1x1, got " +
                       bgr::detail::dims(l.value.rows(), l.value.cols()));
    for (Node& n : nodes_) n.grad = Tensor2();
    nodes_[loss.id].grad = Tensor2(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.requires_grad && n.adjoint && n.grad.same_shape(n.value)) n.adjoint(*this, n);
    }
  }

  /// Makes the k-th stop_grad on this tape emit overrides[k] instead of its
  /// input. Used to replay a recorded forward while perturbing parameters, so
  /// finite differences see stop-gradient values as constants.
  void freeze_stop_grads(std::vector<Tensor2> overrides) { frozen_ = std::move(overrides); }
  std::size_t stop_grad_count() const { return stop_grads_.size(); }
  std::vector<Tensor2> stop_grad_values() const {
    std::vector<Tensor2> out;
    for (std::size_t id : stop_grads_) out.push_back(nodes_[id].value);
    return out;
  }

  // used by stop_grad()
  Tensor2 next_stop_grad_value(const Tensor2& input) {
    const std::size_t k = stop_grads_pending_++;
    if (k < frozen_.size()) {
      if (!frozen_[k].same_shape(input)) throw ShapeError("frozen stop_grad value has wrong shape");
      return frozen_[k];
    }
    return input;
  }
  void register_stop_grad(std::size_t id) { stop_grads_.push_back(id); }

 private:
  Var append(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::vector<Tensor2> frozen_;
  std::vector<std::size_t> stop_grads_;
  std::size_t stop_grads_pending_ = 0;
};

inline const Tensor2& Var::value() const { return tape->value(*this); }
inline const Tensor2& Var::grad() const { return tape->grad(*this); }

namespace detail {

inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw UsageError("operands live on different tapes");
  return *a.tape;
}

inline void add_scaled(Tensor2& dst, const Tensor2& src, double k) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * s[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Tensor2 v = bgr::matmul(a.value(), b.value());
  return t.push(Op::matmul, {a.id, b.id}, std::move(v), [](Tape& tp, const Node& n) {
    const std::size_t ia = n.parents[0], ib = n.parents[1];
    if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(n.grad, tp.node(ib).value));
    if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.node(ia).value, n.grad));
  });
}

/// a^T * b without a transpose node.
inline Var matmul_tn(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Tensor2 v = bgr::matmul_tn(a.value(), b.value());
  return t.push(Op::matmul_tn, {a.id, b.id}, std::move(v), [](Tape& tp, const Node& n) {
    const std::size_t ia = n.parents[0], ib = n.parents[1];
    if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(tp.node(ib).value, n.grad));
    if (tp.requires_grad(ib)) tp.accumulate(ib, bgr::matmul(tp.node(ia).value, n.grad));
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  Tensor2 v = bgr::add(a.value(), b.value());
  return t.push(Op::add, {a.id, b.id}, std::move(v), [](Tape& tp, const Node& n) {
    tp.accumulate(n.parents[0], n.grad);
    tp.accumulate(n.parents[1], n.grad);
  });
}

/// a (N x m) + bias (1 x m) broadcast over rows.
inline Var add_bias(Var a, Var bias) {
  Tape& t = detail::same_tape(a, bias);
  const Tensor2& x = a.value();
  const Tensor2& b = bias.value();
  if (b.rows() != 1 || b.cols() != x.cols())
    throw ShapeError("add_bias: bias " + bgr::detail::dims(b.rows(), b.cols()) + " for " +
                     bgr::detail::dims(x.rows(), x.cols()));
  Tensor2 v = x;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += b(0, j);
  return t.push(Op::add_bias, {a.id, bias.id}, std::move(v), [](Tape& tp, const Node& n) {
    tp.accumulate(n.parents[0], n.grad);
    const std::size_t ib = n.parents[1];
    if (!tp.requires_grad(ib)) return;
    Tensor2& gb = tp.grad_buffer(ib);
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) gb(0, j) += n.grad(i, j);
  });
}

/// out[i, j] = a[i, j] * s[i]; s is N x 1.
inline Var row_scale(Var a, Var s) {
  Tape& t = detail::same_tape(a, s);
  const Tensor2& x = a.value();
  const Tensor2& sv = s.value();
  if (sv.cols() != 1 || sv.rows() != x.rows())
    throw ShapeError("row_scale: scale " + bgr::detail::dims(sv.rows(), sv.cols()) + " for " +
                     bgr::detail::dims(x.rows(), x.cols()));
  Tensor2 v(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) v(i, j) = x(i, j) * sv(i, 0);
  return t.push(Op::row_scale, {a.id, s.id}, std::move(v), [](Tape& tp, const Node& n) {
    const std::size_t ia = n.parents[0], is = n.parents[1];
    const Tensor2& x = tp.node(ia).value;
    const Tensor2& sv = tp.node(is).value;
    if (tp.requires_grad(ia)) {
      Tensor2& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += n.grad(i, j) * sv(i, 0);
    }
    if (tp.requires_grad(is)) {
      Tensor2& gs = tp.grad_buffer(is);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) acc += n.grad(i, j) * x(i, j);
        gs(i, 0) += acc;
      }
    }
  });
}

inline Var relu(Var a) {
  Tensor2 v = bgr::relu(a.value());
  return a.tape->push(Op::relu, {a.id}, std::move(v), [](Tape& tp, const Node& n) {
    const std::size_t ia = n.parents[0];
    Tensor2& g = tp.grad_buffer(ia);
    auto x = tp.node(ia).value.values();
    auto gv = g.values();
    auto up = n.grad.values();
    for (std::size_t i = 0; i < gv.size(); ++i)
      if (x[i] > 0.0) gv[i] += up[i];
  });
}

inline Var sigmoid(Var a) {
  Tensor2 v(a.rows(), a.cols());
  auto x = a.value().values();
  auto o = v.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = bgr::sigmoid(x[i]);
  return a.tape->push(Op::sigmoid, {a.id}, std::move(v), [](Tape& tp, const Node& n) {
    Tensor2& g = tp.grad_buffer(n.parents[0]);
    auto y = n.value.values();
    auto gv = g.values();
    auto up = n.grad.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += up[i] * y[i] * (1.0 - y[i]);
  });
}

/// 1 / sqrt(max(d, eps)); derivative -1/2 d^-3/2 above eps, 0 in the clamped region.
inline Var rsqrt_clamp(Var d, double eps) {
  if (!(eps > 0.0)) throw DomainError("rsqrt_clamp: eps must be > 0");
  Tensor2 v(d.rows(), d.cols());
  auto x = d.value().values();
  auto o = v.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 1.0 / std::sqrt(x[i] > eps ? x[i] : eps);
  return d.tape->push(Op::rsqrt_clamp, {d.id}, std::move(v), [eps](Tape& tp, const Node& n) {
    const std::size_t id = n.parents[0];
    Tensor2& g = tp.grad_buffer(id);
    auto x = tp.node(id).value.values();
    auto y = n.value.values();
    auto gv = g.values();
    auto up = n.grad.values();
    for (std::size_t i = 0; i < gv.size(); ++i)
      if (x[i] > eps) gv[i] += up[i] * (-0.5 * y[i] * y[i] * y[i]);
  });
}

/// N x m -> N x 1.
inline Var reduce_row_sum(Var a) {
  const Tensor2& x = a.value();
  Tensor2 v(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double e : x.row(i)) s += e;
    v(i, 0) = s;
  }
  return a.tape->push(Op::reduce_row_sum, {a.id}, std::move(v), [](Tape& tp, const Node& n) {
    Tensor2& g = tp.grad_buffer(n.parents[0]);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += n.grad(i, 0);
  });
}

inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size())
    throw ShapeError("reshape: " + std::to_string(a.value().size()) + " elements into " +
                     bgr::detail::dims(rows, cols));
  Tensor2 v(rows, cols, a.value().values());
  return a.tape->push(Op::reshape, {a.id}, std::move(v), [](Tape& tp, const Node& n) {
    Tensor2& g = tp.grad_buffer(n.parents[0]);
    auto gv = g.values();
    auto up = n.grad.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += up[i];
  });
}

inline Var transpose(Var a) {
  Tensor2 v = bgr::transpose(a.value());
  return a.tape->push(Op::transpose, {a.id}, std::move(v), [](Tape& tp, const Node& n) {
    Tensor2& g = tp.grad_buffer(n.parents[0]);
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) g(j, i) += n.grad(i, j);
  });
}

inline Var stop_grad(Var a) {
  Tape& t = *a.tape;
  Tensor2 v = t.next_stop_grad_value(a.value());
  Var out = t.push(Op::stop_grad, {}, std::move(v), nullptr);
  t.register_stop_grad(out.id);
  return out;
}

inline Var scale(Var a, double k) {
  Tensor2 v = a.value();
  for (double& e : v.values()) e *= k;
  return a.tape->push(Op::scale, {a.id}, std::move(v), [k](Tape& tp, const Node& n) {
    detail::add_scaled(tp.grad_buffer(n.parents[0]), n.grad, k);
  });
}

/// Sum of all entries, 1 x 1.
inline Var sum(Var a) {
  double s = 0.0;
  for (double e : a.value().values()) s += e;
  return a.tape->push(Op::sum, {a.id}, Tensor2(1, 1, s), [](Tape& tp, const Node& n) {
    const double g = n.grad(0, 0);
    for (double& e : tp.grad_buffer(n.parents[0]).values()) e += g;
  });
}

/// Mean softmax cross-entropy over rows of `logits` (N x K), 1 x 1.
inline Var softmax_ce(Var logits, std::vector<int> labels) {
  const Tensor2& z = logits.value();
  if (labels.size() != z.rows())
    throw ShapeError("softmax_ce: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(z.rows()) + " rows");
  const std::size_t n = z.rows(), k = z.cols();
  Tensor2 probs(n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw DomainError("softmax_ce: label out of range");
    auto r = z.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double den = 0.0;
    for (std::size_t j = 0; j < k; ++j) den += std::exp(r[j] - mx);
    for (std::size_t j = 0; j < k; ++j) probs(i, j) = std::exp(r[j] - mx) / den;
    total += std::log(den) + mx - r[labels[i]];
  }
  const double mean = n ? total / double(n) : 0.0;
  return logits.tape->push(
      Op::softmax_ce, {logits.id}, Tensor2(1, 1, mean),
      [probs = std::move(probs), labels = std::move(labels)](Tape& tp, const Node& nd) {
        Tensor2& g = tp.grad_buffer(nd.parents[0]);
        const double up = nd.grad(0, 0) / double(std::max<std::size_t>(probs.rows(), 1));
        for (std::size_t i = 0; i < probs.rows(); ++i)
          for (std::size_t j = 0; j < probs.cols(); ++j)
            g(i, j) += up * (probs(i, j) - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0));
      });
}

/// Mean binary cross-entropy of pred (N x 1) against target, 1 x 1.
/// Predictions are clamped to [1e-12, 1 - 1e-12] so a saturated sigmoid stays finite.
inline Var bce(Var pred, Vector target) {
  const Tensor2& p = pred.value();
  if (p.cols() != 1 || p.rows() != target.size())
    throw ShapeError("bce: prediction " + bgr::detail::dims(p.rows(), p.cols()) + " for " +
                     std::to_string(target.size()) + " targets");
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double q = std::clamp(p(i, 0), lo, hi);
    total -= target[i] * std::log(q) + (1.0 - target[i]) * std::log1p(-q);
  }
  const double mean = target.size() ? total / double(target.size()) : 0.0;
  return pred.tape->push(Op::bce, {pred.id}, Tensor2(1, 1, mean),
                         [target = std::move(target), lo, hi](Tape& tp, const Node& n) {
                           const std::size_t ip = n.parents[0];
                           const Tensor2& p = tp.node(ip).value;
                           Tensor2& g = tp.grad_buffer(ip);
                           const double up = n.grad(0, 0) / double(std::max<std::size_t>(target.size(), 1));
                           for (std::size_t i = 0; i < target.size(); ++i) {
                             const double q = std::clamp(p(i, 0), lo, hi);
                             g(i, 0) += up * (q - target[i]) / (q * (1.0 - q));
                           }
                         });
}

/// Batch normalization over rows with learnable gamma / beta (1 x m each).
/// Training mode (mean == nullptr) normalizes with the batch's own statistics
/// and reports them through `stats`; otherwise the given running estimates
/// are used as constants.
inline Var batch_norm(Var x, Var gamma, Var beta, double eps, BatchNormStats* stats = nullptr,
                      const Vector* mean = nullptr, const Vector* var = nullptr) {
  Tape& t = detail::same_tape(x, gamma);
  detail::same_tape(x, beta);
  const Tensor2& z = x.value();
  const std::size_t n = z.rows(), m = z.cols();
  if (gamma.rows() != 1 || gamma.cols() != m || beta.rows() != 1 || beta.cols() != m)
    throw ShapeError("batch_norm: gamma/beta must be 1 x " + std::to_string(m));
  const bool training = mean == nullptr;
  BatchNormStats s = training ? batch_statistics(z) : BatchNormStats{*mean, *var, n};
  if (stats) *stats = s;
  Vector inv_std(m);
  for (std::size_t j = 0; j < m; ++j) inv_std[j] = 1.0 / std::sqrt(s.var[j] + eps);
  Tensor2 xhat(n, m), v(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      xhat(i, j) = (z(i, j) - s.mean[j]) * inv_std[j];
      v(i, j) = gamma.value()(0, j) * xhat(i, j) + beta.value()(0, j);
    }
  return t.push(
      Op::batch_norm, {x.id, gamma.id, beta.id}, std::move(v),
      [xhat = std::move(xhat), inv_std = std::move(inv_std), training](Tape& tp, const Node& nd) {
        const std::size_t ix = nd.parents[0], ig = nd.parents[1], ib = nd.parents[2];
        const std::size_t n = xhat.rows(), m = xhat.cols();
        const Tensor2& gam = tp.node(ig).value;
        const Tensor2& g = nd.grad;
        Vector sum_g(m), sum_gx(m);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            sum_g[j] += g(i, j);
            sum_gx[j] += g(i, j) * xhat(i, j);
          }
        if (tp.requires_grad(ig)) {
          Tensor2& gg = tp.grad_buffer(ig);
          for (std::size_t j = 0; j < m; ++j) gg(0, j) += sum_gx[j];
        }
        if (tp.requires_grad(ib)) {
          Tensor2& gb = tp.grad_buffer(ib);
          for (std::size_t j = 0; j < m; ++j) gb(0, j) += sum_g[j];
        }
        if (!tp.requires_grad(ix)) return;
        Tensor2& gx = tp.grad_buffer(ix);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double scale = gam(0, j) * inv_std[j];
            if (training)
              gx(i, j) += scale * (g(i, j) - sum_g[j] / double(n) - xhat(i, j) * sum_gx[j] / double(n));
            else
              gx(i, j) += scale * g(i, j);
          }
      });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor2& x = a.value();
  if (begin + count > x.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") of " + std::to_string(x.rows()));
  Tensor2 v(count, x.cols(), x.values().subspan(begin * x.cols(), count * x.cols()));
  return a.tape->push(Op::slice_rows, {a.id}, std::move(v), [begin](Tape& tp, const Node& n) {
    Tensor2& g = tp.grad_buffer(n.parents[0]);
    auto dst = g.values().subspan(begin * g.cols(), n.grad.size());
    auto up = n.grad.values();
    for (std::size_t i = 0; i < up.size(); ++i) dst[i] += up[i];
  });
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows: nothing to concatenate");
  Tape& t = *parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    detail::same_tape(parts[0], p);
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
    ids.push_back(p.id);
  }
  Tensor2 v(rows, cols);
  std::size_t off = 0;
  for (Var p : parts) {
    auto src = p.value().values();
    std::copy(src.begin(), src.end(), v.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += src.size();
  }
  return t.push(Op::concat_rows, std::move(ids), std::move(v), [](Tape& tp, const Node& n) {
    std::size_t off = 0;
    for (std::size_t id : n.parents) {
      Tensor2& g = tp.grad_buffer(id);
      const std::size_t len = tp.node(id).value.size();
      if (tp.requires_grad(id)) {
        auto dst = g.values();
        auto up = n.grad.values();
        for (std::size_t i = 0; i < len; ++i) dst[i] += up[off + i];
      }
      off += len;
    }
  });
}

// ---------------------------------------------------------------------------
// finite differences

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::vector<double> per_param;  // max relative error per parameter
};

/// Builds a scalar loss on `tape` from leaf variables holding the parameters.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

/// Compares the tape gradient of `build` against central differences
/// (f(p + h) - f(p - h)) / 2h on up to `max_coords` coordinates per parameter
/// (all of them when the tensor is small enough, a seeded sample otherwise).
/// Error per coordinate: |analytic - numeric| / max(1, |analytic|, |numeric|).
/// stop_grad values recorded in the unperturbed pass are replayed as constants.
inline GradCheckResult finite_diff_check(const LossBuilder& build, std::vector<Tensor2> params,
                                         double h = 1e-5, std::size_t max_coords = 64,
                                         std::uint64_t seed = 0) {
  if (!(h > 0.0)) throw DomainError("finite_diff_check: step must be > 0");
  std::vector<Tensor2> analytic;
  std::vector<Tensor2> frozen;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.input(p));
    Var loss = build(tape, vars);
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
    frozen = tape.stop_grad_values();
  }
  auto eval = [&]() {
    Tape tape;
    tape.freeze_stop_grads(frozen);
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(tape.input(p, false));
    return build(tape, vars).value()(0, 0);
  };

  GradCheckResult res;
  res.per_param.assign(params.size(), 0.0);
  SplitMix64 rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::size_t total = params[k].size();
    std::vector<std::size_t> coords;
    if (total <= max_coords) {
      for (std::size_t i = 0; i < total; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.below(total));
    }
    for (std::size_t idx : coords) {
      double& x = params[k].values()[idx];
      const double orig = x;
      x = orig + h;
      const double fp = eval();
      x = orig - h;
      const double fm = eval();
      x = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k].values()[idx];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++res.coords_checked;
      res.per_param[k] = std::max(res.per_param[k], err);
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = k;
        res.worst_index = idx;
      }
    }
  }
  return res;
}

}  // namespace bgr::ad
