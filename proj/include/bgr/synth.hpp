#pragma once

// Synthetic segmentation task and the training loop around the toy model.
//
// Scenes are axis-aligned rectangles and discrete disks on a background.
// Class k >= 1 is a rectangle when k is odd and a disk when k is even; each
// class has its own RGB color, and every channel gets N(0, 0.1^2) noise.

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bgr/autodiff.hpp"
#include "bgr/boundary.hpp"
#include "bgr/errors.hpp"
#include "bgr/gcn.hpp"
#include "bgr/model.hpp"
#include "bgr/rng.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

struct SynthSample {
  FeatureMap image;  // h x w x 3
  LabelMap labels;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t h = 48;
  std::size_t w = 48;
  std::size_t K = 3;
  std::size_t n_train = 200;
  std::size_t n_val = 50;
  std::size_t iters = 2000;
  double lr0 = 0.01;
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch = 8;
  ModelMode model = ModelMode::bgr;
  BgrConfig bgr;
  std::size_t boundary_radius = 1;
  std::size_t band_radius = 2;
  std::size_t eval_every = 250;
  double noise_sigma = 0.1;

  void validate() const {
    bgr.validate();
    if (h < 2 || w < 2) throw ConfigError("train: h and w must be >= 2");
    if (K < 2) throw ConfigError("train: K must be >= 2");
    if (n_train < 1 || n_val < 1) throw ConfigError("train: n_train and n_val must be >= 1");
    if (iters < 1 || batch < 1 || eval_every < 1) throw ConfigError("train: iters, batch and eval_every must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("train: lr0 must be > 0");
    if (!(poly_power > 0.0 && poly_power <= 1.0)) throw ConfigError("train: poly_power must be in (0, 1]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (boundary_radius < 1 || band_radius < 1) throw ConfigError("train: radii must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("train: noise_sigma must be >= 0");
  }
};

struct Metrics {
  double miou = 0.0;
  std::vector<std::optional<double>> per_class_iou;  // nullopt: class absent from both
  double boundary_band_acc = 0.0;
  double seg_loss = 0.0;
  double boundary_loss = 0.0;
};

struct MetricsRecord {
  std::size_t iter = 0;
  Metrics metrics;
};

// ---------------------------------------------------------------------------
// data

/// Mid-grey background; class k > 0 is offset by kClassContrast along a fixed
/// direction. The offset is 2.5 noise sigmas at the default sigma, so single
/// pixels are ambiguous and spatial context matters.
inline constexpr double kClassContrast = 0.25;

inline std::array<double, 3> class_color(std::size_t k) {
  static constexpr double dirs[][3] = {{1, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 1, 0},
                                       {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  if (k == 0) return {0.5, 0.5, 0.5};
  constexpr std::size_t n = std::size(dirs);
  const double step = kClassContrast * double(1 + (k - 1) / n);  // repeats move further out
  const auto& d = dirs[(k - 1) % n];
  return {0.5 + step * d[0], 0.5 + step * d[1], 0.5 + step * d[2]};
}

/// One scene from its own generator state.
inline SynthSample generate_sample(std::size_t h, std::size_t w, std::size_t K, double sigma,
                                   SplitMix64& rng) {
  std::vector<int> labels(h * w, 0);
  const std::size_t shapes = 1 + rng.below(3);
  const std::size_t lo = std::min(h, w);
  for (std::size_t s = 0; s < shapes; ++s) {
    const int k = 1 + static_cast<int>(rng.below(K - 1));
    if (k % 2 == 1) {
      const std::size_t rh = 1 + rng.below(std::max<std::size_t>(1, h / 2));
      const std::size_t rw = 1 + rng.below(std::max<std::size_t>(1, w / 2));
      const std::size_t y0 = rng.below(h - rh + 1), x0 = rng.below(w - rw + 1);
      for (std::size_t y = y0; y < y0 + rh; ++y)
        for (std::size_t x = x0; x < x0 + rw; ++x) labels[y * w + x] = k;
    } else {
      const auto r = static_cast<std::ptrdiff_t>(1 + rng.below(std::max<std::size_t>(1, lo / 4)));
      const auto cy = static_cast<std::ptrdiff_t>(rng.below(h));
      const auto cx = static_cast<std::ptrdiff_t>(rng.below(w));
      for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(h); ++y)
        for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(w); ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) labels[y * w + x] = k;
    }
  }
  // A shape may not swallow the whole frame; keep one background corner.
  if (std::none_of(labels.begin(), labels.end(), [](int l) { return l == 0; })) labels[0] = 0;

  FeatureMap img(h, w, 3);
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto col = class_color(static_cast<std::size_t>(labels[i]));
    for (std::size_t ch = 0; ch < 3; ++ch)
      img.values()[i * 3 + ch] = col[ch] + rng.normal(0.0, sigma);
  }
  return {std::move(img), LabelMap(h, w, K, std::move(labels))};
}

/// n_train + n_val scenes; sample i is drawn from SplitMix64(seed * 2^32 + i),
/// so the split is stable and any sample can be regenerated alone.
inline std::vector<SynthSample> generate_dataset(const TrainConfig& cfg) {
  std::vector<SynthSample> out;
  const std::size_t n = cfg.n_train + cfg.n_val;
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng((cfg.seed << 32) + i);
    out.push_back(generate_sample(cfg.h, cfg.w, cfg.K, cfg.noise_sigma, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics

/// IoU per class over the whole set, mIoU over classes that occur, and pixel
/// accuracy inside the ground-truth boundary band of the given radius.
inline Metrics evaluate_predictions(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                                    std::size_t K, std::size_t band_radius = 2) {
  if (pred.size() != gt.size()) throw ShapeError("evaluate: prediction / ground-truth count differs");
  std::vector<std::uint64_t> tp(K), fp(K), fn(K);
  std::uint64_t band = 0, band_hit = 0;
  for (std::size_t n = 0; n < gt.size(); ++n) {
    if (pred[n].labels.size() != gt[n].labels.size()) throw ShapeError("evaluate: map sizes differ");
    const Vector mask = extract_gt_boundary(gt[n], band_radius);
    for (std::size_t i = 0; i < gt[n].labels.size(); ++i) {
      const auto g = static_cast<std::size_t>(gt[n].labels[i]);
      const auto p = static_cast<std::size_t>(pred[n].labels[i]);
      if (g >= K || p >= K) throw DomainError("evaluate: label outside [0, K)");
      if (g == p) {
        ++tp[g];
      } else {
        ++fn[g];
        ++fp[p];
      }
      if (mask[i] > 0.5) {
        ++band;
        band_hit += g == p;
      }
    }
  }
  Metrics m;
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::uint64_t den = tp[k] + fp[k] + fn[k];
    if (den == 0) {
      m.per_class_iou.push_back(std::nullopt);
      continue;
    }
    const double iou = double(tp[k]) / double(den);
    m.per_class_iou.push_back(iou);
    sum += iou;
    ++present;
  }
  m.miou = present ? sum / double(present) : 1.0;
  m.boundary_band_acc = band ? double(band_hit) / double(band) : 1.0;
  return m;
}

inline LabelMap argmax_labels(const Tensor2& logits, std::size_t h, std::size_t w) {
  std::vector<int> l(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    l[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return LabelMap(h, w, logits.cols(), std::move(l));
}

namespace detail {

struct StackedBatch {
  Tensor2 pixels;
  std::vector<int> labels;
  Vector boundary;
};

inline StackedBatch stack(const std::vector<const SynthSample*>& samples, std::size_t radius) {
  const std::size_t n = samples.front()->image.pixels();
  const std::size_t c = samples.front()->image.c();
  StackedBatch b{Tensor2(samples.size() * n, c), {}, Vector(samples.size() * n)};
  for (std::size_t k = 0; k < samples.size(); ++k) {
    auto src = samples[k]->image.values();
    std::copy(src.begin(), src.end(), b.pixels.values().begin() + static_cast<std::ptrdiff_t>(k * n * c));
    b.labels.insert(b.labels.end(), samples[k]->labels.labels.begin(), samples[k]->labels.labels.end());
    const Vector m = extract_gt_boundary(samples[k]->labels, radius);
    for (std::size_t i = 0; i < n; ++i) b.boundary[k * n + i] = m[i];
  }
  return b;
}

}  // namespace detail

/// Eval-mode predictions and losses over a sample set.
inline Metrics evaluate(const ModelParams& params, ModelMode mode, const std::vector<SynthSample>& val,
                        const TrainConfig& cfg) {
  std::vector<LabelMap> preds, gts;
  double seg = 0.0, bnd = 0.0;
  const std::size_t chunk = std::max<std::size_t>(cfg.batch, 1);
  for (std::size_t start = 0; start < val.size(); start += chunk) {
    std::vector<const SynthSample*> group;
    for (std::size_t i = start; i < std::min(val.size(), start + chunk); ++i) group.push_back(&val[i]);
    const auto batch = detail::stack(group, cfg.boundary_radius);
    ad::Tape tape;
    auto vars = bind_parameters(tape, params, mode, false);
    auto bp = BoundParams::from_vars(vars, mode, params.bgr_layers.size());
    const std::size_t n = group.front()->image.pixels();
    auto fw = forward_batch(tape, bp, params, batch.pixels, n, mode, false, cfg.bgr.degree_epsilon);
    auto loss = total_loss(fw.logits, fw.boundary, batch.labels, batch.boundary);
    seg += loss.seg.value()(0, 0) * double(group.size());
    bnd += loss.boundary.value()(0, 0) * double(group.size());
    const Tensor2& logits = fw.logits.value();
    for (std::size_t k = 0; k < group.size(); ++k) {
      Tensor2 part(n, logits.cols(), logits.values().subspan(k * n * logits.cols(), n * logits.cols()));
      preds.push_back(argmax_labels(part, group[k]->labels.h, group[k]->labels.w));
      gts.push_back(group[k]->labels);
    }
  }
  Metrics m = evaluate_predictions(preds, gts, cfg.K, cfg.band_radius);
  m.seg_loss = seg / double(val.size());
  m.boundary_loss = bnd / double(val.size());
  return m;
}

/// lr0 * (1 - t / T)^power.
inline double poly_lr(double lr0, std::size_t t, std::size_t T, double power) {
  if (t >= T) return 0.0;
  return lr0 * std::pow(1.0 - double(t) / double(T), power);
}

struct TrainResult {
  std::vector<MetricsRecord> history;  // iter 0 (untrained) then every eval_every
  Metrics final_metrics;
  ModelParams params;
  std::size_t clamped_degrees = 0;  // total over training steps
};

using TrainObserver = std::function<void(const MetricsRecord&)>;

/// SGD with momentum and weight decay (v = mu v + g + wd p; p -= lr v) on
/// the summed CE + BCE loss, poly learning rate, epoch-shuffled batches.
/// Deterministic for a given config. Throws DivergenceError on a
/// non-finite loss.
inline TrainResult train(const TrainConfig& cfg, const TrainObserver& observe = {}) {
  cfg.validate();
  const auto data = generate_dataset(cfg);
  const std::vector<SynthSample> train_set(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(cfg.n_train));
  const std::vector<SynthSample> val_set(data.begin() + static_cast<std::ptrdiff_t>(cfg.n_train), data.end());

  TrainResult res;
  res.params = ModelParams::init(3, cfg.bgr.hidden_dim, cfg.K, cfg.bgr.num_layers, cfg.seed);
  auto refs = parameters(res.params, cfg.model);
  std::vector<std::vector<double>> velocity;
  for (const auto& r : refs) velocity.emplace_back(r.data.size(), 0.0);

  auto record = [&](std::size_t iter) {
    MetricsRecord rec{iter, evaluate(res.params, cfg.model, val_set, cfg)};
    if (observe) observe(rec);
    res.history.push_back(std::move(rec));
  };
  record(0);

  SplitMix64 order_rng(cfg.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  for (std::size_t t = 0; t < cfg.iters; ++t) {
    std::vector<const SynthSample*> group;
    while (group.size() < std::min(cfg.batch, train_set.size())) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        cursor = 0;
      }
      group.push_back(&train_set[order[cursor++]]);
    }
    const auto batch = detail::stack(group, cfg.boundary_radius);

    ad::Tape tape;
    auto vars = bind_parameters(tape, res.params, cfg.model, true);
    auto bp = BoundParams::from_vars(vars, cfg.model, res.params.bgr_layers.size());
    auto fw = forward_batch(tape, bp, res.params, batch.pixels, group.front()->image.pixels(),
                            cfg.model, true, cfg.bgr.degree_epsilon);
    auto loss = total_loss(fw.logits, fw.boundary, batch.labels, batch.boundary);
    const double value = loss.total.value()(0, 0);
    if (!std::isfinite(value))
      throw DivergenceError("non-finite loss at iteration " + std::to_string(t) + " (seed " +
                            std::to_string(cfg.seed) + ", mode " + mode_name(cfg.model) + ")");
    res.clamped_degrees += fw.clamped_degrees;
    tape.backward(loss.total);

    const double lr = poly_lr(cfg.lr0, t, cfg.iters, cfg.poly_power);
    for (std::size_t k = 0; k < refs.size(); ++k) {
      auto g = tape.grad(vars[k]).values();
      auto p = refs[k].data;
      auto& v = velocity[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
        p[i] -= lr * v[i];
      }
    }
    update_running_stats(res.params.boundary, fw.bn);

    if ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.iters) {
      record(t + 1);
      const auto& m = res.history.back().metrics;
      if (!std::isfinite(m.seg_loss) || !std::isfinite(m.boundary_loss))
        throw DivergenceError("non-finite validation loss at iteration " + std::to_string(t + 1));
    }
  }
  res.final_metrics = res.history.back().metrics;
  return res;
}

}  // namespace bgr
