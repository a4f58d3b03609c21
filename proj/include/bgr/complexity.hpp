#pragma once

// Cost model for the two graph-reasoning paths.
//
// Both paths start from node features H (N x c), scores B and `layers` c x c
// weight matrices, and run the graph build plus every layer. FLOPs count
// individual multiplies and adds, so an (m x k)(k x n) product costs
// m*n*(2k-1). The closed forms below are definitions: they equal what
// FlopCounter observes when run_naive_path / run_efficient_path execute.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <new>
#include <ostream>
#include <string>
#include <vector>

#include "bgr/errors.hpp"
#include "bgr/gcn.hpp"
#include "bgr/graph.hpp"
#include "bgr/instrument.hpp"
#include "bgr/tensor.hpp"

namespace bgr {

struct FlopTerm {
  std::string name;
  std::uint64_t count = 0;
};

struct FlopBreakdown {
  std::vector<FlopTerm> terms;

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& x : terms) t += x.count;
    return t;
  }
};

namespace detail {
inline void check_geometry(std::uint64_t N, std::uint64_t c, std::uint64_t layers) {
  if (N < 1 || c < 1 || layers < 1) throw DomainError("flop model: N, c and layers must be >= 1");
}
}  // namespace detail

inline FlopBreakdown flops_naive_breakdown(std::uint64_t N, std::uint64_t c, std::uint64_t layers) {
  detail::check_geometry(N, c, layers);
  const std::uint64_t L = layers;
  return {{
      {"similarity H H^T", N * N * (2 * c - 1)},
      {"boundary re-weighting (2 + B_i + B_j) A_ij", 3 * N * N},
      {"degree row sums", N * (N - 1)},
      {"per layer: inverse sqrt degrees", L * N},
      {"per layer: D^-1/2 A_bw D^-1/2", L * 2 * N * N},
      {"per layer: (N x N)(N x c) propagation", L * N * c * (2 * N - 1)},
      {"per layer: (N x c)(c x c) Theta", L * N * c * (2 * c - 1)},
      {"per layer: ReLU", L * N * c},
  }};
}

inline FlopBreakdown flops_efficient_breakdown(std::uint64_t N, std::uint64_t c,
                                               std::uint64_t layers) {
  detail::check_geometry(N, c, layers);
  const std::uint64_t L = layers;
  return {{
      {"H_hat = H (.) B + H", 2 * N * c},
      {"degree: column sums H^T 1, H_hat^T 1", 2 * c * (N - 1)},
      {"degree: mat-vecs H_hat (.), H (.)", 2 * N * (2 * c - 1)},
      {"degree: sum of the two halves", N},
      {"inverse sqrt degrees", N},
      {"Q factors (four row scalings)", 4 * N * c},
      {"per layer: two (c x N)(N x c) products", L * 2 * c * c * (2 * N - 1)},
      {"per layer: two (N x c)(c x c) products", L * 2 * N * c * (2 * c - 1)},
      {"per layer: branch sum", L * N * c},
      {"per layer: (N x c)(c x c) Theta", L * N * c * (2 * c - 1)},
      {"per layer: ReLU", L * N * c},
  }};
}

inline std::uint64_t flops_naive(std::uint64_t N, std::uint64_t c, std::uint64_t layers) {
  return flops_naive_breakdown(N, c, layers).total();
}

inline std::uint64_t flops_efficient(std::uint64_t N, std::uint64_t c, std::uint64_t layers) {
  return flops_efficient_breakdown(N, c, layers).total();
}

// ---------------------------------------------------------------------------
// executable paths

/// Dense reference: build A_bw and its degrees, then every layer materializes
/// the normalized N x N propagation matrix.
inline Tensor2 run_naive_path(const Tensor2& H, const Vector& B, const std::vector<LayerParams>& layers,
                              double eps = 1e-6) {
  const Tensor2 A_bw = boundary_reweight_dense(similarity(H), B);
  const Vector d = degree_dense(A_bw);
  Tensor2 h = H;
  for (const auto& l : layers) h = layer_naive(h, A_bw, d, l, true, eps);
  return h;
}

/// Factorized path: H_hat, degrees and Q factors once, then every layer
/// through c x c intermediates.
inline Tensor2 run_efficient_path(const Tensor2& H, const Vector& B,
                                  const std::vector<LayerParams>& layers, double eps = 1e-6) {
  const Tensor2 H_hat = hat_features(H, B);
  const Vector d = degree_factorized(H, H_hat);
  const QFactors q = build_q_factors(H, H_hat, normalize_degrees(d, eps));
  Tensor2 h = H;
  for (const auto& l : layers) h = layer_efficient(h, q, l, true);
  return h;
}

// ---------------------------------------------------------------------------
// timing

struct CostReport {
  GcnPath path = GcnPath::efficient;
  std::size_t N = 0;
  std::size_t c = 0;
  std::size_t layers = 0;
  std::uint64_t flops = 0;
  std::int64_t peak_aux_elems = 0;
  double wall_ms = 0.0;
};

struct SweepSkip {
  GcnPath path = GcnPath::naive;
  std::size_t N = 0;
  std::string reason;
};

struct SweepResult {
  std::vector<CostReport> reports;
  std::vector<SweepSkip> skips;
};

struct SweepOptions {
  std::vector<std::size_t> Ns{256, 512, 1024, 2048, 4096};
  std::size_t c = 16;
  std::size_t layers = 2;
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
  bool run_naive = true;
  bool run_efficient = true;
  /// Naive runs whose estimated footprint (2 N^2 doubles) exceeds this are
  /// skipped up front instead of attempted.
  std::uint64_t max_naive_elems = std::uint64_t{1} << 28;
};

inline const char* path_name(GcnPath p) { return p == GcnPath::naive ? "naive" : "efficient"; }

/// Least-squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ShapeError("fit_loglog_slope: xs and ys differ in length");
  if (xs.size() < 3) throw DomainError("fit_loglog_slope: need at least 3 points");
  const double n = double(xs.size());
  double sx = 0, sy = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw DomainError("fit_loglog_slope: values must be positive");
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
    sx += lx.back();
    sy += ly.back();
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) throw DomainError("fit_loglog_slope: all x values equal");
  return sxy / sxx;
}

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class Fn>
CostReport measure(GcnPath path, std::size_t N, std::size_t c, std::size_t layers,
                   std::size_t repeats, Fn&& run) {
  using clock = std::chrono::steady_clock;
  CostReport r{path, N, c, layers, 0, 0, 0.0};
  {
    AllocationScope scope;
    run();  // warm-up, also yields the memory profile
    r.peak_aux_elems = scope.stats().peak_elems;
  }
  std::vector<double> times;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = clock::now();
    run();
    const auto t1 = clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  r.wall_ms = std::max(median(std::move(times)), 1e-6);
  r.flops = path == GcnPath::naive ? flops_naive(N, c, layers) : flops_efficient(N, c, layers);
  return r;
}

}  // namespace detail

/// Runs both paths on seeded inputs for every N. The returned output of each
/// run is discarded; memory is measured on the warm-up run.
inline SweepResult timing_sweep(const SweepOptions& opt) {
  if (opt.repeats < 5) throw DomainError("timing_sweep: repeats must be >= 5");
  SweepResult out;
  for (std::size_t N : opt.Ns) {
    const Tensor2 H = seeded_random(N, opt.c, opt.seed * 7919 + N, Distribution::uniform, 1.0);
    const Vector B = seeded_uniform_vector(N, opt.seed * 104729 + N, 0.0, 1.0);
    std::vector<LayerParams> layers;
    for (std::size_t l = 0; l < opt.layers; ++l)
      layers.push_back({seeded_random(opt.c, opt.c, opt.seed + 31 * l + 1, Distribution::uniform,
                                      1.0 / std::sqrt(double(opt.c)))});

    if (opt.run_naive) {
      if (2ULL * N * N > opt.max_naive_elems) {
        out.skips.push_back({GcnPath::naive, N, "estimated footprint exceeds max_naive_elems"});
      } else {
        try {
          out.reports.push_back(detail::measure(GcnPath::naive, N, opt.c, opt.layers, opt.repeats,
                                                [&] { return run_naive_path(H, B, layers); }));
        } catch (const std::bad_alloc&) {
          out.skips.push_back({GcnPath::naive, N, "out of memory"});
        }
      }
    }
    if (opt.run_efficient) {
      out.reports.push_back(detail::measure(GcnPath::efficient, N, opt.c, opt.layers, opt.repeats,
                                            [&] { return run_efficient_path(H, B, layers); }));
    }
  }
  return out;
}

/// Slope of `field` against N over the reports of one path; NaN with < 3 points.
template <class Field>
double sweep_slope(const SweepResult& s, GcnPath path, Field field) {
  std::vector<double> xs, ys;
  for (const auto& r : s.reports)
    if (r.path == path) {
      xs.push_back(double(r.N));
      ys.push_back(double(field(r)));
    }
  if (xs.size() < 3) return std::nan("");
  return fit_loglog_slope(xs, ys);
}

inline constexpr const char* kCostCsvHeader = "path,N,c,layers,flops,peak_aux_elems,wall_ms";

inline void write_cost_csv(std::ostream& os, const std::vector<CostReport>& reports) {
  os << kCostCsvHeader << '\n';
  for (const auto& r : reports) {
    char ms[64];
    std::snprintf(ms, sizeof ms, "%.6f", r.wall_ms);
    os << path_name(r.path) << ',' << r.N << ',' << r.c << ',' << r.layers << ',' << r.flops << ','
       << r.peak_aux_elems << ',' << ms << '\n';
  }
}

}  // namespace bgr
