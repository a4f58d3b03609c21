#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bgr/complexity.hpp"

using namespace bgr;

namespace {

struct Geometry {
  std::size_t N, c, L;
};

std::vector<LayerParams> random_layers(std::size_t c, std::size_t L, std::uint64_t seed) {
  std::vector<LayerParams> out;
  for (std::size_t l = 0; l < L; ++l)
    out.push_back({seeded_random(c, c, seed + l, Distribution::uniform, 1.0 / std::sqrt(double(c)))});
  return out;
}

std::uint64_t counted(GcnPath path, const Geometry& g, std::uint64_t seed) {
  const Tensor2 H = seeded_random(g.N, g.c, seed, Distribution::uniform, 1.0);
  const Vector B = seeded_uniform_vector(g.N, seed + 1, 0.0, 1.0);
  const auto layers = random_layers(g.c, g.L, seed + 2);
  FlopCounter fc;
  if (path == GcnPath::naive)
    (void)run_naive_path(H, B, layers);
  else
    (void)run_efficient_path(H, B, layers);
  return fc.count();
}

// Leading-order terms only: 2N^2c per naive propagation, 6Nc^2 per factorized layer.
double leading_ratio(double N, double c, double L) {
  const double naive = N * N * (2 * c) + L * (N * c * 2 * N + 2 * N * N);
  const double eff = L * (4 * c * c * N + 6 * N * c * c);
  return naive / eff;
}

}  // namespace

TEST(FlopModel, ClosedFormsMatchInstrumentedRuns) {
  const Geometry gs[] = {{1, 1, 1}, {2, 1, 1}, {7, 3, 2}, {16, 4, 1}, {33, 5, 3}, {64, 8, 2}};
  for (const auto& g : gs) {
    EXPECT_EQ(counted(GcnPath::naive, g, g.N), flops_naive(g.N, g.c, g.L)) << g.N << "x" << g.c;
    EXPECT_EQ(counted(GcnPath::efficient, g, g.N), flops_efficient(g.N, g.c, g.L)) << g.N << "x" << g.c;
  }
}

TEST(FlopModel, BreakdownSumsToTotal) {
  const auto b = flops_naive_breakdown(100, 8, 2);
  std::uint64_t s = 0;
  for (const auto& t : b.terms) s += t.count;
  EXPECT_EQ(s, flops_naive(100, 8, 2));
  EXPECT_EQ(flops_efficient_breakdown(100, 8, 2).total(), flops_efficient(100, 8, 2));
}

TEST(FlopModel, DefaultGeometryRatio) {
  const double ratio = double(flops_naive(4225, 128, 2)) / double(flops_efficient(4225, 128, 2));
  EXPECT_GE(ratio, 5.0);
  EXPECT_NEAR(ratio, leading_ratio(4225, 128, 2), 0.02 * ratio);
}

TEST(FlopModel, TinyGraphsAreCheap) {
  EXPECT_GT(flops_naive(1, 1, 1), 0u);
  EXPECT_GT(flops_efficient(1, 1, 1), 0u);
  EXPECT_THROW(flops_naive(0, 1, 1), DomainError);
  EXPECT_THROW(flops_efficient(1, 0, 1), DomainError);
  EXPECT_THROW(flops_efficient(1, 1, 0), DomainError);
}

TEST(FlopModel, ScalingWithN) {
  // naive grows ~4x per doubling of N at fixed c, efficient ~2x
  const double rn = double(flops_naive(8192, 16, 2)) / double(flops_naive(4096, 16, 2));
  const double re = double(flops_efficient(8192, 16, 2)) / double(flops_efficient(4096, 16, 2));
  EXPECT_NEAR(rn, 4.0, 0.05);
  EXPECT_NEAR(re, 2.0, 0.01);
}

TEST(Slope, RecoversPowerLaws) {
  const std::vector<double> xs{10, 20, 40, 80};
  std::vector<double> quad, lin;
  for (double x : xs) {
    quad.push_back(3.0 * x * x);
    lin.push_back(0.5 * x);
  }
  EXPECT_NEAR(fit_loglog_slope(xs, quad), 2.0, 1e-12);
  EXPECT_NEAR(fit_loglog_slope(xs, lin), 1.0, 1e-12);
  EXPECT_THROW(fit_loglog_slope({1, 2}, {1, 2}), DomainError);
  EXPECT_THROW(fit_loglog_slope({1, 2, 3}, {1, 0, 2}), DomainError);
  EXPECT_THROW(fit_loglog_slope({2, 2, 2}, {1, 2, 3}), DomainError);
  EXPECT_THROW(fit_loglog_slope({1, 2, 3}, {1, 2}), ShapeError);
}

TEST(Paths, AgreeNumerically) {
  Tensor2 H = seeded_random(40, 6, 5, Distribution::uniform, 1.0);
  for (double& v : H.values()) v = 0.5 * (v + 1.0);  // nonnegative, so no degree is clamped
  const Vector B = seeded_uniform_vector(40, 6, 0.0, 1.0);
  const auto layers = random_layers(6, 3, 7);
  EXPECT_LT(max_abs_diff(run_naive_path(H, B, layers), run_efficient_path(H, B, layers)), 1e-10);
}

TEST(Sweep, SmallRunReportsBothPathsAndMemory) {
  SweepOptions o;
  o.Ns = {128, 256, 512};
  o.c = 4;
  o.repeats = 5;
  const SweepResult r = timing_sweep(o);
  ASSERT_EQ(r.reports.size(), 6u);
  EXPECT_TRUE(r.skips.empty());
  for (const auto& c : r.reports) {
    EXPECT_GT(c.wall_ms, 0.0);
    if (c.path == GcnPath::naive)
      EXPECT_GE(c.peak_aux_elems, std::int64_t(c.N * c.N));
    else
      EXPECT_LT(c.peak_aux_elems, std::int64_t(c.N * c.N));
  }
  EXPECT_NEAR(sweep_slope(r, GcnPath::naive, [](const CostReport& x) { return x.flops; }), 2.0, 0.1);
}

TEST(Sweep, SkipsOversizedNaiveRunsAndValidatesRepeats) {
  SweepOptions o;
  o.Ns = {64};
  o.c = 2;
  o.max_naive_elems = 100;
  const SweepResult r = timing_sweep(o);
  ASSERT_EQ(r.skips.size(), 1u);
  EXPECT_EQ(r.skips[0].N, 64u);
  ASSERT_EQ(r.reports.size(), 1u);
  EXPECT_EQ(r.reports[0].path, GcnPath::efficient);
  o.repeats = 4;
  EXPECT_THROW(timing_sweep(o), DomainError);
}

TEST(Sweep, CsvLayout) {
  std::ostringstream os;
  write_cost_csv(os, {{GcnPath::naive, 8, 2, 1, 123, 64, 0.5}});
  EXPECT_EQ(os.str(), std::string(kCostCsvHeader) + "\nnaive,8,2,1,123,64,0.500000\n");
}

TEST(FlopModel, EfficientDoublesWithN) {
  const double re = double(flops_efficient(2048, 16, 2)) / double(flops_efficient(1024, 16, 2));
  EXPECT_NEAR(re, 2.0, 0.1);
}

TEST(Slope, ConstantSeriesIsFlat) {
  EXPECT_NEAR(fit_loglog_slope({8, 16, 32, 64}, {5, 5, 5, 5}), 0.0, 1e-12);
}
