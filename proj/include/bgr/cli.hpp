#pragma once

// The `bgr` command line: check, flops, bench and train subcommands.
// Exit codes: 0 success, 1 verification failure, 2 usage or config error,
// 3 divergence.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bgr/checks.hpp"
#include "bgr/complexity.hpp"
#include "bgr/config.hpp"
#include "bgr/errors.hpp"
#include "bgr/synth.hpp"

namespace bgr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerification = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

namespace cli {

using nlohmann::json;

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!(f << text)) throw ConfigError("cannot write '" + path + "'");
}

inline std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline json metrics_json(const Metrics& m) {
  json per = json::array();
  for (const auto& v : m.per_class_iou) per.push_back(v ? json(*v) : json(nullptr));
  return {{"miou", m.miou},
          {"per_class_iou", per},
          {"boundary_band_acc", m.boundary_band_acc},
          {"seg_loss", m.seg_loss},
          {"boundary_loss", m.boundary_loss}};
}

// ---------------------------------------------------------------------------

inline int cmd_check(const Settings& s, const std::string& out_dir, bool inject_fault, std::ostream& out,
                     std::ostream& err) {
  CheckOptions o;
  o.seed = static_cast<std::uint64_t>(s.get_size("check.seed"));
  o.instances = s.get_size("check.instances");
  o.max_n = s.get_size("check.max_n");
  o.max_c = s.get_size("check.max_c");
  o.tolerance = s.get_real("check.tolerance");
  o.reweight_tolerance = s.get_real("check.reweight_tolerance");
  o.grad_instances = s.get_size("check.grad_instances");
  o.grad_tolerance = s.get_real("check.grad_tolerance");
  o.inject_fault = inject_fault;
  if (o.instances < 1 || o.max_n < 4 || o.max_c < 1)
    throw ConfigError("check: instances >= 1, max_n >= 4 and max_c >= 1 required");

  const auto reports = run_all_checks(o);
  json j = json::array();
  bool all = true;
  for (const auto& r : reports) {
    j.push_back({{"suite", r.suite},
                 {"cases", r.cases},
                 {"max_error", r.max_error},
                 {"tolerance", r.tolerance},
                 {"pass", r.pass},
                 {"failing_seed", r.failing_seed ? json(*r.failing_seed) : json(nullptr)}});
    out << (r.pass ? "PASS " : "FAIL ") << r.suite << ": " << r.cases << " cases, max error "
        << fmt(r.max_error, "%.3e") << " (tolerance " << fmt(r.tolerance, "%.0e") << ")\n";
    if (!r.pass) {
      err << "suite " << r.suite << " failed; first failing seed " << *r.failing_seed << '\n';
      all = false;
    }
  }
  write_text(join_path(out_dir, "check_report.json"),
             json{{"seed", o.seed}, {"suites", j}, {"pass", all}}.dump(2) + "\n");
  return all ? kExitOk : kExitVerification;
}

inline int cmd_flops(const Settings& s, const std::string& out_dir, std::ostream& out) {
  const std::uint64_t N = s.get_size("flops.n"), c = s.get_size("flops.c"), L = s.get_size("flops.layers");
  const auto naive = flops_naive_breakdown(N, c, L);
  const auto eff = flops_efficient_breakdown(N, c, L);
  auto print = [&](const char* title, const FlopBreakdown& b) {
    out << title << '\n';
    for (const auto& t : b.terms) out << "  " << t.name << ": " << t.count << '\n';
    out << "  total: " << b.total() << '\n';
  };
  out << "N=" << N << " c=" << c << " layers=" << L << '\n';
  print("naive", naive);
  print("efficient", eff);
  const double ratio = double(naive.total()) / double(eff.total());
  out << "ratio naive/efficient: " << fmt(ratio, "%.4f") << '\n';
  write_text(join_path(out_dir, "flops.csv"),
             "N,c,layers,flops_naive,flops_efficient,ratio\n" + std::to_string(N) + "," +
                 std::to_string(c) + "," + std::to_string(L) + "," + std::to_string(naive.total()) +
                 "," + std::to_string(eff.total()) + "," + fmt(ratio, "%.6f") + "\n");
  return kExitOk;
}

inline int cmd_bench(const Settings& s, const std::string& out_dir, std::ostream& out) {
  const SweepOptions o = sweep_options(s);
  const SweepResult r = timing_sweep(o);
  {
    std::ofstream f(join_path(out_dir, "bench.csv"));
    write_cost_csv(f, r.reports);
    if (!f) throw ConfigError("cannot write bench.csv");
  }
  auto slope = [&](GcnPath p) {
    const double v = sweep_slope(r, p, [](const CostReport& c) { return c.wall_ms; });
    return std::isnan(v) ? std::string("n/a") : fmt(v, "%.3f");
  };
  std::string summary = "slopes wall_ms vs N: naive=" + slope(GcnPath::naive) +
                        " efficient=" + slope(GcnPath::efficient) + "\n";
  for (const auto& k : r.skips)
    summary += "skipped " + std::string(path_name(k.path)) + " N=" + std::to_string(k.N) + ": " +
               k.reason + "\n";
  for (const auto& c : r.reports)
    out << path_name(c.path) << " N=" << c.N << " wall_ms=" << fmt(c.wall_ms, "%.3f")
        << " peak_aux_elems=" << c.peak_aux_elems << '\n';
  out << summary;
  write_text(join_path(out_dir, "bench_summary.txt"), summary);
  return kExitOk;
}

/// Label ids as gray levels spread over 0..255 so classes are visible.
inline void save_prediction_pgm(const std::string& path, const LabelMap& m) {
  std::vector<std::uint8_t> px(m.labels.size());
  const double step = m.K > 1 ? 255.0 / double(m.K - 1) : 0.0;
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(std::lround(m.labels[i] * step));
  std::ofstream f(path, std::ios::binary);
  write_pgm(f, m.h, m.w, px);
  if (!f) throw ConfigError("cannot write '" + path + "'");
}

inline int cmd_train(const Settings& s, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto modes = train_modes(s);
  const std::uint64_t seed0 = static_cast<std::uint64_t>(s.get_size("train.seed"));
  const std::size_t seeds = s.get_size("train.seeds");
  if (seeds < 1) throw ConfigError("config: train.seeds must be >= 1");
  const bool export_pred = s.get_flag("train.export_predictions");

  json runs = json::array();
  std::size_t diverged = 0, total = 0;
  std::map<std::uint64_t, std::map<std::string, double>> band;  // seed -> mode -> band acc
  for (std::uint64_t seed = seed0; seed < seed0 + seeds; ++seed) {
    for (ModelMode mode : modes) {
      const TrainConfig cfg = train_config(s, mode, seed);
      const std::string stem = std::string("train_") + mode_name(mode) + "_seed" + std::to_string(seed);
      const std::string log_path = join_path(out_dir, stem + ".jsonl");
      std::ofstream log(log_path);
      if (!log) throw ConfigError("cannot write '" + log_path + "'");
      ++total;
      json run{{"mode", mode_name(mode)}, {"seed", seed}, {"metrics_file", stem + ".jsonl"}};
      try {
        const TrainResult res = train(cfg, [&](const MetricsRecord& r) {
          log << json{{"iter", r.iter},
                      {"seg_loss", r.metrics.seg_loss},
                      {"boundary_loss", r.metrics.boundary_loss},
                      {"miou", r.metrics.miou},
                      {"boundary_band_acc", r.metrics.boundary_band_acc}}
                     .dump()
              << '\n'
              << std::flush;
        });
        const double seg0 = res.history.front().metrics.seg_loss;
        const Metrics& fin = res.final_metrics;
        run["diverged"] = false;
        run["final"] = metrics_json(fin);
        run["initial_seg_loss"] = seg0;
        run["seg_loss_drop"] = seg0 > 0.0 ? 1.0 - fin.seg_loss / seg0 : 0.0;
        run["clamped_degrees"] = res.clamped_degrees;
        band[seed][mode_name(mode)] = fin.boundary_band_acc;
        out << mode_name(mode) << " seed " << seed << ": miou " << fmt(fin.miou, "%.4f")
            << " band_acc " << fmt(fin.boundary_band_acc, "%.4f") << " seg_loss "
            << fmt(seg0, "%.4f") << " -> " << fmt(fin.seg_loss, "%.4f") << '\n';
        if (export_pred) {
          const auto data = generate_dataset(cfg);
          for (std::size_t i = cfg.n_train; i < data.size(); ++i) {
            const auto o = model_forward(data[i].image, res.params, mode, false, cfg.bgr.degree_epsilon);
            const std::string idx = std::to_string(i - cfg.n_train);
            save_prediction_pgm(join_path(out_dir, stem + "_pred" + idx + ".pgm"),
                                argmax_labels(o.logits, cfg.h, cfg.w));
            if (mode == modes.front() && seed == seed0)
              save_prediction_pgm(join_path(out_dir, "gt" + idx + ".pgm"), data[i].labels);
          }
        }
      } catch (const DivergenceError& e) {
        ++diverged;
        run["diverged"] = true;
        run["error"] = e.what();
        err << "diverged: " << e.what() << '\n';
      }
      runs.push_back(run);
    }
  }

  json summary{{"runs", runs}};
  if (modes.size() == 2) {
    json cmp = json::array();
    std::size_t wins = 0, pairs = 0;
    for (const auto& [seed, m] : band) {
      if (m.size() != 2) continue;
      const bool ge = m.at("bgr") >= m.at("baseline");
      wins += ge;
      ++pairs;
      cmp.push_back({{"seed", seed},
                     {"bgr_boundary_band_acc", m.at("bgr")},
                     {"baseline_boundary_band_acc", m.at("baseline")},
                     {"bgr_ge_baseline", ge}});
    }
    summary["comparison"] = cmp;
    summary["bgr_ge_baseline_seeds"] = wins;
    summary["compared_seeds"] = pairs;
    out << "bgr >= baseline on " << wins << " of " << pairs << " seeds\n";
  }
  write_text(join_path(out_dir, "summary.json"), summary.dump(2) + "\n");
  return diverged == total ? kExitDivergence : kExitOk;
}

}  // namespace cli

/// Parses argv and runs one subcommand. Output goes to `out`, diagnostics to `err`.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Boundary-aware graph reasoning: checks, cost model, benchmarks and toy training"};
  app.require_subcommand(1);
  RunConfig rc;
  std::vector<std::string> sets;
  app.add_option("-c,--config", rc.config_path, "Config file ([section] key = value)");
  app.add_option("-o,--out", rc.output_dir, "Output directory")->capture_default_str();
  app.add_option("--set", sets, "Override a config key: section.key=value (repeatable)");

  std::vector<std::string> flags;  // subcommand shortcuts, applied after --set
  auto shortcut = [&](CLI::App* sub, const std::string& name, const std::string& key,
                      const std::string& help) {
    sub->add_option_function<std::string>(
        name, [&flags, key](const std::string& v) { flags.push_back(key + "=" + v); }, help);
  };

  bool inject_fault = false;
  auto* check = app.add_subcommand("check", "Run the identity, symmetry and gradient suites");
  shortcut(check, "--seed", "check.seed", "Base seed");
  shortcut(check, "--instances", "check.instances", "Instances per identity suite");
  check->add_flag("--inject-fault", inject_fault, "Perturb Q22 to exercise the failure path");

  auto* flops = app.add_subcommand("flops", "Closed-form FLOP counts of both paths");
  shortcut(flops, "--n", "flops.n", "Node count");
  shortcut(flops, "--c", "flops.c", "Channels");
  shortcut(flops, "--layers", "flops.layers", "Graph layers");

  auto* bench = app.add_subcommand("bench", "Timing and memory sweep over N");
  shortcut(bench, "--path", "bench.path", "naive | efficient | both");
  shortcut(bench, "--sizes", "bench.sizes", "Comma-separated node counts");
  shortcut(bench, "--repeats", "bench.repeats", "Timed repeats per point");

  auto* trainc = app.add_subcommand("train", "Train the toy segmentation model");
  shortcut(trainc, "--mode", "train.mode", "baseline | bgr | both");
  shortcut(trainc, "--seeds", "train.seeds", "Number of consecutive seeds");
  shortcut(trainc, "--seed", "train.seed", "First seed");
  shortcut(trainc, "--iters", "train.iters", "SGD iterations");
  trainc->add_flag_callback("--export-predictions",
                            [&flags] { flags.push_back("train.export_predictions=true"); },
                            "Write PGM predictions of the validation set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kExitUsage;
  }

  if (*check) rc.command = Command::check;
  else if (*flops) rc.command = Command::flops;
  else if (*bench) rc.command = Command::bench;
  else rc.command = Command::train;
  rc.overrides = sets;
  rc.overrides.insert(rc.overrides.end(), flags.begin(), flags.end());

  try {
    const Settings s = resolve_settings(rc);
    ensure_writable_dir(rc.output_dir);
    {
      std::ostringstream cfg;
      s.write(cfg);
      cli::write_text(cli::join_path(rc.output_dir, std::string(command_name(rc.command)) + "_config.ini"),
                      cfg.str());
    }
    switch (rc.command) {
      case Command::check: return cli::cmd_check(s, rc.output_dir, inject_fault, out, err);
      case Command::flops: return cli::cmd_flops(s, rc.output_dir, out);
      case Command::bench: return cli::cmd_bench(s, rc.output_dir, out);
      case Command::train: return cli::cmd_train(s, rc.output_dir, out, err);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace bgr
