#pragma once

// Run configuration: a flat key = value text file with [section] headers.
//
//   [train]
//   iters = 500
//   mode = both
//
// Every key is declared in the schema below with a type and a default.
// Unknown keys, malformed values and duplicate keys are ConfigErrors.
// Layering: defaults, then the file, then command-line overrides.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "bgr/complexity.hpp"
#include "bgr/errors.hpp"
#include "bgr/synth.hpp"

namespace bgr {

enum class ValueType { integer, real, text, flag, size_list };

enum class Source { defaults, file, command_line };

struct SettingSpec {
  std::string key;  // "section.name"
  ValueType type;
  std::string default_value;
  std::string help;
};

inline const std::vector<SettingSpec>& settings_schema() {
  static const std::vector<SettingSpec> schema{
      {"check.seed", ValueType::integer, "0", "base seed of the randomized suites"},
      {"check.instances", ValueType::integer, "200", "random instances per identity suite"},
      {"check.max_n", ValueType::integer, "512", "largest node count drawn"},
      {"check.max_c", ValueType::integer, "16", "largest channel count drawn"},
      {"check.tolerance", ValueType::real, "1e-9", "max abs error of the identity suites"},
      {"check.reweight_tolerance", ValueType::real, "1e-10", "max abs error of the re-weighting law"},
      {"check.grad_instances", ValueType::integer, "3", "finite-difference instances"},
      {"check.grad_tolerance", ValueType::real, "1e-4", "max relative gradient error"},

      {"flops.n", ValueType::integer, "4225", "node count"},
      {"flops.c", ValueType::integer, "128", "channels"},
      {"flops.layers", ValueType::integer, "2", "graph layers"},

      {"bench.sizes", ValueType::size_list, "256,512,1024,2048,4096", "node counts of the sweep"},
      {"bench.c", ValueType::integer, "16", "channels"},
      {"bench.layers", ValueType::integer, "2", "graph layers"},
      {"bench.repeats", ValueType::integer, "5", "timed repeats per point (>= 5)"},
      {"bench.seed", ValueType::integer, "1", "input seed"},
      {"bench.path", ValueType::text, "both", "naive | efficient | both"},
      {"bench.max_naive_elems", ValueType::integer, "268435456", "skip naive runs above this footprint"},

      {"train.seed", ValueType::integer, "1", "first seed"},
      {"train.seeds", ValueType::integer, "1", "number of consecutive seeds"},
      {"train.mode", ValueType::text, "bgr", "baseline | bgr | both"},
      {"train.h", ValueType::integer, "48", "image height"},
      {"train.w", ValueType::integer, "48", "image width"},
      {"train.k", ValueType::integer, "3", "classes including background"},
      {"train.n_train", ValueType::integer, "200", "training images"},
      {"train.n_val", ValueType::integer, "50", "validation images"},
      {"train.iters", ValueType::integer, "2000", "SGD iterations"},
      {"train.lr0", ValueType::real, "0.01", "base learning rate"},
      {"train.poly_power", ValueType::real, "0.9", "poly schedule exponent"},
      {"train.momentum", ValueType::real, "0.9", "SGD momentum"},
      {"train.weight_decay", ValueType::real, "1e-4", "L2 coefficient"},
      {"train.batch", ValueType::integer, "8", "images per step"},
      {"train.boundary_radius", ValueType::integer, "1", "supervision mask radius"},
      {"train.band_radius", ValueType::integer, "2", "evaluation band radius"},
      {"train.eval_every", ValueType::integer, "250", "iterations between validation passes"},
      {"train.noise_sigma", ValueType::real, "0.1", "image noise"},
      {"train.export_predictions", ValueType::flag, "false", "write PGM predictions of the val set"},

      {"bgr.num_layers", ValueType::integer, "2", "graph layers"},
      {"bgr.hidden_dim", ValueType::integer, "16", "feature channels"},
      {"bgr.degree_epsilon", ValueType::real, "1e-6", "degree clamp"},
  };
  return schema;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool parse_int(const std::string& s, std::int64_t& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}

inline bool parse_real(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}

inline bool parse_flag(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

inline bool parse_size_list(const std::string& s, std::vector<std::size_t>& out) {
  out.clear();
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::int64_t v = 0;
    if (!parse_int(trim(item), v) || v < 0) return false;
    out.push_back(static_cast<std::size_t>(v));
  }
  return !out.empty();
}

inline const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::integer: return "integer";
    case ValueType::real: return "real";
    case ValueType::text: return "text";
    case ValueType::flag: return "flag";
    case ValueType::size_list: return "comma-separated list of integers";
  }
  return "?";
}

}  // namespace detail

class Settings {
 public:
  Settings() {
    for (const auto& s : settings_schema()) entries_[s.key] = {s.default_value, Source::defaults};
  }

  /// Sets one key after checking it exists and the value parses as its type.
  void set(const std::string& key, const std::string& raw, Source src) {
    const SettingSpec& spec = lookup(key);
    const std::string v = detail::trim(raw);
    bool ok = true;
    switch (spec.type) {
      case ValueType::integer: {
        std::int64_t x;
        ok = detail::parse_int(v, x);
        break;
      }
      case ValueType::real: {
        double x;
        ok = detail::parse_real(v, x);
        break;
      }
      case ValueType::flag: {
        bool x;
        ok = detail::parse_flag(v, x);
        break;
      }
      case ValueType::size_list: {
        std::vector<std::size_t> x;
        ok = detail::parse_size_list(v, x);
        break;
      }
      case ValueType::text: ok = !v.empty(); break;
    }
    if (!ok)
      throw ConfigError("config: '" + key + "' expects " + detail::type_name(spec.type) + ", got '" +
                        v + "'");
    entries_[key] = {v, src};
  }

  /// "section.key=value".
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1), Source::command_line);
  }

  void parse(std::istream& is, const std::string& origin) {
    std::string line, section;
    std::map<std::string, std::size_t> seen;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
      const std::string where = origin + ":" + std::to_string(lineno);
      std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = detail::trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw ConfigError(where + ": empty section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
      const std::string key = section + "." + detail::trim(t.substr(0, eq));
      if (auto it = seen.find(key); it != seen.end())
        throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " +
                          std::to_string(it->second) + ")");
      seen[key] = lineno;
      try {
        set(key, t.substr(eq + 1), Source::file);
      } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    parse(f, path);
  }

  const std::string& raw(const std::string& key) const { return entry(key).value; }
  Source source(const std::string& key) const { return entry(key).source; }

  std::int64_t get_int(const std::string& key) const {
    std::int64_t v = 0;
    detail::parse_int(typed(key, ValueType::integer), v);
    return v;
  }
  std::size_t get_size(const std::string& key) const {
    const std::int64_t v = get_int(key);
    if (v < 0) throw ConfigError("config: '" + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
  }
  double get_real(const std::string& key) const {
    double v = 0;
    detail::parse_real(typed(key, ValueType::real), v);
    return v;
  }
  bool get_flag(const std::string& key) const {
    bool v = false;
    detail::parse_flag(typed(key, ValueType::flag), v);
    return v;
  }
  std::vector<std::size_t> get_size_list(const std::string& key) const {
    std::vector<std::size_t> v;
    detail::parse_size_list(typed(key, ValueType::size_list), v);
    return v;
  }
  const std::string& get_text(const std::string& key) const { return typed(key, ValueType::text); }

  /// Resolved configuration in file syntax, one section per module.
  void write(std::ostream& os) const {
    std::string section;
    for (const auto& s : settings_schema()) {
      const auto dot = s.key.find('.');
      const std::string sec = s.key.substr(0, dot);
      if (sec != section) {
        os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
        section = sec;
      }
      os << s.key.substr(dot + 1) << " = " << raw(s.key) << '\n';
    }
  }

 private:
  struct Entry {
    std::string value;
    Source source = Source::defaults;
  };

  static const SettingSpec& lookup(const std::string& key) {
    const auto& schema = settings_schema();
    auto it = std::find_if(schema.begin(), schema.end(), [&](const SettingSpec& s) { return s.key == key; });
    if (it == schema.end()) throw ConfigError("config: unknown key '" + key + "'");
    return *it;
  }
  const Entry& entry(const std::string& key) const {
    lookup(key);
    return entries_.at(key);
  }
  const std::string& typed(const std::string& key, ValueType t) const {
    if (lookup(key).type != t)
      throw UsageError("config: '" + key + "' is not of type " + detail::type_name(t));
    return entries_.at(key).value;
  }

  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// typed views

inline BgrConfig bgr_config(const Settings& s) {
  BgrConfig c;
  c.num_layers = s.get_size("bgr.num_layers");
  c.hidden_dim = s.get_size("bgr.hidden_dim");
  c.degree_epsilon = s.get_real("bgr.degree_epsilon");
  c.validate();
  return c;
}

/// Mode list for train.mode ("both" expands to baseline then bgr).
inline std::vector<ModelMode> train_modes(const Settings& s) {
  const std::string& m = s.get_text("train.mode");
  if (m == "baseline") return {ModelMode::baseline};
  if (m == "bgr") return {ModelMode::bgr};
  if (m == "both") return {ModelMode::baseline, ModelMode::bgr};
  throw ConfigError("config: train.mode must be baseline, bgr or both, got '" + m + "'");
}

/// TrainConfig for one mode and seed; the remaining fields come from [train] and [bgr].
inline TrainConfig train_config(const Settings& s, ModelMode mode, std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.h = s.get_size("train.h");
  c.w = s.get_size("train.w");
  c.K = s.get_size("train.k");
  c.n_train = s.get_size("train.n_train");
  c.n_val = s.get_size("train.n_val");
  c.iters = s.get_size("train.iters");
  c.lr0 = s.get_real("train.lr0");
  c.poly_power = s.get_real("train.poly_power");
  c.momentum = s.get_real("train.momentum");
  c.weight_decay = s.get_real("train.weight_decay");
  c.batch = s.get_size("train.batch");
  c.model = mode;
  c.bgr = bgr_config(s);
  c.boundary_radius = s.get_size("train.boundary_radius");
  c.band_radius = s.get_size("train.band_radius");
  c.eval_every = s.get_size("train.eval_every");
  c.noise_sigma = s.get_real("train.noise_sigma");
  c.validate();
  return c;
}

inline SweepOptions sweep_options(const Settings& s) {
  SweepOptions o;
  o.Ns = s.get_size_list("bench.sizes");
  o.c = s.get_size("bench.c");
  o.layers = s.get_size("bench.layers");
  o.repeats = s.get_size("bench.repeats");
  o.seed = static_cast<std::uint64_t>(s.get_size("bench.seed"));
  o.max_naive_elems = s.get_size("bench.max_naive_elems");
  const std::string& p = s.get_text("bench.path");
  if (p != "naive" && p != "efficient" && p != "both")
    throw ConfigError("config: bench.path must be naive, efficient or both, got '" + p + "'");
  o.run_naive = p != "efficient";
  o.run_efficient = p != "naive";
  if (o.repeats < 5) throw ConfigError("config: bench.repeats must be >= 5");
  if (o.c < 1 || o.layers < 1) throw ConfigError("config: bench.c and bench.layers must be >= 1");
  for (std::size_t n : o.Ns)
    if (n < 1) throw ConfigError("config: bench.sizes entries must be >= 1");
  return o;
}

// ---------------------------------------------------------------------------
// run description

enum class Command { check, flops, bench, train };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::check: return "check";
    case Command::flops: return "flops";
    case Command::bench: return "bench";
    case Command::train: return "train";
  }
  return "?";
}

struct RunConfig {
  Command command = Command::check;
  std::string config_path;             // empty: defaults only
  std::string output_dir = "bgr_out";
  std::vector<std::string> overrides;  // "section.key=value", applied in order
};

/// Defaults, then the config file, then the overrides.
inline Settings resolve_settings(const RunConfig& rc) {
  Settings s;
  if (!rc.config_path.empty()) s.load_file(rc.config_path);
  for (const auto& o : rc.overrides) s.apply_override(o);
  return s;
}

/// Creates the directory if needed and proves it accepts a file.
inline void ensure_writable_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir, ec)) throw ConfigError("output directory '" + dir + "' cannot be created");
  const fs::path probe = fs::path(dir) / ".bgr_write_probe";
  {
    std::ofstream f(probe);
    if (!(f << "ok")) throw ConfigError("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
}

}  // namespace bgr
