#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "permrec/common.hpp"

namespace permrec {

/// Fully resolved experiment configuration. Parsed from a flat "key = value"
/// file with [section] headers; unknown keys, duplicates and constraint
/// violations are rejected with line numbers.
struct ExperimentConfig {
  // domain
  int dim = 2;
  Vec3 box_lo{0.0, 0.0, 0.0};
  Vec3 box_hi{1.0, 1.0, 1.0};
  int resolution = 8;
  // time
  double final_time = 3.0;
  int steps = 60;
  // source
  std::string source_family = "ricker";  // ricker | sine_burst
  double source_amplitude = 1.0;
  double source_frequency = 1.0;
  double source_t0 = 0.5;
  Vec3 source_direction{1.0, 0.0, 0.0};
  std::string source_side = "all";  // all | x0 | x1 | y0 | y1 | z0 | z1
  // truth (synthetic target; ignored when data.file is set)
  std::string truth_kind = "gaussian";  // gaussian | constant
  double truth_amplitude = 2.0;
  Vec3 truth_center{0.5, 0.5, 0.5};
  double truth_width = 0.12;
  double truth_value = 1.0;
  // data
  std::string data_file;  // observation CSV; empty means synthesize
  // regularization
  double alpha = 0.01;
  double eps_max = 15.0;
  double delta_fraction = 0.1;  // delta = fraction * T
  // optimizer
  int max_iterations = 40;
  double grad_tol = 1e-6;
  double initial_step = 1.0;
  int max_backtracks = 40;
  // adaptivity
  int max_cycles = 1;
  double marking_fraction = 0.5;
  double indicator_threshold = 0.0;
  // synthesis
  int fine_factor = 2;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  // output
  std::string output_dir = "out";
  int field_stride = 10;

  double delta() const { return delta_fraction * final_time; }
};

namespace detail {

struct ConfigEntry {
  std::string value;
  int line = 0;
};

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, ConfigEntry> entries)
      : entries_(std::move(entries)) {}

  double number(const std::string& key, double def, double lo, double hi) {
    auto it = take(key);
    if (!it) return def;
    double v;
    std::istringstream ss(it->value);
    if (!(ss >> v) || !ss.eof())
      fail(key, *it, "expected a number, got '" + it->value + "'");
    if (v < lo || v > hi)
      fail(key, *it, "value " + it->value + " violates constraint [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
    return v;
  }

  int integer(const std::string& key, int def, int lo, int hi) {
    const double v = number(key, def, lo, hi);
    if (v != static_cast<int>(v)) throw config_error(key + ": expected an integer");
    return static_cast<int>(v);
  }

  std::string text(const std::string& key, const std::string& def,
                   const std::vector<std::string>& allowed = {}) {
    auto it = take(key);
    const std::string v = it ? it->value : def;
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : " | ") + a;
      throw config_error(key + ": '" + v + "' is not one of " + opts);
    }
    return v;
  }

  void finish() const {
    for (const auto& [key, entry] : entries_)
      if (!consumed_.count(key))
        throw config_error("unknown key '" + key + "' at line " + std::to_string(entry.line));
  }

 private:
  std::map<std::string, ConfigEntry> entries_;
  std::map<std::string, bool> consumed_;

  std::optional<ConfigEntry> take(const std::string& key) {
    consumed_[key] = true;
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  [[noreturn]] static void fail(const std::string& key, const ConfigEntry& e,
                                const std::string& msg) {
    throw config_error(key + " (line " + std::to_string(e.line) + "): " + msg);
  }
};

}  // namespace detail

/// Parse the documented key-value grammar from raw text (see README for the key
/// table). `overrides` are "section.key=value" strings applied after the file.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::vector<std::string>& overrides = {}) {
  std::map<std::string, detail::ConfigEntry> entries;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw config_error("malformed section header at line " + std::to_string(line_no));
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw config_error("empty section name at line " + std::to_string(line_no));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("expected 'key = value' at line " + std::to_string(line_no));
    std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw config_error("empty key or value at line " + std::to_string(line_no));
    if (!section.empty()) key = section + "." + key;
    if (entries.count(key))
      throw config_error("duplicate key '" + key + "' at line " + std::to_string(line_no) +
                         " (first at line " + std::to_string(entries[key].line) + ")");
    entries[key] = {value, line_no};
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw config_error("override must be key=value: " + ov);
    entries[detail::trim(ov.substr(0, eq))] = {detail::trim(ov.substr(eq + 1)), 0};
  }

  detail::ConfigReader r(std::move(entries));
  ExperimentConfig c;
  const double inf = std::numeric_limits<double>::infinity();
  c.dim = r.integer("domain.dim", 2, 2, 3);
  c.box_lo[0] = r.number("domain.xmin", 0.0, -inf, inf);
  c.box_hi[0] = r.number("domain.xmax", 1.0, -inf, inf);
  c.box_lo[1] = r.number("domain.ymin", 0.0, -inf, inf);
  c.box_hi[1] = r.number("domain.ymax", 1.0, -inf, inf);
  c.box_lo[2] = r.number("domain.zmin", 0.0, -inf, inf);
  c.box_hi[2] = r.number("domain.zmax", 1.0, -inf, inf);
  c.resolution = r.integer("domain.resolution", 8, 1, 4096);
  c.final_time = r.number("time.final_time", 3.0, 1e-12, inf);
  c.steps = r.integer("time.steps", 60, 1, 1 << 20);
  c.source_family = r.text("source.family", "ricker", {"ricker", "sine_burst"});
  c.source_amplitude = r.number("source.amplitude", 1.0, -inf, inf);
  c.source_frequency = r.number("source.frequency", 1.0, 1e-12, inf);
  c.source_t0 = r.number("source.t0", 0.5, 0.0, inf);
  c.source_direction[0] = r.number("source.dir_x", 1.0, -inf, inf);
  c.source_direction[1] = r.number("source.dir_y", 0.0, -inf, inf);
  c.source_direction[2] = r.number("source.dir_z", 0.0, -inf, inf);
  c.source_side =
      r.text("source.side", "all", {"all", "x0", "x1", "y0", "y1", "z0", "z1"});
  c.truth_kind = r.text("truth.kind", "gaussian", {"gaussian", "constant"});
  c.truth_amplitude = r.number("truth.amplitude", 2.0, 0.0, inf);
  c.truth_center[0] = r.number("truth.center_x", 0.5, -inf, inf);
  c.truth_center[1] = r.number("truth.center_y", 0.5, -inf, inf);
  c.truth_center[2] = r.number("truth.center_z", 0.5, -inf, inf);
  c.truth_width = r.number("truth.width", 0.12, 1e-12, inf);
  c.truth_value = r.number("truth.value", 1.0, 1.0, inf);
  c.data_file = r.text("data.file", "");
  c.alpha = r.number("regularization.alpha", 0.01, 1e-300, inf);
  c.eps_max = r.number("regularization.eps_max", 15.0, 1.0, inf);
  c.delta_fraction = r.number("regularization.delta_fraction", 0.1, 1e-12, 2.0);
  c.max_iterations = r.integer("optimizer.max_iterations", 40, 1, 1 << 20);
  c.grad_tol = r.number("optimizer.grad_tol", 1e-6, 0.0, 1.0);
  c.initial_step = r.number("optimizer.initial_step", 1.0, 1e-300, inf);
  c.max_backtracks = r.integer("optimizer.max_backtracks", 40, 1, 200);
  c.max_cycles = r.integer("adaptivity.max_cycles", 1, 1, 64);
  c.marking_fraction = r.number("adaptivity.fraction", 0.5, 1e-12, 1.0);
  c.indicator_threshold = r.number("adaptivity.threshold", 0.0, 0.0, inf);
  c.fine_factor = r.integer("synthesis.fine_factor", 2, 1, 16);
  c.noise_sigma = r.number("synthesis.noise_sigma", 0.0, 0.0, 10.0);
  c.seed = static_cast<std::uint64_t>(r.number("synthesis.seed", 1.0, 0.0, 9.007199254740992e15));
  c.output_dir = r.text("output.dir", "out");
  c.field_stride = r.integer("output.field_stride", 10, 1, 1 << 20);
  r.finish();

  for (int a = 0; a < c.dim; ++a)
    if (!(c.box_hi[a] > c.box_lo[a])) throw config_error("domain: box must be nondegenerate");
  if (c.truth_amplitude + 1.0 > c.eps_max && c.truth_kind == "gaussian")
    throw config_error("truth: peak 1 + amplitude exceeds eps_max");
  if (c.truth_value > c.eps_max) throw config_error("truth: value exceeds eps_max");
  return c;
}

inline ExperimentConfig parse_config(const std::string& path,
                                     const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw config_error("parse_config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

/// Resolved-config dump, echoing every key with its effective value.
inline std::string dump_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "[domain]\n"
    << "dim = " << c.dim << "\nxmin = " << c.box_lo[0] << "\nxmax = " << c.box_hi[0]
    << "\nymin = " << c.box_lo[1] << "\nymax = " << c.box_hi[1] << "\nzmin = " << c.box_lo[2]
    << "\nzmax = " << c.box_hi[2] << "\nresolution = " << c.resolution << "\n[time]\n"
    << "final_time = " << c.final_time << "\nsteps = " << c.steps << "\n[source]\n"
    << "family = " << c.source_family << "\namplitude = " << c.source_amplitude
    << "\nfrequency = " << c.source_frequency << "\nt0 = " << c.source_t0
    << "\ndir_x = " << c.source_direction[0] << "\ndir_y = " << c.source_direction[1]
    << "\ndir_z = " << c.source_direction[2] << "\nside = " << c.source_side << "\n[truth]\n"
    << "kind = " << c.truth_kind << "\namplitude = " << c.truth_amplitude
    << "\ncenter_x = " << c.truth_center[0] << "\ncenter_y = " << c.truth_center[1]
    << "\ncenter_z = " << c.truth_center[2] << "\nwidth = " << c.truth_width
    << "\nvalue = " << c.truth_value << "\n[data]\n"
    << (c.data_file.empty() ? "# file not set (observations are synthesized)\n"
                            : "file = " + c.data_file + "\n")
    << "[regularization]\n"
    << "alpha = " << c.alpha << "\neps_max = " << c.eps_max
    << "\ndelta_fraction = " << c.delta_fraction << "\n[optimizer]\n"
    << "max_iterations = " << c.max_iterations << "\ngrad_tol = " << c.grad_tol
    << "\ninitial_step = " << c.initial_step << "\nmax_backtracks = " << c.max_backtracks
    << "\n[adaptivity]\n"
    << "max_cycles = " << c.max_cycles << "\nfraction = " << c.marking_fraction
    << "\nthreshold = " << c.indicator_threshold << "\n[synthesis]\n"
    << "fine_factor = " << c.fine_factor << "\nnoise_sigma = " << c.noise_sigma
    << "\nseed = " << c.seed << "\n[output]\n"
    << "dir = " << c.output_dir << "\nfield_stride = " << c.field_stride << "\n";
  return o.str();
}

}  // namespace permrec
