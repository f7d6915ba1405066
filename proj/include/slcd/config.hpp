#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "slcd/common.hpp"

namespace slcd {

// Flat key=value text, '#' starts a comment, blank lines ignored.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
      ++lineno;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      std::size_t eq = line.find('=');
      require(eq != std::string::npos,
              "config: line " + std::to_string(lineno) + " is not key=value");
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      require(!key.empty(), "config: empty key on line " + std::to_string(lineno));
      require(cfg.values.emplace(key, val).second,
              "config: duplicate key '" + key + "'");
    }
    return cfg;
  }

  static KvConfig load(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = values.find(key);
    return it == values.end() ? dflt : it->second;
  }
  double get_double(const std::string& key, double dflt) const {
    auto it = values.find(key);
    return it == values.end() ? dflt : parse_double(it->second);
  }
  long long get_int(const std::string& key, long long dflt) const {
    auto it = values.find(key);
    return it == values.end() ? dflt : parse_int(it->second);
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
    auto it = values.find(key);
    return it == values.end() ? dflt : parse_u64(it->second);
  }
  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values.find(key);
    if (it == values.end()) return dflt;
    if (it->second == "1" || it->second == "true") return true;
    if (it->second == "0" || it->second == "false") return false;
    throw Error("config: boolean key '" + key + "' must be 0/1/true/false");
  }
};

// Run-level knobs shared by the CLI subcommands.
struct RunConfig {
  std::uint64_t seed = 7;
  int n_sim = 200;
  int n_real = 200;
  int sched_N = 1000;
  double beta_lo = 1e-4;
  double beta_hi = 2e-2;
  double strength = 0.5;
  double omega = 6.0;
  double omega_min = 4.5;
  double omega_max = 7.5;
  int steps = 2;
  bool use_ot = false;
  double ot_epsilon_scale = 0.01;  // relative to median transport cost
  std::string control;             // "", "edge" or "depth"
  double control_scale = 1.0;
  std::string out_root;

  void validate() const {
    require(strength >= 0.0 && strength <= 1.0, "config: strength must be in [0,1]");
    require(steps == 1 || steps == 2 || steps == 4, "config: steps must be 1, 2 or 4");
    require(omega >= omega_min && omega <= omega_max,
            "config: omega outside the trained range [" + fmt_double(omega_min) +
                ", " + fmt_double(omega_max) + "]");
    require(control.empty() || control == "edge" || control == "depth",
            "config: control must be edge or depth");
    require(control_scale >= 0.0, "config: control_scale must be >= 0");
    require(n_sim >= 1 && n_real >= 1, "config: dataset sizes must be >= 1");
    require(sched_N >= 2 && beta_lo > 0.0 && beta_hi > beta_lo && beta_hi < 1.0,
            "config: bad schedule parameters");
  }

  static RunConfig from_kv(const KvConfig& kv) {
    RunConfig c;
    c.seed = kv.get_u64("seed", c.seed);
    c.n_sim = static_cast<int>(kv.get_int("n_sim", c.n_sim));
    c.n_real = static_cast<int>(kv.get_int("n_real", c.n_real));
    c.sched_N = static_cast<int>(kv.get_int("sched_N", c.sched_N));
    c.beta_lo = kv.get_double("beta_lo", c.beta_lo);
    c.beta_hi = kv.get_double("beta_hi", c.beta_hi);
    c.strength = kv.get_double("strength", c.strength);
    c.omega = kv.get_double("omega", c.omega);
    c.omega_min = kv.get_double("omega_min", c.omega_min);
    c.omega_max = kv.get_double("omega_max", c.omega_max);
    c.steps = static_cast<int>(kv.get_int("steps", c.steps));
    c.use_ot = kv.get_bool("ot", c.use_ot);
    c.ot_epsilon_scale = kv.get_double("ot_epsilon", c.ot_epsilon_scale);
    c.control = kv.get_str("control", c.control);
    c.control_scale = kv.get_double("control_scale", c.control_scale);
    c.out_root = kv.get_str("out_root", c.out_root);
    c.validate();
    return c;
  }
};

// One row of the metric CSV; everything prints with '.' decimals regardless
// of locale.
struct MetricRow {
  std::string metric;
  std::string dataset;
  std::string model;
  int steps = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricRow>& rows) {
  std::ofstream f(path);
  require(f.good(), "write_metrics_csv: cannot open " + path);
  f << "metric,dataset,model,steps,seed,value\n";
  for (const auto& r : rows)
    f << r.metric << ',' << r.dataset << ',' << r.model << ',' << r.steps << ','
      << r.seed << ',' << fmt_double(r.value) << '\n';
  require(f.good(), "write_metrics_csv: write failed for " + path);
}

inline std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "read_metrics_csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)) &&
              line == "metric,dataset,model,steps,seed,value",
          "read_metrics_csv: bad header in " + path);
  std::vector<MetricRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      parts.push_back(line.substr(start, comma == std::string::npos
                                             ? std::string::npos
                                             : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(parts.size() == 6, "read_metrics_csv: malformed row: " + line);
    MetricRow r;
    r.metric = parts[0];
    r.dataset = parts[1];
    r.model = parts[2];
    r.steps = static_cast<int>(parse_int(parts[3]));
    r.seed = parse_u64(parts[4]);
    r.value = parse_double(parts[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Scheme-comparison table: one row per training scheme, metric columns.
struct SchemeRow {
  std::string scheme;
  double pxacc = 0.0;
  double miou = 0.0;
  double mdice = 0.0;
  double hausdorff = 0.0;
};

inline void write_scheme_csv(const std::string& path,
                             const std::vector<SchemeRow>& rows) {
  std::ofstream f(path);
  require(f.good(), "write_scheme_csv: cannot open " + path);
  f << "scheme,pxacc,miou,mdice,hausdorff\n";
  for (const auto& r : rows)
    f << r.scheme << ',' << fmt_double(r.pxacc) << ',' << fmt_double(r.miou)
      << ',' << fmt_double(r.mdice) << ',' << fmt_double(r.hausdorff) << '\n';
  require(f.good(), "write_scheme_csv: write failed for " + path);
}

}  // namespace slcd
