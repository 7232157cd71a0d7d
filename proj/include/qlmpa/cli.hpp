#pragma once

// Command-line front end: configuration from flags and flat key=value files,
// experiment dispatch, and output files with a reproducibility manifest.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qlmpa/experiments.hpp"
#include "qlmpa/io.hpp"
#include "qlmpa/parallel.hpp"

namespace qlmpa {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Thrown by parse_config for --help; carries the usage text.
class HelpRequested : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"solve", "sweep-domain", "sweep-p", "bifurcation", "double-well"};
  return names;
}

struct RunConfig {
  std::string subcommand = "solve";
  double R = 1.0;
  /// Exponent, or "exp".
  std::string p = "4";
  /// Constant level, or "doublewell".
  std::string V = "0";
  double delta = 2.0;
  double eps_sc = 1.0;
  /// Cells per side of the finest grid; 0 selects 128 (256 for R >= 30).
  int n = 0;
  double grad_tol = 1e-2;
  int max_iter = 1000;
  int newton_iters = 8;
  int refine_every = 0;
  int cascade_levels = 2;
  std::string guess = "default";
  double cx = 0.3;
  double cy = -0.2;
  std::string output = "qlmpa-out";
  std::vector<double> R_list{1.0, 5.0, 10.0, 30.0};
  std::vector<double> p_grid = default_p_grid();
  std::vector<double> delta_list{0.0, 1.0, 2.0};
  std::vector<double> V_grid{10.0, 7.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.3, 0.2, 0.1};
  std::vector<double> eps_list{0.05, 0.25};
  bool cold_start = false;

  Nonlinearity nonlinearity() const {
    if (p == "exp") return Nonlinearity::exponential();
    return Nonlinearity::power(std::stod(p));
  }

  Potential potential() const {
    if (V == "doublewell") return Potential::standard_double_well();
    return Potential::constant(std::stod(V));
  }

  Problem problem() const {
    Problem pb;
    pb.nonlinearity = nonlinearity();
    pb.potential = potential();
    pb.delta = delta;
    pb.eps_sc = eps_sc;
    pb.R = R;
    return pb;
  }

  MpaConfig mpa_config() const {
    MpaConfig c;
    c.grad_tol = grad_tol;
    c.max_iter = max_iter;
    c.newton_iters = newton_iters;
    c.refine_every = refine_every;
    return c;
  }

  InitialGuess initial_guess() const {
    return guess == "localized" ? InitialGuess::localized({cx, cy}) : InitialGuess::standard();
  }

  int resolution(double r) const { return n > 0 ? n : default_resolution(r); }
};

namespace detail {

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&, std::vector<std::string>&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline bool to_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

inline bool to_int(const std::string& s, int& out) {
  double x;
  if (!to_double(s, x) || x != std::floor(x) || std::abs(x) > 1e9) return false;
  out = static_cast<int>(x);
  return true;
}

inline std::string join_list(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_double(xs[i]);
  return s;
}

inline std::string format_short(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

template <class T>
ConfigKey number_key(std::string name, std::string help, T RunConfig::*field) {
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.set = [name, field](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
    if constexpr (std::is_same_v<T, int>) {
      if (!to_int(v, c.*field)) errors.push_back(name + ": '" + v + "' is not an integer");
    } else {
      if (!to_double(v, c.*field)) errors.push_back(name + ": '" + v + "' is not a number");
    }
  };
  k.get = [field](const RunConfig& c) {
    if constexpr (std::is_same_v<T, int>)
      return std::to_string(c.*field);
    else
      return format_double(c.*field);
  };
  return k;
}

inline ConfigKey string_key(std::string name, std::string help, std::string RunConfig::*field) {
  return {std::move(name), std::move(help),
          [field](RunConfig& c, const std::string& v, std::vector<std::string>&) { c.*field = trim(v); },
          [field](const RunConfig& c) { return c.*field; }};
}

inline ConfigKey list_key(std::string name, std::string help, std::vector<double> RunConfig::*field) {
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.set = [name, field](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
    std::vector<double> xs;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      double x;
      if (!to_double(item, x)) {
        errors.push_back(name + ": '" + trim(item) + "' is not a number");
        return;
      }
      xs.push_back(x);
    }
    c.*field = std::move(xs);
  };
  k.get = [field](const RunConfig& c) { return join_list(c.*field); };
  return k;
}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    const RunConfig d;
    std::vector<ConfigKey> k;
    k.push_back(string_key("subcommand", "one of solve, sweep-domain, sweep-p, bifurcation, double-well (config files)",
                           &RunConfig::subcommand));
    k.push_back(number_key("R", "domain side length, domain (-R/2, R/2)^2", &RunConfig::R));
    k.push_back(string_key("p", "power exponent (> 1) or 'exp'", &RunConfig::p));
    k.push_back(string_key("V", "constant potential (>= 0) or 'doublewell'", &RunConfig::V));
    k.push_back(number_key("delta", "quasi-linear strength in r' = (1 + delta r^2)^(-1/2)", &RunConfig::delta));
    k.push_back(number_key("eps_sc", "semiclassical parameter", &RunConfig::eps_sc));
    k.push_back(number_key("n", "cells per side of the finest grid (0: 128, or 256 for R >= 30)", &RunConfig::n));
    k.push_back(number_key("grad_tol", "stop when the gradient norm is at most this", &RunConfig::grad_tol));
    k.push_back(number_key("max_iter", "iteration limit per grid level", &RunConfig::max_iter));
    k.push_back(number_key("newton_iters", "Newton polish iterations", &RunConfig::newton_iters));
    k.push_back(number_key("refine_every", "adaptive refinement cadence on each level (0 disables)",
                           &RunConfig::refine_every));
    k.push_back(number_key("cascade_levels", "uniform refinements from the coarsest to the finest grid",
                           &RunConfig::cascade_levels));
    k.push_back(string_key("guess", "initial guess: default or localized", &RunConfig::guess));
    k.push_back(number_key("cx", "center x of the localized guess", &RunConfig::cx));
    k.push_back(number_key("cy", "center y of the localized guess", &RunConfig::cy));
    k.push_back(string_key("output", "output directory", &RunConfig::output));
    k.push_back(list_key("R_list", "comma-separated R values (sweep-domain)", &RunConfig::R_list));
    k.push_back(list_key("p_grid", "comma-separated exponents (sweep-p)", &RunConfig::p_grid));
    k.push_back(list_key("delta_list", "comma-separated delta values (sweep-p)", &RunConfig::delta_list));
    k.push_back(list_key("V_grid", "comma-separated potential levels, continuation order (bifurcation)",
                         &RunConfig::V_grid));
    k.push_back(list_key("eps_list", "comma-separated eps_sc values (double-well)", &RunConfig::eps_list));
    k.push_back({"cold_start", "bifurcation without warm starts (true/false)",
                 [](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
                   const std::string t = trim(v);
                   if (t == "true" || t == "1")
                     c.cold_start = true;
                   else if (t == "false" || t == "0")
                     c.cold_start = false;
                   else
                     errors.push_back("cold_start: '" + t + "' is not a boolean");
                 },
                 [](const RunConfig& c) { return std::string(c.cold_start ? "true" : "false"); }});
    for (auto& key : k) {
      const std::string value = key.get(d);
      key.help += " [default: " + (value.empty() ? std::string("none") : value) + "]";
    }
    return k;
  }();
  return keys;
}

inline std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& ch : f)
    if (ch == '_') ch = '-';
  return "--" + f;
}

/// Parses `key = value` lines; '#' starts a comment.
inline std::map<std::string, std::string> read_key_values(std::istream& is, const std::string& source,
                                                          std::vector<std::string>& errors) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(source + ":" + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace detail

/// All range and consistency violations, empty when the configuration is valid.
inline std::vector<std::string> config_violations(const RunConfig& c) {
  std::vector<std::string> e;
  const auto& subs = subcommands();
  if (std::find(subs.begin(), subs.end(), c.subcommand) == subs.end())
    e.push_back("unknown subcommand '" + c.subcommand + "'");
  if (!(c.R > 0.0)) e.push_back("R must be positive");
  if (c.p != "exp") {
    double p;
    if (!detail::to_double(c.p, p))
      e.push_back("p must be a number or 'exp'");
    else if (!(p > 1.0))
      e.push_back("p must exceed 1");
  }
  if (c.V != "doublewell") {
    double v;
    if (!detail::to_double(c.V, v))
      e.push_back("V must be a number or 'doublewell'");
    else if (!(v >= 0.0))
      e.push_back("V must be nonnegative");
  }
  if (!(c.delta >= 0.0)) e.push_back("delta must be nonnegative");
  if (!(c.eps_sc > 0.0)) e.push_back("eps_sc must be positive");
  if (c.n < 0) e.push_back("n must be nonnegative");
  if (!(c.grad_tol > 0.0)) e.push_back("grad_tol must be positive");
  if (c.max_iter < 1) e.push_back("max_iter must be positive");
  if (c.newton_iters < 0) e.push_back("newton_iters must be nonnegative");
  if (c.refine_every < 0) e.push_back("refine_every must be nonnegative");
  if (c.cascade_levels < 0) e.push_back("cascade_levels must be nonnegative");
  if (c.guess != "default" && c.guess != "localized") e.push_back("guess must be 'default' or 'localized'");
  if (c.output.empty()) e.push_back("output must not be empty");
  auto check_list = [&](const std::vector<double>& xs, const char* name, auto ok, const char* what) {
    if (xs.empty()) e.push_back(std::string(name) + " must not be empty");
    for (double x : xs)
      if (!ok(x)) {
        e.push_back(std::string(name) + " entries must " + what);
        break;
      }
    for (std::size_t i = 1; i < xs.size(); ++i)
      if (xs[i] == xs[i - 1] || (xs.size() > 2 && (xs[i] > xs[i - 1]) != (xs[1] > xs[0]))) {
        e.push_back(std::string(name) + " must be strictly monotone");
        break;
      }
  };
  check_list(c.R_list, "R_list", [](double x) { return x > 0.0; }, "be positive");
  check_list(c.p_grid, "p_grid", [](double x) { return x > 1.0; }, "exceed 1");
  check_list(c.delta_list, "delta_list", [](double x) { return x >= 0.0; }, "be nonnegative");
  check_list(c.V_grid, "V_grid", [](double x) { return x > 0.0; }, "be positive");
  check_list(c.eps_list, "eps_list", [](double x) { return x > 0.0; }, "be positive");
  if (c.subcommand == "sweep-p" && c.V == "doublewell") e.push_back("sweep-p requires a constant V");
  if (c.subcommand == "bifurcation" && c.p == "exp") e.push_back("bifurcation requires a power nonlinearity");
  return e;
}

/// Flat key=value text that parse_config reads back to the same configuration.
inline std::string to_config_text(const RunConfig& c) {
  std::string s;
  for (const auto& k : detail::config_keys()) s += k.name + " = " + k.get(c) + "\n";
  return s;
}

/// Builds a configuration from defaults, then the --config file, then flags.
/// Throws ConfigError with every violation, or HelpRequested for --help.
inline RunConfig parse_config(int argc, const char* const* argv) {
  CLI::App app{"Mountain pass solver for quasi-linear Schroedinger equations on squares", "qlmpa"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value configuration file; flags override its keys");
  const auto& keys = detail::config_keys();
  std::vector<std::string> flag_values(keys.size());
  std::vector<CLI::Option*> options(keys.size(), nullptr);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i].name == "subcommand") continue;
    if (keys[i].name == "cold_start") {
      options[i] = app.add_flag("--cold-start", keys[i].help);
      continue;
    }
    options[i] = app.add_option(detail::flag_name(keys[i].name), flag_values[i], keys[i].help);
  }
  const std::vector<std::pair<std::string, std::string>> descriptions{
      {"solve", "one problem, writes the report row, solution fields and iteration log"},
      {"sweep-domain", "one run per R in R_list"},
      {"sweep-p", "energy and sup norm versus p for each delta in delta_list"},
      {"bifurcation", "energy versus constant V along V_grid"},
      {"double-well", "default and localized guesses for each eps_sc in eps_list"}};
  for (const auto& [name, desc] : descriptions) app.add_subcommand(name, desc);

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  RunConfig cfg;
  std::vector<std::string> errors;
  bool subcommand_set = false;
  auto apply = [&](const std::string& key, const std::string& value) {
    for (const auto& k : keys)
      if (k.name == key) {
        k.set(cfg, value, errors);
        return;
      }
    errors.push_back("unknown key '" + key + "'");
  };
  if (!config_path.empty()) {
    std::ifstream is(config_path);
    if (!is) throw ConfigError("cannot read config file " + config_path);
    for (const auto& [key, value] : detail::read_key_values(is, config_path, errors)) {
      apply(key, value);
      if (key == "subcommand") subcommand_set = true;
    }
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (!options[i] || options[i]->count() == 0) continue;
    if (keys[i].name == "cold_start")
      cfg.cold_start = true;
    else
      keys[i].set(cfg, flag_values[i], errors);
  }
  const auto chosen = app.get_subcommands();
  if (!chosen.empty()) {
    cfg.subcommand = chosen.front()->get_name();
    subcommand_set = true;
  }
  if (!subcommand_set) errors.push_back("no subcommand given");
  for (auto& v : config_violations(cfg)) errors.push_back(std::move(v));
  if (!errors.empty()) {
    std::string msg;
    for (std::size_t i = 0; i < errors.size(); ++i) msg += (i ? "; " : "") + errors[i];
    throw ConfigError(msg);
  }
  return cfg;
}

inline RunConfig parse_config(const std::vector<std::string>& argv) {
  std::vector<const char*> ptrs;
  for (const auto& a : argv) ptrs.push_back(a.c_str());
  return parse_config(static_cast<int>(ptrs.size()), ptrs.data());
}

namespace detail {

/// "pe_V0_R1" style stem for curve files.
inline std::string curve_stem(const char* prefix, const std::string& V, double R) {
  double v = 0.0;
  const std::string vs = to_double(V, v) ? format_short(v) : V;
  return std::string(prefix) + "_V" + vs + "_R" + format_short(R);
}

inline std::string delta_suffix(double delta) { return delta == 2.0 ? "" : "-delta" + format_short(delta); }

class Session {
 public:
  Session(const RunConfig& cfg, std::ostream& log) : cfg_(cfg), log_(log), dir_(cfg.output) {
    std::filesystem::create_directories(dir_);
  }

  /// Registers an artifact for the manifest and returns its path.
  std::filesystem::path path(const std::string& name) {
    artifacts_.push_back(name);
    return dir_ / name;
  }

  const std::filesystem::path& dir() const { return dir_; }

  void record(const std::string& what, const RunRecord& r) {
    all_converged_ = all_converged_ && r.converged;
    log_ << what << ": " << r.status << "  T = " << format_double(r.row.energy) << "  |grad T| = " << r.row.grad_norm
         << "  iterations = " << r.row.iterations << '\n';
    if (r.result)
      for (const auto& w : r.result->warnings) log_ << "  warning: " << w << '\n';
  }

  void write_text(const std::string& name, const std::string& text) {
    const auto p = path(name);
    auto os = open_output(p);
    os << text;
    finish_output(os, p);
  }

  int finish() {
    std::string manifest = "# qlmpa manifest; rerun with: qlmpa --config <this file>\n";
    manifest += to_config_text(cfg_);
    manifest += "# threads = " + std::to_string(num_threads()) + "\n";
    for (const auto& a : artifacts_) manifest += "# checksum " + a + " " + file_checksum(dir_ / a) + "\n";
    const auto p = dir_ / "manifest.txt";
    auto os = open_output(p);
    os << manifest;
    finish_output(os, p);
    log_ << (all_converged_ ? "all runs converged" : "some runs did not converge") << "; outputs in " << dir_.string()
         << '\n';
    return all_converged_ ? 0 : 1;
  }

  const RunConfig& cfg() const { return cfg_; }

 private:
  RunConfig cfg_;
  std::ostream& log_;
  std::filesystem::path dir_;
  std::vector<std::string> artifacts_;
  bool all_converged_ = true;
};

inline SweepSpec base_spec(const RunConfig& cfg, SweepSpec::Kind kind) {
  SweepSpec s;
  s.kind = kind;
  s.base = cfg.problem();
  s.config = cfg.mpa_config();
  s.cascade_levels = cfg.cascade_levels;
  const int n = cfg.n;
  s.resolution = [n](double R) { return n > 0 ? n : default_resolution(R); };
  return s;
}

inline void write_fields(Session& s, const RunRecord& r, const std::string& stem) {
  if (!r.result) return;
  export_field(r.result->solution_v, r.result->solution_u, s.dir() / stem);
  s.path(stem + ".vtk");
  s.path(stem + ".dat");
}

}  // namespace detail

/// Runs the configured command, writing outputs and a manifest into cfg.output.
/// Returns 0 iff every run converged.
inline int run_command(const RunConfig& cfg, std::ostream& log) {
  if (const auto v = config_violations(cfg); !v.empty()) {
    std::string msg;
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : "") + v[i];
    throw ConfigError(msg);
  }
  detail::Session s(cfg, log);
  std::vector<ReportRow> rows;

  if (cfg.subcommand == "solve") {
    SolveOptions opt;
    opt.n = cfg.resolution(cfg.R);
    opt.cascade_levels = cfg.cascade_levels;
    opt.config = cfg.mpa_config();
    opt.guess = cfg.initial_guess();
    RunRecord r = detail::run_point(cfg.problem(), opt);
    s.record("solve", r);
    rows.push_back(r.row);
    detail::write_fields(s, r, "solution");
    if (r.result) {
      std::ostringstream hist;
      write_iteration_log(r.result->history, hist);
      s.write_text("history.txt", hist.str());
    }
  } else if (cfg.subcommand == "sweep-domain") {
    SweepSpec spec = detail::base_spec(cfg, SweepSpec::Kind::domain_sweep);
    spec.R_list = cfg.R_list;
    const auto runs = run_domain_sweep(spec);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      s.record("R = " + detail::format_short(cfg.R_list[i]), runs[i]);
      rows.push_back(runs[i].row);
      detail::write_fields(s, runs[i], "solution_R" + detail::format_short(cfg.R_list[i]));
    }
  } else if (cfg.subcommand == "sweep-p") {
    SweepSpec spec = detail::base_spec(cfg, SweepSpec::Kind::p_sweep);
    spec.p_grid = cfg.p_grid;
    spec.delta_list = cfg.delta_list;
    const auto curves = run_p_sweep(spec);
    std::vector<Series> series;
    for (const auto& c : curves) {
      Series e{detail::curve_stem("pe", cfg.V, cfg.R) + detail::delta_suffix(c.delta), {}, {}};
      Series m{detail::curve_stem("pn", cfg.V, cfg.R) + detail::delta_suffix(c.delta), {}, {}};
      for (const auto& pt : c.points) {
        s.record("delta = " + detail::format_short(c.delta) + ", p = " + detail::format_short(pt.x), pt.run);
        rows.push_back(pt.run.row);
        if (!pt.run.result) continue;
        e.x.push_back(pt.x);
        e.y.push_back(std::log10(pt.energy));
        m.x.push_back(pt.x);
        m.y.push_back(pt.max_u);
      }
      if (!e.x.empty()) {
        series.push_back(std::move(e));
        series.push_back(std::move(m));
      }
    }
    if (!series.empty())
      for (const auto& p : export_curves(series, cfg.output)) s.path(p.filename().string());
  } else if (cfg.subcommand == "bifurcation") {
    SweepSpec spec = detail::base_spec(cfg, SweepSpec::Kind::bifurcation);
    spec.V_grid = cfg.V_grid;
    spec.continuation = !cfg.cold_start;
    const auto curve = run_bifurcation(spec);
    std::vector<std::pair<double, double>> pts;
    for (const auto& pt : curve.points) {
      s.record("V = " + detail::format_short(pt.x), pt.run);
      rows.push_back(pt.run.row);
      if (pt.run.result) pts.emplace_back(pt.x, std::log10(pt.energy));
    }
    std::sort(pts.begin(), pts.end());
    Series b{"bif_R" + detail::format_short(cfg.R), {}, {}};
    for (const auto& [x, y] : pts) {
      b.x.push_back(x);
      b.y.push_back(y);
    }
    if (!b.x.empty())
      for (const auto& p : export_curves({b}, cfg.output)) s.path(p.filename().string());
  } else if (cfg.subcommand == "double-well") {
    SweepSpec spec = detail::base_spec(cfg, SweepSpec::Kind::double_well);
    spec.base.potential = Potential::standard_double_well();
    spec.eps_list = cfg.eps_list;
    spec.guesses = {InitialGuess::standard(), InitialGuess::localized({cfg.cx, cfg.cy})};
    const auto runs = run_double_well(spec);
    std::string table = "# eps label argmax_x argmax_y energy max_u converged\n";
    for (const auto& r : runs) {
      const std::string tag = "eps = " + detail::format_short(r.eps) + ", " + r.label;
      s.record(tag, r.run);
      rows.push_back(r.run.row);
      table += format_double(r.eps) + ' ' + r.label + ' ' + format_double(r.argmax[0]) + ' ' +
               format_double(r.argmax[1]) + ' ' + format_double(r.run.row.energy) + ' ' +
               format_double(r.run.row.max_u) + ' ' + (r.run.converged ? "1" : "0") + '\n';
      detail::write_fields(s, r.run, "solution_eps" + detail::format_short(r.eps) + "_" + r.label);
    }
    s.write_text("double_well.txt", table);
  }

  const auto report = s.path("report.csv");
  export_report(rows, report);
  return s.finish();
}

}  // namespace qlmpa
