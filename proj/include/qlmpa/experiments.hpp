#pragma once

// Scripted studies: domain sweeps, the delta-homotopy p-sweeps, the V -> 0
// continuation and the double-well multiplicity study.
//
// Each point is solved by a uniform-refinement cascade: the MPA runs on a
// coarse structured grid, the iterate is prolonged exactly to the red-refined
// grid and re-peaked, and so on up to the target resolution, where the run
// finishes with the Newton polish.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qlmpa/mpa.hpp"

namespace qlmpa {

struct InitialGuess {
  enum class Kind { standard, localized };
  Kind kind = Kind::standard;
  Point center{0.0, 0.0};
  double radius2 = 0.1;
  std::string label = "default";

  static InitialGuess standard() { return {}; }
  static InitialGuess localized(Point c, std::string label = "localized") {
    return {Kind::localized, c, 0.1, std::move(label)};
  }

  FeFunction build(const SpacePtr& space) const {
    return kind == Kind::standard ? default_initial_guess(space) : localized_initial_guess(space, center, radius2);
  }
};

/// Target resolution per R: 256 cells per side for R >= 30, 128 otherwise.
inline int default_resolution(double R) { return R >= 30.0 ? 256 : 128; }

struct SolveOptions {
  /// Cells per side of the finest grid.
  int n = 128;
  /// Number of red refinements between the coarsest and the finest grid.
  int cascade_levels = 2;
  MpaConfig config = [] {
    MpaConfig c;
    c.refine_every = 0;
    return c;
  }();
  InitialGuess guess;
};

struct SolveOutcome {
  MpaResult result;
  /// Converged iterate on the coarsest grid (usable as a warm start).
  FeFunction coarse_v;
  std::vector<long> level_iterations;
};

/// Runs the cascade for one problem.  `warm` (on the coarsest grid of a
/// previous outcome) replaces the initial guess when given.
inline SolveOutcome solve_cascade(const Problem& pb, const SolveOptions& opt, const FeFunction* warm = nullptr,
                                  const IterationCallback& on_iteration = {}) {
  pb.validate();
  if (opt.n < 1) throw InvalidArgument("solve_cascade: n must be positive");
  int levels = std::max(0, opt.cascade_levels);
  while (levels > 0 && ((opt.n % (1 << levels)) != 0 || (opt.n >> levels) < 8)) --levels;
  const int n_coarse = opt.n >> levels;

  SpacePtr space = warm ? warm->space() : make_space(build_mesh(pb.R, n_coarse));
  if (warm && (space->mesh().R != pb.R || space->node_count() != static_cast<std::size_t>((n_coarse + 1) * (n_coarse + 1))))
    throw InvalidArgument("solve_cascade: warm start lives on a different coarse grid");
  FeFunction current = warm ? *warm : opt.guess.build(space);

  SolveOutcome out;
  std::vector<IterationRecord> history;
  int segment_offset = 0;
  long iterations = 0;
  for (int level = 0; level <= levels; ++level) {
    if (level > 0) {
      SpacePtr fine = make_space(refine_uniform(current.mesh()));
      current = prolong(current, fine);
    }
    MpaConfig cfg = opt.config;
    if (level < levels) cfg.newton_iters = 0;
    MpaResult res = run_mpa(pb, cfg, current, on_iteration);
    for (auto rec : res.history) {
      rec.mesh_segment += segment_offset;
      history.push_back(rec);
    }
    segment_offset = history.empty() ? 0 : history.back().mesh_segment + 1;
    iterations += res.report.iterations;
    out.level_iterations.push_back(res.report.iterations);
    if (level == 0) out.coarse_v = res.solution_v;
    current = res.solution_v;
    if (level == levels) {
      res.history = std::move(history);
      res.report.iterations = iterations;
      out.result = std::move(res);
    } else if (!res.converged) {
      // Continue on finer grids anyway; the final level decides convergence.
      for (auto& w : res.warnings) out.result.warnings.push_back("level " + std::to_string(level) + ": " + w);
    }
  }
  return out;
}

/// Node of largest |v|.
inline Point argmax_location(const FeFunction& v) {
  Eigen::Index idx = 0;
  v.values().cwiseAbs().maxCoeff(&idx);
  return v.mesh().nodes[static_cast<std::size_t>(idx)];
}

struct SweepSpec {
  enum class Kind { domain_sweep, p_sweep, bifurcation, double_well };
  Kind kind = Kind::domain_sweep;
  Problem base;
  std::vector<double> R_list{1.0, 5.0, 10.0, 30.0};
  std::vector<double> p_grid;
  std::vector<double> delta_list{0.0, 1.0, 2.0};
  std::vector<double> V_grid;
  std::vector<double> eps_list{0.05, 0.25};
  std::vector<InitialGuess> guesses{InitialGuess::standard(),
                                    InitialGuess::localized({0.3, -0.2}, "localized")};
  /// Cells per side for a given R.
  std::function<int(double)> resolution = default_resolution;
  int cascade_levels = 2;
  MpaConfig config = SolveOptions{}.config;
  /// Bifurcation: warm-start each V from the previous solution.
  bool continuation = true;

  void validate() const {
    auto monotone = [](const std::vector<double>& g) {
      if (g.empty()) return false;
      const bool inc = g.size() < 2 || g[1] > g[0];
      for (std::size_t i = 1; i < g.size(); ++i)
        if (inc ? !(g[i] > g[i - 1]) : !(g[i] < g[i - 1])) return false;
      return true;
    };
    switch (kind) {
      case Kind::domain_sweep:
        if (!monotone(R_list)) throw InvalidArgument("domain sweep: R list must be nonempty and strictly monotone");
        break;
      case Kind::p_sweep:
        if (!monotone(p_grid)) throw InvalidArgument("p sweep: p grid must be nonempty and strictly monotone");
        if (!monotone(delta_list)) throw InvalidArgument("p sweep: delta list must be nonempty and strictly monotone");
        break;
      case Kind::bifurcation:
        if (!monotone(V_grid)) throw InvalidArgument("bifurcation: V grid must be nonempty and strictly monotone");
        break;
      case Kind::double_well:
        if (!monotone(eps_list)) throw InvalidArgument("double well: eps list must be nonempty and strictly monotone");
        if (guesses.empty()) throw InvalidArgument("double well: at least one initial guess is required");
        break;
    }
  }

  SolveOptions options_for(double R) const {
    SolveOptions o;
    o.n = resolution(R);
    o.cascade_levels = cascade_levels;
    o.config = config;
    return o;
  }
};

/// One solved point of a sweep.  On failure `result` is empty and `status`
/// holds the error.
struct RunRecord {
  ReportRow row;
  bool converged = false;
  std::string status = "ok";
  std::optional<MpaResult> result;
};

namespace detail {

inline RunRecord run_point(const Problem& pb, const SolveOptions& opt, const FeFunction* warm = nullptr,
                           FeFunction* coarse_out = nullptr) {
  RunRecord rec;
  try {
    SolveOutcome o = solve_cascade(pb, opt, warm);
    rec.row = o.result.report;
    rec.converged = o.result.converged;
    if (!rec.converged) rec.status = "not converged";
    if (coarse_out) *coarse_out = std::move(o.coarse_v);
    rec.result = std::move(o.result);
  } catch (const Error& e) {
    rec.status = e.what();
    rec.row.R = pb.R;
    rec.row.p_label = pb.nonlinearity.label();
    rec.row.V_label = pb.potential.label();
    rec.row.delta = pb.delta;
    rec.row.eps_sc = pb.eps_sc;
  }
  return rec;
}

}  // namespace detail

/// One run per R with the standard initial guess; failures do not abort the sweep.
inline std::vector<RunRecord> run_domain_sweep(const SweepSpec& spec) {
  if (spec.kind != SweepSpec::Kind::domain_sweep) throw InvalidArgument("run_domain_sweep: wrong sweep kind");
  spec.validate();
  std::vector<RunRecord> out;
  for (double R : spec.R_list) {
    Problem pb = spec.base;
    pb.R = R;
    out.push_back(detail::run_point(pb, spec.options_for(R)));
  }
  return out;
}

struct CurvePoint {
  double x = 0.0;
  double energy = 0.0;
  double max_u = 0.0;
  RunRecord run;
};

struct Curve {
  double delta = 0.0;
  std::vector<CurvePoint> points;
};

/// For each delta and p, solves on the base domain and records E(u) and |u|_inf, u = r_delta(v).
inline std::vector<Curve> run_p_sweep(const SweepSpec& spec) {
  if (spec.kind != SweepSpec::Kind::p_sweep) throw InvalidArgument("run_p_sweep: wrong sweep kind");
  spec.validate();
  std::vector<Curve> curves;
  for (double delta : spec.delta_list) {
    Curve c;
    c.delta = delta;
    for (double p : spec.p_grid) {
      Problem pb = spec.base;
      pb.delta = delta;
      pb.nonlinearity = Nonlinearity::power(p);
      CurvePoint pt;
      pt.x = p;
      pt.run = detail::run_point(pb, spec.options_for(pb.R));
      if (pt.run.result) {
        pt.energy = energy_E(pb, pt.run.result->solution_u);
        pt.max_u = pt.run.row.max_u;
      } else {
        pt.energy = pt.max_u = std::numeric_limits<double>::quiet_NaN();
      }
      c.points.push_back(std::move(pt));
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

/// Energy per constant potential level, in grid order, optionally continued
/// from the previous level's coarse solution.
inline Curve run_bifurcation(const SweepSpec& spec) {
  if (spec.kind != SweepSpec::Kind::bifurcation) throw InvalidArgument("run_bifurcation: wrong sweep kind");
  spec.validate();
  Curve c;
  c.delta = spec.base.delta;
  FeFunction previous;
  bool have_previous = false;
  for (double V : spec.V_grid) {
    Problem pb = spec.base;
    pb.potential = Potential::constant(V);
    CurvePoint pt;
    pt.x = V;
    FeFunction coarse;
    pt.run = detail::run_point(pb, spec.options_for(pb.R), spec.continuation && have_previous ? &previous : nullptr,
                               &coarse);
    if (pt.run.result) {
      pt.energy = pt.run.row.energy;
      pt.max_u = pt.run.row.max_u;
      previous = std::move(coarse);
      have_previous = true;
    } else {
      pt.energy = pt.max_u = std::numeric_limits<double>::quiet_NaN();
    }
    c.points.push_back(std::move(pt));
  }
  return c;
}

struct DoubleWellRun {
  double eps = 0.0;
  std::string label;
  RunRecord run;
  Point argmax{0.0, 0.0};
};

/// One run per (eps, initial guess) on the base domain with the base potential.
inline std::vector<DoubleWellRun> run_double_well(const SweepSpec& spec) {
  if (spec.kind != SweepSpec::Kind::double_well) throw InvalidArgument("run_double_well: wrong sweep kind");
  spec.validate();
  std::vector<DoubleWellRun> out;
  for (double eps : spec.eps_list) {
    for (const auto& guess : spec.guesses) {
      Problem pb = spec.base;
      pb.eps_sc = eps;
      SolveOptions opt = spec.options_for(pb.R);
      opt.guess = guess;
      DoubleWellRun r;
      r.eps = eps;
      r.label = guess.label;
      r.run = detail::run_point(pb, opt);
      if (r.run.result) r.argmax = argmax_location(r.run.result->solution_u);
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// Base problem of the double-well study: p = 4, delta = 2, domain (-0.5, 0.5)^2.
inline Problem double_well_problem(double eps) {
  Problem pb;
  pb.nonlinearity = Nonlinearity::power(4.0);
  pb.potential = Potential::standard_double_well();
  pb.delta = 2.0;
  pb.eps_sc = eps;
  pb.R = 1.0;
  return pb;
}

/// 13 evenly spaced exponents in [4, 7].
inline std::vector<double> default_p_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 12; ++i) g.push_back(4.0 + 0.25 * i);
  return g;
}

}  // namespace qlmpa
