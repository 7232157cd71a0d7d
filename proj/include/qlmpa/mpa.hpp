#pragma once

// Mountain pass algorithm with peak selection and projection on the cone of
// nonnegative functions:
//
//   u_{n+1} = P(P_K(u_n - s_n g_n / |g_n|)),   g_n the Riesz gradient of T at u_n,
//
// where P(w) = t* w maximizes T on the half line {t w : t > 0}, and s_n is
// accepted only when T(u_{n+1}) - T(u_n) < -s_n |g_n| / 2.  A converged iterate
// is polished by Newton's method on the discrete residual.

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qlmpa/brent.hpp"
#include "qlmpa/error.hpp"
#include "qlmpa/fem.hpp"
#include "qlmpa/mesh.hpp"
#include "qlmpa/model.hpp"

namespace qlmpa {

struct MpaConfig {
  double grad_tol = 1e-2;
  int max_iter = 1000;
  /// Adaptive refinement cadence in iterations; 0 disables.
  int refine_every = 10;
  double refine_fraction = 0.2;
  /// No further adaptive refinement once the mesh has this many nodes.
  std::size_t refine_max_nodes = 200'000;
  int newton_iters = 8;
  /// Relative tolerance of the maximization along rays.
  double peak_tol = 1e-10;
  /// Ray tolerance while the stepsize search probes candidates; the accepted
  /// candidate is re-peaked with peak_tol.
  double search_peak_tol = 1e-6;
  /// Largest stepsize tried by the line search.
  double s_max = 1.0;
  /// Relative tolerance of the Brent stepsize search.
  double step_tol = 1e-4;
  /// When the best stepsize sits at s_max, keep doubling the search interval
  /// while phi decreases.
  bool expand_steps = true;

  void validate() const {
    std::string errors;
    if (!(grad_tol > 0.0)) errors += "grad_tol must be positive; ";
    if (max_iter < 1) errors += "max_iter must be positive; ";
    if (refine_every < 0) errors += "refine_every must be nonnegative; ";
    if (!(refine_fraction >= 0.0 && refine_fraction <= 1.0)) errors += "refine_fraction must lie in [0, 1]; ";
    if (newton_iters < 0) errors += "newton_iters must be nonnegative; ";
    if (!(peak_tol > 0.0)) errors += "peak_tol must be positive; ";
    if (!(search_peak_tol > 0.0)) errors += "search_peak_tol must be positive; ";
    if (!(s_max > 0.0)) errors += "s_max must be positive; ";
    if (!(step_tol > 0.0)) errors += "step_tol must be positive; ";
    if (!errors.empty()) throw InvalidArgument(errors.substr(0, errors.size() - 2));
  }
};

struct IterationRecord {
  int iter = 0;
  double energy = 0.0;
  double grad_norm = 0.0;
  /// Stepsize that produced this iterate (0 for the initial one and after refinement).
  double step = 0.0;
  std::size_t nodes = 0;
  /// Increments whenever the mesh changes.
  int mesh_segment = 0;
  /// Descent inequality for the step producing this iterate.
  bool armijo_ok = true;
};

struct ReportRow {
  double R = 0.0;
  std::string p_label;
  std::string V_label;
  double delta = 0.0;
  double eps_sc = 0.0;
  double max_v = 0.0;
  double grad_v_l2 = 0.0;
  double max_u = 0.0;
  double energy = 0.0;
  double grad_norm = 0.0;
  long iterations = 0;

  bool operator==(const ReportRow&) const = default;
};

struct MpaResult {
  FeFunction solution_v;
  FeFunction solution_u;
  std::vector<IterationRecord> history;
  /// H^1_0 gradient norms along the Newton polish, starting with the MPA iterate.
  std::vector<double> newton_residuals;
  ReportRow report;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Nodal truncation max(v, 0).
inline FeFunction cone_project(const FeFunction& v) {
  return FeFunction(v.space(), v.values().cwiseMax(0.0));
}

/// t -> T(t w) with the quadrature data of w precomputed.
class RayEnergy {
 public:
  RayEnergy(const Problem& pb, const FeFunction& w) : pb_(pb) {
    quadratic_ = pb.eps_sc * pb.eps_sc * dirichlet_energy(w);
    const FeSpace& space = *w.space();
    const auto Ve = detail::edge_potential(pb, space);
    const auto edges = space.edges();
    const auto weights = space.edge_weights();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double we = 0.5 * (w[edges[e][0]] + w[edges[e][1]]);
      if (we == 0.0) continue;  // F(x, 0) = 0
      weight_.push_back(weights[e]);
      potential_.push_back(detail::edge_V(pb, Ve, e));
      value_.push_back(we);
    }
  }

  double operator()(double t) const {
    const double nonlinear = deterministic_sum(value_.size(), [&](std::size_t i) {
      return weight_[i] * F_local(pb_, potential_[i], t * value_[i]);
    });
    return 0.5 * t * t * quadratic_ - nonlinear;
  }

 private:
  const Problem& pb_;
  double quadratic_ = 0.0;
  std::vector<double> weight_, potential_, value_;
};

struct PeakResult {
  double t_star = 0.0;
  FeFunction peaked;
  double energy = 0.0;
  int evaluations = 0;
};

/// Maximizes t -> T(t w) on [0, t1], t1 doubled from 1 until T(t1 w) <= 0.
inline PeakResult peak_select(const Problem& pb, const FeFunction& w, double peak_tol = 1e-10) {
  if (w.is_zero()) throw InvalidArgument("peak_select: function must be nonzero");
  if (w.values().minCoeff() < 0.0) throw InvalidArgument("peak_select: function must be nonnegative");
  const RayEnergy ray(pb, w);
  int evals = 0;
  auto T = [&](double t) {
    ++evals;
    return ray(t);
  };
  constexpr double cap = 1152921504606846976.0;  // 2^60
  double t1 = 1.0;
  double t_positive = 0.0;
  for (;;) {
    double T1 = 0.0;
    try {
      T1 = T(t1);
    } catch (const RangeError&) {
      // Beyond the trusted range of F; T is far below zero there, so bisect
      // back towards the last positive value for an in-range bracket end.
      double lo = t_positive, hi = t1;
      bool found = false;
      for (int k = 0; k < 200 && !found; ++k) {
        const double mid = 0.5 * (lo + hi);
        try {
          if (T(mid) <= 0.0) {
            t1 = mid;
            found = true;
          } else {
            lo = mid;
          }
        } catch (const RangeError&) {
          hi = mid;
        }
      }
      if (!found) throw;
      break;
    }
    if (T1 <= 0.0) break;
    t_positive = t1;
    t1 *= 2.0;
    if (t1 > cap) throw NoSignChangeError("peak_select: no sign change on ray up to t = 2^60");
  }
  // Shrink the bracket while it still ends at a nonpositive value; the maximum
  // stays inside [0, t1].
  while (t1 > 1.0 / cap && T(0.5 * t1) <= 0.0) t1 *= 0.5;
  if (t1 <= 1.0 / cap) throw NoSignChangeError("peak_select: T(t w) <= 0 for all tested t");
  const double start = (1.0 < t1) ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  const auto best = brent_maximize(T, 0.0, t1, peak_tol, 1e-15 * t1, 500, start);
  PeakResult res;
  res.t_star = best.x;
  res.peaked = FeFunction(w.space(), best.x * w.values());
  res.energy = best.fx;
  res.evaluations = evals + best.evaluations;
  return res;
}

struct StepResult {
  FeFunction u_next;
  double step = 0.0;
  double energy_before = 0.0;
  double energy_after = 0.0;
  bool used_fallback = false;
  int evaluations = 0;
};

/// One MPA update from u_n (in Ran P and K) with Riesz gradient g of norm gnorm.
inline StepResult mpa_step(const Problem& pb, const MpaConfig& cfg, const FeFunction& u_n, const FeFunction& g,
                           double gnorm) {
  if (!(gnorm > 0.0)) throw InvalidArgument("mpa_step: gradient must be nonzero");
  const double T_n = energy_T(pb, u_n);
  int evals = 0;
  auto candidate = [&](double s, double tol) -> std::optional<PeakResult> {
    ++evals;
    FeFunction w(u_n.space(), (u_n.values() - (s / gnorm) * g.values()).cwiseMax(0.0));
    if (w.is_zero()) return std::nullopt;
    try {
      return peak_select(pb, w, tol);
    } catch (const NoSignChangeError&) {
      return std::nullopt;
    }
  };
  auto phi = [&](double s) {
    const auto c = candidate(s, cfg.search_peak_tol);
    return c ? c->energy : std::numeric_limits<double>::infinity();
  };
  auto admissible = [&](double s, const PeakResult& c, double& T_next) {
    T_next = energy_T(pb, c.peaked);
    return T_next - T_n < -0.5 * s * gnorm;
  };

  StepResult out;
  out.energy_before = T_n;
  auto best = brent_minimize(phi, 0.0, cfg.s_max, cfg.step_tol, 1e-12 * cfg.s_max, 100);
  if (cfg.expand_steps && best.x >= cfg.s_max * (1.0 - 1e-3)) {
    double s = cfg.s_max;
    double fs = best.fx;
    for (int k = 0; k < 60; ++k) {
      const double f2 = phi(2.0 * s);
      if (!(f2 < fs)) break;
      s *= 2.0;
      fs = f2;
    }
    best = brent_minimize(phi, 0.5 * s, 2.0 * s, cfg.step_tol, 1e-12 * s, 100, s);
  }
  double T_next = 0.0;
  if (best.x > 0.0) {
    if (auto c = candidate(best.x, cfg.peak_tol); c && admissible(best.x, *c, T_next)) {
      out.u_next = std::move(c->peaked);
      out.step = best.x;
      out.energy_after = T_next;
      out.evaluations = evals;
      return out;
    }
  }
  // At a near-quadratic minimizer the decrease sits on the acceptance boundary,
  // so try just below it, then halve (from s_max when it is not positive).
  std::vector<double> trials;
  if (best.x > 0.0) trials.push_back(0.9 * best.x);
  for (double s = best.x > 0.0 ? 0.5 * best.x : cfg.s_max; s >= 1e-12; s *= 0.5) trials.push_back(s);
  for (double s : trials) {
    if (auto c = candidate(s, cfg.peak_tol); c && admissible(s, *c, T_next)) {
      out.u_next = std::move(c->peaked);
      out.step = s;
      out.energy_after = T_next;
      out.used_fallback = true;
      out.evaluations = evals;
      return out;
    }
  }
  throw StalledStepError("mpa_step: no admissible stepsize above 1e-12 (T = " + std::to_string(T_n) +
                         ", |grad T| = " + std::to_string(gnorm) + ")");
}

struct NewtonResult {
  FeFunction v;
  std::vector<double> residuals;
  bool flagged = false;
  std::vector<std::string> warnings;
};

/// Damped Newton iteration on eps^2 K v - b(f(v)) = 0.  Residuals are measured
/// by the H^1_0 norm of the Riesz gradient.
inline NewtonResult newton_refine(const Problem& pb, const FeFunction& v0, int iters) {
  NewtonResult res;
  res.v = v0;
  const FeSpace& space = *v0.space();
  const SpacePtr& sp = v0.space();
  auto residual_norm = [&](const FeFunction& v) { return h10_norm(pb, gradient_T(pb, v)); };
  double current = residual_norm(res.v);
  res.residuals.push_back(current);
  // Below this the residual is dominated by rounding.
  const double scale = 1.0 + h10_norm(pb, res.v);
  const double floor = 1e-13 * scale;
  for (int k = 0; k < iters && current > floor; ++k) {
    const Vector rhs = -(pb.eps_sc * pb.eps_sc * (space.stiffness().matrix() * space.restrict_to_free(res.v.values())) -
                         nonlinear_load(pb, res.v));
    const SparseMatrix J = residual_jacobian(pb, res.v);
    Vector step;
    bool ok = false;
    // The Hessian at a mountain pass point has one negative eigenvalue, so the
    // factorization must handle indefinite matrices.
    {
      Eigen::SimplicialLDLT<SparseMatrix> ldlt(J);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(rhs);
        ok = step.allFinite() && (J * step - rhs).norm() <= 1e-8 * rhs.norm();
      }
    }
    if (!ok) {
      Eigen::SparseLU<SparseMatrix> lu;
      lu.compute(J);
      if (lu.info() == Eigen::Success) {
        step = lu.solve(rhs);
        ok = step.allFinite() && (J * step - rhs).norm() <= 1e-8 * rhs.norm();
      }
    }
    if (!ok) {
      res.warnings.push_back("newton: singular linearization at iteration " + std::to_string(k) +
                             ", gradient step used");
      step = -space.restrict_to_free(gradient_T(pb, res.v).values());
    }
    const Vector full_step = space.extend_from_free(step);
    bool improved = false;
    double lambda = 1.0;
    for (int h = 0; h <= 30; ++h, lambda *= 0.5) {
      FeFunction trial(sp, res.v.values() + lambda * full_step);
      double norm_trial = std::numeric_limits<double>::infinity();
      try {
        norm_trial = residual_norm(trial);
      } catch (const Error&) {
      }
      if (norm_trial < current) {
        res.v = std::move(trial);
        current = norm_trial;
        improved = true;
        break;
      }
    }
    res.residuals.push_back(current);
    if (improved && current <= 1e-11 * scale) break;
    if (!improved) {
      if (current <= 1e-9 * scale) break;
      res.flagged = true;
      res.warnings.push_back("newton: residual did not decrease after 30 halvings");
      break;
    }
  }
  return res;
}

/// Writes "iter T grad_norm s_n nodes" lines.
inline void write_iteration_log(const std::vector<IterationRecord>& history, std::ostream& os) {
  const auto old = os.precision(17);
  for (const auto& h : history)
    os << h.iter << ' ' << h.energy << ' ' << h.grad_norm << ' ' << h.step << ' ' << h.nodes << '\n';
  os.precision(old);
}

/// Element-wise H^1 seminorm of g scaled by eps: sqrt(eps^2 |grad g|^2 |T|).
inline std::vector<double> gradient_indicator(const Problem& pb, const FeFunction& g) {
  const Mesh& m = g.mesh();
  const auto grads = g.space()->gradients();
  std::vector<double> out(m.triangles.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto& tri = m.triangles[t];
    double gx = 0.0, gy = 0.0;
    for (int k = 0; k < 3; ++k) {
      gx += g[tri[k]] * grads[t][k][0];
      gy += g[tri[k]] * grads[t][k][1];
    }
    out[t] = pb.eps_sc * std::sqrt((gx * gx + gy * gy) * m.area(t));
  }
  return out;
}

inline ReportRow make_report(const Problem& pb, const FeFunction& v, const FeFunction& u, double grad_norm,
                             long iterations) {
  ReportRow row;
  row.R = pb.R;
  row.p_label = pb.nonlinearity.label();
  row.V_label = pb.potential.label();
  row.delta = pb.delta;
  row.eps_sc = pb.eps_sc;
  const Norms nv = norms(v);
  row.max_v = nv.max_abs;
  row.grad_v_l2 = nv.grad_l2;
  row.max_u = u.values().cwiseAbs().maxCoeff();
  row.energy = energy_T(pb, v);
  row.grad_norm = grad_norm;
  row.iterations = iterations;
  return row;
}

/// Nodal r_delta of v.
inline FeFunction apply_transform(const FeFunction& v, double delta) {
  Vector u(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) u[i] = r_eval(v[i], delta);
  return FeFunction(v.space(), std::move(u));
}

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Algorithm driver: peak the projected initial guess, iterate MPA steps until
/// |grad T| <= grad_tol, refine adaptively on the configured cadence, then
/// polish with Newton.
inline MpaResult run_mpa(const Problem& pb, const MpaConfig& cfg, const FeFunction& initial,
                         const IterationCallback& on_iteration = {}) {
  pb.validate();
  cfg.validate();
  const FeFunction start = cone_project(initial);
  if (start.is_zero()) throw InvalidArgument("run_mpa: initial guess must be nonzero and nonnegative somewhere");
  if (!start.is_conforming()) throw InvalidArgument("run_mpa: initial guess must vanish on the boundary");

  MpaResult res;
  FeFunction u = peak_select(pb, start, cfg.peak_tol).peaked;
  int segment = 0;
  double last_step = 0.0;
  bool last_ok = true;
  int iter = 0;
  double gnorm = 0.0;
  for (;; ++iter) {
    FeFunction g = gradient_T(pb, u);
    gnorm = h10_norm(pb, g);

    if (cfg.refine_every > 0 && iter > 0 && iter % cfg.refine_every == 0 && gnorm > cfg.grad_tol &&
        u.space()->node_count() < cfg.refine_max_nodes) {
      const auto indicator = gradient_indicator(pb, g);
      SpacePtr fine = make_space(refine_adaptive(u.mesh(), indicator, cfg.refine_fraction));
      if (fine->node_count() != u.space()->node_count()) {
        u = peak_select(pb, prolong(u, fine), cfg.peak_tol).peaked;
        g = gradient_T(pb, u);
        gnorm = h10_norm(pb, g);
        ++segment;
        last_step = 0.0;
        last_ok = true;
      }
    }

    IterationRecord rec{iter, energy_T(pb, u), gnorm, last_step, u.space()->node_count(), segment, last_ok};
    res.history.push_back(rec);
    if (on_iteration) on_iteration(rec);
    if (gnorm <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    if (iter >= cfg.max_iter) break;
    StepResult step;
    try {
      step = mpa_step(pb, cfg, u, g, gnorm);
    } catch (const StalledStepError& e) {
      res.warnings.push_back(e.what());
      break;
    }
    last_step = step.step;
    last_ok = step.energy_after - step.energy_before < -0.5 * step.step * gnorm;
    u = std::move(step.u_next);
  }

  double final_norm = gnorm;
  if (res.converged && cfg.newton_iters > 0) {
    NewtonResult nr = newton_refine(pb, u, cfg.newton_iters);
    res.newton_residuals = nr.residuals;
    for (auto& w : nr.warnings) res.warnings.push_back(std::move(w));
    if (nr.residuals.back() < gnorm) {
      u = std::move(nr.v);
      final_norm = nr.residuals.back();
    }
  } else if (!res.converged) {
    res.warnings.push_back("run_mpa: not converged after " + std::to_string(iter) + " iterations");
  }

  res.solution_v = u;
  res.solution_u = pb.transform ? apply_transform(u, pb.delta) : u;
  res.report = make_report(pb, res.solution_v, res.solution_u, final_norm, iter);
  return res;
}

/// (0.25 - (x1/R)^2) (0.25 - (x2/R)^2).
inline FeFunction default_initial_guess(const SpacePtr& space) {
  const double R = space->mesh().R;
  return interpolate(space, [R](const Point& x) {
    return (0.25 - (x[0] / R) * (x[0] / R)) * (0.25 - (x[1] / R) * (x[1] / R));
  });
}

/// max{0, radius2 - |x - c|^2}.
inline FeFunction localized_initial_guess(const SpacePtr& space, const Point& c, double radius2 = 0.1) {
  return interpolate(space, [c, radius2](const Point& x) {
    const double dx = x[0] - c[0], dy = x[1] - c[1];
    return std::max(0.0, radius2 - dx * dx - dy * dy);
  });
}

}  // namespace qlmpa
