// Acceptance suite: one PASS/FAIL line per criterion.  Optional arguments
// select criteria by number, e.g. `qlmpa_acceptance 10 11 12`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qlmpa/experiments.hpp"

using namespace qlmpa;

namespace {

struct Target {
  double max_v, grad_v, max_u, energy;
};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [fail: " << what << "]";
    }
  }
};

std::string fmt(double x, int digits = 5) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

Problem make_problem(const std::string& p, double V, double R, double delta = 2.0) {
  Problem pb;
  pb.nonlinearity = p == "exp" ? Nonlinearity::exponential() : Nonlinearity::power(std::stod(p));
  pb.potential = Potential::constant(V);
  pb.R = R;
  pb.delta = delta;
  return pb;
}

/// Solves each distinct problem once.
class RunCache {
 public:
  const RunRecord& get(const std::string& p, double V, double R, double delta = 2.0) {
    const std::string key = p + "|" + fmt(V, 17) + "|" + fmt(R, 17) + "|" + fmt(delta, 17);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const Problem pb = make_problem(p, V, R, delta);
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec = detail::run_point(pb, SweepSpec{}.options_for(R));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  solved p=" << p << " V=" << fmt(V) << " R=" << fmt(R) << " delta=" << fmt(delta) << ": "
              << rec.status << ", T=" << fmt(rec.row.energy, 8) << ", " << fmt(secs, 3) << " s\n";
    table_keys_.push_back(key);
    return runs_.emplace(key, std::move(rec)).first->second;
  }

  /// Every run requested through `table`, in request order.
  std::vector<std::pair<std::string, const RunRecord*>> tables() const {
    std::vector<std::pair<std::string, const RunRecord*>> out;
    for (const auto& k : table_keys_)
      if (table_set_.count(k)) out.emplace_back(k, &runs_.at(k));
    return out;
  }

  const RunRecord& table(const std::string& p, double V, double R) {
    const RunRecord& r = get(p, V, R);
    table_set_.insert(p + "|" + fmt(V, 17) + "|" + fmt(R, 17) + "|" + fmt(2.0, 17));
    return r;
  }

 private:
  std::map<std::string, RunRecord> runs_;
  std::vector<std::string> table_keys_;
  std::set<std::string> table_set_;
};

void compare_row(Verdict& v, const std::string& tag, const RunRecord& r, const Target& t, double tol) {
  v.require(r.converged, tag + " converged (" + r.status + ")");
  const double got[4] = {r.row.max_v, r.row.grad_v_l2, r.row.max_u, r.row.energy};
  const double want[4] = {t.max_v, t.grad_v, t.max_u, t.energy};
  const char* names[4] = {"max_v", "grad_v", "max_u", "T"};
  v.detail << " " << tag << ":";
  for (int i = 0; i < 4; ++i) {
    v.detail << " " << fmt(got[i], 4);
    v.require(rel(got[i], want[i]) <= tol, tag + " " + names[i] + " " + fmt(got[i]) + " vs " + fmt(want[i]));
  }
}

void table_rows(Verdict& v, RunCache& cache, const std::string& p, double V,
                const std::vector<std::pair<double, Target>>& rows, double tol) {
  for (const auto& [R, t] : rows) compare_row(v, "R=" + fmt(R), cache.table(p, V, R), t, tol);
}

void stabilization(Verdict& v, RunCache& cache, const std::string& p, double V) {
  const double a = cache.table(p, V, 10.0).row.energy;
  const double b = cache.table(p, V, 30.0).row.energy;
  const double gap = std::abs(a - b) / a;
  v.detail << " |T10-T30|/T10=" << fmt(gap, 3);
  v.require(gap <= 0.01, "stabilization between R=10 and R=30");
}

/// Requests every table run so criteria over all of them work when selected alone.
void ensure_tables(RunCache& cache) {
  for (double R : {1.0, 5.0, 10.0, 30.0}) cache.table("4", 0.0, R);
  for (const std::string p : {"6"})
    for (double R : {5.0, 10.0, 30.0}) cache.table(p, 0.0, R);
  for (const std::string p : {"4", "6"})
    for (double R : {5.0, 10.0, 30.0}) cache.table(p, 10.0, R);
  cache.table("exp", 0.0, 5.0);
  cache.table("exp", 0.0, 30.0);
  cache.table("exp", 10.0, 5.0);
}

FeFunction random_smooth(const SpacePtr& s, std::mt19937& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double R = s->mesh().R;
  double a[3][3];
  for (auto& row : a)
    for (double& x : row) x = u(rng);
  const double pi = std::numbers::pi;
  return interpolate(s, [&](const Point& x) {
    double v = 0.0;
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l)
        v += a[k][l] / ((k + 1) * (l + 1)) * std::sin((k + 1) * pi * (x[0] / R + 0.5)) *
             std::sin((l + 1) * pi * (x[1] / R + 0.5));
    return amplitude * v;
  });
}

/// Largest |v(x) - v(mirror x)| over both axis reflections.
double asymmetry(const FeFunction& v) {
  const Mesh& m = v.mesh();
  const double scale = 1e9 / m.R;
  auto key = [scale](double x, double y) { return std::pair{std::llround(x * scale), std::llround(y * scale)}; };
  std::map<std::pair<long long, long long>, Eigen::Index> index;
  for (std::size_t i = 0; i < m.node_count(); ++i) index[key(m.nodes[i][0], m.nodes[i][1])] = static_cast<Eigen::Index>(i);
  double worst = 0.0;
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    const auto& x = m.nodes[i];
    for (const auto& k : {key(-x[0], x[1]), key(x[0], -x[1])}) {
      const auto it = index.find(k);
      if (it == index.end()) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, std::abs(v[static_cast<Eigen::Index>(i)] - v[it->second]));
    }
  }
  return worst;
}

using Criterion = std::function<void(Verdict&, RunCache&)>;

std::vector<std::pair<int, Criterion>> criteria() {
  std::vector<std::pair<int, Criterion>> c;

  c.emplace_back(1, [](Verdict& v, RunCache& cache) {
    table_rows(v, cache, "4", 0.0,
               {{5.0, {2.97, 5.89, 1.77, 6.75}}, {10.0, {1.17, 2.19, 0.94, 1.19}}, {30.0, {0.45, 0.80, 0.42, 0.18}}},
               0.05);
    const RunRecord& r1 = cache.table("4", 0.0, 1.0);
    v.require(r1.converged, "R=1 converged");
    v.detail << " R=1: T=" << fmt(r1.row.energy, 6);
    v.require(rel(r1.row.energy, 78148.0) <= 0.15, "R=1 energy within 15% of 78148");
  });

  c.emplace_back(2, [](Verdict& v, RunCache& cache) {
    table_rows(v, cache, "6", 0.0,
               {{5.0, {2.34, 4.15, 1.52, 5.00}}, {10.0, {1.46, 2.52, 1.11, 1.97}}, {30.0, {0.80, 1.32, 0.70, 0.58}}},
               0.05);
  });

  c.emplace_back(3, [](Verdict& v, RunCache& cache) {
    table_rows(v, cache, "4", 10.0,
               {{5.0, {11.6, 20.9, 3.87, 217.0}}, {10.0, {11.6, 20.8, 3.87, 217.0}}, {30.0, {11.6, 20.8, 3.87, 216.7}}},
               0.05);
    stabilization(v, cache, "4", 10.0);
  });

  c.emplace_back(4, [](Verdict& v, RunCache& cache) {
    table_rows(v, cache, "6", 10.0, {{5.0, {5.98, 9.73, 2.68, 47.3}}}, 0.05);
    stabilization(v, cache, "6", 10.0);
  });

  c.emplace_back(5, [](Verdict& v, RunCache& cache) {
    table_rows(v, cache, "exp", 0.0, {{5.0, {1.85, 3.76, 1.30, 2.02}}}, 0.07);
    table_rows(v, cache, "exp", 10.0, {{5.0, {6.63, 9.10, 2.84, 41.47}}}, 0.07);
    const RunRecord& r30 = cache.table("exp", 0.0, 30.0);
    v.require(r30.converged, "exp V=0 R=30 converged");
    v.detail << " exp V=0 R=30: T=" << fmt(r30.row.energy, 4);
    v.require(r30.row.energy < 0.01, "exp V=0 R=30 energy below 0.01");
  });

  c.emplace_back(6, [](Verdict& v, RunCache& cache) {
    int ordered = 0;
    const auto grid = default_p_grid();
    for (double p : grid) {
      double E[3], M[3];
      bool ok = true;
      for (int d = 0; d < 3; ++d) {
        const RunRecord& r = cache.get(fmt(p, 17), 0.0, 1.0, d);
        ok = ok && r.converged;
        E[d] = r.result ? energy_E(make_problem(fmt(p, 17), 0.0, 1.0, d), r.result->solution_u) : NAN;
        M[d] = r.row.max_u;
      }
      const bool o = ok && E[0] < E[1] && E[1] < E[2] && M[0] < M[1] && M[1] < M[2];
      if (!o)
        v.require(false, "p=" + fmt(p) + " E " + fmt(E[0]) + "/" + fmt(E[1]) + "/" + fmt(E[2]) + " |u| " + fmt(M[0]) +
                             "/" + fmt(M[1]) + "/" + fmt(M[2]));
      ordered += o;
    }
    v.detail << " ordered at " << ordered << "/" << grid.size() << " exponents;";
    const RunRecord& end = cache.get("4", 0.0, 1.0, 2.0);
    const double E = end.result ? energy_E(make_problem("4", 0.0, 1.0), end.result->solution_u) : NAN;
    v.detail << " E(p=4, delta=2)=" << fmt(E, 6);
    v.require(rel(E, 78148.0) <= 0.15, "delta=2 p=4 endpoint within 15% of 78148");
  });

  c.emplace_back(7, [](Verdict& v, RunCache&) {
    SweepSpec s;
    s.kind = SweepSpec::Kind::double_well;
    s.base = double_well_problem(0.05);
    s.eps_list = {0.05, 0.25};
    const auto runs = run_double_well(s);
    const Point c{-0.2, 0.2}, c2{0.3, -0.2};
    auto dist = [](const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); };
    const DoubleWellRun* near_c = nullptr;
    const DoubleWellRun* near_c2 = nullptr;
    const DoubleWellRun* wide[2] = {nullptr, nullptr};
    for (const auto& r : runs) {
      v.require(r.run.converged, "eps=" + fmt(r.eps) + " " + r.label + " converged");
      v.detail << " eps=" << fmt(r.eps) << "/" << r.label << ": argmax (" << fmt(r.argmax[0], 3) << ","
               << fmt(r.argmax[1], 3) << ") T=" << fmt(r.run.row.energy);
      if (r.eps == 0.05 && r.label == "default") near_c = &r;
      if (r.eps == 0.05 && r.label == "localized") near_c2 = &r;
      if (r.eps == 0.25) wide[r.label == "default" ? 0 : 1] = &r;
    }
    if (!near_c || !near_c2 || !wide[0] || !wide[1]) {
      v.require(false, "missing runs");
      return;
    }
    v.require(dist(near_c->argmax, c) <= 0.1, "default guess peak near c");
    v.require(dist(near_c2->argmax, c2) <= 0.1, "localized guess peak near c'");
    v.require(near_c->run.row.energy < near_c2->run.row.energy, "energy near c below energy near c'");
    const ReportRow& a = wide[0]->run.row;
    const ReportRow& b = wide[1]->run.row;
    for (auto [x, y] : {std::pair{a.max_v, b.max_v}, {a.grad_v_l2, b.grad_v_l2}, {a.max_u, b.max_u}, {a.energy, b.energy}})
      v.require(rel(y, x) <= 0.01, "eps=0.25 rows agree within 1%");
  });

  c.emplace_back(8, [](Verdict& v, RunCache&) {
    SweepSpec s;
    s.kind = SweepSpec::Kind::bifurcation;
    s.base = make_problem("4", 0.0, 10.0);
    s.V_grid = {10.0, 7.0, 5.0, 3.0, 2.0, 1.0, 0.5, 0.3, 0.2, 0.1};
    const Curve curve = run_bifurcation(s);
    for (const auto& pt : curve.points) {
      v.require(pt.run.converged, "V=" + fmt(pt.x) + " converged");
      v.detail << " " << fmt(pt.x) << ":" << fmt(pt.energy, 4);
    }
    const double E10 = curve.points.front().energy;
    v.require(rel(E10, 217.0) <= 0.05, "V=10 energy within 5% of 217");
    for (std::size_t i = 1; i < curve.points.size(); ++i)
      v.require(curve.points[i].energy < curve.points[i - 1].energy, "energy increasing in V");
    v.require(curve.points.back().energy < 0.05 * E10, "V=0.1 energy below 5% of V=10");
  });

  c.emplace_back(9, [](Verdict& v, RunCache& cache) {
    ensure_tables(cache);
    double worst = 0.0;
    for (const auto& [key, r] : cache.tables()) {
      v.require(r->converged, key + " converged");
      worst = std::max(worst, r->row.grad_norm);
      v.require(r->row.grad_norm <= 1e-7, key + " gradient norm " + fmt(r->row.grad_norm));
    }
    v.detail << " " << cache.tables().size() << " table runs, largest gradient norm " << fmt(worst, 3);
    v.require(!cache.tables().empty(), "no table runs");
  });

  c.emplace_back(10, [](Verdict& v, RunCache&) {
    for (auto [n, bound] : {std::pair{64, 2e-3}, {128, 5e-4}}) {
      const SpacePtr s = make_space(build_mesh(1.0, n));
      std::mt19937 rng(static_cast<unsigned>(n));
      std::uniform_real_distribution<double> amp(0.1, 4.0), pick(0.0, 1.0);
      double worst = 0.0;
      for (int i = 0; i < 200; ++i) {
        const std::string p = pick(rng) < 0.5 ? "4" : "6";
        const double V = pick(rng) < 0.5 ? 0.0 : 10.0;
        Problem pb = make_problem(p, V, 1.0);
        if (pick(rng) < 0.25) pb.eps_sc = 0.25;
        const FeFunction w = random_smooth(s, rng, amp(rng));
        const double T = energy_T(pb, w);
        const double E = energy_E(pb, apply_transform(w, pb.delta));
        worst = std::max(worst, std::abs(E - T) / std::max(1.0, std::abs(T)));
      }
      v.detail << " n=" << n << ": " << fmt(worst, 3);
      v.require(worst <= bound, "identity gap at n=" + std::to_string(n));
    }
  });

  c.emplace_back(11, [](Verdict& v, RunCache&) {
    std::mt19937 rng(2718);
    std::uniform_real_distribution<double> amp(0.2, 3.0);
    const SpacePtr s = make_space(build_mesh(5.0, 24));
    Problem dw = make_problem("4", 0.0, 5.0);
    dw.potential = Potential::standard_double_well();
    dw.eps_sc = 0.3;
    const std::vector<Problem> problems{make_problem("4", 0.0, 5.0), make_problem("6", 10.0, 5.0),
                                        make_problem("4", 10.0, 5.0, 1.0), make_problem("exp", 0.0, 5.0), dw};
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Problem& pb = problems[static_cast<std::size_t>(i) % problems.size()];
      const FeFunction w = random_smooth(s, rng, amp(rng));
      const FeFunction phi = random_smooth(s, rng, 1.0);
      const double h = 1e-5 * std::sqrt(dirichlet_energy(w));
      const double fd = (energy_T(pb, FeFunction(s, w.values() + h * phi.values())) -
                         energy_T(pb, FeFunction(s, w.values() - h * phi.values()))) /
                        (2 * h);
      const double an = h10_inner(pb, gradient_T(pb, w), phi);
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
    }
    v.detail << " worst relative error " << fmt(worst, 3);
    v.require(worst <= 1e-5, "finite-difference agreement");
  });

  c.emplace_back(12, [](Verdict& v, RunCache&) {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> e(-6.0, 3.0);
    double trip = 0.0;
    for (double delta : {0.0, 1.0, 2.0})
      for (int i = 0; i < 2000; ++i) {
        const double u = std::pow(10.0, e(rng));
        trip = std::max(trip, std::abs(r_eval(r_inverse(u, delta), delta) - u) / (1.0 + u));
        trip = std::max(trip, std::abs(r_eval(r_inverse(-u, delta), delta) + u) / (1.0 + u));
      }
    std::vector<double> grid;
    for (double x = 0.0; x <= 500.0; x += 0.5) grid.push_back(x);
    double ode = 0.0;
    for (double delta : {1.0, 2.0}) {
      const auto y = r_integrate_cauchy(grid, delta);
      for (std::size_t i = 0; i < grid.size(); ++i) ode = std::max(ode, std::abs(y[i] - r_eval(grid[i], delta)));
    }
    v.detail << " round trip " << fmt(trip, 3) << ", ODE " << fmt(ode, 3);
    v.require(trip <= 1e-10, "round trip");
    v.require(ode <= 1e-8, "ODE cross-check");
  });

  c.emplace_back(13, [](Verdict& v, RunCache&) {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const SpacePtr s = make_space(build_mesh(5.0, 16));
    const Problem pb = make_problem("4", 0.0, 5.0);
    double worst_t = 0.0, worst_idem = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      Vector w(static_cast<Eigen::Index>(s->node_count()));
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = s->mesh().boundary[static_cast<std::size_t>(i)] ? 0.0 : u(rng);
      const FeFunction wf(s, w);
      double t1 = 1.0;
      while (energy_T(pb, FeFunction(s, t1 * w)) > 0.0) t1 *= 2.0;
      const int N = 10000;
      const double dt = t1 / N;
      double best_t = 0.0, best = -std::numeric_limits<double>::infinity();
      for (int i = 0; i <= N; ++i) {
        const double T = energy_T(pb, FeFunction(s, (i * dt) * w));
        if (T > best) best = T, best_t = i * dt;
      }
      const PeakResult r = peak_select(pb, wf);
      worst_t = std::max(worst_t, std::abs(r.t_star - best_t) / dt);
      worst_idem = std::max(worst_idem, std::abs(peak_select(pb, r.peaked).t_star - 1.0));
      const FeFunction mixed(s, (w.array() - 0.5).matrix());
      const FeFunction once = cone_project(mixed);
      v.require(cone_project(once).values() == once.values(), "cone projection idempotent");
    }
    v.detail << " brute-force gap " << fmt(worst_t, 3) << " grid cells, |P(Pu) - Pu| t-offset " << fmt(worst_idem, 3);
    v.require(worst_t <= 1.0, "peak within one grid cell of the scan maximum");
    v.require(worst_idem <= 1e-6, "peak selection idempotent");
  });

  c.emplace_back(14, [](Verdict& v, RunCache& cache) {
    ensure_tables(cache);
    std::size_t steps = 0, ok = 0;
    for (const auto& [key, r] : cache.tables()) {
      if (!r->result) continue;
      for (const auto& h : r->result->history)
        if (h.iter > 0) {
          ++steps;
          ok += h.armijo_ok;
        }
    }
    v.detail << " " << ok << "/" << steps << " accepted steps satisfy the sufficient-decrease inequality";
    v.require(steps > 0 && ok == steps, "inequality audit");
  });

  c.emplace_back(15, [](Verdict& v, RunCache& cache) {
    ensure_tables(cache);
    double worst = 0.0;
    for (const auto& [key, r] : cache.tables()) {
      if (!r->result) continue;
      const FeFunction& sol = r->result->solution_v;
      const double a = asymmetry(sol) / sol.values().cwiseAbs().maxCoeff();
      worst = std::max(worst, a);
      v.require(a <= 1e-3, key + " asymmetry " + fmt(a));
    }
    v.detail << " worst relative asymmetry " << fmt(worst, 3);
    v.require(!cache.tables().empty(), "no table runs");
  });

  c.emplace_back(16, [](Verdict& v, RunCache&) {
    std::size_t checked = 0;
    for (double p : {3.0, 4.0, 6.0})
      for (double V : {0.0, 1.0, 10.0}) {
        const Problem pb = make_problem(fmt(p, 17), V, 1.0);
        double prev = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 10000; ++i) {
          const double x = 1e-4 + (50.0 - 1e-4) * (i + 1) / 10000.0;
          const double q = f_local(pb, V, x) / x;
          if (q < prev - 1e-12 * std::abs(prev)) {
            v.require(false, "p=" + fmt(p) + " V=" + fmt(V) + " at v=" + fmt(x));
            break;
          }
          prev = q;
          ++checked;
        }
      }
    v.detail << " f(v)/v nondecreasing at " << checked << " grid points";
  });

  c.emplace_back(17, [](Verdict& v, RunCache& cache) {
    for (const std::string p : {"4", "6", "exp"}) {
      double prev = std::numeric_limits<double>::infinity();
      v.detail << " p=" << p << ":";
      for (double R : {5.0, 10.0, 30.0}) {
        const RunRecord& r = cache.get(p, 0.0, R);
        if (!r.result) {
          v.require(false, "p=" + p + " R=" + fmt(R) + " failed");
          break;
        }
        const double d = std::abs(pohozaev_diag(make_problem(p, 0.0, R), r.result->solution_v));
        v.detail << " " << fmt(d, 4);
        v.require(d < prev, "p=" + p + " magnitude decreasing at R=" + fmt(R));
        prev = d;
      }
    }
  });

  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  RunCache cache;
  int failures = 0;
  for (auto& [id, check] : criteria()) {
    if (!selected.empty() && !selected.count(id)) continue;
    std::cerr << "criterion " << id << " ...\n";
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      check(v, cache);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ":" << v.detail.str() << " (" << fmt(secs, 3)
              << " s)" << std::endl;
    failures += !v.pass;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << '\n';
  return failures ? 1 : 0;
}
