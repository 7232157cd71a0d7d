#pragma once

// Problem definition and the variational calculus of the transformed functional
//
//   T(v) = eps^2/2 int |grad v|^2 - int F(x, v),
//   f(x, v) = r'(v) (g(r(v)) - V(x) r(v)),   F(x, v) = G(r(v)) - V(x) r(v)^2 / 2,
//
// whose critical points v give solutions u = r(v) of the quasi-linear equation
// -eps^2 (Delta u + u Delta u^2) + V u = g(u).

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qlmpa/error.hpp"
#include "qlmpa/fem.hpp"
#include "qlmpa/transform.hpp"

namespace qlmpa {

/// g(u) = |u|^{p-1} u, or the odd extension sign(u) (exp(u^2) - 1).
class Nonlinearity {
 public:
  enum class Kind { power, exponential };

  static Nonlinearity power(double p) {
    if (!(p > 1.0)) throw InvalidArgument("p must exceed 1");
    return Nonlinearity(Kind::power, p);
  }
  static Nonlinearity exponential() { return Nonlinearity(Kind::exponential, 0.0); }

  Kind kind() const { return kind_; }
  double exponent() const { return p_; }

  double g(double u) const {
    const double a = std::abs(u);
    const double m = kind_ == Kind::power ? std::pow(a, p_) : std::expm1(a * a);
    return std::copysign(m, u);
  }

  double dg(double u) const {
    const double a = std::abs(u);
    return kind_ == Kind::power ? p_ * std::pow(a, p_ - 1.0) : 2.0 * a * std::exp(a * a);
  }

  /// G(u) = int_0^u g.
  double primitive(double u) const {
    const double a = std::abs(u);
    if (kind_ == Kind::power) return std::pow(a, p_ + 1.0) / (p_ + 1.0);
    // sum_{k>=1} a^{2k+1} / (k! (2k+1))
    if (a > 8.0) throw RangeError("exponential primitive: argument " + std::to_string(a) + " exceeds 8");
    const double a2 = a * a;
    double power = a;  // a^{2k+1} / k!
    double sum = 0.0;
    for (int k = 1; k < 400; ++k) {
      power *= a2 / k;
      const double term = power / (2 * k + 1);
      sum += term;
      if (term < 1e-16 * sum) break;
    }
    return sum;
  }

  /// "4", "6", "exp", ...
  std::string label() const {
    if (kind_ == Kind::exponential) return "exp";
    std::ostringstream os;
    os.precision(17);
    os << p_;
    return os.str();
  }

 private:
  Nonlinearity(Kind k, double p) : kind_(k), p_(p) {}
  Kind kind_;
  double p_;
};

struct Well {
  Point center;
  double depth;
  double sharpness;
};

/// V(x): constant, a sum of Gaussian wells below a base level, or tabulated nodal values.
class Potential {
 public:
  enum class Kind { constant, double_well, tabulated };

  static Potential constant(double v0) {
    if (!(v0 >= 0.0)) throw InvalidArgument("V must be nonnegative");
    Potential p(Kind::constant);
    p.base_ = v0;
    return p;
  }

  static Potential double_well(double base, std::vector<Well> wells) {
    Potential p(Kind::double_well);
    p.base_ = base;
    p.wells_ = std::move(wells);
    return p;
  }

  /// 10 - 8 exp(-20 |x - c|^2) - 5 exp(-30 |x - c'|^2), c = (-0.2, 0.2), c' = (0.3, -0.2).
  static Potential standard_double_well() {
    return double_well(10.0, {Well{{-0.2, 0.2}, 8.0, 20.0}, Well{{0.3, -0.2}, 5.0, 30.0}});
  }

  static Potential tabulated(SpacePtr space, Vector nodal) {
    if (nodal.size() != static_cast<Eigen::Index>(space->node_count()))
      throw InvalidArgument("tabulated potential: length must equal node count");
    Potential p(Kind::tabulated);
    p.table_ = std::make_shared<const FeFunction>(std::move(space), std::move(nodal));
    return p;
  }

  Kind kind() const { return kind_; }
  bool is_constant() const { return kind_ == Kind::constant; }
  double constant_value() const { return base_; }
  const std::vector<Well>& wells() const { return wells_; }

  double value(const Point& x) const {
    switch (kind_) {
      case Kind::constant:
        return base_;
      case Kind::double_well: {
        double v = base_;
        for (const auto& w : wells_) {
          const double dx = x[0] - w.center[0], dy = x[1] - w.center[1];
          v -= w.depth * std::exp(-w.sharpness * (dx * dx + dy * dy));
        }
        return v;
      }
      case Kind::tabulated:
        return locate_and_interpolate(x);
    }
    return base_;
  }

  /// V at the edge midpoints of a space.
  std::vector<double> at_edges(const FeSpace& space) const {
    if (kind_ == Kind::tabulated && &table_->space()->mesh() == &space.mesh())
      return space.edge_values(table_->values());
    std::vector<double> out(space.edge_count());
    const auto mids = space.edge_midpoints();
    for (std::size_t e = 0; e < out.size(); ++e) out[e] = value(mids[e]);
    return out;
  }

  std::string label() const {
    if (kind_ == Kind::double_well) return "doublewell";
    if (kind_ == Kind::tabulated) return "tabulated";
    std::ostringstream os;
    os.precision(17);
    os << base_;
    return os.str();
  }

 private:
  explicit Potential(Kind k) : kind_(k) {}

  double locate_and_interpolate(const Point& x) const {
    const Mesh& m = table_->mesh();
    for (const auto& tri : m.triangles) {
      const Point& a = m.nodes[tri[0]];
      const Point& b = m.nodes[tri[1]];
      const Point& c = m.nodes[tri[2]];
      const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
      const double l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
      const double l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
      const double l0 = 1.0 - l1 - l2;
      constexpr double tol = -1e-12;
      if (l0 >= tol && l1 >= tol && l2 >= tol)
        return l0 * (*table_)[tri[0]] + l1 * (*table_)[tri[1]] + l2 * (*table_)[tri[2]];
    }
    throw InvalidArgument("tabulated potential: point outside the mesh");
  }

  Kind kind_;
  double base_ = 0.0;
  std::vector<Well> wells_;
  std::shared_ptr<const FeFunction> table_;
};

struct Problem {
  Nonlinearity nonlinearity = Nonlinearity::power(4.0);
  Potential potential = Potential::constant(0.0);
  double delta = 2.0;
  double eps_sc = 1.0;
  double R = 1.0;
  /// When false the semilinear problem is solved directly (u = v); requires delta = 0.
  bool transform = true;

  void validate() const {
    std::string errors;
    if (!transform && delta != 0.0) errors += "the transform can only be disabled for delta = 0; ";
    if (!(eps_sc > 0.0)) errors += "eps_sc must be positive; ";
    if (!(delta >= 0.0)) errors += "delta must be nonnegative; ";
    if (!(R > 0.0)) errors += "R must be positive; ";
    if (!errors.empty()) throw InvalidArgument(errors.substr(0, errors.size() - 2));
  }
};

// Pointwise quantities with the potential already evaluated.

inline double f_local(const Problem& pb, double V, double v) {
  if (!pb.transform) return pb.nonlinearity.g(v) - V * v;
  const double r = r_eval(v, pb.delta);
  const double rp = 1.0 / std::sqrt(1.0 + pb.delta * r * r);
  return rp * (pb.nonlinearity.g(r) - V * r);
}

inline double F_local(const Problem& pb, double V, double v) {
  if (!pb.transform) return pb.nonlinearity.primitive(v) - 0.5 * V * v * v;
  const double r = r_eval(v, pb.delta);
  return pb.nonlinearity.primitive(r) - 0.5 * V * r * r;
}

/// d f / d v = r'' (g(r) - V r) + r'^2 (g'(r) - V), with r'' = -delta r r'^4.
inline double df_local(const Problem& pb, double V, double v) {
  if (!pb.transform) return pb.nonlinearity.dg(v) - V;
  const double r = r_eval(v, pb.delta);
  const double rp = 1.0 / std::sqrt(1.0 + pb.delta * r * r);
  const double rp2 = rp * rp;
  const double rpp = -pb.delta * r * rp2 * rp2;
  return rpp * (pb.nonlinearity.g(r) - V * r) + rp2 * (pb.nonlinearity.dg(r) - V);
}

inline double f_eval(const Problem& pb, const Point& x, double v) { return f_local(pb, pb.potential.value(x), v); }
inline double F_eval(const Problem& pb, const Point& x, double v) { return F_local(pb, pb.potential.value(x), v); }
inline double df_eval(const Problem& pb, const Point& x, double v) { return df_local(pb, pb.potential.value(x), v); }

namespace detail {

inline void require_conforming(const FeFunction& v, const char* who) {
  if (!v.is_conforming()) throw InvalidArgument(std::string(who) + ": function must vanish on the boundary");
}

/// V at edges, empty for a constant potential.
inline std::vector<double> edge_potential(const Problem& pb, const FeSpace& space) {
  if (pb.potential.is_constant()) return {};
  return pb.potential.at_edges(space);
}

inline double edge_V(const Problem& pb, const std::vector<double>& table, std::size_t e) {
  return table.empty() ? pb.potential.constant_value() : table[e];
}

}  // namespace detail

/// Sum over edges of w_e F(x_e, v_e).
inline double nonlinear_term(const Problem& pb, const FeFunction& v) {
  const FeSpace& space = *v.space();
  const auto Ve = detail::edge_potential(pb, space);
  const auto edges = space.edges();
  const Vector& x = v.values();
  const double total = integrate_edges(space, [&](std::size_t e) {
    return F_local(pb, detail::edge_V(pb, Ve, e), 0.5 * (x[edges[e][0]] + x[edges[e][1]]));
  });
  if (!std::isfinite(total)) throw QuadratureError("non-finite value of int F(x, v)", 0);
  return total;
}

inline double energy_T(const Problem& pb, const FeFunction& v) {
  detail::require_conforming(v, "energy_T");
  return 0.5 * pb.eps_sc * pb.eps_sc * dirichlet_energy(v) - nonlinear_term(pb, v);
}

/// E(u) = eps^2/2 int (1 + delta u^2) |grad u|^2 + 1/2 int V u^2 - int G(u).
inline double energy_E(const Problem& pb, const FeFunction& u) {
  detail::require_conforming(u, "energy_E");
  const FeSpace& space = *u.space();
  const Mesh& m = space.mesh();
  const auto grads = space.gradients();
  const auto tedges = space.triangle_edges();
  const auto ue = space.edge_values(u.values());
  const double eps2 = pb.eps_sc * pb.eps_sc;
  const double gradient_part = deterministic_sum(m.triangles.size(), [&](std::size_t t) {
    const auto& tri = m.triangles[t];
    double gx = 0.0, gy = 0.0;
    for (int k = 0; k < 3; ++k) {
      gx += u[tri[k]] * grads[t][k][0];
      gy += u[tri[k]] * grads[t][k][1];
    }
    double weight = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double um = ue[tedges[t][k]];
      weight += 1.0 + pb.delta * um * um;
    }
    return m.area(t) / 3.0 * weight * (gx * gx + gy * gy);
  });
  const auto Ve = detail::edge_potential(pb, space);
  const double rest = integrate_edges(space, [&](std::size_t e) {
    const double V = detail::edge_V(pb, Ve, e);
    return 0.5 * V * ue[e] * ue[e] - pb.nonlinearity.primitive(ue[e]);
  });
  return 0.5 * eps2 * gradient_part + rest;
}

/// Load vector of f(x, v) over the free nodes.
inline Vector nonlinear_load(const Problem& pb, const FeFunction& v) {
  const FeSpace& space = *v.space();
  const auto Ve = detail::edge_potential(pb, space);
  auto fe = space.edge_values(v.values());
  for (std::size_t e = 0; e < fe.size(); ++e) fe[e] = f_local(pb, detail::edge_V(pb, Ve, e), fe[e]);
  return assemble_load(space, fe);
}

/// Riesz representative g of dT(v) in H^1_0 with inner product eps^2 int grad . grad:
/// eps^2 K g = eps^2 K v - b(f(v)).
inline FeFunction gradient_T(const Problem& pb, const FeFunction& v) {
  detail::require_conforming(v, "gradient_T");
  const FeSpace& space = *v.space();
  const Vector b = nonlinear_load(pb, v);
  const Vector correction = space.stiffness().solve(b) / (pb.eps_sc * pb.eps_sc);
  return FeFunction(v.space(), v.values() - space.extend_from_free(correction));
}

/// (eps^2 int |grad g|^2)^{1/2}.
inline double h10_norm(const Problem& pb, const FeFunction& g) { return pb.eps_sc * std::sqrt(dirichlet_energy(g)); }

/// eps^2 int grad a . grad b.
inline double h10_inner(const Problem& pb, const FeFunction& a, const FeFunction& b) {
  const Vector af = a.space()->restrict_to_free(a.values());
  const Vector bf = b.space()->restrict_to_free(b.values());
  return pb.eps_sc * pb.eps_sc * af.dot(a.space()->stiffness().matrix() * bf);
}

/// ((N-2)/2) int f(v) v - N int F(v) with N = 2, i.e. -2 int F(x, v).
inline double pohozaev_diag(const Problem& pb, const FeFunction& v) {
  detail::require_conforming(v, "pohozaev_diag");
  if (!pb.potential.is_constant()) throw InvalidArgument("pohozaev_diag: requires a constant potential");
  return -2.0 * nonlinear_term(pb, v);
}

/// Jacobian of the residual eps^2 K v - b(f(v)): eps^2 K - M[df/dv], over free nodes.
inline SparseMatrix residual_jacobian(const Problem& pb, const FeFunction& v) {
  const FeSpace& space = *v.space();
  const auto Ve = detail::edge_potential(pb, space);
  const auto edges = space.edges();
  const auto w = space.edge_weights();
  const auto fi = space.free_index();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * edges.size());
  const Vector& x = v.values();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    const int ia = fi[a], ib = fi[b];
    if (ia < 0 && ib < 0) continue;
    const double d = df_local(pb, detail::edge_V(pb, Ve, e), 0.5 * (x[a] + x[b]));
    const double c = -0.25 * w[e] * d;
    for (int i : {ia, ib})
      for (int j : {ia, ib})
        if (i >= 0 && j >= 0) triplets.emplace_back(i, j, c);
  }
  SparseMatrix mass(space.free_count(), space.free_count());
  mass.setFromTriplets(triplets.begin(), triplets.end());
  return SparseMatrix(pb.eps_sc * pb.eps_sc * space.stiffness().matrix() + mass);
}

}  // namespace qlmpa
