#pragma once

// P1 finite elements on a Mesh with homogeneous Dirichlet conditions imposed by
// eliminating boundary nodes.
//
// Quadrature uses the three edge midpoints of each triangle with equal weights
// |T|/3 (exact for quadratics).  Since adjacent triangles share midpoints, the
// space also keeps an edge list whose weights are the summed |T|/3, which is
// the same rule evaluated once per edge.

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qlmpa/error.hpp"
#include "qlmpa/mesh.hpp"
#include "qlmpa/parallel.hpp"

namespace qlmpa {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

using LocalMatrix = std::array<std::array<double, 3>, 3>;

/// Gradients of the three barycentric basis functions on a triangle.
inline std::array<Point, 3> basis_gradients(const Point& p0, const Point& p1, const Point& p2) {
  const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
  if (!(det != 0.0) || !std::isfinite(det)) throw Error("degenerate triangle");
  const double inv = 1.0 / det;
  return {Point{(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv},
          Point{(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv},
          Point{(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv}};
}

/// int_T grad(phi_i) . grad(phi_j) for the P1 basis of one triangle.
inline LocalMatrix local_stiffness(const Point& p0, const Point& p1, const Point& p2) {
  const auto g = basis_gradients(p0, p1, p2);
  const double area = 0.5 * std::abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
  LocalMatrix k{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
  return k;
}

/// A symmetric matrix with a lazily computed factorization.  Sparse Cholesky
/// is used up to kDirectLimit unknowns, Jacobi-preconditioned CG beyond.
class LinearSolver {
 public:
  static constexpr Eigen::Index kDirectLimit = 2'000'000;

  explicit LinearSolver(SparseMatrix matrix) : state_(std::make_shared<State>(std::move(matrix))) {}

  const SparseMatrix& matrix() const { return state_->matrix; }

  Vector solve(const Vector& rhs) const {
    State& st = *state_;
    if (rhs.size() != st.matrix.rows()) throw InvalidArgument("solve: right-hand side has wrong length");
    if (rhs.size() == 0) return rhs;
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return Vector::Zero(rhs.size());
    Vector x;
    if (st.matrix.rows() <= kDirectLimit) {
      std::call_once(st.once, [&st] {
        st.cholesky.compute(st.matrix);
        st.factored = st.cholesky.info() == Eigen::Success;
      });
      if (!st.factored) throw SolverError("Cholesky factorization failed: matrix is not positive definite", 1.0);
      x = st.cholesky.solve(rhs);
    } else {
      Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
      cg.setTolerance(1e-11);
      cg.setMaxIterations(static_cast<Eigen::Index>(10 * rhs.size()));
      cg.compute(st.matrix);
      x = cg.solve(rhs);
    }
    const double residual = (st.matrix * x - rhs).norm() / rhs_norm;
    if (!(residual <= 1e-10)) throw SolverError("linear solve did not reach tolerance 1e-10", residual);
    return x;
  }

 private:
  struct State {
    explicit State(SparseMatrix m) : matrix(std::move(m)) {}
    SparseMatrix matrix;
    std::once_flag once;
    Eigen::SimplicialLLT<SparseMatrix> cholesky;
    bool factored = false;
  };
  std::shared_ptr<State> state_;
};

namespace detail {

inline SparseMatrix assemble_free_stiffness(const Mesh& mesh, std::span<const int> free_index, Eigen::Index free_count,
                                           double coefficient) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(9 * mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    if (!(mesh.area(t) > 0.0)) throw Error("assemble_stiffness: degenerate triangle " + std::to_string(t));
    const auto k = local_stiffness(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
    for (int i = 0; i < 3; ++i) {
      const int fi = free_index[tri[i]];
      if (fi < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int fj = free_index[tri[j]];
        if (fj >= 0) triplets.emplace_back(fi, fj, coefficient * k[i][j]);
      }
    }
  }
  SparseMatrix m(free_count, free_count);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace detail

/// Discretization data attached to one mesh: free-node numbering, the edge
/// quadrature, per-triangle gradients and the unit-coefficient stiffness.
class FeSpace {
 public:
  static std::shared_ptr<const FeSpace> create(Mesh mesh) {
    return std::shared_ptr<const FeSpace>(new FeSpace(std::make_shared<const Mesh>(std::move(mesh))));
  }

  const Mesh& mesh() const { return *mesh_; }
  std::size_t node_count() const { return mesh_->nodes.size(); }
  Eigen::Index free_count() const { return static_cast<Eigen::Index>(free_nodes_.size()); }
  std::span<const int> free_index() const { return free_index_; }
  std::span<const int> free_nodes() const { return free_nodes_; }

  std::size_t edge_count() const { return edges_.size(); }
  std::span<const std::array<int, 2>> edges() const { return edges_; }
  /// Quadrature weight of each edge midpoint: sum of |T|/3 over incident triangles.
  std::span<const double> edge_weights() const { return edge_weights_; }
  std::span<const Point> edge_midpoints() const { return edge_midpoints_; }
  /// Edge ids of triangle t, ordered (v0v1, v1v2, v2v0).
  std::span<const std::array<int, 3>> triangle_edges() const { return triangle_edges_; }
  std::span<const std::array<Point, 3>> gradients() const { return gradients_; }

  const LinearSolver& stiffness() const { return stiffness_; }

  /// Values at the free nodes.
  Vector restrict_to_free(const Vector& full) const {
    Vector out(free_count());
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = full[free_nodes_[i]];
    return out;
  }

  /// Nodal vector with the given free values and zero boundary values.
  Vector extend_from_free(const Vector& free) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(node_count()));
    for (Eigen::Index i = 0; i < free.size(); ++i) out[free_nodes_[i]] = free[i];
    return out;
  }

  /// Nodal values averaged onto the edge midpoints.
  std::vector<double> edge_values(const Vector& nodal) const {
    std::vector<double> out(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) out[e] = 0.5 * (nodal[edges_[e][0]] + nodal[edges_[e][1]]);
    return out;
  }

 private:
  explicit FeSpace(std::shared_ptr<const Mesh> mesh) : mesh_(std::move(mesh)), stiffness_(SparseMatrix()) {
    const Mesh& m = *mesh_;
    free_index_.assign(m.nodes.size(), -1);
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
      if (!m.boundary[i]) {
        free_index_[i] = static_cast<int>(free_nodes_.size());
        free_nodes_.push_back(static_cast<int>(i));
      }
    }
    std::unordered_map<std::uint64_t, int> edge_id;
    edge_id.reserve(2 * m.triangles.size());
    triangle_edges_.resize(m.triangles.size());
    gradients_.resize(m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
      const auto& tri = m.triangles[t];
      const double area = m.area(t);
      if (!(area > 0.0)) throw InvalidArgument("FeSpace: degenerate triangle " + std::to_string(t));
      gradients_[t] = basis_gradients(m.nodes[tri[0]], m.nodes[tri[1]], m.nodes[tri[2]]);
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k], b = tri[(k + 1) % 3];
        auto [it, inserted] = edge_id.try_emplace(detail::edge_key(a, b), static_cast<int>(edges_.size()));
        if (inserted) {
          edges_.push_back({std::min(a, b), std::max(a, b)});
          edge_weights_.push_back(0.0);
          edge_midpoints_.push_back(
              {0.5 * (m.nodes[a][0] + m.nodes[b][0]), 0.5 * (m.nodes[a][1] + m.nodes[b][1])});
        }
        edge_weights_[it->second] += area / 3.0;
        triangle_edges_[t][k] = it->second;
      }
    }
    stiffness_ = LinearSolver(detail::assemble_free_stiffness(m, free_index_, free_count(), 1.0));
  }

  std::shared_ptr<const Mesh> mesh_;
  std::vector<int> free_index_;
  std::vector<int> free_nodes_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<double> edge_weights_;
  std::vector<Point> edge_midpoints_;
  std::vector<std::array<int, 3>> triangle_edges_;
  std::vector<std::array<Point, 3>> gradients_;
  LinearSolver stiffness_;
};

using SpacePtr = std::shared_ptr<const FeSpace>;

inline SpacePtr make_space(Mesh mesh) { return FeSpace::create(std::move(mesh)); }

/// Nodal coefficient vector over a space.
class FeFunction {
 public:
  FeFunction() = default;
  explicit FeFunction(SpacePtr space)
      : space_(std::move(space)), values_(Vector::Zero(static_cast<Eigen::Index>(space_->node_count()))) {}
  FeFunction(SpacePtr space, Vector values) : space_(std::move(space)), values_(std::move(values)) {
    if (values_.size() != static_cast<Eigen::Index>(space_->node_count()))
      throw InvalidArgument("FeFunction: values length must equal node count");
  }

  const SpacePtr& space() const { return space_; }
  const Mesh& mesh() const { return space_->mesh(); }
  const Vector& values() const { return values_; }
  Vector& values() { return values_; }
  double operator[](Eigen::Index i) const { return values_[i]; }
  Eigen::Index size() const { return values_.size(); }

  /// True iff every boundary value is exactly zero.
  bool is_conforming() const {
    const auto& b = mesh().boundary;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i] && values_[static_cast<Eigen::Index>(i)] != 0.0) return false;
    return true;
  }

  bool is_zero() const { return values_.isZero(0.0); }

 private:
  SpacePtr space_;
  Vector values_;
};

/// Nodal interpolant of fn; boundary values are zeroed when requested.
template <class Fn>
FeFunction interpolate(const SpacePtr& space, Fn&& fn, bool zero_boundary = true) {
  const Mesh& m = space->mesh();
  Vector values(static_cast<Eigen::Index>(m.nodes.size()));
  for (std::size_t i = 0; i < m.nodes.size(); ++i)
    values[static_cast<Eigen::Index>(i)] = (zero_boundary && m.boundary[i]) ? 0.0 : fn(m.nodes[i]);
  return FeFunction(space, std::move(values));
}

/// Transfers v to a mesh obtained from v's mesh by refinement (bisection or
/// red refinement); exact for P1 since every new node is an edge midpoint.
inline FeFunction prolong(const FeFunction& v, const SpacePtr& fine) {
  const Mesh& fm = fine->mesh();
  const auto coarse_nodes = static_cast<std::size_t>(v.size());
  if (fm.nodes.size() < coarse_nodes) throw InvalidArgument("prolong: target mesh has fewer nodes");
  Vector values(static_cast<Eigen::Index>(fm.nodes.size()));
  for (std::size_t i = 0; i < coarse_nodes; ++i) {
    if (fm.nodes[i] != v.mesh().nodes[i]) throw InvalidArgument("prolong: target mesh is not a refinement");
    values[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(i)];
  }
  for (std::size_t i = coarse_nodes; i < fm.nodes.size(); ++i) {
    const auto [a, b] = fm.parents[i];
    if (a < 0 || static_cast<std::size_t>(std::max(a, b)) >= i)
      throw InvalidArgument("prolong: node without refinement parents");
    values[static_cast<Eigen::Index>(i)] = 0.5 * (values[a] + values[b]);
  }
  return FeFunction(fine, std::move(values));
}

/// Symmetric stiffness operator over the free nodes of a space.
class SparseOperator {
 public:
  SparseOperator(SpacePtr space, SparseMatrix matrix) : space_(std::move(space)), solver_(std::move(matrix)) {}
  const SpacePtr& space() const { return space_; }
  const SparseMatrix& matrix() const { return solver_.matrix(); }
  const LinearSolver& solver() const { return solver_; }

 private:
  SpacePtr space_;
  LinearSolver solver_;
};

/// coefficient * int grad(phi_i) . grad(phi_j) over the free nodes.
inline SparseOperator assemble_stiffness(const SpacePtr& space, double coefficient) {
  if (!(coefficient > 0.0)) throw InvalidArgument("assemble_stiffness: coefficient must be positive");
  return SparseOperator(space, detail::assemble_free_stiffness(space->mesh(), space->free_index(),
                                                               space->free_count(), coefficient));
}

/// Solves op x = rhs (rhs over free nodes) and returns x with zero boundary values.
inline FeFunction solve_dirichlet(const SparseOperator& op, const Vector& rhs) {
  return FeFunction(op.space(), op.space()->extend_from_free(op.solver().solve(rhs)));
}

/// Load vector b_i = int q phi_i for q given at the edge midpoints.
inline Vector assemble_load(const FeSpace& space, std::span<const double> edge_values) {
  Vector b = Vector::Zero(space.free_count());
  const auto edges = space.edges();
  const auto w = space.edge_weights();
  const auto fi = space.free_index();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const double c = 0.5 * w[e] * edge_values[e];
    if (fi[edges[e][0]] >= 0) b[fi[edges[e][0]]] += c;
    if (fi[edges[e][1]] >= 0) b[fi[edges[e][1]]] += c;
  }
  return b;
}

/// Sum over triangles of |T|/3 times integrand summed at the edge midpoints.
/// The integrand receives the point followed by the value of each function.
template <class Fn, class... Fs>
double integrate(const Mesh& mesh, Fn&& integrand, const Fs&... functions) {
  return deterministic_sum(mesh.triangles.size(), [&](std::size_t t) {
    const auto& tri = mesh.triangles[t];
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      const Point x{0.5 * (mesh.nodes[a][0] + mesh.nodes[b][0]), 0.5 * (mesh.nodes[a][1] + mesh.nodes[b][1])};
      const double value = integrand(x, 0.5 * (functions[a] + functions[b])...);
      if (!std::isfinite(value)) throw QuadratureError("non-finite integrand value", t);
      s += value;
    }
    return mesh.area(t) / 3.0 * s;
  });
}

/// Same rule evaluated once per edge of a space.
template <class Fn>
double integrate_edges(const FeSpace& space, Fn&& integrand_at_edge) {
  const auto w = space.edge_weights();
  return deterministic_sum(space.edge_count(), [&](std::size_t e) { return w[e] * integrand_at_edge(e); });
}

/// int |grad v|^2, exact from the piecewise-constant gradients.
inline double dirichlet_energy(const FeFunction& v) {
  const Mesh& m = v.mesh();
  const auto grads = v.space()->gradients();
  return deterministic_sum(m.triangles.size(), [&](std::size_t t) {
    const auto& tri = m.triangles[t];
    double gx = 0.0, gy = 0.0;
    for (int k = 0; k < 3; ++k) {
      gx += v[tri[k]] * grads[t][k][0];
      gy += v[tri[k]] * grads[t][k][1];
    }
    return m.area(t) * (gx * gx + gy * gy);
  });
}

struct Norms {
  double grad_l2 = 0.0;
  double l2 = 0.0;
  double max_abs = 0.0;
};

inline Norms norms(const FeFunction& v) {
  Norms n;
  n.grad_l2 = std::sqrt(dirichlet_energy(v));
  n.l2 = std::sqrt(integrate(v.mesh(), [](const Point&, double x) { return x * x; }, v.values()));
  n.max_abs = v.size() == 0 ? 0.0 : v.values().cwiseAbs().maxCoeff();
  return n;
}

}  // namespace qlmpa
