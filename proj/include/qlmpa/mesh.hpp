#pragma once

// Conforming triangulations of the square (-R/2, R/2)^2.
//
// Triangles are stored counterclockwise with the newest vertex first, so the
// refinement edge of triangle {v0, v1, v2} is always (v1, v2).  The structured
// grid labels the right-angle vertex as newest, which makes the initial
// labelling compatible for newest-vertex bisection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "qlmpa/error.hpp"

namespace qlmpa {

using Point = std::array<double, 2>;
using Triangle = std::array<int, 3>;

struct Mesh {
  std::vector<Point> nodes;
  std::vector<Triangle> triangles;
  std::vector<bool> boundary;
  /// For nodes created by refinement, the two endpoints of the split edge;
  /// {-1, -1} for nodes of the initial grid.  Parents precede children.
  std::vector<std::array<int, 2>> parents;
  double R = 1.0;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t triangle_count() const { return triangles.size(); }

  /// Signed area of triangle t (positive for counterclockwise).
  double area(std::size_t t) const {
    const auto& [a, b, c] = triangles[t];
    const Point& pa = nodes[a];
    const Point& pb = nodes[b];
    const Point& pc = nodes[c];
    return 0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]));
  }

  double total_area() const {
    double s = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) s += area(t);
    return s;
  }

  bool on_boundary(const Point& x) const {
    const double h = 0.5 * R;
    const double tol = 1e-12 * R;
    return std::abs(std::abs(x[0]) - h) <= tol || std::abs(std::abs(x[1]) - h) <= tol;
  }
};

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

inline int midpoint_node(Mesh& mesh, std::unordered_map<std::uint64_t, int>& mids, int a, int b) {
  const auto key = edge_key(a, b);
  if (auto it = mids.find(key); it != mids.end()) return it->second;
  const Point& pa = mesh.nodes[a];
  const Point& pb = mesh.nodes[b];
  const Point m{0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])};
  const int id = static_cast<int>(mesh.nodes.size());
  mesh.nodes.push_back(m);
  // A midpoint is on the boundary iff its edge lies on one side of the square.
  mesh.boundary.push_back(mesh.boundary[a] && mesh.boundary[b] && mesh.on_boundary(m));
  mesh.parents.push_back({a, b});
  mids.emplace(key, id);
  return id;
}

}  // namespace detail

/// Structured n x n grid on (-R/2, R/2)^2.  Cell (i, j) is split along its
/// lower-left to upper-right diagonal when i + j is even and along the other
/// diagonal otherwise, so for even n the mesh is invariant under both axis
/// reflections.
inline Mesh build_mesh(double R, int n) {
  if (!(R > 0.0) || !std::isfinite(R)) throw InvalidArgument("build_mesh: R must be positive");
  if (n < 1) throw InvalidArgument("build_mesh: n must be at least 1");
  Mesh mesh;
  mesh.R = R;
  const auto side = static_cast<std::size_t>(n) + 1;
  mesh.nodes.reserve(side * side);
  mesh.boundary.reserve(side * side);
  // (2i - n) R / (2n) keeps the coordinates exactly symmetric about 0.
  const double scale = R / (2.0 * n);
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      mesh.nodes.push_back({(2 * i - n) * scale, (2 * j - n) * scale});
      mesh.boundary.push_back(i == 0 || j == 0 || i == n || j == n);
      mesh.parents.push_back({-1, -1});
    }
  }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  mesh.triangles.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.triangles.push_back({b, c, a});
        mesh.triangles.push_back({d, a, c});
      } else {
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({c, d, b});
      }
    }
  }
  return mesh;
}

/// Red refinement: every triangle is split into four congruent children.
inline Mesh refine_uniform(const Mesh& mesh) {
  Mesh out;
  out.R = mesh.R;
  out.nodes = mesh.nodes;
  out.boundary = mesh.boundary;
  out.parents = mesh.parents;
  out.triangles.reserve(4 * mesh.triangles.size());
  std::unordered_map<std::uint64_t, int> mids;
  mids.reserve(2 * mesh.triangles.size());
  for (const auto& [v0, v1, v2] : mesh.triangles) {
    const int m01 = detail::midpoint_node(out, mids, v0, v1);
    const int m12 = detail::midpoint_node(out, mids, v1, v2);
    const int m20 = detail::midpoint_node(out, mids, v2, v0);
    // Corner children are homothetic copies, the middle one a point
    // reflection; the newest-vertex labels follow the parent's.
    out.triangles.push_back({v0, m01, m20});
    out.triangles.push_back({m01, v1, m12});
    out.triangles.push_back({m20, m12, v2});
    out.triangles.push_back({m12, m20, m01});
  }
  return out;
}

/// Newest-vertex bisection of the ceil(fraction * count) triangles with the
/// largest indicator, closed so the result stays conforming.  Old nodes keep
/// their indices and coordinates.
inline Mesh refine_adaptive(const Mesh& mesh, std::span<const double> indicator, double fraction) {
  if (indicator.size() != mesh.triangles.size())
    throw InvalidArgument("refine_adaptive: indicator length must equal triangle count");
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InvalidArgument("refine_adaptive: fraction must lie in [0, 1]");

  const std::size_t count = mesh.triangles.size();
  const auto marked_count =
      std::min(count, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(count) - 1e-12)));
  if (marked_count == 0) return mesh;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return indicator[a] > indicator[b]; });

  using detail::edge_key;
  std::unordered_map<std::uint64_t, bool> marked_edges;
  for (std::size_t k = 0; k < marked_count; ++k) {
    const auto& t = mesh.triangles[order[k]];
    marked_edges[edge_key(t[1], t[2])] = true;
  }
  // Closure: a triangle with any marked edge must bisect its refinement edge.
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& t : mesh.triangles) {
      const auto ref = edge_key(t[1], t[2]);
      if (marked_edges.contains(ref)) continue;
      if (marked_edges.contains(edge_key(t[0], t[1])) || marked_edges.contains(edge_key(t[2], t[0]))) {
        marked_edges[ref] = true;
        changed = true;
      }
    }
  }

  Mesh out;
  out.R = mesh.R;
  out.nodes = mesh.nodes;
  out.boundary = mesh.boundary;
  out.parents = mesh.parents;
  std::unordered_map<std::uint64_t, int> mids;

  // Children inherit the parent's non-refinement edges as their refinement
  // edges, so recursion only ever descends along marked parent edges.
  auto bisect = [&](auto&& self, const Triangle& t) -> void {
    if (!marked_edges.contains(edge_key(t[1], t[2]))) {
      out.triangles.push_back(t);
      return;
    }
    const int m = detail::midpoint_node(out, mids, t[1], t[2]);
    self(self, Triangle{m, t[0], t[1]});
    self(self, Triangle{m, t[2], t[0]});
  };
  for (const auto& t : mesh.triangles) bisect(bisect, t);
  return out;
}

/// Result of the edge-incidence audit.
struct ConformityReport {
  bool ok = true;
  std::size_t interior_edges = 0;
  std::size_t boundary_edges = 0;
  std::string message;
};

/// Checks orientation, edge incidence (interior edges shared by exactly two
/// triangles, boundary edges by one), boundary flags and area sum.
inline ConformityReport audit_conformity(const Mesh& mesh) {
  ConformityReport rep;
  auto fail = [&rep](std::string msg) {
    if (rep.ok) rep.message = std::move(msg);
    rep.ok = false;
  };
  std::unordered_map<std::uint64_t, int> incidence;
  incidence.reserve(3 * mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (!(mesh.area(t) > 0.0)) fail("triangle " + std::to_string(t) + " has non-positive area");
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) ++incidence[detail::edge_key(tri[k], tri[(k + 1) % 3])];
  }
  for (const auto& [key, n] : incidence) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    const Point& pa = mesh.nodes[a];
    const Point& pb = mesh.nodes[b];
    const Point mid{0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])};
    if (n == 1) {
      ++rep.boundary_edges;
      if (!mesh.on_boundary(mid) || !mesh.on_boundary(pa) || !mesh.on_boundary(pb))
        fail("edge (" + std::to_string(a) + "," + std::to_string(b) + ") used once but not on the boundary");
    } else if (n == 2) {
      ++rep.interior_edges;
    } else {
      fail("edge shared by " + std::to_string(n) + " triangles");
    }
  }
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    if (mesh.boundary[i] != mesh.on_boundary(mesh.nodes[i]))
      fail("boundary flag mismatch at node " + std::to_string(i));
    const double h = 0.5 * mesh.R * (1.0 + 1e-12);
    if (std::abs(mesh.nodes[i][0]) > h || std::abs(mesh.nodes[i][1]) > h)
      fail("node " + std::to_string(i) + " outside the domain");
  }
  const double area = mesh.total_area();
  if (std::abs(area - mesh.R * mesh.R) > 1e-12 * mesh.R * mesh.R) fail("area sum differs from R^2");
  return rep;
}

/// Plain-text dump: one node per line "x y boundary_flag", then one triangle
/// per line "i j k" (zero-based).  A header line gives both counts.
inline void write_mesh(const Mesh& mesh, std::ostream& os) {
  os.precision(17);
  os << mesh.nodes.size() << ' ' << mesh.triangles.size() << '\n';
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    os << mesh.nodes[i][0] << ' ' << mesh.nodes[i][1] << ' ' << (mesh.boundary[i] ? 1 : 0) << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline void write_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_mesh(mesh, os);
}

}  // namespace qlmpa
