#pragma once

// File formats: CSV report tables, legacy-VTK and gnuplot solution fields,
// two-column curve files, and content checksums.

#include <cerrno>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qlmpa/error.hpp"
#include "qlmpa/fem.hpp"
#include "qlmpa/mpa.hpp"

namespace qlmpa {

inline constexpr const char* report_header = "R,p,V,delta,eps_sc,max_v,grad_v_l2,max_u,energy,grad_norm,iters";

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// 17 significant digits.
inline std::string format_full(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

inline void finish_output(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw Error("write failed: " + path.string());
}

inline double parse_double(const std::string& s, const std::string& what) {
  if (s.empty()) throw Error("empty field " + what);
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) throw Error("bad number '" + s + "' in field " + what);
  return x;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline void write_report(const std::vector<ReportRow>& rows, std::ostream& os) {
  os << report_header << '\n';
  for (const auto& r : rows) {
    os << format_full(r.R) << ',' << r.p_label << ',' << r.V_label << ',' << format_full(r.delta) << ','
       << format_full(r.eps_sc) << ',' << format_full(r.max_v) << ',' << format_full(r.grad_v_l2) << ','
       << format_full(r.max_u) << ',' << format_full(r.energy) << ',' << format_full(r.grad_norm) << ','
       << r.iterations << '\n';
  }
}

/// CSV table, one row per run, in the given order.  Refuses an empty list.
inline void export_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw InvalidArgument("export_report: no rows");
  auto os = detail::open_output(path);
  write_report(rows, os);
  detail::finish_output(os, path);
}

inline std::vector<ReportRow> read_report(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != report_header) throw Error("read_report: missing or unexpected header");
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split(line, ',');
    if (c.size() != 11) throw Error("read_report: expected 11 fields in '" + line + "'");
    ReportRow r;
    r.R = detail::parse_double(c[0], "R");
    r.p_label = c[1];
    r.V_label = c[2];
    r.delta = detail::parse_double(c[3], "delta");
    r.eps_sc = detail::parse_double(c[4], "eps_sc");
    r.max_v = detail::parse_double(c[5], "max_v");
    r.grad_v_l2 = detail::parse_double(c[6], "grad_v_l2");
    r.max_u = detail::parse_double(c[7], "max_u");
    r.energy = detail::parse_double(c[8], "energy");
    r.grad_norm = detail::parse_double(c[9], "grad_norm");
    std::size_t used = 0;
    try {
      r.iterations = std::stol(c[10], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != c[10].size()) throw Error("read_report: bad iteration count '" + c[10] + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return read_report(is);
}

/// Legacy-VTK ASCII unstructured grid with point data "v" and "u".
inline void write_vtk(const FeFunction& v, const FeFunction& u, std::ostream& os) {
  if (&v.mesh() != &u.mesh()) throw InvalidArgument("export_field: v and u live on different meshes");
  const Mesh& m = v.mesh();
  os << "# vtk DataFile Version 3.0\nqlmpa solution\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << m.node_count() << " double\n";
  for (const auto& p : m.nodes) os << format_double(p[0]) << ' ' << format_double(p[1]) << " 0\n";
  os << "CELLS " << m.triangle_count() << ' ' << 4 * m.triangle_count() << '\n';
  for (const auto& t : m.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << m.triangle_count() << '\n';
  for (std::size_t i = 0; i < m.triangle_count(); ++i) os << "5\n";
  os << "POINT_DATA " << m.node_count() << '\n';
  for (const auto& [name, f] : {std::pair<const char*, const FeFunction*>{"v", &v}, {"u", &u}}) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index i = 0; i < f->size(); ++i) os << format_double((*f)[i]) << '\n';
  }
}

/// Gnuplot-style `x y v u` rows, one per node.
inline void write_xyvu(const FeFunction& v, const FeFunction& u, std::ostream& os) {
  const Mesh& m = v.mesh();
  os << "# x y v u\n";
  for (std::size_t i = 0; i < m.node_count(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    os << format_double(m.nodes[i][0]) << ' ' << format_double(m.nodes[i][1]) << ' ' << format_double(v[k]) << ' '
       << format_double(u[k]) << '\n';
  }
}

/// Writes `<stem>.vtk` and `<stem>.dat`; returns both paths.
inline std::vector<std::filesystem::path> export_field(const FeFunction& v, const FeFunction& u,
                                                       const std::filesystem::path& stem) {
  if (v.size() != u.size() || &v.mesh() != &u.mesh())
    throw InvalidArgument("export_field: v and u live on different meshes");
  std::filesystem::path vtk = stem, dat = stem;
  vtk += ".vtk";
  dat += ".dat";
  {
    auto os = detail::open_output(vtk);
    write_vtk(v, u, os);
    detail::finish_output(os, vtk);
  }
  {
    auto os = detail::open_output(dat);
    write_xyvu(v, u, os);
    detail::finish_output(os, dat);
  }
  return {vtk, dat};
}

struct VtkAudit {
  bool ok = false;
  std::string message;
  std::size_t points = 0;
  std::size_t cells = 0;
  std::vector<std::string> arrays;
};

/// Checks section order, counts, cell connectivity range and array lengths of
/// a legacy-VTK unstructured grid with triangle cells.
inline VtkAudit audit_vtk(std::istream& is) {
  VtkAudit a;
  auto fail = [&](std::string msg) {
    a.ok = false;
    a.message = std::move(msg);
    return a;
  };
  std::string line;
  if (!std::getline(is, line) || line.rfind("# vtk DataFile Version", 0) != 0) return fail("bad magic line");
  if (!std::getline(is, line)) return fail("missing title");
  if (!std::getline(is, line) || line != "ASCII") return fail("not ASCII");
  if (!std::getline(is, line) || line != "DATASET UNSTRUCTURED_GRID") return fail("not an unstructured grid");
  std::string word, type;
  if (!(is >> word >> a.points >> type) || word != "POINTS") return fail("POINTS section missing");
  for (std::size_t i = 0; i < 3 * a.points; ++i) {
    double x;
    if (!(is >> x)) return fail("short POINTS section");
  }
  std::size_t size = 0;
  if (!(is >> word >> a.cells >> size) || word != "CELLS") return fail("CELLS section missing");
  if (size != 4 * a.cells) return fail("CELLS size mismatch");
  for (std::size_t c = 0; c < a.cells; ++c) {
    std::size_t k, i0, i1, i2;
    if (!(is >> k >> i0 >> i1 >> i2) || k != 3) return fail("bad cell record");
    if (i0 >= a.points || i1 >= a.points || i2 >= a.points) return fail("cell index out of range");
  }
  std::size_t ntypes = 0;
  if (!(is >> word >> ntypes) || word != "CELL_TYPES" || ntypes != a.cells) return fail("CELL_TYPES mismatch");
  for (std::size_t c = 0; c < ntypes; ++c) {
    int t;
    if (!(is >> t) || t != 5) return fail("non-triangle cell type");
  }
  std::size_t npd = 0;
  if (!(is >> word >> npd) || word != "POINT_DATA") return fail("POINT_DATA missing");
  if (npd != a.points) return fail("POINT_DATA count differs from POINTS");
  while (is >> word) {
    std::string name, dtype, lookup, table;
    int comps = 0;
    if (word != "SCALARS" || !(is >> name >> dtype >> comps) || comps != 1) return fail("bad SCALARS header");
    if (!(is >> lookup >> table) || lookup != "LOOKUP_TABLE") return fail("missing LOOKUP_TABLE");
    for (std::size_t i = 0; i < npd; ++i) {
      double x;
      if (!(is >> x)) return fail("short array " + name);
    }
    a.arrays.push_back(name);
  }
  a.ok = true;
  return a;
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// One `<label>.dat` file per series with whitespace-separated `x y` rows.
inline std::vector<std::filesystem::path> export_curves(const std::vector<Series>& series,
                                                        const std::filesystem::path& directory) {
  if (series.empty()) throw InvalidArgument("export_curves: no series");
  for (const auto& s : series) {
    if (s.label.empty()) throw InvalidArgument("export_curves: empty series label");
    if (s.x.empty() || s.x.size() != s.y.size()) throw InvalidArgument("export_curves: series '" + s.label + "' is empty or ragged");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& s : series) {
    const auto path = directory / (s.label + ".dat");
    auto os = detail::open_output(path);
    for (std::size_t i = 0; i < s.x.size(); ++i) os << format_double(s.x[i]) << ' ' << format_double(s.y[i]) << '\n';
    detail::finish_output(os, path);
    out.push_back(path);
  }
  return out;
}

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
inline std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace qlmpa
