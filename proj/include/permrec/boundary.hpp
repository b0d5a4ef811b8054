#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "permrec/fields.hpp"

namespace permrec {

/// Boundary vertex enumeration of a mesh, ascending vertex id.
struct TraceLayout {
  MeshPtr mesh;
  std::vector<int> boundary_vertices;          // mesh vertex ids on Gamma
  std::vector<int> index_of_vertex;            // vertex id -> trace index, -1 interior
  std::vector<int> boundary_faces;             // face ids with boundary_tag >= 0

  int n_nodes() const { return static_cast<int>(boundary_vertices.size()); }
};

inline TraceLayout make_trace_layout(MeshPtr mesh) {
  TraceLayout tl;
  tl.mesh = mesh;
  tl.index_of_vertex.assign(mesh->n_vertices(), -1);
  std::vector<bool> on_boundary(mesh->n_vertices(), false);
  for (int f = 0; f < mesh->n_faces(); ++f) {
    if (mesh->faces[f].boundary_tag < 0) continue;
    tl.boundary_faces.push_back(f);
    for (int k = 0; k < mesh->n_face_corners(); ++k) on_boundary[mesh->faces[f].verts[k]] = true;
  }
  for (int v = 0; v < mesh->n_vertices(); ++v)
    if (on_boundary[v]) {
      tl.index_of_vertex[v] = static_cast<int>(tl.boundary_vertices.size());
      tl.boundary_vertices.push_back(v);
    }
  return tl;
}

/// Vector-valued nodal table on boundary vertices x time nodes, piecewise linear
/// in space on boundary faces and in time. Houses observations G and tabulated
/// Neumann data P.
struct BoundaryTraceTable {
  TraceLayout layout;
  TimeGrid grid;
  std::vector<std::vector<double>> values;     // [time node][trace index * dim + comp]

  int dim() const { return layout.mesh->dim; }

  static BoundaryTraceTable zero(TraceLayout tl, const TimeGrid& grid) {
    BoundaryTraceTable t;
    t.grid = grid;
    t.values.assign(grid.n_nodes(),
                    std::vector<double>(static_cast<size_t>(tl.n_nodes()) * tl.mesh->dim, 0.0));
    t.layout = std::move(tl);
    return t;
  }

  double& at(int k, int trace_index, int comp) {
    return values[k][trace_index * dim() + comp];
  }
  double at(int k, int trace_index, int comp) const {
    return values[k][trace_index * dim() + comp];
  }

  /// Value at face barycentric coordinates (d entries over the face corners) and time node k.
  Vec3 face_value(int face, const std::array<double, 4>& fb, int k) const {
    const SimplicialMesh& m = *layout.mesh;
    Vec3 v{};
    for (int i = 0; i < m.n_face_corners(); ++i) {
      const int ti = layout.index_of_vertex[m.faces[face].verts[i]];
      if (ti < 0) throw usage_error("BoundaryTraceTable: face vertex missing from layout");
      for (int c = 0; c < m.dim; ++c) v[c] += fb[i] * values[k][ti * m.dim + c];
    }
    return v;
  }

  Vec3 face_value_at_time(int face, const std::array<double, 4>& fb, double t) const {
    const double tau = grid.tau();
    int k = std::min(static_cast<int>(t / tau), grid.n_intervals - 1);
    k = std::max(k, 0);
    const double s = t / tau - k;
    return vec_add(vec_scale(1.0 - s, face_value(face, fb, k)),
                   vec_scale(s, face_value(face, fb, k + 1)));
  }

  /// Value at an arbitrary boundary point (located on a boundary face of this layout).
  Vec3 point_value_at_time(const Vec3& x, double t, double tol = 1e-9) const {
    const SimplicialMesh& m = *layout.mesh;
    for (int f : layout.boundary_faces) {
      std::array<double, 4> fb{};
      if (face_barycentric(m, f, x, fb, tol)) return face_value_at_time(f, fb, t);
    }
    throw usage_error("BoundaryTraceTable: point not on any boundary face");
  }

  double squared_l2() const {
    double s = 0.0;
    for (const auto& row : values)
      for (double v : row) s += v * v;
    return s;
  }

  static bool face_barycentric(const SimplicialMesh& m, int face, const Vec3& x,
                               std::array<double, 4>& fb, double tol) {
    const auto& fv = m.faces[face].verts;
    const Vec3& p0 = m.vertices[fv[0]];
    if (m.dim == 2) {
      const Vec3 e = vec_sub(m.vertices[fv[1]], p0);
      const Vec3 dx = vec_sub(x, p0);
      const double len2 = vec_dot(e, e);
      const double s = vec_dot(dx, e) / len2;
      const Vec3 proj = vec_add(p0, vec_scale(s, e));
      if (vec_dist(proj, x) > tol * std::sqrt(len2)) return false;
      if (s < -tol || s > 1.0 + tol) return false;
      fb = {1.0 - s, s, 0.0, 0.0};
      return true;
    }
    const Vec3 e1 = vec_sub(m.vertices[fv[1]], p0);
    const Vec3 e2 = vec_sub(m.vertices[fv[2]], p0);
    const Vec3 dx = vec_sub(x, p0);
    const Vec3 n = vec_cross(e1, e2);
    const double n2 = vec_dot(n, n);
    if (std::abs(vec_dot(dx, n)) > tol * std::sqrt(n2)) return false;
    // Solve dx = a e1 + b e2 in the face plane.
    const double m11 = vec_dot(e1, e1), m12 = vec_dot(e1, e2), m22 = vec_dot(e2, e2);
    const double r1 = vec_dot(dx, e1), r2 = vec_dot(dx, e2);
    const double det = m11 * m22 - m12 * m12;
    const double a = (m22 * r1 - m12 * r2) / det;
    const double b = (m11 * r2 - m12 * r1) / det;
    if (a < -tol || b < -tol || a + b > 1.0 + tol) return false;
    fb = {1.0 - a - b, a, b, 0.0};
    return true;
  }
};

using ObservationData = BoundaryTraceTable;

/// Neumann data dE/dnu = P on Gamma_T: an analytic descriptor, tabulated onto a
/// trace layout before entering any weak form (committed representation).
struct NeumannData {
  std::function<Vec3(const Vec3&, double)> analytic;

  BoundaryTraceTable tabulate(const TraceLayout& layout, const TimeGrid& grid) const {
    BoundaryTraceTable t = BoundaryTraceTable::zero(layout, grid);
    const SimplicialMesh& m = *layout.mesh;
    for (int k = 0; k < grid.n_nodes(); ++k) {
      const double time = grid.node(k);
      for (int i = 0; i < layout.n_nodes(); ++i) {
        const Vec3 p = analytic(m.vertices[layout.boundary_vertices[i]], time);
        for (int c = 0; c < m.dim; ++c) t.at(k, i, c) = p[c];
      }
    }
    return t;
  }
};

/// Re-tabulate a trace table on another mesh's layout by P1 interpolation on the
/// source boundary faces (and linear interpolation in time).
inline BoundaryTraceTable interpolate_trace(const BoundaryTraceTable& src,
                                            const TraceLayout& target_layout,
                                            const TimeGrid& target_grid) {
  BoundaryTraceTable out = BoundaryTraceTable::zero(target_layout, target_grid);
  const SimplicialMesh& tm = *target_layout.mesh;
  for (int k = 0; k < target_grid.n_nodes(); ++k) {
    const double t = target_grid.node(k);
    for (int i = 0; i < target_layout.n_nodes(); ++i) {
      const Vec3 x = tm.vertices[target_layout.boundary_vertices[i]];
      const Vec3 v = src.point_value_at_time(x, std::min(t, src.grid.T));
      for (int c = 0; c < tm.dim; ++c) out.at(k, i, c) = v[c];
    }
  }
  return out;
}

/// Boundary trace of a space-time field on its own mesh's layout.
inline BoundaryTraceTable extract_trace(const SpaceTimeField& u, const TraceLayout& layout) {
  if (layout.mesh != u.mesh()) throw usage_error("extract_trace: layout/mesh mismatch");
  BoundaryTraceTable t = BoundaryTraceTable::zero(layout, u.grid());
  for (int k = 0; k < u.grid().n_nodes(); ++k)
    for (int i = 0; i < layout.n_nodes(); ++i)
      for (int c = 0; c < u.mesh()->dim; ++c)
        t.at(k, i, c) = u.at(k, layout.boundary_vertices[i], c);
  return t;
}

// ---- Trace CSV (one row per boundary face vertex per time node) ----

inline void write_trace_csv(const BoundaryTraceTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("write_trace_csv: cannot open " + path);
  const SimplicialMesh& m = *table.layout.mesh;
  const int d = m.dim;
  out << "# permrec trace v1\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "# dim=%d T=%.17g steps=%d nodes=%d\n", d, table.grid.T,
                table.grid.n_intervals, table.layout.n_nodes());
  out << buf;
  out << "face,node,k";
  for (int c = 0; c < d; ++c) out << ",c" << c;
  out << "\n";
  for (int f : table.layout.boundary_faces) {
    for (int i = 0; i < m.n_face_corners(); ++i) {
      const int vtx = m.faces[f].verts[i];
      const int ti = table.layout.index_of_vertex[vtx];
      for (int k = 0; k < table.grid.n_nodes(); ++k) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d", f, vtx, k);
        out << buf;
        for (int c = 0; c < d; ++c) {
          std::snprintf(buf, sizeof buf, ",%.17g", table.at(k, ti, c));
          out << buf;
        }
        out << "\n";
      }
    }
  }
}

/// Strict reader for the trace CSV; the layout must come from the same mesh the
/// file was written against.
inline BoundaryTraceTable read_trace_csv(const std::string& path, const TraceLayout& layout) {
  std::ifstream in(path);
  if (!in) throw config_error("read_trace_csv: cannot open " + path);
  std::string line;
  int dim = -1, steps = -1, nodes = -1;
  double T = 0.0;
  int line_no = 0;
  // Preamble.
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("# permrec trace", 0) == 0) continue;
    if (line.rfind("# dim=", 0) == 0) {
      if (std::sscanf(line.c_str(), "# dim=%d T=%lg steps=%d nodes=%d", &dim, &T, &steps,
                      &nodes) != 4)
        throw config_error("read_trace_csv: bad metadata line " + std::to_string(line_no));
      continue;
    }
    break;  // header row reached
  }
  if (dim != layout.mesh->dim) throw config_error("read_trace_csv: dimension mismatch");
  if (nodes != layout.n_nodes())
    throw config_error("read_trace_csv: trace layout mismatch (node count)");
  TimeGrid grid = make_time_grid(T, steps);
  BoundaryTraceTable table = BoundaryTraceTable::zero(layout, grid);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::array<double, 6> vals{};
    int n = 0;
    while (std::getline(ss, tok, ',')) {
      if (n >= 3 + dim) throw config_error("read_trace_csv: extra columns, line " + std::to_string(line_no));
      vals[n++] = std::stod(tok);
    }
    if (n != 3 + dim)
      throw config_error("read_trace_csv: missing columns, line " + std::to_string(line_no));
    const int vtx = static_cast<int>(vals[1]);
    const int k = static_cast<int>(vals[2]);
    if (vtx < 0 || vtx >= layout.mesh->n_vertices() || layout.index_of_vertex[vtx] < 0 || k < 0 ||
        k >= grid.n_nodes())
      throw config_error("read_trace_csv: row out of range, line " + std::to_string(line_no));
    const int ti = layout.index_of_vertex[vtx];
    for (int c = 0; c < dim; ++c) table.at(k, ti, c) = vals[3 + c];
  }
  return table;
}

}  // namespace permrec
