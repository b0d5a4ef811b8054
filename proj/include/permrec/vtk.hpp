#pragma once

#include <cstdio>
#include <fstream>

#include "permrec/fields.hpp"

namespace permrec {

namespace detail {

inline void vtk_header(std::ofstream& out, const SimplicialMesh& m, const std::string& title) {
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "POINTS %d double\n", m.n_vertices());
  out << buf;
  for (const Vec3& p : m.vertices) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "CELLS %d %d\n", m.n_cells(), m.n_cells() * (m.dim + 2));
  out << buf;
  for (int c = 0; c < m.n_cells(); ++c) {
    out << (m.dim + 1);
    for (int i = 0; i <= m.dim; ++i) out << ' ' << m.cells[c][i];
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "CELL_TYPES %d\n", m.n_cells());
  out << buf;
  const int type = m.dim == 2 ? 5 : 10;  // VTK_TRIANGLE / VTK_TETRA
  for (int c = 0; c < m.n_cells(); ++c) out << type << '\n';
}

inline std::ofstream vtk_open(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("vtk: cannot open " + path + " for writing");
  return out;
}

}  // namespace detail

inline void write_vtk_mesh(const SimplicialMesh& m, const std::string& path) {
  auto out = detail::vtk_open(path);
  detail::vtk_header(out, m, "mesh");
}

/// Vertex values of a scalar field as POINT_DATA (q=2 edge dofs are dropped in
/// the export; VTK holds the vertex trace).
inline void write_vtk_scalar(const ScalarField& f, const std::string& name,
                             const std::string& path) {
  const SimplicialMesh& m = *f.mesh();
  auto out = detail::vtk_open(path);
  detail::vtk_header(out, m, name);
  char buf[96];
  std::snprintf(buf, sizeof buf, "POINT_DATA %d\nSCALARS %s double 1\nLOOKUP_TABLE default\n",
                m.n_vertices(), name.c_str());
  out << buf;
  for (int v = 0; v < m.n_vertices(); ++v) {
    std::snprintf(buf, sizeof buf, "%.17g\n", f.coeffs()[v]);
    out << buf;
  }
}

/// One time slice of a vector field as POINT_DATA VECTORS.
inline void write_vtk_vector_slice(const SpaceTimeField& u, int k, const std::string& name,
                                   const std::string& path) {
  const SimplicialMesh& m = *u.mesh();
  auto out = detail::vtk_open(path);
  detail::vtk_header(out, m, name);
  char buf[128];
  std::snprintf(buf, sizeof buf, "POINT_DATA %d\nVECTORS %s double\n", m.n_vertices(),
                name.c_str());
  out << buf;
  for (int v = 0; v < m.n_vertices(); ++v) {
    const double x = u.at(k, v, 0);
    const double y = u.at(k, v, 1);
    const double z = m.dim == 3 ? u.at(k, v, 2) : 0.0;
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", x, y, z);
    out << buf;
  }
}

/// Per-cell values (indicators, residual magnitudes, h) as CELL_DATA.
inline void write_vtk_cell_data(const SimplicialMesh& m,
                                const std::vector<std::pair<std::string, std::vector<double>>>& fields,
                                const std::string& path) {
  auto out = detail::vtk_open(path);
  detail::vtk_header(out, m, "cell_data");
  char buf[96];
  std::snprintf(buf, sizeof buf, "CELL_DATA %d\n", m.n_cells());
  out << buf;
  for (const auto& [name, values] : fields) {
    if (static_cast<int>(values.size()) != m.n_cells())
      throw usage_error("write_vtk_cell_data: size mismatch for " + name);
    std::snprintf(buf, sizeof buf, "SCALARS %s double 1\nLOOKUP_TABLE default\n", name.c_str());
    out << buf;
    for (double v : values) {
      std::snprintf(buf, sizeof buf, "%.17g\n", v);
      out << buf;
    }
  }
}

}  // namespace permrec
