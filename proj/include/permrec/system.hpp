#pragma once

#include <Eigen/Sparse>

#include "permrec/boundary.hpp"
#include "permrec/permittivity.hpp"
#include "permrec/quadrature.hpp"

namespace permrec {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Spatial bilinear forms of the wave problem on P1 vector fields
/// (dof = vertex * dim + component):
///   M(eps)  <eps u, v>_Omega
///   K       <grad u, grad v>_Omega (component-wise)
///   B(eps)  <(grad eps . u)/eps, div v>_Omega   (rows test, cols trial)
struct AssembledSystem {
  int n = 0;
  SparseMat M;
  SparseMat K;
  SparseMat B;
};

inline AssembledSystem assemble_system(const PermittivityField& eps) {
  const SimplicialMesh& m = *eps.mesh();
  const int d = m.dim;
  const int nv = m.n_vertices();
  AssembledSystem sys;
  sys.n = nv * d;
  std::vector<Triplet> tm, tk, tb;
  const QuadRule& rule = cell_rule(d);
  tm.reserve(static_cast<size_t>(m.n_cells()) * (d + 1) * (d + 1) * d);
  tk.reserve(tm.capacity());
  for (int c = 0; c < m.n_cells(); ++c) {
    const double vol = m.cell_volume(c);
    for (const QuadPoint& q : rule) {
      const double w = q.weight * vol;
      const double e = eps.value(c, q.bary);
      const Vec3 ge = eps.grad(c, q.bary);
      for (int i = 0; i <= d; ++i) {
        const int vi = m.cells[c][i];
        const Vec3 gi = m.bary_grad(c, i);
        for (int j = 0; j <= d; ++j) {
          const int vj = m.cells[c][j];
          const Vec3 gj = m.bary_grad(c, j);
          const double mass = w * e * q.bary[i] * q.bary[j];
          const double stiff = w * vec_dot(gi, gj);
          for (int comp = 0; comp < d; ++comp) {
            tm.emplace_back(vi * d + comp, vj * d + comp, mass);
            tk.emplace_back(vi * d + comp, vj * d + comp, stiff);
          }
          // Trial e_cc b_j against div of test e_cr b_i.
          for (int cr = 0; cr < d; ++cr)
            for (int cc = 0; cc < d; ++cc) {
              const double v = w * (ge[cc] * q.bary[j] / e) * gi[cr];
              if (v != 0.0) tb.emplace_back(vi * d + cr, vj * d + cc, v);
            }
        }
      }
    }
  }
  sys.M.resize(sys.n, sys.n);
  sys.K.resize(sys.n, sys.n);
  sys.B.resize(sys.n, sys.n);
  sys.M.setFromTriplets(tm.begin(), tm.end());
  sys.K.setFromTriplets(tk.begin(), tk.end());
  sys.B.setFromTriplets(tb.begin(), tb.end());
  return sys;
}

/// <g, phi>_Gamma for a nodal boundary field given as one time slice of a trace
/// table (linear in the nodal values).
inline Eigen::VectorXd boundary_load(const TraceLayout& layout,
                                     const std::vector<double>& slice) {
  const SimplicialMesh& m = *layout.mesh;
  const int d = m.dim;
  Eigen::VectorXd load = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.n_vertices()) * d);
  const QuadRule& rule = face_rule(d);
  for (int f : layout.boundary_faces) {
    const auto& fv = m.faces[f].verts;
    const double meas = m.face_measure(f);
    for (const QuadPoint& q : rule) {
      const double w = q.weight * meas;
      Vec3 g{};
      for (int i = 0; i < d; ++i) {
        const int ti = layout.index_of_vertex[fv[i]];
        for (int c = 0; c < d; ++c) g[c] += q.bary[i] * slice[ti * d + c];
      }
      for (int i = 0; i < d; ++i)
        for (int c = 0; c < d; ++c) load[fv[i] * d + c] += w * q.bary[i] * g[c];
    }
  }
  return load;
}

}  // namespace permrec
