#pragma once

#include "permrec/jumps.hpp"
#include "permrec/objective.hpp"

namespace permrec {

/// The five residuals of the Lagrangian error estimate, as piecewise fields:
///   r_eps      scalar per cell (time already integrated out),
///   r_lam_om, r_e_om   vectors per (cell, interval),
///   r_lam_gm, r_e_gm   vectors per (boundary face, interval).
/// Sampling convention (shared with the test oracles): cell centroids in space,
/// face midpoints on faces, interval midpoints in time for jump-lifted and
/// absolute-value factors; polynomial-in-time factors are integrated exactly.
struct ResidualFields {
  std::vector<double> r_eps;                     // [cell]
  std::vector<std::vector<Vec3>> r_lam_om;       // [cell][interval]
  std::vector<std::vector<Vec3>> r_e_om;         // [cell][interval]
  std::vector<std::vector<Vec3>> r_lam_gm;       // [boundary face][interval]
  std::vector<std::vector<Vec3>> r_e_gm;         // [boundary face][interval]
};

/// Maximal-jump fields of the computed triple that enter both the residuals and
/// the estimate weights.
struct JumpData {
  SpatialJumps eps_nu;       // [d eps / d nu]_s~, static
  SpatialJumps e_nu;         // [d E / d nu]_s~ per interval
  SpatialJumps lam_nu;       // [d lam / d nu]_s~ per interval
  TemporalJumps e_dt;        // [d E / d t]_t~ per interval
  TemporalJumps lam_dt;      // [d lam / d t]_t~ per interval
  TemporalJumps divlam_dt;   // [d (div lam) / d t]_t~ per interval
  SpatialJumps nuE_divlam;   // [(nu . E)(div lam)]_s~ per interval (scalar)
  SpatialJumps gradepsE_nu;  // [(grad eps . E) nu]_s~ per interval (vector)
};

inline JumpData compute_jumps(const PermittivityField& eps, const SpaceTimeField& E,
                              const SpaceTimeField& lam) {
  const SimplicialMesh& m = *eps.mesh();
  const int nk = E.grid().n_intervals;
  JumpData j;
  j.eps_nu = normal_derivative_jumps(eps.field());
  j.e_nu = normal_derivative_jumps(E);
  j.lam_nu = normal_derivative_jumps(lam);
  j.e_dt = time_derivative_jumps(E);
  j.lam_dt = time_derivative_jumps(lam);
  j.divlam_dt = div_time_derivative_jumps(lam);
  j.nuE_divlam = spatial_max_jump_ex(m, nk, [&](int cell, int face, int k) {
    const auto fb = m.barycentric(cell, m.face_midpoint(face));
    const Vec3 nu = m.face_normal(face, m.face_side_of_cell(face, cell));
    const Vec3 Em = vec_scale(0.5, vec_add(E.value(cell, fb, k), E.value(cell, fb, k + 1)));
    const double divl = 0.5 * (lam.divergence(cell, k) + lam.divergence(cell, k + 1));
    return Vec3{vec_dot(nu, Em) * divl, 0.0, 0.0};
  });
  j.gradepsE_nu = spatial_max_jump_ex(m, nk, [&](int cell, int face, int k) {
    const auto fb = m.barycentric(cell, m.face_midpoint(face));
    const Vec3 nu = m.face_normal(face, m.face_side_of_cell(face, cell));
    const Vec3 ge = eps.grad(cell, fb);
    const Vec3 Em = vec_scale(0.5, vec_add(E.value(cell, fb, k), E.value(cell, fb, k + 1)));
    return vec_scale(vec_dot(ge, Em), nu);
  });
  return j;
}

/// R_eps = alpha (eps_h - eps_0) - int dE/dt . dlam/dt dt
///         - int (div E)(div lam)/eps dt + int [(nu.E)(div lam)]_s~ / (h eps) dt.
inline std::vector<double> residual_eps(const PermittivityField& eps, const SpaceTimeField& E,
                                        const SpaceTimeField& lam,
                                        const RegularizationConfig& cfg, const JumpData& jumps,
                                        const MeshSizeField& h) {
  detail::require_same_eps_space(eps, cfg.eps0, "residual_eps");
  if (E.mesh() != eps.mesh() || lam.mesh() != eps.mesh())
    throw usage_error("residual_eps: fields on different meshes");
  const SimplicialMesh& m = *eps.mesh();
  const TimeGrid& grid = E.grid();
  const double tau = grid.tau();
  std::vector<double> out(m.n_cells(), 0.0);
  for (int c = 0; c < m.n_cells(); ++c) {
    const auto b = m.barycentric(c, m.cell_centroid(c));
    const double e = eps.value(c, b);
    double slopes = 0.0, divdiv = 0.0, jump_term = 0.0;
    for (int k = 0; k < grid.n_intervals; ++k) {
      slopes += tau * vec_dot(E.slope_value(c, b, k), lam.slope_value(c, b, k));
      // Product of two linear-in-t factors, integrated exactly.
      const double a0 = E.divergence(c, k), a1 = E.divergence(c, k + 1);
      const double b0 = lam.divergence(c, k), b1 = lam.divergence(c, k + 1);
      divdiv += tau / 6.0 * (2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1);
      jump_term += tau * jumps.nuE_divlam.magnitude.at(c, k);
    }
    out[c] = cfg.alpha * (e - cfg.eps0.value(c, b)) - slopes - divdiv / e +
             jump_term / (h.h[c] * e);
  }
  return out;
}

/// R_{lam,Omega} = -eps [dlam/dt]_t~ / tau + [dlam/dnu]_s~ / (2h) + (div lam / eps) grad eps,
/// R_{lam,Gamma} = dlam/dnu + (E - G) z^2.
inline void residual_adjoint_pair(const PermittivityField& eps, const SpaceTimeField& E,
                                  const SpaceTimeField& lam, const ObservationData& G,
                                  const CutoffFunction& z, const JumpData& jumps,
                                  const MeshSizeField& h, const TraceLayout& layout,
                                  std::vector<std::vector<Vec3>>& r_om,
                                  std::vector<std::vector<Vec3>>& r_gm) {
  const SimplicialMesh& m = *eps.mesh();
  const TimeGrid& grid = lam.grid();
  const double tau = grid.tau();
  const int nk = grid.n_intervals;
  r_om.assign(m.n_cells(), std::vector<Vec3>(nk));
  for (int c = 0; c < m.n_cells(); ++c) {
    const auto b = m.barycentric(c, m.cell_centroid(c));
    const double e = eps.value(c, b);
    const Vec3 ge = eps.grad(c, b);
    for (int k = 0; k < nk; ++k) {
      const double divl = 0.5 * (lam.divergence(c, k) + lam.divergence(c, k + 1));
      Vec3 r = vec_scale(-e / tau, jumps.lam_dt.representative.at(c, k));
      r = vec_add(r, vec_scale(0.5 / h.h[c], jumps.lam_nu.representative.at(c, k)));
      r = vec_add(r, vec_scale(divl / e, ge));
      r_om[c][k] = r;
    }
  }
  r_gm.assign(layout.boundary_faces.size(), std::vector<Vec3>(nk));
  for (size_t bi = 0; bi < layout.boundary_faces.size(); ++bi) {
    const int f = layout.boundary_faces[bi];
    const int cell = m.faces[f].cells[0];
    const Vec3 nu = m.face_normal(f, 0);
    const auto cb = m.barycentric(cell, m.face_midpoint(f));
    std::array<double, 4> fb{};
    if (!BoundaryTraceTable::face_barycentric(m, f, m.face_midpoint(f), fb, 1e-9))
      throw solver_error("residual_adjoint_pair: face midpoint not on its own face");
    for (int k = 0; k < nk; ++k) {
      const double t_mid = (k + 0.5) * tau;
      const double zz = cutoff_value(t_mid, z);
      const auto J0 = lam.jacobian(cell, k), J1 = lam.jacobian(cell, k + 1);
      Vec3 dlam_dnu{};
      for (int comp = 0; comp < m.dim; ++comp)
        dlam_dnu[comp] = 0.5 * (vec_dot(nu, J0[comp]) + vec_dot(nu, J1[comp]));
      const Vec3 Em = vec_scale(0.5, vec_add(E.value(cell, cb, k), E.value(cell, cb, k + 1)));
      const Vec3 Gm = vec_scale(0.5, vec_add(G.face_value(f, fb, k), G.face_value(f, fb, k + 1)));
      r_gm[bi][k] = vec_add(dlam_dnu, vec_scale(zz * zz, vec_sub(Em, Gm)));
    }
  }
}

/// R_{E,Omega} = -eps [dE/dt]_t~ / tau + [dE/dnu]_s~ / (2h)
///               + (grad eps . E / eps^2) grad eps
///               - (J_{grad eps}^T E + J_E^T grad eps) / eps
///               + [(grad eps . E) nu]_s~ / (2 h eps),
/// R_{E,Gamma} = dE/dnu - P.  The J_{grad eps} term vanishes identically for q=1.
inline void residual_direct_pair(const PermittivityField& eps, const SpaceTimeField& E,
                                 const BoundaryTraceTable& P, const JumpData& jumps,
                                 const MeshSizeField& h, const TraceLayout& layout,
                                 std::vector<std::vector<Vec3>>& r_om,
                                 std::vector<std::vector<Vec3>>& r_gm) {
  const SimplicialMesh& m = *eps.mesh();
  const TimeGrid& grid = E.grid();
  const double tau = grid.tau();
  const int nk = grid.n_intervals;
  r_om.assign(m.n_cells(), std::vector<Vec3>(nk));
  for (int c = 0; c < m.n_cells(); ++c) {
    const auto b = m.barycentric(c, m.cell_centroid(c));
    const double e = eps.value(c, b);
    const Vec3 ge = eps.grad(c, b);
    const auto Heps = eps.field().hessian(c);  // J_{grad eps}, constant per cell
    for (int k = 0; k < nk; ++k) {
      const Vec3 Em = vec_scale(0.5, vec_add(E.value(c, b, k), E.value(c, b, k + 1)));
      const auto JE0 = E.jacobian(c, k), JE1 = E.jacobian(c, k + 1);
      Vec3 r = vec_scale(-e / tau, jumps.e_dt.representative.at(c, k));
      r = vec_add(r, vec_scale(0.5 / h.h[c], jumps.e_nu.representative.at(c, k)));
      r = vec_add(r, vec_scale(vec_dot(ge, Em) / (e * e), ge));
      // J_{grad eps}^T E (Hessian is symmetric) and J_E^T grad eps.
      Vec3 jterm{};
      for (int x = 0; x < m.dim; ++x) {
        double v = vec_dot(Heps[x], Em);
        for (int comp = 0; comp < m.dim; ++comp)
          v += 0.5 * (JE0[comp][x] + JE1[comp][x]) * ge[comp];
        jterm[x] = v;
      }
      r = vec_sub(r, vec_scale(1.0 / e, jterm));
      r = vec_add(r, vec_scale(0.5 / (h.h[c] * e), jumps.gradepsE_nu.representative.at(c, k)));
      r_om[c][k] = r;
    }
  }
  r_gm.assign(layout.boundary_faces.size(), std::vector<Vec3>(nk));
  for (size_t bi = 0; bi < layout.boundary_faces.size(); ++bi) {
    const int f = layout.boundary_faces[bi];
    const int cell = m.faces[f].cells[0];
    const Vec3 nu = m.face_normal(f, 0);
    std::array<double, 4> fb{};
    if (!BoundaryTraceTable::face_barycentric(m, f, m.face_midpoint(f), fb, 1e-9))
      throw solver_error("residual_direct_pair: face midpoint not on its own face");
    for (int k = 0; k < nk; ++k) {
      const auto J0 = E.jacobian(cell, k), J1 = E.jacobian(cell, k + 1);
      Vec3 dE_dnu{};
      for (int comp = 0; comp < m.dim; ++comp)
        dE_dnu[comp] = 0.5 * (vec_dot(nu, J0[comp]) + vec_dot(nu, J1[comp]));
      const Vec3 Pm = vec_scale(0.5, vec_add(P.face_value(f, fb, k), P.face_value(f, fb, k + 1)));
      r_gm[bi][k] = vec_sub(dE_dnu, Pm);
    }
  }
}

/// All residual fields for a computed triple.
inline ResidualFields compute_residuals(const PermittivityField& eps, const SpaceTimeField& E,
                                        const SpaceTimeField& lam, const ObservationData& G,
                                        const BoundaryTraceTable& P,
                                        const RegularizationConfig& cfg, const CutoffFunction& z,
                                        const JumpData& jumps, const MeshSizeField& h,
                                        const TraceLayout& layout) {
  ResidualFields r;
  r.r_eps = residual_eps(eps, E, lam, cfg, jumps, h);
  residual_adjoint_pair(eps, E, lam, G, z, jumps, h, layout, r.r_lam_om, r.r_lam_gm);
  residual_direct_pair(eps, E, P, jumps, h, layout, r.r_e_om, r.r_e_gm);
  return r;
}

}  // namespace permrec
