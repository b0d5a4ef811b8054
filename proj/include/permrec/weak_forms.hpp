#pragma once

#include "permrec/system.hpp"

namespace permrec {

namespace detail {

inline void require_same_space(const PermittivityField& eps, const SpaceTimeField& a,
                               const SpaceTimeField& b, const char* where) {
  if (a.mesh() != b.mesh() || a.mesh() != eps.mesh())
    throw usage_error(std::string(where) + ": fields live on different meshes");
  if (a.grid().n_intervals != b.grid().n_intervals ||
      std::abs(a.grid().T - b.grid().T) > 1e-14 * std::max(1.0, a.grid().T))
    throw usage_error(std::string(where) + ": fields live on different time grids");
}

inline void require_direct(const SpaceTimeField& u, const char* where) {
  if (!u.slice_is_zero(0))
    throw usage_error(std::string(where) + ": direct-space field must vanish at t=0");
}

inline void require_adjoint(const SpaceTimeField& u, const char* where) {
  if (!u.slice_is_zero(u.grid().n_intervals))
    throw usage_error(std::string(where) + ": adjoint-space field must vanish at t=T");
}

}  // namespace detail

/// Weak form of the direct problem,
///   D(eps, E, phi) = -<eps dE/dt, dphi/dt>_{Omega_T} + <grad E, grad phi>_{Omega_T}
///                    + <(grad eps . E)/eps, div phi>_{Omega_T} - <P, phi>_{Gamma_T},
/// evaluated by the shared cell/face/time quadrature. E in the direct space,
/// phi in the adjoint space, P tabulated on the trace layout.
inline double weak_form_D(const PermittivityField& eps, const SpaceTimeField& E,
                          const SpaceTimeField& phi, const BoundaryTraceTable& P) {
  detail::require_same_space(eps, E, phi, "weak_form_D");
  detail::require_direct(E, "weak_form_D");
  detail::require_adjoint(phi, "weak_form_D");
  if (P.layout.mesh != E.mesh()) throw usage_error("weak_form_D: P on a different mesh");
  const SimplicialMesh& m = *E.mesh();
  const int d = m.dim;
  const TimeGrid& grid = E.grid();
  const double tau = grid.tau();
  const QuadRule& crule = cell_rule(d);
  const TimeRule& trule = time_rule();
  double total = 0.0;
  for (int c = 0; c < m.n_cells(); ++c) {
    const double vol = m.cell_volume(c);
    for (int k = 0; k < grid.n_intervals; ++k) {
      const auto JE0 = E.jacobian(c, k), JE1 = E.jacobian(c, k + 1);
      const auto JP0 = phi.jacobian(c, k), JP1 = phi.jacobian(c, k + 1);
      for (const QuadPoint& q : crule) {
        const double e = eps.value(c, q.bary);
        const Vec3 ge = eps.grad(c, q.bary);
        const Vec3 sE = E.slope_value(c, q.bary, k);
        const Vec3 sP = phi.slope_value(c, q.bary, k);
        const Vec3 Ek = E.value(c, q.bary, k), Ek1 = E.value(c, q.bary, k + 1);
        for (int g = 0; g < 3; ++g) {
          const double s = trule.x[g];
          const double w = q.weight * vol * trule.w[g] * tau;
          double grad_dot = 0.0, div_phi = 0.0;
          for (int comp = 0; comp < d; ++comp) {
            for (int x = 0; x < d; ++x) {
              const double je = (1.0 - s) * JE0[comp][x] + s * JE1[comp][x];
              const double jp = (1.0 - s) * JP0[comp][x] + s * JP1[comp][x];
              grad_dot += je * jp;
            }
            div_phi += (1.0 - s) * JP0[comp][comp] + s * JP1[comp][comp];
          }
          const Vec3 Et = vec_add(vec_scale(1.0 - s, Ek), vec_scale(s, Ek1));
          total += w * (-e * vec_dot(sE, sP) + grad_dot + vec_dot(ge, Et) / e * div_phi);
        }
      }
    }
  }
  // Boundary term -<P, phi>_{Gamma_T}.
  const QuadRule& frule = face_rule(d);
  for (int f : P.layout.boundary_faces) {
    const int cell = m.faces[f].cells[0];
    const double meas = m.face_measure(f);
    for (const QuadPoint& q : frule) {
      Vec3 x{};
      for (int i = 0; i < d; ++i)
        x = vec_add(x, vec_scale(q.bary[i], m.vertices[m.faces[f].verts[i]]));
      const auto cb = m.barycentric(cell, x);
      for (int k = 0; k < grid.n_intervals; ++k) {
        const Vec3 P0 = P.face_value(f, q.bary, k), P1 = P.face_value(f, q.bary, k + 1);
        const Vec3 phi0 = phi.value(cell, cb, k), phi1 = phi.value(cell, cb, k + 1);
        for (int g = 0; g < 3; ++g) {
          const double s = trule.x[g];
          const double w = q.weight * meas * trule.w[g] * tau;
          const Vec3 Pt = vec_add(vec_scale(1.0 - s, P0), vec_scale(s, P1));
          const Vec3 pt = vec_add(vec_scale(1.0 - s, phi0), vec_scale(s, phi1));
          total -= w * vec_dot(Pt, pt);
        }
      }
    }
  }
  return total;
}

/// Weak form of the adjoint problem,
///   A(eps, lam, phi) = <(E - G) z^2, phi>_{Gamma_T} - <eps dlam/dt, dphi/dt>_{Omega_T}
///                      + <grad lam, grad phi>_{Omega_T} + <(div lam / eps) grad eps, phi>_{Omega_T},
/// with lam in the adjoint space and phi in the direct space.
inline double weak_form_A(const PermittivityField& eps, const SpaceTimeField& lam,
                          const SpaceTimeField& phi, const SpaceTimeField& E,
                          const ObservationData& G, const CutoffFunction& z) {
  detail::require_same_space(eps, lam, phi, "weak_form_A");
  detail::require_adjoint(lam, "weak_form_A");
  detail::require_direct(phi, "weak_form_A");
  if (G.layout.mesh != lam.mesh()) throw usage_error("weak_form_A: G on a different mesh");
  const SimplicialMesh& m = *lam.mesh();
  const int d = m.dim;
  const TimeGrid& grid = lam.grid();
  const double tau = grid.tau();
  const QuadRule& crule = cell_rule(d);
  const TimeRule& trule = time_rule();
  double total = 0.0;
  for (int c = 0; c < m.n_cells(); ++c) {
    const double vol = m.cell_volume(c);
    for (int k = 0; k < grid.n_intervals; ++k) {
      const auto JL0 = lam.jacobian(c, k), JL1 = lam.jacobian(c, k + 1);
      const auto JP0 = phi.jacobian(c, k), JP1 = phi.jacobian(c, k + 1);
      const double divL0 = lam.divergence(c, k), divL1 = lam.divergence(c, k + 1);
      for (const QuadPoint& q : crule) {
        const double e = eps.value(c, q.bary);
        const Vec3 ge = eps.grad(c, q.bary);
        const Vec3 sL = lam.slope_value(c, q.bary, k);
        const Vec3 sP = phi.slope_value(c, q.bary, k);
        const Vec3 phik = phi.value(c, q.bary, k), phik1 = phi.value(c, q.bary, k + 1);
        for (int g = 0; g < 3; ++g) {
          const double s = trule.x[g];
          const double w = q.weight * vol * trule.w[g] * tau;
          double grad_dot = 0.0;
          for (int comp = 0; comp < d; ++comp)
            for (int x = 0; x < d; ++x) {
              const double jl = (1.0 - s) * JL0[comp][x] + s * JL1[comp][x];
              const double jp = (1.0 - s) * JP0[comp][x] + s * JP1[comp][x];
              grad_dot += jl * jp;
            }
          const double divL = (1.0 - s) * divL0 + s * divL1;
          const Vec3 pt = vec_add(vec_scale(1.0 - s, phik), vec_scale(s, phik1));
          total += w * (-e * vec_dot(sL, sP) + grad_dot + divL / e * vec_dot(ge, pt));
        }
      }
    }
  }
  // Boundary source <(E - G) z^2, phi>_{Gamma_T}.
  const QuadRule& frule = face_rule(d);
  for (int f : G.layout.boundary_faces) {
    const int cell = m.faces[f].cells[0];
    const double meas = m.face_measure(f);
    for (const QuadPoint& q : frule) {
      Vec3 x{};
      for (int i = 0; i < d; ++i)
        x = vec_add(x, vec_scale(q.bary[i], m.vertices[m.faces[f].verts[i]]));
      const auto cb = m.barycentric(cell, x);
      for (int k = 0; k < grid.n_intervals; ++k) {
        const Vec3 E0 = E.value(cell, cb, k), E1 = E.value(cell, cb, k + 1);
        const Vec3 G0 = G.face_value(f, q.bary, k), G1 = G.face_value(f, q.bary, k + 1);
        const Vec3 phi0 = phi.value(cell, cb, k), phi1 = phi.value(cell, cb, k + 1);
        for (int g = 0; g < 3; ++g) {
          const double s = trule.x[g];
          const double t = (k + s) * tau;
          const double zz = cutoff_value(t, z);
          const double w = q.weight * meas * trule.w[g] * tau;
          Vec3 mis = vec_sub(vec_add(vec_scale(1.0 - s, E0), vec_scale(s, E1)),
                             vec_add(vec_scale(1.0 - s, G0), vec_scale(s, G1)));
          const Vec3 pt = vec_add(vec_scale(1.0 - s, phi0), vec_scale(s, phi1));
          total += w * zz * zz * vec_dot(mis, pt);
        }
      }
    }
  }
  return total;
}

}  // namespace permrec
