#pragma once

#include <cassert>

#include "permrec/wave_solver.hpp"

namespace permrec {

namespace detail {

inline void require_same_eps_space(const PermittivityField& a, const PermittivityField& b,
                                   const char* where) {
  if (a.mesh() != b.mesh() || a.degree() != b.degree())
    throw usage_error(std::string(where) + ": permittivity fields on different spaces");
}

}  // namespace detail

struct TikhonovParts {
  double misfit = 0.0;          // 1/2 ||(E - G) z||^2_{Gamma_T}
  double regularization = 0.0;  // alpha/2 ||eps - eps0||^2_Omega
  double total() const { return misfit + regularization; }
};

/// Boundary misfit 1/2 ||(E - G) z||^2 with the shared face/time quadrature.
inline double misfit_value(const SpaceTimeField& E, const ObservationData& G,
                           const CutoffFunction& z) {
  if (G.layout.mesh != E.mesh()) throw usage_error("misfit_value: G on a different mesh");
  if (G.grid.n_intervals != E.grid().n_intervals)
    throw usage_error("misfit_value: G on a different time grid");
  const SimplicialMesh& m = *E.mesh();
  const int d = m.dim;
  const double tau = E.grid().tau();
  const QuadRule& frule = face_rule(d);
  const TimeRule& trule = time_rule();
  double total = 0.0;
  for (int f : G.layout.boundary_faces) {
    const int cell = m.faces[f].cells[0];
    const double meas = m.face_measure(f);
    for (const QuadPoint& q : frule) {
      Vec3 x{};
      for (int i = 0; i < d; ++i)
        x = vec_add(x, vec_scale(q.bary[i], m.vertices[m.faces[f].verts[i]]));
      const auto cb = m.barycentric(cell, x);
      for (int k = 0; k < E.grid().n_intervals; ++k) {
        const Vec3 m0 = vec_sub(E.value(cell, cb, k), G.face_value(f, q.bary, k));
        const Vec3 m1 = vec_sub(E.value(cell, cb, k + 1), G.face_value(f, q.bary, k + 1));
        for (int g = 0; g < 3; ++g) {
          const double s = trule.x[g];
          const double zz = cutoff_value((k + s) * tau, z);
          const Vec3 mis = vec_add(vec_scale(1.0 - s, m0), vec_scale(s, m1));
          total += q.weight * meas * trule.w[g] * tau * zz * zz * vec_dot(mis, mis);
        }
      }
    }
  }
  return 0.5 * total;
}

inline double regularization_value(const PermittivityField& eps, const RegularizationConfig& cfg) {
  detail::require_same_eps_space(eps, cfg.eps0, "regularization_value");
  const SimplicialMesh& m = *eps.mesh();
  const QuadRule& rule = cell_rule(m.dim);
  double total = 0.0;
  for (int c = 0; c < m.n_cells(); ++c) {
    const double vol = m.cell_volume(c);
    for (const QuadPoint& q : rule) {
      const double diff = eps.value(c, q.bary) - cfg.eps0.value(c, q.bary);
      total += q.weight * vol * diff * diff;
    }
  }
  return 0.5 * cfg.alpha * total;
}

inline TikhonovParts tikhonov_parts(const PermittivityField& eps, const SpaceTimeField& E,
                                    const ObservationData& G, const RegularizationConfig& cfg,
                                    const CutoffFunction& z) {
  return {misfit_value(E, G, z), regularization_value(eps, cfg)};
}

/// Tikhonov functional F = 1/2 ||(E - G) z||^2_{Gamma_T} + alpha/2 ||eps - eps0||^2_Omega.
inline double tikhonov_value(const PermittivityField& eps, const SpaceTimeField& E,
                             const ObservationData& G, const RegularizationConfig& cfg,
                             const CutoffFunction& z) {
  return tikhonov_parts(eps, E, G, cfg, z).total();
}

/// Lagrangian L(eps, E, lam) = F(eps, E) + D(eps, E, lam).
inline double lagrangian_value(const PermittivityField& eps, const SpaceTimeField& E,
                               const SpaceTimeField& lam, const ObservationData& G,
                               const BoundaryTraceTable& P, const RegularizationConfig& cfg,
                               const CutoffFunction& z) {
  return tikhonov_value(eps, E, G, cfg, z) + weak_form_D(eps, E, lam, P);
}

/// dL/deps against every eps basis function psi_i:
///   g_i = alpha <eps - eps0, psi_i>_Omega - <dE/dt . dlam/dt, psi_i>_{Omega_T}
///         + <(div lam) E, grad(psi_i / eps)>_{Omega_T},
/// assembled with the same quadrature as the forms it differentiates, so g is the
/// exact derivative of the discrete reduced functional when E and lam solve the
/// discrete problems for this eps (identity F' = dL/deps).
inline Eigen::VectorXd grad_eps(const PermittivityField& eps, const SpaceTimeField& E,
                                const SpaceTimeField& lam, const RegularizationConfig& cfg) {
  detail::require_same_eps_space(eps, cfg.eps0, "grad_eps");
  if (E.mesh() != eps.mesh() || lam.mesh() != eps.mesh())
    throw usage_error("grad_eps: fields on different meshes");
  // Stale-pair guard (debug builds): fields produced by a solver must have been
  // solved against this coefficient.
  assert(E.solved_for == 0 || E.solved_for == eps.stamp());
  assert(lam.solved_for == 0 || lam.solved_for == eps.stamp());
  const SimplicialMesh& m = *eps.mesh();
  const int d = m.dim;
  const TimeGrid& grid = E.grid();
  const double tau = grid.tau();
  const QuadRule& rule = cell_rule(d);
  const TimeRule& trule = time_rule();
  const ScalarField& ef = eps.field();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ef.n_dofs());
  std::vector<double> sv;
  std::vector<Vec3> sg;
  for (int c = 0; c < m.n_cells(); ++c) {
    const double vol = m.cell_volume(c);
    for (const QuadPoint& q : rule) {
      const double w = q.weight * vol;
      const double e = eps.value(c, q.bary);
      const Vec3 ge = eps.grad(c, q.bary);
      const double e0 = cfg.eps0.value(c, q.bary);
      // Time integrals at this quadrature point.
      double slopes = 0.0;  // int dE/dt . dlam/dt dt (piecewise constant in t)
      Vec3 divlam_E{};      // int (div lam) E dt
      for (int k = 0; k < grid.n_intervals; ++k) {
        slopes += tau * vec_dot(E.slope_value(c, q.bary, k), lam.slope_value(c, q.bary, k));
        const double dl0 = lam.divergence(c, k), dl1 = lam.divergence(c, k + 1);
        const Vec3 E0 = E.value(c, q.bary, k), E1 = E.value(c, q.bary, k + 1);
        for (int tg = 0; tg < 3; ++tg) {
          const double s = trule.x[tg];
          const double wt = trule.w[tg] * tau;
          const double dl = (1.0 - s) * dl0 + s * dl1;
          divlam_E = vec_add(divlam_E,
                             vec_scale(wt * dl, vec_add(vec_scale(1.0 - s, E0), vec_scale(s, E1))));
        }
      }
      ef.shape_values(q.bary, sv);
      ef.shape_gradients(c, q.bary, sg);
      const auto& dofs = ef.dofs().cell_dofs[c];
      for (size_t i = 0; i < sv.size(); ++i) {
        // grad(psi/eps) = grad psi / eps - psi grad eps / eps^2.
        const Vec3 gpe = vec_sub(vec_scale(1.0 / e, sg[i]), vec_scale(sv[i] / (e * e), ge));
        g[dofs[i]] += w * (cfg.alpha * (e - e0) * sv[i] - slopes * sv[i] + vec_dot(divlam_E, gpe));
      }
    }
  }
  return g;
}

}  // namespace permrec
