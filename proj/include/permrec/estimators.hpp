#pragma once

#include <numeric>

#include "permrec/residuals.hpp"

namespace permrec {

/// Per-cell nonnegative contribution to the Lagrangian estimate (time-aggregated;
/// boundary-face terms attributed to the owning cell).
struct IndicatorField {
  std::vector<double> values;
  double total() const { return std::accumulate(values.begin(), values.end(), 0.0); }
};

/// The three a posteriori bounds, evaluated with C = 1 and therefore reported as
/// constant-free indicators.
struct ErrorBounds {
  double lagrangian_bound = 0.0;   // Lagrangian estimate total
  double coefficient_bound = 0.0;  // c_eps * eta + ||R_eps||_Omega
  double tikhonov_bound = 0.0;     // c_eps^2 eta^2 + ||R_eps||^2_Omega
  double c_eps = 1.0;
  double eta = 0.0;
  double r_eps_norm = 0.0;
  bool constant_free = true;
};

/// Lagrangian error estimate (C = 1):
///   <|R_eps|, h |[d eps/d nu]_s~|>_Omega
/// + <|R_{lam,Om}|, tau |[dE/dt]_t~| + h |[dE/dnu]_s~|>_{Omega_T}
/// + <|R_{lam,Gm}|, same E weights>_{Gamma_T}
/// + <|R_{E,Om}|,  tau |[dlam/dt]_t~| + h |[dlam/dnu]_s~|>_{Omega_T}
/// + <|R_{E,Gm}|,  same lam weights>_{Gamma_T}.
inline std::pair<double, IndicatorField> lagrangian_error_estimate(
    const SimplicialMesh& mesh, const TimeGrid& grid, const ResidualFields& res,
    const JumpData& jumps, const MeshSizeField& h, const TraceLayout& layout) {
  const int nk = grid.n_intervals;
  const double tau = grid.tau();
  IndicatorField ind;
  ind.values.assign(mesh.n_cells(), 0.0);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double vol = mesh.cell_volume(c);
    double acc = vol * std::abs(res.r_eps[c]) * h.h[c] * jumps.eps_nu.magnitude.at(c, 0);
    for (int k = 0; k < nk; ++k) {
      const double wE = tau * jumps.e_dt.magnitude.at(c, k) + h.h[c] * jumps.e_nu.magnitude.at(c, k);
      const double wL =
          tau * jumps.lam_dt.magnitude.at(c, k) + h.h[c] * jumps.lam_nu.magnitude.at(c, k);
      acc += vol * tau * (vec_norm(res.r_lam_om[c][k]) * wE + vec_norm(res.r_e_om[c][k]) * wL);
    }
    ind.values[c] = acc;
  }
  for (size_t bi = 0; bi < layout.boundary_faces.size(); ++bi) {
    const int f = layout.boundary_faces[bi];
    const int c = mesh.faces[f].cells[0];
    const double meas = mesh.face_measure(f);
    double acc = 0.0;
    for (int k = 0; k < nk; ++k) {
      const double wE = tau * jumps.e_dt.magnitude.at(c, k) + h.h[c] * jumps.e_nu.magnitude.at(c, k);
      const double wL =
          tau * jumps.lam_dt.magnitude.at(c, k) + h.h[c] * jumps.lam_nu.magnitude.at(c, k);
      acc += meas * tau * (vec_norm(res.r_lam_gm[bi][k]) * wE + vec_norm(res.r_e_gm[bi][k]) * wL);
    }
    ind.values[c] += acc;
  }
  return {ind.total(), ind};
}

/// Stability factor of the coefficient error estimate:
///   eta = <|[dlam/dt]_t~|/tau + |div lam|, h |[dE/dnu]_s~| + tau |[dE/dt]_t~|>_{Omega_T}
///       + <|[dE/dt]_t~|/tau,              h |[dlam/dnu]_s~| + tau |[dlam/dt]_t~|>_{Omega_T}
///       + <|E|,                           |[dlam/dnu]_s~| + tau |[d(div lam)/dt]_t~|>_{Omega_T}.
/// The third addend carries no h weight.
inline double stability_eta(const PermittivityField& eps, const SpaceTimeField& E,
                            const SpaceTimeField& lam, const JumpData& jumps,
                            const MeshSizeField& h) {
  const SimplicialMesh& m = *eps.mesh();
  const TimeGrid& grid = E.grid();
  const double tau = grid.tau();
  double eta = 0.0;
  for (int c = 0; c < m.n_cells(); ++c) {
    const double vol = m.cell_volume(c);
    const auto b = m.barycentric(c, m.cell_centroid(c));
    for (int k = 0; k < grid.n_intervals; ++k) {
      const double divl = std::abs(0.5 * (lam.divergence(c, k) + lam.divergence(c, k + 1)));
      const Vec3 Em = vec_scale(0.5, vec_add(E.value(c, b, k), E.value(c, b, k + 1)));
      const double wE = h.h[c] * jumps.e_nu.magnitude.at(c, k) + tau * jumps.e_dt.magnitude.at(c, k);
      const double wL =
          h.h[c] * jumps.lam_nu.magnitude.at(c, k) + tau * jumps.lam_dt.magnitude.at(c, k);
      eta += vol * tau * ((jumps.lam_dt.magnitude.at(c, k) / tau + divl) * wE +
                          (jumps.e_dt.magnitude.at(c, k) / tau) * wL +
                          vec_norm(Em) * (jumps.lam_nu.magnitude.at(c, k) +
                                          tau * jumps.divlam_dt.magnitude.at(c, k)));
    }
  }
  return eta;
}

/// c_eps = max{1, ||grad eps_h||_{L_inf(Omega)}}; cellwise-constant gradients for
/// q=1, vertex-sampled for q=2.
inline double c_eps(const PermittivityField& eps) {
  const SimplicialMesh& m = *eps.mesh();
  double gmax = 0.0;
  for (int c = 0; c < m.n_cells(); ++c) {
    if (eps.degree() == 1) {
      const auto b = m.barycentric(c, m.cell_centroid(c));
      gmax = std::max(gmax, vec_norm(eps.grad(c, b)));
    } else {
      for (int i = 0; i <= m.dim; ++i) {
        std::array<double, 4> b{};
        b[i] = 1.0;
        gmax = std::max(gmax, vec_norm(eps.grad(c, b)));
      }
    }
  }
  return std::max(1.0, gmax);
}

inline double r_eps_l2_norm(const SimplicialMesh& mesh, const std::vector<double>& r_eps) {
  double s = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) s += mesh.cell_volume(c) * r_eps[c] * r_eps[c];
  return std::sqrt(s);
}

/// Coefficient error estimate: ||eps - eps_h|| <~ C (c_eps eta + ||R_eps||_Omega), C = 1.
inline double coefficient_error_bound(double ceps, double eta, double r_norm) {
  return ceps * eta + r_norm;
}

/// Tikhonov error estimate: |F(eps) - F(eps_h)| <~ C (c_eps^2 eta^2 + ||R_eps||^2_Omega), C = 1.
inline double tikhonov_error_bound(double ceps, double eta, double r_norm) {
  return ceps * ceps * eta * eta + r_norm * r_norm;
}

/// All bounds for a computed triple.
inline ErrorBounds error_bounds(const PermittivityField& eps, const SpaceTimeField& E,
                                const SpaceTimeField& lam, const ResidualFields& res,
                                const JumpData& jumps, const MeshSizeField& h,
                                double lagrangian_total) {
  ErrorBounds b;
  b.lagrangian_bound = lagrangian_total;
  b.c_eps = c_eps(eps);
  b.eta = stability_eta(eps, E, lam, jumps, h);
  b.r_eps_norm = r_eps_l2_norm(*eps.mesh(), res.r_eps);
  b.coefficient_bound = coefficient_error_bound(b.c_eps, b.eta, b.r_eps_norm);
  b.tikhonov_bound = tikhonov_error_bound(b.c_eps, b.eta, b.r_eps_norm);
  return b;
}

/// Bulk (Doerfler) marking: the smallest set of cells, by descending indicator,
/// whose sum reaches fraction * total; ties broken by cell index.
inline std::vector<int> mark_cells(const IndicatorField& indicators, double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw config_error("mark_cells: fraction must lie in (0, 1]");
  const double total = indicators.total();
  std::vector<int> order(indicators.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int bb) {
    if (indicators.values[a] != indicators.values[bb])
      return indicators.values[a] > indicators.values[bb];
    return a < bb;
  });
  std::vector<int> marked;
  double acc = 0.0;
  for (int c : order) {
    if (indicators.values[c] <= 0.0) break;
    if (acc >= fraction * total && !marked.empty()) break;
    marked.push_back(c);
    acc += indicators.values[c];
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

}  // namespace permrec
