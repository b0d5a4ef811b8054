#pragma once

#include <Eigen/SparseLU>

#include "permrec/weak_forms.hpp"

namespace permrec {

namespace detail {

/// Exact integrals of P1 time hat products on a uniform grid:
///   dmass(k, j) = int theta_k' theta_j' dt,  tmass(k, j) = int theta_k theta_j dt
/// (nonzero only for |k - j| <= 1).
inline double hat_dmass(int k, int j, int n, double tau) {
  if (k == j) return (k == 0 || k == n) ? 1.0 / tau : 2.0 / tau;
  if (std::abs(k - j) == 1) return -1.0 / tau;
  return 0.0;
}

inline double hat_mass(int k, int j, int n, double tau) {
  if (k == j) return (k == 0 || k == n) ? tau / 3.0 : 2.0 * tau / 3.0;
  if (std::abs(k - j) == 1) return tau / 6.0;
  return 0.0;
}

}  // namespace detail

/// Space-time Galerkin operator for one (mesh, grid, eps): the P1-in-time trial/test
/// pairing collapses to a three-level implicit scheme with system matrix
/// S = M/tau^2 + (K + B)/6, factorized once; the transpose factorization serves
/// the adjoint problem.
class WaveOperator {
 public:
  WaveOperator(PermittivityField eps, TraceLayout layout, TimeGrid grid)
      : eps_(std::move(eps)), layout_(std::move(layout)), grid_(grid) {
    if (layout_.mesh != eps_.mesh()) throw usage_error("WaveOperator: layout/eps mesh mismatch");
    sys_ = assemble_system(eps_);
    const double tau = grid_.tau();
    SparseMat A = sys_.K + sys_.B;
    S_ = sys_.M * (1.0 / (tau * tau)) + A * (1.0 / 6.0);
    S_.makeCompressed();
    lu_.compute(S_);
    if (lu_.info() != Eigen::Success)
      throw solver_error("WaveOperator: singular time-step system (eps admissible?)");
  }

  const PermittivityField& eps() const { return eps_; }
  const TraceLayout& layout() const { return layout_; }
  const TimeGrid& grid() const { return grid_; }
  const AssembledSystem& system() const { return sys_; }

  /// Problem 5: E_h in the direct space with D(eps, E_h, phi_h) = 0 for every
  /// discrete adjoint test function.
  SpaceTimeField solve_direct(const BoundaryTraceTable& P) const {
    check_table(P, "solve_direct");
    const int n = sys_.n;
    const int N = grid_.n_intervals;
    const double tau = grid_.tau();
    const std::vector<Eigen::VectorXd> loads = time_weighted_loads_direct(P);
    SpaceTimeField E(eps_.mesh(), grid_, TimeSpace::direct);
    std::vector<Eigen::VectorXd> u(N + 1, Eigen::VectorXd::Zero(n));
    // Test level j = 0 determines E^1 (weak initial-velocity condition).
    u[1] = lu_.solve(loads[0] / tau);
    for (int j = 1; j <= N - 1; ++j) {
      const Eigen::VectorXd rhs = loads[j] / tau +
                                  sys_.M * (2.0 * u[j] - u[j - 1]) / (tau * tau) -
                                  (sys_.K + sys_.B) * (u[j - 1] + 4.0 * u[j]) / 6.0;
      u[j + 1] = lu_.solve(rhs);
    }
    for (int k = 0; k <= N; ++k)
      for (int i = 0; i < n; ++i) E.slice(k)[i] = u[k][i];
    if (!std::isfinite(E.max_abs()))
      throw solver_error(
          "solve_direct: field grew unbounded; the three-level scheme is conditionally "
          "stable - reduce tau below the time-grid guard");
    E.solved_for = eps_.stamp();
    return E;
  }

  /// Problem 6: lam_h in the adjoint space with A(eps, lam_h, phi_h) = 0 for every
  /// discrete direct test function; marched backwards from t = T.
  SpaceTimeField solve_adjoint(const SpaceTimeField& E, const ObservationData& G,
                               const CutoffFunction& z) const {
    check_table(G, "solve_adjoint");
    if (E.mesh() != eps_.mesh()) throw usage_error("solve_adjoint: E on a different mesh");
    const int n = sys_.n;
    const int N = grid_.n_intervals;
    const double tau = grid_.tau();
    const std::vector<Eigen::VectorXd> loads = time_weighted_loads_adjoint(E, G, z);
    SpaceTimeField lam(eps_.mesh(), grid_, TimeSpace::adjoint);
    std::vector<Eigen::VectorXd> u(N + 1, Eigen::VectorXd::Zero(n));
    // Test level j = N determines lam^{N-1} (weak terminal-velocity condition).
    u[N - 1] = lu_.transpose().solve(-loads[N] / tau);
    for (int j = N - 1; j >= 1; --j) {
      const Eigen::VectorXd rhs = -loads[j] / tau +
                                  sys_.M * (2.0 * u[j] - u[j + 1]) / (tau * tau) -
                                  (sys_.K * (4.0 * u[j] + u[j + 1]) +
                                   sys_.B.transpose() * (4.0 * u[j] + u[j + 1])) / 6.0;
      u[j - 1] = lu_.transpose().solve(rhs);
    }
    for (int k = 0; k <= N; ++k)
      for (int i = 0; i < n; ++i) lam.slice(k)[i] = u[k][i];
    if (!std::isfinite(lam.max_abs()))
      throw solver_error(
          "solve_adjoint: field grew unbounded; the three-level scheme is conditionally "
          "stable - reduce tau below the time-grid guard");
    lam.solved_for = eps_.stamp();
    return lam;
  }

  /// Galerkin residual vectors of D against the full discrete adjoint test basis:
  /// entry i of vector j is D(eps, E, psi_i theta_j), j = 0..N-1.
  std::vector<Eigen::VectorXd> direct_residuals(const SpaceTimeField& E,
                                                const BoundaryTraceTable& P) const {
    const int N = grid_.n_intervals;
    const double tau = grid_.tau();
    const std::vector<Eigen::VectorXd> loads = time_weighted_loads_direct(P);
    std::vector<Eigen::VectorXd> Mu(N + 1), Au(N + 1);
    for (int k = 0; k <= N; ++k) {
      const Eigen::VectorXd uk =
          Eigen::Map<const Eigen::VectorXd>(E.slice(k).data(), sys_.n);
      Mu[k] = sys_.M * uk;
      Au[k] = sys_.K * uk + sys_.B * uk;
    }
    std::vector<Eigen::VectorXd> r(N);
    for (int j = 0; j <= N - 1; ++j) {
      Eigen::VectorXd rj = -loads[j];
      for (int k = std::max(0, j - 1); k <= std::min(N, j + 1); ++k)
        rj += -detail::hat_dmass(k, j, N, tau) * Mu[k] + detail::hat_mass(k, j, N, tau) * Au[k];
      r[j] = rj;
    }
    return r;
  }

  /// Same for A against the discrete direct test basis, j = 1..N (returned 0-based).
  std::vector<Eigen::VectorXd> adjoint_residuals(const SpaceTimeField& lam,
                                                 const SpaceTimeField& E,
                                                 const ObservationData& G,
                                                 const CutoffFunction& z) const {
    const int N = grid_.n_intervals;
    const double tau = grid_.tau();
    const std::vector<Eigen::VectorXd> loads = time_weighted_loads_adjoint(E, G, z);
    std::vector<Eigen::VectorXd> Mu(N + 1), Au(N + 1);
    for (int k = 0; k <= N; ++k) {
      const Eigen::VectorXd uk =
          Eigen::Map<const Eigen::VectorXd>(lam.slice(k).data(), sys_.n);
      Mu[k] = sys_.M * uk;
      Au[k] = sys_.K * uk + sys_.B.transpose() * uk;
    }
    std::vector<Eigen::VectorXd> r(N);
    for (int j = 1; j <= N; ++j) {
      Eigen::VectorXd rj = loads[j];
      for (int k = std::max(0, j - 1); k <= std::min(N, j + 1); ++k)
        rj += -detail::hat_dmass(k, j, N, tau) * Mu[k] + detail::hat_mass(k, j, N, tau) * Au[k];
      r[j - 1] = rj;
    }
    return r;
  }

 private:
  PermittivityField eps_;
  TraceLayout layout_;
  TimeGrid grid_;
  AssembledSystem sys_;
  SparseMat S_;
  // Eigen's SparseLU::transpose() is non-const; solving does not mutate state.
  mutable Eigen::SparseLU<SparseMat> lu_;

  void check_table(const BoundaryTraceTable& t, const char* where) const {
    if (t.layout.mesh != eps_.mesh())
      throw usage_error(std::string(where) + ": trace table on a different mesh");
    if (t.grid.n_intervals != grid_.n_intervals)
      throw usage_error(std::string(where) + ": trace table on a different time grid");
  }

  /// Lambda_j = int theta_j(t) <P(t), .>_Gamma dt, exact for the P1-in-time table.
  std::vector<Eigen::VectorXd> time_weighted_loads_direct(const BoundaryTraceTable& P) const {
    const int N = grid_.n_intervals;
    const double tau = grid_.tau();
    std::vector<Eigen::VectorXd> L(N + 1);
    for (int k = 0; k <= N; ++k) L[k] = boundary_load(layout_, P.values[k]);
    std::vector<Eigen::VectorXd> out(N + 1);
    for (int j = 0; j <= N; ++j) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(sys_.n);
      for (int k = std::max(0, j - 1); k <= std::min(N, j + 1); ++k)
        v += detail::hat_mass(k, j, N, tau) * L[k];
      out[j] = v;
    }
    return out;
  }

  /// Q_j = int theta_j(t) z(t)^2 <(E - G)(t), .>_Gamma dt via the shared 3-point
  /// Gauss rule per interval (the same rule weak_form_A and the misfit use).
  std::vector<Eigen::VectorXd> time_weighted_loads_adjoint(const SpaceTimeField& E,
                                                           const ObservationData& G,
                                                           const CutoffFunction& z) const {
    const int N = grid_.n_intervals;
    const double tau = grid_.tau();
    const int d = eps_.mesh()->dim;
    std::vector<Eigen::VectorXd> L(N + 1);
    for (int k = 0; k <= N; ++k) {
      std::vector<double> mis(static_cast<size_t>(layout_.n_nodes()) * d);
      for (int i = 0; i < layout_.n_nodes(); ++i) {
        const int vtx = layout_.boundary_vertices[i];
        for (int c = 0; c < d; ++c) mis[i * d + c] = E.at(k, vtx, c) - G.at(k, i, c);
      }
      L[k] = boundary_load(layout_, mis);
    }
    const TimeRule& trule = time_rule();
    std::vector<Eigen::VectorXd> out(N + 1, Eigen::VectorXd::Zero(sys_.n));
    for (int k = 0; k < N; ++k) {
      for (int g = 0; g < 3; ++g) {
        const double s = trule.x[g];
        const double zz = cutoff_value((k + s) * tau, z);
        const double w = trule.w[g] * tau * zz * zz;
        const Eigen::VectorXd Lt = (1.0 - s) * L[k] + s * L[k + 1];
        out[k] += w * (1.0 - s) * Lt;
        out[k + 1] += w * s * Lt;
      }
    }
    return out;
  }
};

/// Convenience wrappers matching the operation-level contracts.
inline SpaceTimeField direct_solve(const PermittivityField& eps, const BoundaryTraceTable& P,
                                   const TraceLayout& layout, const TimeGrid& grid) {
  return WaveOperator(eps, layout, grid).solve_direct(P);
}

inline SpaceTimeField adjoint_solve(const PermittivityField& eps, const SpaceTimeField& E,
                                    const ObservationData& G, const CutoffFunction& z,
                                    const TraceLayout& layout, const TimeGrid& grid) {
  return WaveOperator(eps, layout, grid).solve_adjoint(E, G, z);
}

}  // namespace permrec
