#pragma once

#include "permrec/objective.hpp"

namespace permrec {

struct MinimizeOptions {
  int max_iterations = 60;
  double grad_tol_rel = 1e-6;     // relative to the first projected-gradient norm
  double armijo_c1 = 1e-4;
  double initial_step = 1.0;
  int max_backtracks = 40;
};

enum class MinimizeStatus { converged, iteration_cap, line_search_failure };

struct IterationRow {
  int iteration;
  double F;
  double misfit;
  double regularization;
  double grad_norm;
  double step;
};

struct MinimizeResult {
  PermittivityField eps;
  SpaceTimeField E;
  SpaceTimeField lam;
  std::vector<IterationRow> log;
  MinimizeStatus status = MinimizeStatus::converged;
  double final_F = 0.0;
};

namespace detail {

/// Component mask for the box constraints: gradient entries that cannot produce
/// movement under projection are zeroed (collar dofs always).
inline Eigen::VectorXd project_gradient(const Eigen::VectorXd& g, const PermittivityField& eps) {
  Eigen::VectorXd pg = g;
  const auto& v = eps.field().coeffs();
  const double tiny = 1e-14;
  for (int i = 0; i < pg.size(); ++i) {
    if (v[i] <= 1.0 + tiny && g[i] > 0.0) pg[i] = 0.0;
    if (v[i] >= eps.eps_max() - tiny && g[i] < 0.0) pg[i] = 0.0;
  }
  for (int i : eps.collar()) pg[i] = 0.0;
  return pg;
}

inline PermittivityField step_projected(const PermittivityField& eps, const Eigen::VectorXd& dir,
                                        double step) {
  ScalarField f = eps.field();
  for (int i = 0; i < dir.size(); ++i) f.coeffs()[i] -= step * dir[i];
  return project_admissible(std::move(f), eps.eps_max(), eps.collar());
}

}  // namespace detail

/// Problem 7 driver: projected Polak-Ribiere conjugate gradients with restart and
/// a backtracking Armijo line search; every iterate triggers a direct and an
/// adjoint solve; F is nonincreasing across accepted steps.
inline MinimizeResult minimize(const ObservationData& G, const BoundaryTraceTable& P,
                               const RegularizationConfig& cfg, const CutoffFunction& z,
                               const TraceLayout& layout, const TimeGrid& grid,
                               const MinimizeOptions& opts = {},
                               std::optional<PermittivityField> start = std::nullopt) {
  if (opts.max_iterations < 1) throw config_error("minimize: max_iterations must be >= 1");
  PermittivityField eps = start ? std::move(*start) : cfg.eps0;
  if (!eps.admissible(1e-12)) throw config_error("minimize: start value not admissible");

  auto evaluate_F = [&](const PermittivityField& e) {
    WaveOperator op(e, layout, grid);
    SpaceTimeField E = op.solve_direct(P);
    return std::make_pair(tikhonov_parts(e, E, G, cfg, z), std::move(E));
  };

  MinimizeResult res{eps, SpaceTimeField(), SpaceTimeField(), {}, MinimizeStatus::iteration_cap};
  Eigen::VectorXd prev_pg, prev_dir;
  double step = opts.initial_step;
  double grad0 = -1.0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    WaveOperator op(eps, layout, grid);
    SpaceTimeField E = op.solve_direct(P);
    SpaceTimeField lam = op.solve_adjoint(E, G, z);
    const TikhonovParts parts = tikhonov_parts(eps, E, G, cfg, z);
    const Eigen::VectorXd g = grad_eps(eps, E, lam, cfg);
    const Eigen::VectorXd pg = detail::project_gradient(g, eps);
    const double pg_norm = pg.norm();
    if (grad0 < 0.0) grad0 = pg_norm;
    res.log.push_back({it, parts.total(), parts.misfit, parts.regularization, pg_norm, step});
    res.eps = eps;
    res.E = std::move(E);
    res.lam = std::move(lam);
    res.final_F = parts.total();

    if (pg_norm <= opts.grad_tol_rel * grad0 || pg_norm == 0.0) {
      res.status = MinimizeStatus::converged;
      return res;
    }

    // Polak-Ribiere direction with restart when it fails to be a descent direction.
    Eigen::VectorXd dir = pg;
    if (prev_pg.size() == pg.size()) {
      const double denom = prev_pg.squaredNorm();
      const double beta = denom > 0.0 ? std::max(0.0, pg.dot(pg - prev_pg) / denom) : 0.0;
      dir = pg + beta * prev_dir;
      if (dir.dot(pg) <= 0.0) dir = pg;
    }

    bool accepted = false;
    double trial_step = step;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      PermittivityField trial = detail::step_projected(eps, dir, trial_step);
      auto [trial_parts, trial_E] = evaluate_F(trial);
      double decrease_bound = 0.0;
      for (int i = 0; i < g.size(); ++i)
        decrease_bound += g[i] * (trial.field().coeffs()[i] - eps.field().coeffs()[i]);
      if (trial_parts.total() <= parts.total() + opts.armijo_c1 * decrease_bound &&
          trial_parts.total() <= parts.total()) {
        eps = std::move(trial);
        step = trial_step * 2.0;
        accepted = true;
        break;
      }
      trial_step *= 0.5;
    }
    if (!accepted) {
      res.status = MinimizeStatus::line_search_failure;
      return res;
    }
    prev_pg = pg;
    prev_dir = dir;
  }
  return res;
}

}  // namespace permrec
