#pragma once

#include <filesystem>
#include <json.hpp>

#include "permrec/estimators.hpp"
#include "permrec/minimize.hpp"
#include "permrec/synthesis.hpp"
#include "permrec/vtk.hpp"

namespace permrec {

/// Everything the adaptive loop carries across one cycle.
struct ReconstructionState {
  int cycle = 0;
  MeshPtr mesh;
  TimeGrid grid;
  PermittivityField eps;
  SpaceTimeField E;
  SpaceTimeField lam;
  IndicatorField indicators;
  ErrorBounds bounds;
  std::vector<IterationRow> optimizer_log;
  MinimizeStatus optimizer_status = MinimizeStatus::converged;
};

struct EstimateRow {
  int cycle;
  int n_cells;
  int n_dofs;
  double lagrangian_bound;
  double eta;
  double c_eps;
  double r_eps_norm;
  double coefficient_bound;
  double tikhonov_bound;
};

namespace detail {

inline void write_optimizer_csv(const std::vector<IterationRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("write_optimizer_csv: cannot open " + path);
  out << "iteration,F,misfit,regularization,grad_norm,step\n";
  char buf[256];
  for (const IterationRow& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.F,
                  r.misfit, r.regularization, r.grad_norm, r.step);
    out << buf;
  }
}

inline void append_estimates_csv(const EstimateRow& r, const std::string& path) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw config_error("append_estimates_csv: cannot open " + path);
  if (fresh)
    out << "cycle,n_cells,n_dofs,lagrangian_bound,eta,c_eps,r_eps_norm,coefficient_bound,"
           "tikhonov_bound\n";
  char buf[320];
  std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.cycle,
                r.n_cells, r.n_dofs, r.lagrangian_bound, r.eta, r.c_eps, r.r_eps_norm,
                r.coefficient_bound, r.tikhonov_bound);
  out << buf;
}

}  // namespace detail

/// Writes mesh, eps, field time series, indicators and residual magnitudes for a
/// state, plus a manifest mapping file names to quantities. Deterministic bytes
/// for identical states.
inline std::vector<std::string> export_state(const ReconstructionState& state,
                                             const ResidualFields* residuals,
                                             const std::string& dir, int field_stride = 10) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  std::vector<std::string> files;
  auto add = [&](const std::string& name, const std::string& what) {
    manifest[name] = what;
    files.push_back(name);
  };
  const std::string tag = "cycle" + std::to_string(state.cycle);
  const std::string base = dir + "/";

  write_vtk_mesh(*state.mesh, base + tag + "_mesh.vtk");
  add(tag + "_mesh.vtk", "mesh");
  write_vtk_scalar(state.eps.field(), "permittivity", base + tag + "_eps.vtk");
  add(tag + "_eps.vtk", "reconstructed permittivity eps_h");

  char buf[64];
  for (int k = 0; k <= state.grid.n_intervals; k += field_stride) {
    std::snprintf(buf, sizeof buf, "_E_%04d.vtk", k);
    write_vtk_vector_slice(state.E, k, "E", base + tag + buf);
    add(tag + buf, "direct field E_h at time node " + std::to_string(k));
    std::snprintf(buf, sizeof buf, "_lam_%04d.vtk", k);
    write_vtk_vector_slice(state.lam, k, "lambda", base + tag + buf);
    add(tag + buf, "adjoint field lambda_h at time node " + std::to_string(k));
  }

  std::vector<std::pair<std::string, std::vector<double>>> cell_fields;
  cell_fields.emplace_back("indicator", state.indicators.values);
  const MeshSizeField h = mesh_size_field(*state.mesh);
  cell_fields.emplace_back("h", h.h);
  // Maximal-jump fields (time-aggregated by max) as cell data.
  auto interval_max = [](const JumpField& j) {
    std::vector<double> v(j.n_cells, 0.0);
    for (int c = 0; c < j.n_cells; ++c)
      for (int k = 0; k < j.n_intervals; ++k) v[c] = std::max(v[c], j.at(c, k));
    return v;
  };
  cell_fields.emplace_back("jump_eps_nu", interval_max(normal_derivative_jumps(state.eps.field()).magnitude));
  cell_fields.emplace_back("jump_e_nu_max", interval_max(normal_derivative_jumps(state.E).magnitude));
  cell_fields.emplace_back("jump_lam_nu_max", interval_max(normal_derivative_jumps(state.lam).magnitude));
  if (residuals) {
    cell_fields.emplace_back("r_eps_abs", [&] {
      std::vector<double> v(residuals->r_eps.size());
      for (size_t i = 0; i < v.size(); ++i) v[i] = std::abs(residuals->r_eps[i]);
      return v;
    }());
    auto magnitude_sum = [&](const std::vector<std::vector<Vec3>>& field) {
      std::vector<double> v(field.size(), 0.0);
      for (size_t c = 0; c < field.size(); ++c)
        for (const Vec3& x : field[c]) v[c] += vec_norm(x) * state.grid.tau();
      return v;
    };
    cell_fields.emplace_back("r_lam_omega_l1t", magnitude_sum(residuals->r_lam_om));
    cell_fields.emplace_back("r_e_omega_l1t", magnitude_sum(residuals->r_e_om));
  }
  write_vtk_cell_data(*state.mesh, cell_fields, base + tag + "_indicators.vtk");
  add(tag + "_indicators.vtk", "error indicators and residual magnitudes (cell data)");

  detail::write_optimizer_csv(state.optimizer_log, base + tag + "_optimizer.csv");
  add(tag + "_optimizer.csv", "optimizer iteration log");

  std::ofstream mf(base + tag + "_manifest.json");
  if (!mf) throw config_error("export_state: cannot open manifest");
  mf << manifest.dump(2) << "\n";
  files.push_back(tag + "_manifest.json");
  return files;
}

/// One reconstruction problem bound to a mesh: data, source, spaces.
struct ProblemSetup {
  MeshPtr mesh;
  TimeGrid grid;
  TraceLayout layout;
  BoundaryTraceTable P;
  ObservationData G;
  RegularizationConfig reg;
  CutoffFunction cutoff;
};

/// Builds the setup on the config's initial mesh. Observations come from the
/// data file when given, otherwise from synthesis (fine solve kept for later
/// cycles). eps0 is the constant-1 background.
inline ProblemSetup make_setup(const ExperimentConfig& cfg,
                               std::optional<SyntheticData>* synthetic_out = nullptr) {
  std::array<int, 3> res = {cfg.resolution, cfg.resolution, cfg.resolution};
  MeshPtr mesh = build_box_mesh(cfg.box_lo, cfg.box_hi, res, cfg.dim);
  const MeshSizeField h = mesh_size_field(*mesh);
  const TimeGrid grid =
      make_time_grid(cfg.final_time, cfg.steps, TimeGridGuard{h.min(), cfg.eps_max});
  if (grid.cfl_warning) std::fprintf(stderr, "[permrec] warning: %s\n", grid.warning.c_str());
  TraceLayout layout = make_trace_layout(mesh);
  BoundaryTraceTable P = make_source(cfg).tabulate(layout, grid);
  ObservationData G;
  if (!cfg.data_file.empty()) {
    G = read_trace_csv(cfg.data_file, layout);
    if (G.grid.n_intervals != grid.n_intervals)
      throw config_error("make_setup: observation file time grid mismatch");
  } else {
    SyntheticData syn = generate_synthetic_data(cfg, layout, grid);
    G = syn.observations;
    if (synthetic_out) *synthetic_out = std::move(syn);
  }
  PermittivityField eps0 =
      project_admissible(interpolate([](const Vec3&) { return 1.0; }, mesh, 1), cfg.eps_max);
  RegularizationConfig reg(cfg.alpha, std::move(eps0));
  CutoffFunction cutoff(cfg.final_time, cfg.delta());
  return {mesh, grid, std::move(layout), std::move(P), std::move(G), std::move(reg), cutoff};
}

struct AdaptiveResult {
  ReconstructionState final_state;
  std::vector<EstimateRow> estimates;
  std::vector<ReconstructionState> cycles;  // per-cycle states (mesh, eps, indicators)
};

/// The adaptive loop: minimize on the current mesh (warm started), compute
/// residuals / indicators / bounds, export, then Doerfler-mark and bisect until
/// the cycle cap or the indicator threshold is reached.
inline AdaptiveResult reconstruct_adaptive(const ExperimentConfig& cfg,
                                           bool write_outputs = true) {
  std::optional<SyntheticData> synthetic;
  ProblemSetup setup = make_setup(cfg, &synthetic);
  MinimizeOptions opts;
  opts.max_iterations = cfg.max_iterations;
  opts.grad_tol_rel = cfg.grad_tol;
  opts.initial_step = cfg.initial_step;
  opts.max_backtracks = cfg.max_backtracks;

  AdaptiveResult result;
  std::optional<PermittivityField> warm_start;
  MeshPtr mesh = setup.mesh;
  TraceLayout layout = setup.layout;
  BoundaryTraceTable P = setup.P;
  ObservationData G = setup.G;
  RegularizationConfig reg = setup.reg;

  for (int cycle = 0; cycle < cfg.max_cycles; ++cycle) {
    MinimizeResult mr = minimize(G, P, reg, setup.cutoff, layout, setup.grid, opts, warm_start);

    ReconstructionState state;
    state.cycle = cycle;
    state.mesh = mesh;
    state.grid = setup.grid;
    state.eps = mr.eps;
    state.E = std::move(mr.E);
    state.lam = std::move(mr.lam);
    state.optimizer_log = std::move(mr.log);
    state.optimizer_status = mr.status;

    const MeshSizeField h = mesh_size_field(*mesh);
    const JumpData jumps = compute_jumps(state.eps, state.E, state.lam);
    const ResidualFields res = compute_residuals(state.eps, state.E, state.lam, G, P, reg,
                                                 setup.cutoff, jumps, h, layout);
    auto [total, indicators] =
        lagrangian_error_estimate(*mesh, setup.grid, res, jumps, h, layout);
    state.indicators = indicators;
    state.bounds = error_bounds(state.eps, state.E, state.lam, res, jumps, h, total);

    EstimateRow row{cycle,
                    mesh->n_cells(),
                    state.eps.field().n_dofs(),
                    state.bounds.lagrangian_bound,
                    state.bounds.eta,
                    state.bounds.c_eps,
                    state.bounds.r_eps_norm,
                    state.bounds.coefficient_bound,
                    state.bounds.tikhonov_bound};
    result.estimates.push_back(row);
    if (write_outputs) {
      export_state(state, &res, cfg.output_dir, cfg.field_stride);
      if (cycle == 0) std::filesystem::remove(cfg.output_dir + "/estimates.csv");
      detail::append_estimates_csv(row, cfg.output_dir + "/estimates.csv");
    }
    result.cycles.push_back(state);
    result.final_state = std::move(state);

    if (result.final_state.optimizer_status == MinimizeStatus::line_search_failure) break;
    if (cycle + 1 >= cfg.max_cycles) break;
    if (total <= cfg.indicator_threshold) break;

    // Mark, refine, and move the problem to the new mesh.
    const std::vector<int> marked = mark_cells(indicators, cfg.marking_fraction);
    if (marked.empty()) break;
    MeshPtr refined = refine_marked(*mesh, marked);
    TraceLayout new_layout = make_trace_layout(refined);
    BoundaryTraceTable new_P = make_source(cfg).tabulate(new_layout, setup.grid);
    ObservationData new_G =
        synthetic ? interpolate_trace(synthetic->fine_trace, new_layout, setup.grid)
                  : interpolate_trace(G, new_layout, setup.grid);
    ScalarField eps_new = transfer_scalar(result.final_state.eps.field(), refined, 1);
    warm_start = project_admissible(std::move(eps_new), cfg.eps_max);
    PermittivityField eps0_new =
        project_admissible(interpolate([](const Vec3&) { return 1.0; }, refined, 1), cfg.eps_max);
    reg = RegularizationConfig(cfg.alpha, std::move(eps0_new));
    mesh = refined;
    layout = std::move(new_layout);
    P = std::move(new_P);
    G = std::move(new_G);
  }
  return result;
}

struct GradientCheckRow {
  int direction;
  double adjoint_derivative;
  double fd_derivative;
  double rel_error;
  bool degenerate;
};

struct GradientCheckReport {
  std::vector<GradientCheckRow> rows;
  bool all_passed = true;
};

/// Adjoint directional derivatives against central finite differences of F over
/// full re-solves, for `count` random interior-supported directions. With
/// `probe_at_reference` the check runs at eps0 itself; together with consistent
/// noiseless data that is the degenerate case (F = 0 at its global minimum), which
/// the report flags instead of comparing noise against noise.
inline GradientCheckReport gradient_check(const ExperimentConfig& cfg, int count, double fd_step,
                                          double tol = 1e-3, bool probe_at_reference = false) {
  ProblemSetup setup = make_setup(cfg);
  // Default probe sits away from the minimizer so derivatives are generically nonzero.
  Vec3 box_center{};
  for (int i = 0; i < cfg.dim; ++i) box_center[i] = 0.5 * (cfg.box_lo[i] + cfg.box_hi[i]);
  ScalarField probe = interpolate(
      [&](const Vec3& x) {
        if (probe_at_reference) return 1.0;
        const double r2 = vec_dot(vec_sub(x, box_center), vec_sub(x, box_center));
        return 1.0 + 0.5 * std::exp(-r2 / 0.08);
      },
      setup.mesh, 1);
  PermittivityField eps = project_admissible(std::move(probe), cfg.eps_max);

  WaveOperator op(eps, setup.layout, setup.grid);
  const SpaceTimeField E = op.solve_direct(setup.P);
  const SpaceTimeField lam = op.solve_adjoint(E, setup.G, setup.cutoff);
  const Eigen::VectorXd g = grad_eps(eps, E, lam, setup.reg);

  auto F_of = [&](const ScalarField& field) {
    PermittivityField e = project_admissible(field, cfg.eps_max, eps.collar());
    WaveOperator o(e, setup.layout, setup.grid);
    const SpaceTimeField Ee = o.solve_direct(setup.P);
    return tikhonov_value(e, Ee, setup.G, setup.reg, setup.cutoff);
  };

  std::vector<bool> in_collar(eps.field().n_dofs(), false);
  for (int i : eps.collar()) in_collar[i] = true;

  std::mt19937_64 rng(cfg.seed + 17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GradientCheckReport report;
  const double F0 = tikhonov_value(eps, E, setup.G, setup.reg, setup.cutoff);
  const double data_scale = 1.0 + std::sqrt(setup.G.squared_l2());
  for (int dir = 0; dir < count; ++dir) {
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(eps.field().n_dofs());
    for (int i = 0; i < delta.size(); ++i)
      if (!in_collar[i]) delta[i] = gauss(rng);
    const double nrm = delta.norm();
    if (nrm > 0) delta /= nrm;
    ScalarField plus = eps.field(), minus = eps.field();
    for (int i = 0; i < delta.size(); ++i) {
      plus.coeffs()[i] += fd_step * delta[i];
      minus.coeffs()[i] -= fd_step * delta[i];
    }
    const double fd = (F_of(plus) - F_of(minus)) / (2.0 * fd_step);
    const double adj = g.dot(delta);
    const double scale = std::max({std::abs(fd), std::abs(adj), 1e-300});
    // At an exact zero-residual minimum both derivatives are noise; report that
    // rather than a meaningless ratio.
    const bool degenerate =
        F0 <= 1e-13 * data_scale && std::abs(adj) <= 1e-12 * data_scale;
    const double rel = degenerate ? 0.0 : std::abs(adj - fd) / scale;
    report.rows.push_back({dir, adj, fd, rel, degenerate});
    if (!degenerate && rel > tol) report.all_passed = false;
  }
  return report;
}

}  // namespace permrec
