#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "permrec/reconstruct.hpp"

namespace {

using namespace permrec;

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg =
      path.empty() ? parse_config_text("", overrides) : parse_config(path, overrides);
  if (const char* dir = std::getenv("PERMREC_OUTPUT_DIR")) cfg.output_dir = dir;
  return cfg;
}

int cmd_synthesize(const ExperimentConfig& cfg) {
  std::array<int, 3> res = {cfg.resolution, cfg.resolution, cfg.resolution};
  MeshPtr mesh = build_box_mesh(cfg.box_lo, cfg.box_hi, res, cfg.dim);
  const TimeGrid grid = make_time_grid(cfg.final_time, cfg.steps);
  TraceLayout layout = make_trace_layout(mesh);
  const SyntheticData syn = generate_synthetic_data(cfg, layout, grid);
  std::filesystem::create_directories(cfg.output_dir);
  const std::string path = cfg.output_dir + "/observations.csv";
  write_trace_csv(syn.observations, path);
  std::cout << "wrote " << path << " (" << syn.observations.layout.n_nodes() << " trace nodes, "
            << grid.n_nodes() << " time nodes)\n";
  return 0;
}

int cmd_forward(const ExperimentConfig& cfg) {
  ProblemSetup setup = make_setup(cfg);
  // Solve with the true coefficient when synthesizing, else with the background.
  ScalarField raw = cfg.data_file.empty() ? interpolate(make_truth(cfg), setup.mesh, 1)
                                          : interpolate([](const Vec3&) { return 1.0; },
                                                        setup.mesh, 1);
  PermittivityField eps = project_admissible(std::move(raw), cfg.eps_max);
  WaveOperator op(eps, setup.layout, setup.grid);
  const SpaceTimeField E = op.solve_direct(setup.P);
  std::filesystem::create_directories(cfg.output_dir);
  write_trace_csv(extract_trace(E, setup.layout), cfg.output_dir + "/forward_trace.csv");
  for (int k = 0; k <= setup.grid.n_intervals; k += cfg.field_stride) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "/forward_E_%04d.vtk", k);
    write_vtk_vector_slice(E, k, "E", cfg.output_dir + buf);
  }
  std::cout << "forward solve done: " << setup.mesh->n_cells() << " cells, "
            << setup.grid.n_nodes() << " time nodes, max|E| = " << E.max_abs() << "\n";
  return 0;
}

int cmd_adjoint(const ExperimentConfig& cfg) {
  ProblemSetup setup = make_setup(cfg);
  WaveOperator op(setup.reg.eps0, setup.layout, setup.grid);
  const SpaceTimeField E = op.solve_direct(setup.P);
  const SpaceTimeField lam = op.solve_adjoint(E, setup.G, setup.cutoff);
  std::filesystem::create_directories(cfg.output_dir);
  for (int k = 0; k <= setup.grid.n_intervals; k += cfg.field_stride) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "/adjoint_lam_%04d.vtk", k);
    write_vtk_vector_slice(lam, k, "lambda", cfg.output_dir + buf);
  }
  std::cout << "adjoint solve done: max|lambda| = " << lam.max_abs() << "\n";
  return 0;
}

int cmd_grad_check(const ExperimentConfig& cfg, int count, double step, bool at_eps0) {
  const GradientCheckReport report = gradient_check(cfg, count, step, 1e-3, at_eps0);
  for (const auto& r : report.rows) {
    std::printf("direction %2d: adjoint % .12e  fd % .12e  rel %.3e%s\n", r.direction,
                r.adjoint_derivative, r.fd_derivative, r.rel_error,
                r.degenerate ? "  (degenerate pass)" : "");
  }
  std::cout << (report.all_passed ? "gradient check PASSED\n" : "gradient check FAILED\n");
  return report.all_passed ? 0 : 1;
}

int cmd_estimate(const ExperimentConfig& cfg) {
  ProblemSetup setup = make_setup(cfg);
  PermittivityField eps = setup.reg.eps0;
  WaveOperator op(eps, setup.layout, setup.grid);
  const SpaceTimeField E = op.solve_direct(setup.P);
  const SpaceTimeField lam = op.solve_adjoint(E, setup.G, setup.cutoff);
  const MeshSizeField h = mesh_size_field(*setup.mesh);
  const JumpData jumps = compute_jumps(eps, E, lam);
  const ResidualFields res = compute_residuals(eps, E, lam, setup.G, setup.P, setup.reg,
                                               setup.cutoff, jumps, h, setup.layout);
  auto [total, indicators] =
      lagrangian_error_estimate(*setup.mesh, setup.grid, res, jumps, h, setup.layout);
  const ErrorBounds b = error_bounds(eps, E, lam, res, jumps, h, total);
  ReconstructionState state;
  state.cycle = 0;
  state.mesh = setup.mesh;
  state.grid = setup.grid;
  state.eps = eps;
  state.E = E;
  state.lam = lam;
  state.indicators = indicators;
  state.bounds = b;
  export_state(state, &res, cfg.output_dir, cfg.field_stride);
  std::filesystem::remove(cfg.output_dir + "/estimates.csv");
  detail::append_estimates_csv({0, setup.mesh->n_cells(), eps.field().n_dofs(),
                                b.lagrangian_bound, b.eta, b.c_eps, b.r_eps_norm,
                                b.coefficient_bound, b.tikhonov_bound},
                               cfg.output_dir + "/estimates.csv");
  std::printf("lagrangian %.6e | eta %.6e | c_eps %.6e | ||R_eps|| %.6e\n", b.lagrangian_bound,
              b.eta, b.c_eps, b.r_eps_norm);
  std::printf("coefficient bound %.6e | tikhonov bound %.6e (constant-free indicators)\n",
              b.coefficient_bound, b.tikhonov_bound);
  return 0;
}

int cmd_reconstruct(const ExperimentConfig& cfg) {
  const AdaptiveResult result = reconstruct_adaptive(cfg, true);
  const ReconstructionState& s = result.final_state;
  std::printf("cycles run: %zu, final mesh %d cells\n", result.cycles.size(),
              s.mesh->n_cells());
  for (const EstimateRow& r : result.estimates)
    std::printf("cycle %d: cells %d, lagrangian %.6e, coefficient bound %.6e\n", r.cycle,
                r.n_cells, r.lagrangian_bound, r.coefficient_bound);
  if (s.optimizer_status == MinimizeStatus::line_search_failure) {
    std::cout << "optimizer stopped: line-search failure (best state exported)\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction of dielectric permittivity from boundary wave observations"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "configuration file (key = value with [sections])");
  app.add_option("--set", overrides, "override a key, e.g. --set time.steps=80");

  int gc_count = 10;
  double gc_step = 1e-4;
  bool gc_at_eps0 = false;
  auto* synth = app.add_subcommand("synthesize", "generate synthetic boundary observations");
  auto* fwd = app.add_subcommand("forward", "run the direct solver and export traces/fields");
  auto* adj = app.add_subcommand("adjoint", "run direct + adjoint solvers at eps0");
  auto* gc = app.add_subcommand("grad-check", "adjoint gradient vs finite differences");
  gc->add_option("--directions", gc_count, "number of random directions");
  gc->add_option("--step", gc_step, "central finite-difference step");
  gc->add_flag("--at-eps0", gc_at_eps0, "probe at the reference eps0 instead of a test bump");
  auto* est = app.add_subcommand("estimate", "residuals, indicators and error bounds at eps0");
  auto* rec = app.add_subcommand("reconstruct", "full adaptive reconstruction loop");
  auto* dump = app.add_subcommand("dump-config", "print the resolved configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    const permrec::ExperimentConfig cfg = load_config(config_path, overrides);
    if (dump->parsed()) {
      std::cout << permrec::dump_config(cfg);
      return 0;
    }
    if (synth->parsed()) return cmd_synthesize(cfg);
    if (fwd->parsed()) return cmd_forward(cfg);
    if (adj->parsed()) return cmd_adjoint(cfg);
    if (gc->parsed()) return cmd_grad_check(cfg, gc_count, gc_step, gc_at_eps0);
    if (est->parsed()) return cmd_estimate(cfg);
    if (rec->parsed()) return cmd_reconstruct(cfg);
  } catch (const permrec::config_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
