#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "permrec/reconstruct.hpp"

using namespace permrec;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Minimal strict reader for legacy VTK unstructured grids: validates structure
// and parses every numeric token.
void vtk_smoke_parse(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::string line;
  std::getline(in, line);
  REQUIRE(line.rfind("# vtk DataFile", 0) == 0);
  std::getline(in, line);  // title
  std::getline(in, line);
  REQUIRE(line == "ASCII");
  std::getline(in, line);
  REQUIRE(line == "DATASET UNSTRUCTURED_GRID");
  std::string tok;
  int n_points = 0;
  in >> tok >> n_points >> tok;
  REQUIRE(tok == "double");
  for (int i = 0; i < 3 * n_points; ++i) {
    double v;
    REQUIRE((in >> v));
  }
  int n_cells = 0, list_len = 0;
  in >> tok >> n_cells >> list_len;
  REQUIRE(tok == "CELLS");
  for (int i = 0; i < list_len; ++i) {
    int v;
    REQUIRE((in >> v));
  }
  in >> tok >> n_cells;
  REQUIRE(tok == "CELL_TYPES");
  for (int i = 0; i < n_cells; ++i) {
    int v;
    REQUIRE((in >> v));
    REQUIRE((v == 5 || v == 10));
  }
  // Optional data sections: every remaining numeric token must parse.
  while (in >> tok) {
    if (tok == "POINT_DATA" || tok == "CELL_DATA") {
      int n;
      REQUIRE((in >> n));
    } else if (tok == "SCALARS") {
      std::string name, type;
      int comps;
      REQUIRE((in >> name >> type >> comps));
      std::string lut, def;
      REQUIRE((in >> lut >> def));
    } else if (tok == "VECTORS") {
      std::string name, type;
      REQUIRE((in >> name >> type));
    } else {
      double v;
      std::istringstream ss(tok);
      REQUIRE((ss >> v));
    }
  }
}

ExperimentConfig tiny_config(const std::string& outdir) {
  ExperimentConfig cfg = parse_config_text("");
  cfg.resolution = 4;
  cfg.final_time = 1.0;
  cfg.steps = 8;
  cfg.max_iterations = 3;
  cfg.max_cycles = 1;
  cfg.output_dir = outdir;
  cfg.field_stride = 4;
  return cfg;
}

}  // namespace

TEST_CASE("parse_config: defaults, sections, and strictness") {
  const ExperimentConfig c = parse_config_text(
      "[domain]\nresolution = 6\n[time]\nfinal_time = 2.0\nsteps = 20\n");
  CHECK(c.resolution == 6);
  CHECK(c.final_time == 2.0);
  CHECK(c.steps == 20);
  // Defaults filled.
  CHECK(c.alpha == 0.01);
  CHECK(c.eps_max == 15.0);
  CHECK(c.delta() == doctest::Approx(0.2));

  CHECK_THROWS_WITH_AS(parse_config_text("[regularization]\nalpha = -1\n"),
                       doctest::Contains("alpha"), config_error);
  CHECK_THROWS_WITH_AS(parse_config_text("[time]\nsteps = 4\nsteps = 8\n"),
                       doctest::Contains("duplicate"), config_error);
  CHECK_THROWS_WITH_AS(parse_config_text("[time]\nstep = 4\n"), doctest::Contains("unknown key"),
                       config_error);
  CHECK_THROWS_AS(parse_config_text("[time]\nsteps\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("badline\n"), config_error);
  CHECK_THROWS_AS(parse_config_text("[domain]\nxmin = 2\nxmax = 1\n"), config_error);

  // Overrides win over file values; dump echoes the resolved configuration.
  const ExperimentConfig o = parse_config_text("[time]\nsteps = 20\n", {"time.steps=40"});
  CHECK(o.steps == 40);
  const std::string dump = dump_config(o);
  CHECK(dump.find("steps = 40") != std::string::npos);
  const ExperimentConfig back = parse_config_text(dump);
  CHECK(back.steps == 40);
  CHECK(back.alpha == o.alpha);
}

TEST_CASE("synthetic data: determinism and noise magnitude") {
  ExperimentConfig cfg = tiny_config("/tmp/permrec_test_unused");
  std::array<int, 3> res = {cfg.resolution, cfg.resolution, cfg.resolution};
  MeshPtr mesh = build_box_mesh(cfg.box_lo, cfg.box_hi, res, cfg.dim);
  const TimeGrid grid = make_time_grid(cfg.final_time, cfg.steps);
  const TraceLayout layout = make_trace_layout(mesh);

  // sigma = 0: exact interpolation of the fine trace, twice identical.
  cfg.noise_sigma = 0.0;
  const SyntheticData a = generate_synthetic_data(cfg, layout, grid);
  const SyntheticData b = generate_synthetic_data(cfg, layout, grid);
  CHECK(a.observations.values == b.observations.values);
  // Spot-check the interpolation against the fine trace at a boundary vertex.
  const int vtx = layout.boundary_vertices[layout.n_nodes() / 2];
  const Vec3 x = mesh->vertices[vtx];
  const Vec3 fine_val = a.fine_trace.point_value_at_time(x, grid.node(3));
  for (int c = 0; c < 2; ++c)
    CHECK(a.observations.at(3, layout.index_of_vertex[vtx], c) ==
          doctest::Approx(fine_val[c]).epsilon(1e-12));

  // Same seed: bit-identical noisy tables; relative noise magnitude ~ sigma.
  cfg.noise_sigma = 0.03;
  const SyntheticData n1 = generate_synthetic_data(cfg, layout, grid);
  const SyntheticData n2 = generate_synthetic_data(cfg, layout, grid);
  CHECK(n1.observations.values == n2.observations.values);
  double clean2 = 0.0, diff2 = 0.0;
  for (size_t k = 0; k < a.observations.values.size(); ++k)
    for (size_t i = 0; i < a.observations.values[k].size(); ++i) {
      const double clean = a.observations.values[k][i];
      const double noisy = n1.observations.values[k][i];
      clean2 += clean * clean;
      diff2 += (noisy - clean) * (noisy - clean);
    }
  const double rel = std::sqrt(diff2 / clean2);
  CHECK(rel == doctest::Approx(0.03).epsilon(0.2));

  cfg.seed += 1;
  const SyntheticData n3 = generate_synthetic_data(cfg, layout, grid);
  CHECK(n3.observations.values != n1.observations.values);
}

TEST_CASE("trace csv: write/read round trip") {
  ExperimentConfig cfg = tiny_config("/tmp/permrec_trace_test");
  std::filesystem::create_directories(cfg.output_dir);
  std::array<int, 3> res = {cfg.resolution, cfg.resolution, cfg.resolution};
  MeshPtr mesh = build_box_mesh(cfg.box_lo, cfg.box_hi, res, cfg.dim);
  const TimeGrid grid = make_time_grid(cfg.final_time, cfg.steps);
  const TraceLayout layout = make_trace_layout(mesh);
  const SyntheticData syn = generate_synthetic_data(cfg, layout, grid);
  const std::string path = cfg.output_dir + "/obs.csv";
  write_trace_csv(syn.observations, path);
  const BoundaryTraceTable back = read_trace_csv(path, layout);
  REQUIRE(back.values.size() == syn.observations.values.size());
  for (size_t k = 0; k < back.values.size(); ++k)
    for (size_t i = 0; i < back.values[k].size(); ++i)
      CHECK(back.values[k][i] == doctest::Approx(syn.observations.values[k][i]).epsilon(1e-15));
  std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("export_state: manifest, determinism, VTK smoke parse") {
  const std::string dir = "/tmp/permrec_export_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = tiny_config(dir);
  cfg.max_iterations = 2;
  const AdaptiveResult result = reconstruct_adaptive(cfg, true);
  REQUIRE(result.cycles.size() == 1);

  // Manifest lists at least mesh, eps, indicators, optimizer log.
  const std::string manifest = slurp(dir + "/cycle0_manifest.json");
  CHECK(manifest.find("cycle0_mesh.vtk") != std::string::npos);
  CHECK(manifest.find("cycle0_eps.vtk") != std::string::npos);
  CHECK(manifest.find("cycle0_indicators.vtk") != std::string::npos);
  CHECK(manifest.find("cycle0_optimizer.csv") != std::string::npos);

  int vtk_count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".vtk") {
      vtk_smoke_parse(entry.path().string());
      ++vtk_count;
    }
  }
  CHECK(vtk_count >= 4);

  // Re-export produces identical bytes for the identical state.
  const std::string eps_before = slurp(dir + "/cycle0_eps.vtk");
  const MeshSizeField h = mesh_size_field(*result.final_state.mesh);
  export_state(result.final_state, nullptr, dir, cfg.field_stride);
  CHECK(slurp(dir + "/cycle0_eps.vtk") == eps_before);
  std::filesystem::remove_all(dir);
}

TEST_CASE("estimates csv: one row per cycle with documented header") {
  const std::string dir = "/tmp/permrec_estimates_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = tiny_config(dir);
  cfg.max_iterations = 2;
  cfg.max_cycles = 2;
  cfg.marking_fraction = 0.4;
  const AdaptiveResult result = reconstruct_adaptive(cfg, true);
  REQUIRE(result.estimates.size() == result.cycles.size());
  const std::string csv = slurp(dir + "/estimates.csv");
  CHECK(csv.rfind("cycle,n_cells,n_dofs,lagrangian_bound,eta,c_eps,r_eps_norm,", 0) == 0);
  // Refinement actually grew the mesh between cycles.
  if (result.cycles.size() == 2)
    CHECK(result.cycles[1].mesh->n_cells() > result.cycles[0].mesh->n_cells());
  std::filesystem::remove_all(dir);
}

TEST_CASE("observation file path: reconstruct consumes a synthesized trace CSV") {
  const std::string dir = "/tmp/permrec_obsfile_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  ExperimentConfig cfg = tiny_config(dir);
  std::array<int, 3> res = {cfg.resolution, cfg.resolution, cfg.resolution};
  MeshPtr mesh = build_box_mesh(cfg.box_lo, cfg.box_hi, res, cfg.dim);
  const TimeGrid grid = make_time_grid(cfg.final_time, cfg.steps);
  const TraceLayout layout = make_trace_layout(mesh);
  const SyntheticData syn = generate_synthetic_data(cfg, layout, grid);
  write_trace_csv(syn.observations, dir + "/obs.csv");

  ExperimentConfig from_file = cfg;
  from_file.data_file = dir + "/obs.csv";
  ProblemSetup setup = make_setup(from_file);
  REQUIRE(setup.G.values.size() == syn.observations.values.size());
  for (size_t k = 0; k < setup.G.values.size(); ++k)
    for (size_t i = 0; i < setup.G.values[k].size(); ++i)
      CHECK(setup.G.values[k][i] ==
            doctest::Approx(syn.observations.values[k][i]).epsilon(1e-15));
  std::filesystem::remove_all(dir);
}

TEST_CASE("adaptive cycles reduce the indicator total on a smooth benchmark") {
  ExperimentConfig cfg = parse_config_text("");
  cfg.resolution = 8;
  cfg.steps = 80;
  cfg.final_time = 2.0;
  cfg.source_amplitude = 4.0;
  cfg.source_frequency = 1.0;
  cfg.source_t0 = 0.5;
  cfg.truth_amplitude = 1.5;
  cfg.truth_width = 0.15;
  cfg.max_iterations = 10;
  cfg.max_cycles = 2;
  cfg.marking_fraction = 0.5;
  const AdaptiveResult r = reconstruct_adaptive(cfg, false);
  REQUIRE(r.estimates.size() == 2);
  CHECK(r.estimates[1].lagrangian_bound <= r.estimates[0].lagrangian_bound);
}

TEST_CASE("3d smoke: solve, adjoint, and estimator pipeline on a small cube") {
  auto mesh = build_box_mesh({0, 0, 0}, {1, 1, 1}, {2, 2, 2}, 3);
  const TimeGrid grid = make_time_grid(0.8, 16);
  const TraceLayout layout = make_trace_layout(mesh);
  PermittivityField eps = project_admissible(
      interpolate(
          [](const Vec3& x) {
            const double r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5) +
                              (x[2] - 0.5) * (x[2] - 0.5);
            return 1.0 + 0.8 * std::exp(-r2 / 0.08);
          },
          mesh, 1),
      15.0);
  PermittivityField eps0 = project_admissible(
      interpolate([](const Vec3&) { return 1.0; }, mesh, 1), 15.0);
  const RegularizationConfig reg(0.01, eps0);
  const CutoffFunction z(0.8, 0.08);
  NeumannData nd;
  nd.analytic = [](const Vec3&, double t) {
    const double a = M_PI * M_PI * 4.0 * (t - 0.25) * (t - 0.25);
    const double g = (1.0 - 2.0 * a) * std::exp(-a);
    return Vec3{g, 0.5 * g, -0.25 * g};
  };
  const BoundaryTraceTable P = nd.tabulate(layout, grid);
  WaveOperator op(eps, layout, grid);
  const SpaceTimeField E = op.solve_direct(P);
  REQUIRE(std::isfinite(E.max_abs()));
  CHECK(E.max_abs() > 0.0);
  const auto rd = op.direct_residuals(E, P);
  double resid = 0.0;
  for (const auto& r : rd) resid = std::max(resid, r.lpNorm<Eigen::Infinity>());
  CHECK(resid <= 1e-8 * E.max_abs());

  ObservationData G = extract_trace(E, layout);
  for (auto& row : G.values)
    for (double& v : row) v *= 0.9;
  const SpaceTimeField lam = op.solve_adjoint(E, G, z);
  REQUIRE(std::isfinite(lam.max_abs()));

  const MeshSizeField h = mesh_size_field(*mesh);
  const JumpData jumps = compute_jumps(eps, E, lam);
  const ResidualFields res = compute_residuals(eps, E, lam, G, P, reg, z, jumps, h, layout);
  auto [total, ind] = lagrangian_error_estimate(*mesh, grid, res, jumps, h, layout);
  CHECK(std::isfinite(total));
  CHECK(total > 0.0);
  const ErrorBounds b = error_bounds(eps, E, lam, res, jumps, h, total);
  CHECK(std::isfinite(b.coefficient_bound));
  CHECK(b.tikhonov_bound == b.c_eps * b.c_eps * b.eta * b.eta + b.r_eps_norm * b.r_eps_norm);

  // Marking and conforming refinement work in 3d through the same code paths.
  const auto marked = mark_cells(ind, 0.4);
  CHECK_FALSE(marked.empty());
  auto refined = refine_marked(*mesh, marked);
  CHECK(refined->total_volume() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reconstruct_adaptive: bounds in logs are reproducible from exported state") {
  const std::string dir = "/tmp/permrec_repro_test";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = tiny_config(dir);
  cfg.max_iterations = 2;
  const AdaptiveResult result = reconstruct_adaptive(cfg, false);
  const ReconstructionState& s = result.final_state;
  // Recompute the bounds from the stored triple on its own mesh; they must match
  // the logged row.
  const TraceLayout layout = make_trace_layout(s.mesh);
  const BoundaryTraceTable P = make_source(cfg).tabulate(layout, s.grid);
  const SyntheticData syn = generate_synthetic_data(cfg, layout, s.grid);
  PermittivityField eps0 = project_admissible(
      interpolate([](const Vec3&) { return 1.0; }, s.mesh, 1), cfg.eps_max);
  const RegularizationConfig reg(cfg.alpha, std::move(eps0));
  const CutoffFunction cutoff(cfg.final_time, cfg.delta());
  const MeshSizeField h = mesh_size_field(*s.mesh);
  const JumpData jumps = compute_jumps(s.eps, s.E, s.lam);
  const ResidualFields res = compute_residuals(s.eps, s.E, s.lam, syn.observations, P, reg,
                                               cutoff, jumps, h, layout);
  auto [total, ind] = lagrangian_error_estimate(*s.mesh, s.grid, res, jumps, h, layout);
  CHECK(total == doctest::Approx(result.estimates.back().lagrangian_bound).epsilon(1e-12));
  const ErrorBounds b = error_bounds(s.eps, s.E, s.lam, res, jumps, h, total);
  CHECK(b.coefficient_bound ==
        doctest::Approx(result.estimates.back().coefficient_bound).epsilon(1e-12));
}
