#pragma once

#include <random>

#include "permrec/config.hpp"
#include "permrec/wave_solver.hpp"

namespace permrec {

/// Neumann pulse descriptor from the config: P(x, t) = amplitude * g(t) * dir on
/// the selected box side(s), zero elsewhere.
inline NeumannData make_source(const ExperimentConfig& cfg) {
  const Vec3 dir = cfg.source_direction;
  const double A = cfg.source_amplitude, f = cfg.source_frequency, t0 = cfg.source_t0;
  const std::string family = cfg.source_family;
  const std::string side = cfg.source_side;
  const Vec3 lo = cfg.box_lo, hi = cfg.box_hi;
  const int dim = cfg.dim;
  auto temporal = [family, A, f, t0](double t) {
    if (family == "ricker") {
      const double a = M_PI * M_PI * f * f * (t - t0) * (t - t0);
      return A * (1.0 - 2.0 * a) * std::exp(-a);
    }
    // sine_burst: one full period, then silence.
    return t * f <= 1.0 ? A * std::sin(2.0 * M_PI * f * t) : 0.0;
  };
  auto on_side = [side, lo, hi, dim](const Vec3& x) {
    if (side == "all") return true;
    const int axis = side[0] == 'x' ? 0 : side[0] == 'y' ? 1 : 2;
    if (axis >= dim) return false;
    const double plane = side[1] == '0' ? lo[axis] : hi[axis];
    return std::abs(x[axis] - plane) <= 1e-9 * (hi[axis] - lo[axis]);
  };
  NeumannData data;
  data.analytic = [temporal, on_side, dir](const Vec3& x, double t) {
    return on_side(x) ? vec_scale(temporal(t), dir) : Vec3{};
  };
  return data;
}

/// True-coefficient descriptor for synthetic benchmarks.
inline std::function<double(const Vec3&)> make_truth(const ExperimentConfig& cfg) {
  if (cfg.truth_kind == "constant") {
    const double v = cfg.truth_value;
    return [v](const Vec3&) { return v; };
  }
  Vec3 c = cfg.truth_center;
  for (int i = cfg.dim; i < 3; ++i) c[i] = 0.0;  // ignore unused components in 2D
  const double A = cfg.truth_amplitude, w = cfg.truth_width;
  return [c, A, w](const Vec3& x) {
    const double r2 = vec_dot(vec_sub(x, c), vec_sub(x, c));
    return 1.0 + A * std::exp(-r2 / (2.0 * w * w));
  };
}

struct SyntheticData {
  ObservationData observations;       // on the reconstruction layout/grid
  BoundaryTraceTable fine_trace;      // clean trace on the synthesis mesh
  MeshPtr fine_mesh;
};

/// Boundary observations G: direct solve of the true coefficient on a mesh and
/// time grid `fine_factor` times finer (inverse-crime guard), traced, interpolated
/// to the reconstruction layout, then componentwise Gaussian noise of relative
/// magnitude sigma (seeded).
inline SyntheticData generate_synthetic_data(const ExperimentConfig& cfg,
                                             const TraceLayout& recon_layout,
                                             const TimeGrid& recon_grid) {
  std::array<int, 3> res = {cfg.resolution * cfg.fine_factor, cfg.resolution * cfg.fine_factor,
                            cfg.resolution * cfg.fine_factor};
  MeshPtr fine_mesh = build_box_mesh(cfg.box_lo, cfg.box_hi, res, cfg.dim);
  const TimeGrid fine_grid = make_time_grid(cfg.final_time, cfg.steps * cfg.fine_factor);
  const auto truth = make_truth(cfg);
  ScalarField raw = interpolate(truth, fine_mesh, 1);
  for (double v : raw.coeffs())
    if (v < 1.0 - 1e-12 || v > cfg.eps_max + 1e-12)
      throw config_error("generate_synthetic_data: true coefficient not admissible");
  PermittivityField eps_true = project_admissible(std::move(raw), cfg.eps_max);
  const TraceLayout fine_layout = make_trace_layout(fine_mesh);
  const BoundaryTraceTable P = make_source(cfg).tabulate(fine_layout, fine_grid);
  WaveOperator op(eps_true, fine_layout, fine_grid);
  const SpaceTimeField E = op.solve_direct(P);
  SyntheticData out{BoundaryTraceTable{}, extract_trace(E, fine_layout), fine_mesh};
  out.observations = interpolate_trace(out.fine_trace, recon_layout, recon_grid);
  if (cfg.noise_sigma > 0.0) {
    double sum2 = 0.0;
    size_t count = 0;
    for (const auto& row : out.observations.values) {
      for (double v : row) sum2 += v * v;
      count += row.size();
    }
    const double rms = count > 0 ? std::sqrt(sum2 / count) : 0.0;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& row : out.observations.values)
      for (double& v : row) v += cfg.noise_sigma * rms * gauss(rng);
  }
  return out;
}

}  // namespace permrec
