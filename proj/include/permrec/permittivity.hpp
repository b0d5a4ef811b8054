#pragma once

#include <atomic>
#include <set>

#include "permrec/fields.hpp"

namespace permrec {

namespace detail {
inline std::uint64_t next_eps_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

/// Nodes of every cell that touches Gamma through a face; fixing the field to 1
/// there enforces both v = 1 and grad v = 0 on Gamma at the discrete level.
inline std::vector<int> boundary_collar_nodes(const DofMap& dofs) {
  const SimplicialMesh& m = *dofs.mesh;
  std::set<int> collar;
  for (int f = 0; f < m.n_faces(); ++f) {
    if (m.faces[f].boundary_tag < 0) continue;
    const int c = m.faces[f].cells[0];
    for (int g : dofs.cell_dofs[c]) collar.insert(g);
  }
  return {collar.begin(), collar.end()};
}

/// Dielectric permittivity in the discrete admissible set: a degree-q scalar
/// field with nodal values in [1, eps_max] and value 1 on the boundary collar.
class PermittivityField {
 public:
  PermittivityField() = default;
  PermittivityField(ScalarField field, double eps_max, std::vector<int> collar)
      : field_(std::move(field)), eps_max_(eps_max), collar_(std::move(collar)),
        stamp_(detail::next_eps_stamp()) {
    if (eps_max_ < 1.0) throw config_error("PermittivityField: eps_max must be >= 1");
  }

  const ScalarField& field() const { return field_; }
  double eps_max() const { return eps_max_; }
  const std::vector<int>& collar() const { return collar_; }
  const MeshPtr& mesh() const { return field_.mesh(); }
  int degree() const { return field_.degree(); }
  /// Identity of this coefficient; solutions record it for staleness checks.
  std::uint64_t stamp() const { return stamp_; }

  double value(int cell, const std::array<double, 4>& b) const { return field_.value(cell, b); }
  Vec3 grad(int cell, const std::array<double, 4>& b) const { return field_.gradient(cell, b); }

  bool admissible(double tol = 0.0) const {
    for (double v : field_.coeffs())
      if (v < 1.0 - tol || v > eps_max_ + tol) return false;
    for (int i : collar_)
      if (field_.coeffs()[i] != 1.0) return false;
    return true;
  }

 private:
  ScalarField field_;
  double eps_max_ = 15.0;
  std::vector<int> collar_;
  std::uint64_t stamp_ = 0;
};

/// Nodal clamp to [1, eps_max] with the boundary collar forced to 1. Idempotent.
inline PermittivityField project_admissible(ScalarField field, double eps_max,
                                            const std::vector<int>& collar) {
  if (eps_max < 1.0) throw config_error("project_admissible: eps_max must be >= 1");
  for (double& v : field.coeffs()) v = std::clamp(v, 1.0, eps_max);
  for (int i : collar) field.coeffs()[i] = 1.0;
  return PermittivityField(std::move(field), eps_max, collar);
}

inline PermittivityField project_admissible(ScalarField field, double eps_max) {
  const auto collar = boundary_collar_nodes(field.dofs());
  return project_admissible(std::move(field), eps_max, collar);
}

/// Smooth data cut-off z_delta: 1 on [0, T-delta], 0 on [T-delta/2, T], with a
/// C^infinity exponential bridge in between, monotone nonincreasing.
struct CutoffFunction {
  double T = 1.0;
  double delta = 0.1;

  CutoffFunction() = default;
  CutoffFunction(double final_time, double width) : T(final_time), delta(width) {
    if (!(T > 0.0) || !(delta > 0.0)) throw config_error("CutoffFunction: T, delta must be > 0");
  }

  double operator()(double t) const { return cutoff_value(t, *this); }

  static double cutoff_value(double t, const CutoffFunction& cfg) {
    if (t < 0.0 || t > cfg.T * (1.0 + 1e-12))
      throw usage_error("cutoff_value: t outside [0, T]");
    const double s = (cfg.T - 0.5 * cfg.delta - t) / (0.5 * cfg.delta);
    auto e = [](double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; };
    const double num = e(s);
    const double den = num + e(1.0 - s);
    return den == 0.0 ? (s > 0.0 ? 1.0 : 0.0) : num / den;
  }
};

inline double cutoff_value(double t, const CutoffFunction& cfg) {
  return CutoffFunction::cutoff_value(t, cfg);
}

/// alpha and the reference permittivity entering the Tikhonov functional.
struct RegularizationConfig {
  double alpha = 0.01;
  PermittivityField eps0;

  RegularizationConfig(double a, PermittivityField reference)
      : alpha(a), eps0(std::move(reference)) {
    if (!(alpha > 0.0)) throw config_error("RegularizationConfig: alpha must be > 0");
    if (!eps0.admissible(1e-12)) throw config_error("RegularizationConfig: eps0 not admissible");
  }
};

}  // namespace permrec
