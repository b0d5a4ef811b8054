#pragma once

#include <vector>

#include "permrec/fields.hpp"

namespace permrec {

/// Nonnegative maximal jump magnitudes per (cell, time interval).
/// Static quantities use a single interval.
struct JumpField {
  int n_cells = 0;
  int n_intervals = 1;
  std::vector<double> values;

  JumpField() = default;
  JumpField(int cells, int intervals)
      : n_cells(cells), n_intervals(intervals),
        values(static_cast<size_t>(cells) * intervals, 0.0) {}

  double& at(int cell, int k = 0) { return values[static_cast<size_t>(cell) * n_intervals + k]; }
  double at(int cell, int k = 0) const {
    return values[static_cast<size_t>(cell) * n_intervals + k];
  }
  double max() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
  }
};

/// Representative jump vectors: per (cell, interval) the trace-sum vector at the
/// argmax face (or time node), so its magnitude equals the maximal jump.
struct VectorJumpField {
  int n_cells = 0;
  int n_intervals = 1;
  std::vector<Vec3> values;

  VectorJumpField() = default;
  VectorJumpField(int cells, int intervals)
      : n_cells(cells), n_intervals(intervals),
        values(static_cast<size_t>(cells) * intervals, Vec3{}) {}

  Vec3& at(int cell, int k = 0) { return values[static_cast<size_t>(cell) * n_intervals + k]; }
  const Vec3& at(int cell, int k = 0) const {
    return values[static_cast<size_t>(cell) * n_intervals + k];
  }
};

struct SpatialJumps {
  JumpField magnitude;
  VectorJumpField representative;
};

/// Maximal spatial jump across cell faces. `side_trace(cell, face, k)` returns
/// the trace of the jumped quantity from `cell`'s side of `face` (with the
/// cell's outward normal baked in where the quantity carries one), evaluated at
/// the face midpoint and, for time-dependent quantities, at the midpoint of
/// interval k. The jump on a face is the sum of the two side traces; boundary
/// faces contribute zero.
template <class F>
SpatialJumps spatial_max_jump_ex(const SimplicialMesh& mesh, int n_intervals, F&& side_trace) {
  SpatialJumps out{JumpField(mesh.n_cells(), n_intervals),
                   VectorJumpField(mesh.n_cells(), n_intervals)};
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const auto& face = mesh.faces[f];
    if (face.cells[1] == -1) continue;
    for (int k = 0; k < n_intervals; ++k) {
      const Vec3 a = side_trace(face.cells[0], f, k);
      const Vec3 b = side_trace(face.cells[1], f, k);
      const Vec3 jump = vec_add(a, b);
      const double mag = vec_norm(jump);
      for (int side = 0; side < 2; ++side) {
        const int c = face.cells[side];
        if (mag > out.magnitude.at(c, k)) {
          out.magnitude.at(c, k) = mag;
          out.representative.at(c, k) = jump;
        }
      }
    }
  }
  return out;
}

template <class F>
JumpField spatial_max_jump(const SimplicialMesh& mesh, int n_intervals, F&& side_trace) {
  return spatial_max_jump_ex(mesh, n_intervals, std::forward<F>(side_trace)).magnitude;
}

struct TemporalJumps {
  JumpField magnitude;
  VectorJumpField representative;
};

/// Maximal temporal jump of a quantity piecewise constant on time intervals,
/// given per (cell, interval); jumps at t_0 and t_N are zero by definition.
inline TemporalJumps temporal_max_jump_ex(const std::vector<std::vector<Vec3>>& values,
                                          int n_intervals) {
  const int n_cells = static_cast<int>(values.size());
  TemporalJumps out{JumpField(n_cells, n_intervals), VectorJumpField(n_cells, n_intervals)};
  for (int c = 0; c < n_cells; ++c) {
    for (int k = 0; k < n_intervals; ++k) {
      // Node jump at t_k (left end) and t_{k+1} (right end).
      Vec3 left{}, right{};
      if (k > 0) left = vec_sub(values[c][k], values[c][k - 1]);
      if (k < n_intervals - 1) right = vec_sub(values[c][k + 1], values[c][k]);
      const double lm = vec_norm(left), rm = vec_norm(right);
      if (lm >= rm) {
        out.magnitude.at(c, k) = lm;
        out.representative.at(c, k) = left;
      } else {
        out.magnitude.at(c, k) = rm;
        out.representative.at(c, k) = right;
      }
    }
  }
  return out;
}

inline JumpField temporal_max_jump(const std::vector<std::vector<Vec3>>& values,
                                   int n_intervals) {
  return temporal_max_jump_ex(values, n_intervals).magnitude;
}

// ---- Side-trace helpers for the jumped quantities of the error analysis ----

/// Normal derivative trace of a scalar field: (nu_K . grad v) at the face midpoint.
inline SpatialJumps normal_derivative_jumps(const ScalarField& v) {
  const SimplicialMesh& m = *v.mesh();
  return spatial_max_jump_ex(m, 1, [&](int cell, int face, int) {
    const auto b = m.barycentric(cell, m.face_midpoint(face));
    const Vec3 g = v.gradient(cell, b);
    const Vec3 nu = m.face_normal(face, m.face_side_of_cell(face, cell));
    return Vec3{vec_dot(nu, g), 0.0, 0.0};
  });
}

/// Normal derivative trace of a vector field (component-wise nu . grad u_c),
/// evaluated per interval at the interval midpoint in time.
inline SpatialJumps normal_derivative_jumps(const SpaceTimeField& u) {
  const SimplicialMesh& m = *u.mesh();
  const int nk = u.grid().n_intervals;
  return spatial_max_jump_ex(m, nk, [&](int cell, int face, int k) {
    const Vec3 nu = m.face_normal(face, m.face_side_of_cell(face, cell));
    const auto J0 = u.jacobian(cell, k);
    const auto J1 = u.jacobian(cell, k + 1);
    Vec3 t{};
    for (int c = 0; c < m.dim; ++c)
      t[c] = 0.5 * (vec_dot(nu, J0[c]) + vec_dot(nu, J1[c]));
    return t;
  });
}

/// Per-(cell, interval) time slopes dU/dt at cell centroids.
inline std::vector<std::vector<Vec3>> centroid_slopes(const SpaceTimeField& u) {
  const SimplicialMesh& m = *u.mesh();
  const int nk = u.grid().n_intervals;
  std::vector<std::vector<Vec3>> out(m.n_cells(), std::vector<Vec3>(nk));
  for (int c = 0; c < m.n_cells(); ++c) {
    const auto b = m.barycentric(c, m.cell_centroid(c));
    for (int k = 0; k < nk; ++k) out[c][k] = u.slope_value(c, b, k);
  }
  return out;
}

inline TemporalJumps time_derivative_jumps(const SpaceTimeField& u) {
  return temporal_max_jump_ex(centroid_slopes(u), u.grid().n_intervals);
}

/// Per-(cell, interval) slopes of div(u), scalar in the first component.
inline TemporalJumps div_time_derivative_jumps(const SpaceTimeField& u) {
  const SimplicialMesh& m = *u.mesh();
  const int nk = u.grid().n_intervals;
  std::vector<std::vector<Vec3>> slopes(m.n_cells(), std::vector<Vec3>(nk));
  const double inv_tau = 1.0 / u.grid().tau();
  for (int c = 0; c < m.n_cells(); ++c)
    for (int k = 0; k < nk; ++k)
      slopes[c][k] = {(u.divergence(c, k + 1) - u.divergence(c, k)) * inv_tau, 0.0, 0.0};
  return temporal_max_jump_ex(slopes, nk);
}

}  // namespace permrec
