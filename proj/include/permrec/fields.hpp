#pragma once

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "permrec/mesh.hpp"

namespace permrec {

/// Lagrange dof layout for scalar fields of degree q in {1,2}.
/// q=1: one dof per vertex. q=2: vertex dofs followed by edge-midpoint dofs
/// (edges enumerated by sorted vertex pair, ascending).
struct DofMap {
  MeshPtr mesh;
  int degree = 1;
  int n_dofs = 0;
  std::vector<std::pair<int, int>> edges;             // q=2 only
  std::vector<std::vector<int>> cell_dofs;            // global dof per local shape function
  std::vector<Vec3> dof_points;

  int local_size() const {
    const int d = mesh->dim;
    return degree == 1 ? d + 1 : (d + 1) + d * (d + 1) / 2;
  }
};

inline DofMap make_dof_map(MeshPtr mesh, int degree) {
  if (degree != 1 && degree != 2) throw usage_error("make_dof_map: degree must be 1 or 2");
  DofMap dm;
  dm.mesh = mesh;
  dm.degree = degree;
  const SimplicialMesh& m = *mesh;
  const int d = m.dim;
  dm.cell_dofs.assign(m.n_cells(), {});
  if (degree == 1) {
    dm.n_dofs = m.n_vertices();
    dm.dof_points = m.vertices;
    for (int c = 0; c < m.n_cells(); ++c) {
      dm.cell_dofs[c].resize(d + 1);
      for (int i = 0; i <= d; ++i) dm.cell_dofs[c][i] = m.cells[c][i];
    }
    return dm;
  }
  std::map<std::pair<int, int>, int> edge_id;
  for (int c = 0; c < m.n_cells(); ++c)
    for (int i = 0; i <= d; ++i)
      for (int j = i + 1; j <= d; ++j) {
        const int a = std::min(m.cells[c][i], m.cells[c][j]);
        const int b = std::max(m.cells[c][i], m.cells[c][j]);
        edge_id.emplace(std::make_pair(a, b), 0);
      }
  dm.edges.reserve(edge_id.size());
  for (auto& [key, id] : edge_id) {
    id = m.n_vertices() + static_cast<int>(dm.edges.size());
    dm.edges.push_back(key);
  }
  dm.n_dofs = m.n_vertices() + static_cast<int>(dm.edges.size());
  dm.dof_points = m.vertices;
  for (const auto& [a, b] : dm.edges)
    dm.dof_points.push_back(vec_scale(0.5, vec_add(m.vertices[a], m.vertices[b])));
  for (int c = 0; c < m.n_cells(); ++c) {
    auto& dofs = dm.cell_dofs[c];
    dofs.resize(dm.local_size());
    for (int i = 0; i <= d; ++i) dofs[i] = m.cells[c][i];
    int slot = d + 1;
    for (int i = 0; i <= d; ++i)
      for (int j = i + 1; j <= d; ++j) {
        const int a = std::min(m.cells[c][i], m.cells[c][j]);
        const int b = std::max(m.cells[c][i], m.cells[c][j]);
        dofs[slot++] = edge_id.at(std::make_pair(a, b));
      }
  }
  return dm;
}

namespace detail {

/// Local-edge (i,j) pairs in the order used by make_dof_map for q=2 slots.
inline std::vector<std::pair<int, int>> local_edges(int dim) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i <= dim; ++i)
    for (int j = i + 1; j <= dim; ++j) e.emplace_back(i, j);
  return e;
}

}  // namespace detail

/// Scalar Lagrange field of degree q on a mesh.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(MeshPtr mesh, int degree)
      : dof_(make_dof_map(std::move(mesh), degree)), coeffs_(dof_.n_dofs, 0.0) {}
  ScalarField(DofMap dof, std::vector<double> coeffs)
      : dof_(std::move(dof)), coeffs_(std::move(coeffs)) {
    if (static_cast<int>(coeffs_.size()) != dof_.n_dofs)
      throw usage_error("ScalarField: coefficient count does not match dof layout");
  }

  const MeshPtr& mesh() const { return dof_.mesh; }
  int degree() const { return dof_.degree; }
  int n_dofs() const { return dof_.n_dofs; }
  const DofMap& dofs() const { return dof_; }
  std::vector<double>& coeffs() { return coeffs_; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  /// Shape values at barycentric coordinates, in cell-local dof order.
  void shape_values(const std::array<double, 4>& b, std::vector<double>& out) const {
    const int d = dof_.mesh->dim;
    out.resize(dof_.local_size());
    if (dof_.degree == 1) {
      for (int i = 0; i <= d; ++i) out[i] = b[i];
      return;
    }
    for (int i = 0; i <= d; ++i) out[i] = b[i] * (2.0 * b[i] - 1.0);
    int slot = d + 1;
    for (const auto& [i, j] : detail::local_edges(d)) out[slot++] = 4.0 * b[i] * b[j];
  }

  void shape_gradients(int cell, const std::array<double, 4>& b, std::vector<Vec3>& out) const {
    const SimplicialMesh& m = *dof_.mesh;
    const int d = m.dim;
    out.resize(dof_.local_size());
    if (dof_.degree == 1) {
      for (int i = 0; i <= d; ++i) out[i] = m.bary_grad(cell, i);
      return;
    }
    for (int i = 0; i <= d; ++i) out[i] = vec_scale(4.0 * b[i] - 1.0, m.bary_grad(cell, i));
    int slot = d + 1;
    for (const auto& [i, j] : detail::local_edges(d))
      out[slot++] = vec_add(vec_scale(4.0 * b[j], m.bary_grad(cell, i)),
                            vec_scale(4.0 * b[i], m.bary_grad(cell, j)));
  }

  double value(int cell, const std::array<double, 4>& b) const {
    std::vector<double> sv;
    shape_values(b, sv);
    double v = 0.0;
    const auto& dofs = dof_.cell_dofs[cell];
    for (size_t i = 0; i < sv.size(); ++i) v += coeffs_[dofs[i]] * sv[i];
    return v;
  }

  Vec3 gradient(int cell, const std::array<double, 4>& b) const {
    std::vector<Vec3> sg;
    shape_gradients(cell, b, sg);
    Vec3 g{};
    const auto& dofs = dof_.cell_dofs[cell];
    for (size_t i = 0; i < sg.size(); ++i) g = vec_add(g, vec_scale(coeffs_[dofs[i]], sg[i]));
    return g;
  }

  /// Spatial Hessian, constant per cell (zero for q=1).
  std::array<Vec3, 3> hessian(int cell) const {
    std::array<Vec3, 3> H{};
    if (dof_.degree == 1) return H;
    const SimplicialMesh& m = *dof_.mesh;
    const int d = m.dim;
    const auto& dofs = dof_.cell_dofs[cell];
    // Vertex shapes b_i(2b_i-1): Hessian 4 grad_i grad_i^T; edge shapes 4 b_i b_j:
    // Hessian 4 (grad_i grad_j^T + grad_j grad_i^T).
    for (int i = 0; i <= d; ++i) {
      const Vec3 gi = m.bary_grad(cell, i);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) H[r][c] += coeffs_[dofs[i]] * 4.0 * gi[r] * gi[c];
    }
    int slot = d + 1;
    for (const auto& [i, j] : detail::local_edges(d)) {
      const Vec3 gi = m.bary_grad(cell, i);
      const Vec3 gj = m.bary_grad(cell, j);
      const double s = 4.0 * coeffs_[dofs[slot++]];
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) H[r][c] += s * (gi[r] * gj[c] + gj[r] * gi[c]);
    }
    return H;
  }

  double eval(const Vec3& x) const {
    const int c = dof_.mesh->locate(x);
    if (c < 0) throw usage_error("ScalarField::eval: point outside mesh");
    return value(c, dof_.mesh->barycentric(c, x));
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : coeffs_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  DofMap dof_;
  std::vector<double> coeffs_;
};

/// Nodal interpolant of a callable onto a degree-q Lagrange space.
inline ScalarField interpolate(const std::function<double(const Vec3&)>& f, MeshPtr mesh,
                               int degree = 1) {
  ScalarField out(std::move(mesh), degree);
  const auto& pts = out.dofs().dof_points;
  for (int i = 0; i < out.n_dofs(); ++i) out.coeffs()[i] = f(pts[i]);
  return out;
}

enum class TimeSpace { direct, adjoint, free_ };

/// Vector-valued field, piecewise linear in space (per component, vertex dofs)
/// and piecewise linear in time on a uniform grid. Direct-space fields vanish
/// at t=0, adjoint-space fields at t=T.
class SpaceTimeField {
 public:
  SpaceTimeField() = default;
  SpaceTimeField(MeshPtr mesh, TimeGrid grid, TimeSpace space = TimeSpace::free_)
      : mesh_(std::move(mesh)), grid_(grid), space_(space),
        slices_(grid.n_nodes(), std::vector<double>(static_cast<size_t>(mesh_->n_vertices()) * mesh_->dim, 0.0)) {}

  const MeshPtr& mesh() const { return mesh_; }
  const TimeGrid& grid() const { return grid_; }
  TimeSpace space() const { return space_; }
  int n_components() const { return mesh_->dim; }
  int n_space_dofs() const { return mesh_->n_vertices() * mesh_->dim; }

  std::vector<double>& slice(int k) { return slices_[k]; }
  const std::vector<double>& slice(int k) const { return slices_[k]; }

  double& at(int k, int vertex, int comp) { return slices_[k][vertex * mesh_->dim + comp]; }
  double at(int k, int vertex, int comp) const { return slices_[k][vertex * mesh_->dim + comp]; }

  /// Provenance stamp: id of the permittivity this field was solved against (0 = none).
  std::uint64_t solved_for = 0;

  Vec3 value(int cell, const std::array<double, 4>& b, int k) const {
    const SimplicialMesh& m = *mesh_;
    Vec3 v{};
    for (int i = 0; i <= m.dim; ++i) {
      const int vtx = m.cells[cell][i];
      for (int c = 0; c < m.dim; ++c) v[c] += b[i] * slices_[k][vtx * m.dim + c];
    }
    return v;
  }

  Vec3 value_at_time(int cell, const std::array<double, 4>& b, double t) const {
    const double tau = grid_.tau();
    int k = std::min(static_cast<int>(t / tau), grid_.n_intervals - 1);
    k = std::max(k, 0);
    const double s = t / tau - k;
    const Vec3 v0 = value(cell, b, k);
    const Vec3 v1 = value(cell, b, k + 1);
    return vec_add(vec_scale(1.0 - s, v0), vec_scale(s, v1));
  }

  /// Spatial Jacobian J[i][j] = d(component i)/d(x_j) at time node k, constant per cell.
  std::array<Vec3, 3> jacobian(int cell, int k) const {
    const SimplicialMesh& m = *mesh_;
    std::array<Vec3, 3> J{};
    for (int i = 0; i <= m.dim; ++i) {
      const int vtx = m.cells[cell][i];
      const Vec3 g = m.bary_grad(cell, i);
      for (int c = 0; c < m.dim; ++c)
        for (int x = 0; x < m.dim; ++x) J[c][x] += slices_[k][vtx * m.dim + c] * g[x];
    }
    return J;
  }

  double divergence(int cell, int k) const {
    const auto J = jacobian(cell, k);
    double div = 0.0;
    for (int c = 0; c < mesh_->dim; ++c) div += J[c][c];
    return div;
  }

  /// Time-derivative nodal slice on interval k: (slice(k+1) - slice(k)) / tau.
  std::vector<double> slope(int k) const {
    const double inv_tau = 1.0 / grid_.tau();
    std::vector<double> s(slices_[k].size());
    for (size_t i = 0; i < s.size(); ++i) s[i] = (slices_[k + 1][i] - slices_[k][i]) * inv_tau;
    return s;
  }

  Vec3 slope_value(int cell, const std::array<double, 4>& b, int interval) const {
    const SimplicialMesh& m = *mesh_;
    const double inv_tau = 1.0 / grid_.tau();
    Vec3 v{};
    for (int i = 0; i <= m.dim; ++i) {
      const int vtx = m.cells[cell][i];
      for (int c = 0; c < m.dim; ++c)
        v[c] += b[i] * (slices_[interval + 1][vtx * m.dim + c] - slices_[interval][vtx * m.dim + c]) * inv_tau;
    }
    return v;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& s : slices_)
      for (double v : s) m = std::max(m, std::abs(v));
    return m;
  }

  bool slice_is_zero(int k) const {
    for (double v : slices_[k])
      if (v != 0.0) return false;
    return true;
  }

 private:
  MeshPtr mesh_;
  TimeGrid grid_;
  TimeSpace space_ = TimeSpace::free_;
  std::vector<std::vector<double>> slices_;
};

/// Nodal space-time interpolant of a callable f(x, t, component).
inline SpaceTimeField interpolate_spacetime(
    const std::function<double(const Vec3&, double, int)>& f, MeshPtr mesh, const TimeGrid& grid,
    TimeSpace space = TimeSpace::free_) {
  SpaceTimeField out(std::move(mesh), grid, space);
  const SimplicialMesh& m = *out.mesh();
  for (int k = 0; k < grid.n_nodes(); ++k) {
    const double t = grid.node(k);
    for (int v = 0; v < m.n_vertices(); ++v)
      for (int c = 0; c < m.dim; ++c) out.at(k, v, c) = f(m.vertices[v], t, c);
  }
  if (space == TimeSpace::direct) std::fill(out.slice(0).begin(), out.slice(0).end(), 0.0);
  if (space == TimeSpace::adjoint)
    std::fill(out.slice(grid.n_intervals).begin(), out.slice(grid.n_intervals).end(), 0.0);
  return out;
}

/// Transfer a scalar field onto another mesh by nodal evaluation (point location
/// on the source mesh). The one sanctioned cross-mesh path for fields.
inline ScalarField transfer_scalar(const ScalarField& src, MeshPtr target_mesh, int degree) {
  ScalarField out(std::move(target_mesh), degree);
  const auto& pts = out.dofs().dof_points;
  const SimplicialMesh& sm = *src.mesh();
  for (int i = 0; i < out.n_dofs(); ++i) {
    int c = sm.locate(pts[i], 1e-9);
    if (c < 0) c = sm.locate(pts[i], 1e-6);
    if (c < 0) throw usage_error("transfer_scalar: target node outside source mesh");
    out.coeffs()[i] = src.value(c, sm.barycentric(c, pts[i]));
  }
  return out;
}

}  // namespace permrec
