#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

#include "permrec/common.hpp"

namespace permrec {

/// Conforming simplicial mesh of an axis-aligned box, d in {2,3}.
/// Immutable once finalized; refinement produces a new mesh value.
class SimplicialMesh {
 public:
  struct Face {
    std::array<int, 3> verts{-1, -1, -1};   // sorted vertex ids, d used
    std::array<int, 2> cells{-1, -1};       // incident cells; cells[1] = -1 on boundary
    std::array<int, 2> local{-1, -1};       // local face index within each incident cell
    int boundary_tag = -1;                  // -1 interior, else box side 0..2d-1
  };

  int dim = 2;
  Vec3 box_lo{}, box_hi{};
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> cells;    // d+1 vertex ids per cell, unused = -1
  std::vector<int> cell_ancestor;           // cell id in the pre-refinement mesh (identity for generated meshes)
  std::vector<Face> faces;
  std::vector<std::array<int, 4>> cell_faces;  // local face i is opposite local vertex i

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_cells() const { return static_cast<int>(cells.size()); }
  int n_faces() const { return static_cast<int>(faces.size()); }
  int n_corners() const { return dim + 1; }
  int n_face_corners() const { return dim; }

  double cell_volume(int c) const { return volumes_[c]; }
  const Vec3& cell_centroid(int c) const { return centroids_[c]; }
  /// Gradient of barycentric coordinate i on cell c (constant over the cell).
  const Vec3& bary_grad(int c, int i) const { return bary_grads_[c][i]; }

  double face_measure(int f) const { return face_measures_[f]; }
  const Vec3& face_midpoint(int f) const { return face_midpoints_[f]; }
  /// Outward unit normal of face f as seen from incident cell slot side (0 or 1).
  Vec3 face_normal(int f, int side) const {
    Vec3 n = face_normals_[f];
    return side == 0 ? n : vec_scale(-1.0, n);
  }
  int face_side_of_cell(int f, int c) const {
    if (faces[f].cells[0] == c) return 0;
    if (faces[f].cells[1] == c) return 1;
    throw usage_error("face_side_of_cell: cell not incident to face");
  }

  double total_volume() const { return std::accumulate(volumes_.begin(), volumes_.end(), 0.0); }

  double min_diameter() const {
    double m = std::numeric_limits<double>::max();
    for (int c = 0; c < n_cells(); ++c) m = std::min(m, diameter(c));
    return m;
  }
  double max_diameter() const {
    double m = 0.0;
    for (int c = 0; c < n_cells(); ++c) m = std::max(m, diameter(c));
    return m;
  }
  double diameter(int c) const {
    double d2 = 0.0;
    for (int i = 0; i <= dim; ++i)
      for (int j = i + 1; j <= dim; ++j) {
        const double dd = vec_dist(vertices[cells[c][i]], vertices[cells[c][j]]);
        d2 = std::max(d2, dd);
      }
    return d2;
  }

  /// Physical point of barycentric coordinates on cell c.
  Vec3 point(int c, const std::array<double, 4>& bary) const {
    Vec3 p{};
    for (int i = 0; i <= dim; ++i) p = vec_add(p, vec_scale(bary[i], vertices[cells[c][i]]));
    return p;
  }

  /// Barycentric coordinates of x with respect to cell c.
  std::array<double, 4> barycentric(int c, const Vec3& x) const {
    std::array<double, 4> b{};
    const Vec3 d0 = vec_sub(x, vertices[cells[c][0]]);
    double b0 = 1.0;
    for (int i = 1; i <= dim; ++i) {
      b[i] = vec_dot(bary_grads_[c][i], d0);
      b0 -= b[i];
    }
    b[0] = b0;
    return b;
  }

  bool contains(int c, const Vec3& x, double tol = 1e-10) const {
    const auto b = barycentric(c, x);
    for (int i = 0; i <= dim; ++i)
      if (b[i] < -tol) return false;
    return true;
  }

  /// Linear scan point location; adequate at desk scale.
  int locate(const Vec3& x, double tol = 1e-10) const {
    for (int c = 0; c < n_cells(); ++c)
      if (contains(c, x, tol)) return c;
    return -1;
  }

  /// Vertex ids of local face i of cell c (the corners other than local vertex i).
  std::array<int, 3> local_face_verts(int c, int i) const {
    std::array<int, 3> v{-1, -1, -1};
    int k = 0;
    for (int j = 0; j <= dim; ++j)
      if (j != i) v[k++] = cells[c][j];
    return v;
  }

  /// Builds faces, adjacency, geometry caches; validates orientation and conformity.
  void finalize() {
    orient_cells();
    build_geometry();
    build_faces();
    validate();
  }

 private:
  std::vector<double> volumes_;
  std::vector<Vec3> centroids_;
  std::vector<std::array<Vec3, 4>> bary_grads_;
  std::vector<double> face_measures_;
  std::vector<Vec3> face_midpoints_;
  std::vector<Vec3> face_normals_;  // oriented outward with respect to cells[0]

  double signed_volume(int c) const {
    const Vec3& p0 = vertices[cells[c][0]];
    if (dim == 2) {
      const Vec3 a = vec_sub(vertices[cells[c][1]], p0);
      const Vec3 b = vec_sub(vertices[cells[c][2]], p0);
      return 0.5 * (a[0] * b[1] - a[1] * b[0]);
    }
    const Vec3 a = vec_sub(vertices[cells[c][1]], p0);
    const Vec3 b = vec_sub(vertices[cells[c][2]], p0);
    const Vec3 cc = vec_sub(vertices[cells[c][3]], p0);
    return vec_dot(a, vec_cross(b, cc)) / 6.0;
  }

  void orient_cells() {
    for (int c = 0; c < n_cells(); ++c) {
      if (signed_volume(c) < 0.0) std::swap(cells[c][dim - 1], cells[c][dim]);
      if (signed_volume(c) <= 0.0) throw usage_error("mesh: degenerate cell " + std::to_string(c));
    }
  }

  void build_geometry() {
    const int nc = n_cells();
    volumes_.resize(nc);
    centroids_.resize(nc);
    bary_grads_.resize(nc);
    for (int c = 0; c < nc; ++c) {
      volumes_[c] = signed_volume(c);
      Vec3 cen{};
      for (int i = 0; i <= dim; ++i) cen = vec_add(cen, vertices[cells[c][i]]);
      centroids_[c] = vec_scale(1.0 / (dim + 1), cen);
      // Invert the edge matrix T = [p1-p0 ... pd-p0] to get barycentric gradients.
      const Vec3& p0 = vertices[cells[c][0]];
      if (dim == 2) {
        const Vec3 a = vec_sub(vertices[cells[c][1]], p0);
        const Vec3 b = vec_sub(vertices[cells[c][2]], p0);
        const double det = a[0] * b[1] - a[1] * b[0];
        bary_grads_[c][1] = {b[1] / det, -b[0] / det, 0.0};
        bary_grads_[c][2] = {-a[1] / det, a[0] / det, 0.0};
      } else {
        const Vec3 a = vec_sub(vertices[cells[c][1]], p0);
        const Vec3 b = vec_sub(vertices[cells[c][2]], p0);
        const Vec3 cc = vec_sub(vertices[cells[c][3]], p0);
        const double det = vec_dot(a, vec_cross(b, cc));
        const Vec3 bxc = vec_cross(b, cc), cxa = vec_cross(cc, a), axb = vec_cross(a, b);
        bary_grads_[c][1] = vec_scale(1.0 / det, bxc);
        bary_grads_[c][2] = vec_scale(1.0 / det, cxa);
        bary_grads_[c][3] = vec_scale(1.0 / det, axb);
      }
      Vec3 g0{};
      for (int i = 1; i <= dim; ++i) g0 = vec_sub(g0, bary_grads_[c][i]);
      bary_grads_[c][0] = g0;
    }
  }

  void build_faces() {
    faces.clear();
    cell_faces.assign(n_cells(), {-1, -1, -1, -1});
    std::map<std::array<int, 3>, int> index;
    for (int c = 0; c < n_cells(); ++c) {
      for (int i = 0; i <= dim; ++i) {
        auto fv = local_face_verts(c, i);
        std::sort(fv.begin(), fv.begin() + dim);
        auto it = index.find(fv);
        if (it == index.end()) {
          Face f;
          f.verts = fv;
          f.cells[0] = c;
          f.local[0] = i;
          index.emplace(fv, static_cast<int>(faces.size()));
          cell_faces[c][i] = static_cast<int>(faces.size());
          faces.push_back(f);
        } else {
          Face& f = faces[it->second];
          if (f.cells[1] != -1)
            throw usage_error("mesh: face shared by more than two cells");
          f.cells[1] = c;
          f.local[1] = i;
          cell_faces[c][i] = it->second;
        }
      }
    }
    // Geometry and boundary classification.
    const int nf = n_faces();
    face_measures_.resize(nf);
    face_midpoints_.resize(nf);
    face_normals_.resize(nf);
    const double tol = 1e-9 * std::max({box_hi[0] - box_lo[0], box_hi[1] - box_lo[1],
                                        dim == 3 ? box_hi[2] - box_lo[2] : 0.0, 1e-30});
    for (int f = 0; f < nf; ++f) {
      Face& face = faces[f];
      const Vec3& q0 = vertices[face.verts[0]];
      const Vec3& q1 = vertices[face.verts[1]];
      Vec3 mid{};
      if (dim == 2) {
        face_measures_[f] = vec_dist(q0, q1);
        mid = vec_scale(0.5, vec_add(q0, q1));
        const Vec3 t = vec_sub(q1, q0);
        Vec3 n = {t[1], -t[0], 0.0};
        face_normals_[f] = vec_scale(1.0 / vec_norm(n), n);
      } else {
        const Vec3& q2 = vertices[face.verts[2]];
        const Vec3 n = vec_cross(vec_sub(q1, q0), vec_sub(q2, q0));
        face_measures_[f] = 0.5 * vec_norm(n);
        mid = vec_scale(1.0 / 3.0, vec_add(vec_add(q0, q1), q2));
        face_normals_[f] = vec_scale(1.0 / vec_norm(n), n);
      }
      face_midpoints_[f] = mid;
      // Point the stored normal away from cells[0].
      const int c0 = face.cells[0];
      const Vec3 opp = vertices[cells[c0][face.local[0]]];
      if (vec_dot(face_normals_[f], vec_sub(mid, opp)) < 0.0)
        face_normals_[f] = vec_scale(-1.0, face_normals_[f]);
      // Boundary tag: which box side all face vertices lie on.
      if (face.cells[1] == -1) {
        int tag = -1;
        for (int axis = 0; axis < dim && tag < 0; ++axis) {
          for (int side = 0; side < 2 && tag < 0; ++side) {
            const double plane = side == 0 ? box_lo[axis] : box_hi[axis];
            bool on = true;
            for (int k = 0; k < dim; ++k)
              on = on && std::abs(vertices[face.verts[k]][axis] - plane) <= tol;
            if (on) tag = 2 * axis + side;
          }
        }
        if (tag < 0)
          throw usage_error("mesh: boundary face off the box boundary (hanging vertex?)");
        face.boundary_tag = tag;
      } else {
        face.boundary_tag = -1;
      }
    }
  }

  void validate() const {
    for (const Face& f : faces) {
      const bool interior = f.cells[1] != -1;
      if (interior && f.boundary_tag != -1) throw usage_error("mesh: tagged interior face");
      if (!interior && f.boundary_tag == -1) throw usage_error("mesh: untagged boundary face");
    }
  }
};

using MeshPtr = std::shared_ptr<const SimplicialMesh>;

/// Per-cell diameter h(K) = max pairwise vertex distance within K.
struct MeshSizeField {
  std::vector<double> h;
  double min() const { return *std::min_element(h.begin(), h.end()); }
  double max() const { return *std::max_element(h.begin(), h.end()); }
};

inline MeshSizeField mesh_size_field(const SimplicialMesh& mesh) {
  MeshSizeField out;
  out.h.resize(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) out.h[c] = mesh.diameter(c);
  return out;
}

/// Kuhn subdivision of an axis-aligned box: each lattice cell splits into d!
/// simplices, one per axis permutation; compatible across lattice cells.
inline MeshPtr build_box_mesh(const Vec3& lo, const Vec3& hi, const std::array<int, 3>& resolution,
                              int dim) {
  if (dim != 2 && dim != 3) throw config_error("build_box_mesh: dimension must be 2 or 3");
  for (int a = 0; a < dim; ++a) {
    if (resolution[a] < 1) throw config_error("build_box_mesh: resolution must be >= 1 per axis");
    if (!(hi[a] > lo[a])) throw config_error("build_box_mesh: degenerate box");
  }
  auto mesh = std::make_shared<SimplicialMesh>();
  mesh->dim = dim;
  mesh->box_lo = lo;
  mesh->box_hi = hi;
  const int nx = resolution[0], ny = resolution[1], nz = dim == 3 ? resolution[2] : 1;
  const int vx = nx + 1, vy = ny + 1, vz = dim == 3 ? nz + 1 : 1;
  auto vid = [&](int i, int j, int k) { return i + vx * (j + vy * k); };
  for (int k = 0; k < vz; ++k)
    for (int j = 0; j < vy; ++j)
      for (int i = 0; i < vx; ++i) {
        Vec3 p = {lo[0] + (hi[0] - lo[0]) * i / nx, lo[1] + (hi[1] - lo[1]) * j / ny, 0.0};
        if (dim == 3) p[2] = lo[2] + (hi[2] - lo[2]) * k / nz;
        mesh->vertices.push_back(p);
      }
  std::vector<std::array<int, 3>> perms;
  if (dim == 2) {
    perms = {{0, 1, -1}, {1, 0, -1}};
  } else {
    perms = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  }
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        for (const auto& perm : perms) {
          std::array<int, 3> at = {i, j, k};
          std::array<int, 4> cell = {-1, -1, -1, -1};
          cell[0] = vid(at[0], at[1], at[2]);
          for (int s = 0; s < dim; ++s) {
            at[perm[s]] += 1;
            cell[s + 1] = vid(at[0], at[1], at[2]);
          }
          mesh->cells.push_back(cell);
        }
  mesh->cell_ancestor.resize(mesh->cells.size());
  std::iota(mesh->cell_ancestor.begin(), mesh->cell_ancestor.end(), 0);
  mesh->finalize();
  return mesh;
}

namespace detail {

/// Mutable refinement workspace: Rivara longest-edge bisection with a global
/// edge-split closure (splitting an edge bisects every incident cell).
class Bisector {
 public:
  Bisector(const SimplicialMesh& mesh)
      : dim_(mesh.dim), vertices_(mesh.vertices) {
    cells_.reserve(mesh.cells.size() * 2);
    for (int c = 0; c < mesh.n_cells(); ++c) {
      cells_.push_back({mesh.cells[c], mesh.cell_ancestor[c], true});
      register_cell(c);
    }
  }

  void refine(const std::vector<int>& marked) {
    for (int m : marked) refine_cell(m);
  }

  void extract(SimplicialMesh& out) const {
    out.vertices = vertices_;
    out.cells.clear();
    out.cell_ancestor.clear();
    for (const CellRec& r : cells_) {
      if (!r.alive) continue;
      out.cells.push_back(r.verts);
      out.cell_ancestor.push_back(r.ancestor);
    }
  }

 private:
  struct CellRec {
    std::array<int, 4> verts;
    int ancestor;
    bool alive;
  };

  int dim_;
  std::vector<Vec3> vertices_;
  std::vector<CellRec> cells_;
  std::unordered_map<std::uint64_t, std::vector<int>> edge_cells_;

  void register_cell(int c) {
    const auto& v = cells_[c].verts;
    for (int i = 0; i <= dim_; ++i)
      for (int j = i + 1; j <= dim_; ++j) edge_cells_[edge_key(v[i], v[j])].push_back(c);
  }

  std::vector<int> alive_on_edge(std::uint64_t key) {
    std::vector<int> out;
    auto it = edge_cells_.find(key);
    if (it == edge_cells_.end()) return out;
    for (int c : it->second)
      if (cells_[c].alive) out.push_back(c);
    return out;
  }

  /// Refinement edge: longest edge, ties broken by the sorted vertex-id pair.
  std::uint64_t refinement_edge(int c) const {
    const auto& v = cells_[c].verts;
    double best = -1.0;
    std::uint64_t key = 0;
    for (int i = 0; i <= dim_; ++i)
      for (int j = i + 1; j <= dim_; ++j) {
        const double len = vec_dist(vertices_[v[i]], vertices_[v[j]]);
        const std::uint64_t k = edge_key(v[i], v[j]);
        if (len > best + 1e-14 * (1.0 + best) || (std::abs(len - best) <= 1e-14 * (1.0 + best) && k < key)) {
          best = len;
          key = k;
        }
      }
    return key;
  }

  void refine_cell(int c0) {
    std::vector<int> stack{c0};
    int guard = 0;
    while (!stack.empty()) {
      if (++guard > 1 << 22) throw solver_error("refine_marked: closure did not terminate");
      const int c = stack.back();
      if (!cells_[c].alive) {
        stack.pop_back();
        continue;
      }
      const std::uint64_t e = refinement_edge(c);
      int incompatible = -1;
      for (int cc : alive_on_edge(e))
        if (refinement_edge(cc) != e) {
          incompatible = cc;
          break;
        }
      if (incompatible >= 0) {
        stack.push_back(incompatible);
      } else {
        split_edge(e);
      }
    }
  }

  void split_edge(std::uint64_t key) {
    const int a = static_cast<int>(key & 0xffffffffu);
    const int b = static_cast<int>(key >> 32);
    const int mid = static_cast<int>(vertices_.size());
    vertices_.push_back(vec_scale(0.5, vec_add(vertices_[a], vertices_[b])));
    const std::vector<int> incident = alive_on_edge(key);
    for (int c : incident) {
      // Copy before push_back: growing cells_ invalidates references into it.
      const std::array<int, 4> parent_verts = cells_[c].verts;
      const int ancestor = cells_[c].ancestor;
      cells_[c].alive = false;
      for (int child = 0; child < 2; ++child) {
        std::array<int, 4> v = parent_verts;
        for (int i = 0; i <= dim_; ++i)
          if (v[i] == (child == 0 ? b : a)) v[i] = mid;
        const int id = static_cast<int>(cells_.size());
        cells_.push_back({v, ancestor, true});
        register_cell(id);
      }
    }
    edge_cells_.erase(key);
  }
};

}  // namespace detail

/// Conforming bisection refinement: every marked cell is subdivided; neighbors
/// are bisected as needed for conformity. Empty mark set returns an identical mesh.
inline MeshPtr refine_marked(const SimplicialMesh& mesh, const std::vector<int>& marked) {
  for (int m : marked)
    if (m < 0 || m >= mesh.n_cells()) throw usage_error("refine_marked: marked cell out of range");
  auto out = std::make_shared<SimplicialMesh>();
  out->dim = mesh.dim;
  out->box_lo = mesh.box_lo;
  out->box_hi = mesh.box_hi;
  if (marked.empty()) {
    out->vertices = mesh.vertices;
    out->cells = mesh.cells;
    out->cell_ancestor = mesh.cell_ancestor;
    out->finalize();
    return out;
  }
  detail::Bisector bis(mesh);
  bis.refine(marked);
  bis.extract(*out);
  out->finalize();
  return out;
}

inline MeshPtr refine_uniform(const SimplicialMesh& mesh) {
  std::vector<int> all(mesh.n_cells());
  std::iota(all.begin(), all.end(), 0);
  return refine_marked(mesh, all);
}

/// Uniform partition of (0, T) into N_tau intervals of length tau.
struct TimeGrid {
  double T = 0.0;
  int n_intervals = 0;
  bool cfl_warning = false;
  std::string warning;

  double tau() const { return T / n_intervals; }
  int n_nodes() const { return n_intervals + 1; }
  double node(int k) const { return T * k / n_intervals; }
};

struct TimeGridGuard {
  double h_min;
  double eps_max;
};

inline TimeGrid make_time_grid(double T, int n_intervals,
                               std::optional<TimeGridGuard> guard = std::nullopt) {
  if (!(T > 0.0)) throw config_error("make_time_grid: T must be positive");
  if (n_intervals < 1) throw config_error("make_time_grid: N_tau must be >= 1");
  TimeGrid g;
  g.T = T;
  g.n_intervals = n_intervals;
  if (guard) {
    const double limit = guard->h_min / std::sqrt(guard->eps_max);
    if (g.tau() > limit) {
      g.cfl_warning = true;
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "time step tau=%.6g exceeds accuracy guard h_min/sqrt(eps_max)=%.6g",
                    g.tau(), limit);
      g.warning = buf;
    }
  }
  return g;
}

}  // namespace permrec
