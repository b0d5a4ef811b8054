#pragma once

#include <vector>

#include "permrec/common.hpp"

namespace permrec {

/// Quadrature point in barycentric coordinates (d+1 entries used) with a weight.
/// Weights of a rule sum to 1; integrals are weighted sums times the physical measure.
struct QuadPoint {
  std::array<double, 4> bary{};
  double weight = 0.0;
};

using QuadRule = std::vector<QuadPoint>;

namespace detail {

// 4-point Gauss-Legendre on [0,1].
inline const std::array<double, 4> kGauss4X = {
    0.5 - 0.5 * 0.861136311594052575, 0.5 - 0.5 * 0.339981043584856265,
    0.5 + 0.5 * 0.339981043584856265, 0.5 + 0.5 * 0.861136311594052575};
inline const std::array<double, 4> kGauss4W = {
    0.5 * 0.347854845137453857, 0.5 * 0.652145154862546143,
    0.5 * 0.652145154862546143, 0.5 * 0.347854845137453857};

inline QuadRule triangle_degree4() {
  // Dunavant degree-4 rule, 6 points, two symmetric orbits.
  const double a1 = 0.108103018168070, b1 = 0.445948490915965, w1 = 0.223381589678011;
  const double a2 = 0.816847572980459, b2 = 0.091576213509771, w2 = 0.109951743655322;
  QuadRule r;
  r.push_back({{a1, b1, b1, 0.0}, w1});
  r.push_back({{b1, a1, b1, 0.0}, w1});
  r.push_back({{b1, b1, a1, 0.0}, w1});
  r.push_back({{a2, b2, b2, 0.0}, w2});
  r.push_back({{b2, a2, b2, 0.0}, w2});
  r.push_back({{b2, b2, a2, 0.0}, w2});
  return r;
}

inline QuadRule tetra_degree4() {
  // Duffy transform of a 4x4x4 Gauss product rule; exact for total degree 4.
  QuadRule r;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) {
        const double u = kGauss4X[i], v = kGauss4X[j], w = kGauss4X[k];
        const double x = u;
        const double y = (1.0 - u) * v;
        const double z = (1.0 - u) * (1.0 - v) * w;
        const double jac = (1.0 - u) * (1.0 - u) * (1.0 - v);
        // Normalize so weights sum to 1 (reference tet volume is 1/6).
        const double weight = 6.0 * kGauss4W[i] * kGauss4W[j] * kGauss4W[k] * jac;
        r.push_back({{1.0 - x - y - z, x, y, z}, weight});
      }
    }
  }
  return r;
}

inline QuadRule segment_degree5() {
  // 3-point Gauss-Legendre mapped to barycentric (1-t, t).
  const double s = std::sqrt(3.0 / 5.0);
  const std::array<double, 3> t = {0.5 * (1.0 - s), 0.5, 0.5 * (1.0 + s)};
  const std::array<double, 3> w = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  QuadRule r;
  for (int i = 0; i < 3; ++i) r.push_back({{1.0 - t[i], t[i], 0.0, 0.0}, w[i]});
  return r;
}

}  // namespace detail

/// Volume rule on the d-simplex, exact for polynomials of total degree 4.
inline const QuadRule& cell_rule(int dim) {
  static const QuadRule tri = detail::triangle_degree4();
  static const QuadRule tet = detail::tetra_degree4();
  if (dim == 2) return tri;
  if (dim == 3) return tet;
  throw usage_error("cell_rule: dimension must be 2 or 3");
}

/// Rule on a (d-1)-face: segment for d=2, triangle for d=3.
inline const QuadRule& face_rule(int dim) {
  static const QuadRule seg = detail::segment_degree5();
  static const QuadRule tri = detail::triangle_degree4();
  if (dim == 2) return seg;
  if (dim == 3) return tri;
  throw usage_error("face_rule: dimension must be 2 or 3");
}

/// Shared 3-point Gauss rule per time interval (points in [0,1], weights sum to 1).
/// Every Omega_T / Gamma_T integral uses this rule so that functional, weak forms,
/// solver loads and gradient stay exactly consistent with one another.
struct TimeRule {
  std::array<double, 3> x;
  std::array<double, 3> w;
};

inline const TimeRule& time_rule() {
  static const TimeRule r = [] {
    const double s = std::sqrt(3.0 / 5.0);
    TimeRule t;
    t.x = {0.5 * (1.0 - s), 0.5, 0.5 * (1.0 + s)};
    t.w = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    return t;
  }();
  return r;
}

}  // namespace permrec
