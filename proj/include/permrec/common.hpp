#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace permrec {

/// Bad user-supplied configuration (CLI/config-file values, inadmissible inputs).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse: mismatched meshes/grids, out-of-range arguments, wrong field kind.
struct usage_error : std::runtime_error {
  explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure inside a solver (singular system, line-search breakdown).
struct solver_error : std::runtime_error {
  explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

/// Fixed-capacity point/vector for d in {2,3}; unused trailing components stay 0.
using Vec3 = std::array<double, 3>;

inline Vec3 vec_add(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Vec3 vec_sub(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline Vec3 vec_scale(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double vec_dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double vec_norm(const Vec3& a) { return std::sqrt(vec_dot(a, a)); }

inline Vec3 vec_cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double vec_dist(const Vec3& a, const Vec3& b) { return vec_norm(vec_sub(a, b)); }

/// Packed key for an undirected vertex pair.
inline std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(a < b ? a : b);
  const auto hi = static_cast<std::uint64_t>(a < b ? b : a);
  return (hi << 32) | lo;
}

}  // namespace permrec
