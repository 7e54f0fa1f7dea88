// Directions on the sphere, azimuth rotations and the nearly-uniform
// direction grid used for filter design.
#pragma once

#include <vector>

#include "bsm/common.hpp"

namespace bsm {

/// A direction (theta, phi): theta measured from +z downward (0..pi),
/// phi from +x toward +y, wrapped to [0, 2*pi).
struct Direction {
  double theta{0.0};
  double phi{0.0};

  Direction() = default;
  Direction(double theta_rad, double phi_rad) : theta(theta_rad), phi(phi_rad) {
    require(std::isfinite(theta) && std::isfinite(phi),
            "Direction: angles must be finite");
    // Tolerate tiny numerical excursions outside [0, pi].
    if (theta < 0.0 && theta > -1e-9) theta = 0.0;
    if (theta > kPi && theta < kPi + 1e-9) theta = kPi;
    require(theta >= 0.0 && theta <= kPi, "Direction: theta outside [0, pi]");
    phi = std::fmod(phi, 2.0 * kPi);
    if (phi < 0.0) phi += 2.0 * kPi;
    if (phi == 2.0 * kPi) phi = 0.0;
  }

  static Direction from_degrees(double theta_deg, double phi_deg) {
    return Direction(deg2rad(theta_deg), deg2rad(phi_deg));
  }

  Eigen::Vector3d unit() const {
    double st = std::sin(theta);
    return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
  }

  static Direction from_unit(const Eigen::Vector3d& u) {
    double n = u.norm();
    require(n > 0.0, "Direction::from_unit: zero vector");
    double ct = std::clamp(u.z() / n, -1.0, 1.0);
    double phi = std::atan2(u.y(), u.x());
    return Direction(std::acos(ct), phi);
  }
};

/// cos of the great-circle angle between two directions.
inline double cos_angle(const Direction& a, const Direction& b) {
  double c = std::sin(a.theta) * std::sin(b.theta) * std::cos(a.phi - b.phi) +
             std::cos(a.theta) * std::cos(b.theta);
  return std::clamp(c, -1.0, 1.0);
}

inline double angle_between(const Direction& a, const Direction& b) {
  return std::acos(cos_angle(a, b));
}

/// Rotates all azimuths by angle_deg, theta unchanged.
inline std::vector<Direction> rotate_azimuth(const std::vector<Direction>& dirs,
                                             double angle_deg) {
  std::vector<Direction> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.emplace_back(d.theta, d.phi + deg2rad(angle_deg));
  return out;
}

inline Direction rotate_azimuth(const Direction& d, double angle_deg) {
  return Direction(d.theta, d.phi + deg2rad(angle_deg));
}

/// A direction grid with quadrature weights (weights sum to 4*pi).
struct SphereGrid {
  std::vector<Direction> dirs;
  VectorXd weights;
};

/// Deterministic Fibonacci-spiral grid, nearly uniform, equal-area weights.
inline SphereGrid nearly_uniform_grid(int count) {
  require(count >= 1, "nearly_uniform_grid: count must be >= 1");
  SphereGrid grid;
  grid.dirs.reserve(static_cast<size_t>(count));
  grid.weights = VectorXd::Constant(count, 4.0 * kPi / count);
  const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    double z = 1.0 - (2.0 * i + 1.0) / count;
    double theta = std::acos(std::clamp(z, -1.0, 1.0));
    double phi = golden_angle * i;
    grid.dirs.emplace_back(theta, phi);
  }
  return grid;
}

/// Horizontal-plane azimuth scan (theta = 90 deg), step in degrees.
inline std::vector<Direction> horizontal_scan(double start_deg, double stop_deg,
                                              double step_deg) {
  require(step_deg > 0.0, "horizontal_scan: step must be positive");
  std::vector<Direction> dirs;
  for (double a = start_deg; a < stop_deg - 1e-9; a += step_deg)
    dirs.push_back(Direction::from_degrees(90.0, a));
  return dirs;
}

}  // namespace bsm
