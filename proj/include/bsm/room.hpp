// Shoebox image-method model: scenarios, image-source enumeration and the
// Sabine absorption derived from the configured T60.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "bsm/common.hpp"
#include "bsm/direction.hpp"

namespace bsm {

struct Scenario {
  std::string id{"scenario"};
  Eigen::Vector3d room_dims{6.0, 4.0, 3.0};       // m
  double t60_s{0.69};
  Eigen::Vector3d array_position{4.0, 3.0, 1.7};  // m
  double source_distance{0.6};                    // m from the array center
  Direction source_direction{kPi / 2.0, 0.0};     // relative to the array
  VectorXd source_signal;                          // mono samples at fs
  double fs{48000.0};
  double duration_s{1.0};
  double head_rotation_deg{0.0};                  // array rotation (Fig.-style)
  double snr_db{20.0};                            // +inf disables noise

  Eigen::Vector3d source_position() const {
    return array_position + source_distance * source_direction.unit();
  }

  void validate() const {
    require(room_dims.minCoeff() > 0.0, "Scenario: degenerate room dimensions");
    require(t60_s > 0.0, "Scenario: t60 must be positive");
    require(duration_s > 0.0, "Scenario: duration must be positive");
    auto inside = [&](const Eigen::Vector3d& p) {
      return p.x() > 0.0 && p.y() > 0.0 && p.z() > 0.0 && p.x() < room_dims.x() &&
             p.y() < room_dims.y() && p.z() < room_dims.z();
    };
    require(inside(array_position), "Scenario: array outside the room");
    require(inside(source_position()), "Scenario: source outside the room");
  }
};

struct ImageSource {
  Direction direction;  // as seen from the array center
  double delay_s{0.0};
  double gain{0.0};
};

struct ImageSourceSet {
  std::vector<ImageSource> entries;  // entry 0 is the direct source
  double speed_of_sound{kSpeedOfSound};
};

/// Uniform-wall absorption from Sabine's formula, clamped to [0, 1].
inline double sabine_absorption(const Eigen::Vector3d& dims, double t60) {
  require(dims.minCoeff() > 0.0, "sabine_absorption: degenerate room");
  require(t60 > 0.0, "sabine_absorption: t60 must be positive");
  double volume = dims.prod();
  double surface =
      2.0 * (dims.x() * dims.y() + dims.x() * dims.z() + dims.y() * dims.z());
  return std::min(1.0, 0.161 * volume / (surface * t60));
}

/// Smallest reflection order covering propagation paths of t60 seconds,
/// clamped to 40.
inline int default_max_order(const Eigen::Vector3d& dims, double t60) {
  double reach = kSpeedOfSound * t60;
  int order = static_cast<int>(std::ceil(reach / dims.minCoeff())) + 1;
  return std::clamp(order, 1, 40);
}

/// Allen-Berkley image enumeration up to a total reflection order.
/// gain = beta^reflections / (4*pi*distance); delay = distance / c.
inline ImageSourceSet image_sources(const Scenario& scn, int max_order) {
  scn.validate();
  require(max_order >= 0, "image_sources: max_order must be >= 0");
  const double alpha = sabine_absorption(scn.room_dims, scn.t60_s);
  const double beta = std::sqrt(std::max(0.0, 1.0 - alpha));
  const Eigen::Vector3d src = scn.source_position();
  const Eigen::Vector3d& arr = scn.array_position;
  const Eigen::Vector3d& L = scn.room_dims;

  struct Raw {
    Eigen::Vector3d pos;
    int refl;
  };
  std::vector<Raw> raw;
  const int nmax = max_order / 2 + 1;
  for (int px = 0; px <= 1; ++px)
    for (int nx = -nmax; nx <= nmax; ++nx) {
      int rx = std::abs(nx - px) + std::abs(nx);
      if (rx > max_order) continue;
      double x = (1 - 2 * px) * src.x() + 2.0 * nx * L.x();
      for (int py = 0; py <= 1; ++py)
        for (int ny = -nmax; ny <= nmax; ++ny) {
          int ry = std::abs(ny - py) + std::abs(ny);
          if (rx + ry > max_order) continue;
          double y = (1 - 2 * py) * src.y() + 2.0 * ny * L.y();
          for (int pz = 0; pz <= 1; ++pz)
            for (int nz = -nmax; nz <= nmax; ++nz) {
              int rz = std::abs(nz - pz) + std::abs(nz);
              if (rx + ry + rz > max_order) continue;
              raw.push_back({{x, y, (1 - 2 * pz) * src.z() + 2.0 * nz * L.z()},
                             rx + ry + rz});
            }
        }
    }
  // Direct source first, then by (delay, position) for a deterministic order.
  std::sort(raw.begin(), raw.end(), [&](const Raw& a, const Raw& b) {
    double da = (a.pos - arr).norm(), db = (b.pos - arr).norm();
    if (da != db) return da < db;
    if (a.pos.x() != b.pos.x()) return a.pos.x() < b.pos.x();
    if (a.pos.y() != b.pos.y()) return a.pos.y() < b.pos.y();
    return a.pos.z() < b.pos.z();
  });

  ImageSourceSet set;
  set.entries.reserve(raw.size());
  for (const auto& r : raw) {
    Eigen::Vector3d rel = r.pos - arr;
    double dist = rel.norm();
    require(dist > 1e-9, "image_sources: image coincides with the array center");
    ImageSource img;
    img.direction = Direction::from_unit(rel);
    img.delay_s = dist / set.speed_of_sound;
    img.gain = std::pow(beta, r.refl) / (4.0 * kPi * dist);
    set.entries.push_back(img);
  }
  return set;
}

}  // namespace bsm
