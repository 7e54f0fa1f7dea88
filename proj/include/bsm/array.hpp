// Microphone array geometry and rigid-sphere steering vectors.
#pragma once

#include <vector>

#include "bsm/common.hpp"
#include "bsm/direction.hpp"
#include "bsm/sph.hpp"

namespace bsm {

/// Microphones on a rigid sphere. rotation_deg rotates every microphone
/// azimuth relative to the (fixed) head frame.
struct ArrayGeometry {
  double sphere_radius{0.10};
  std::vector<Direction> mic_directions;
  double rotation_deg{0.0};

  /// Semi-circular horizontal array, phi_m = 90deg - 180deg*(m-1)/(M-1).
  static ArrayGeometry semicircular(int mic_count = 6, double radius = 0.10,
                                    double rotation_deg = 0.0) {
    require(mic_count >= 1, "ArrayGeometry: need at least one microphone");
    require(radius > 0.0, "ArrayGeometry: radius must be positive");
    ArrayGeometry g;
    g.sphere_radius = radius;
    g.rotation_deg = rotation_deg;
    for (int m = 0; m < mic_count; ++m) {
      double phi = kPi / 2.0;
      if (mic_count > 1) phi -= kPi * m / (mic_count - 1);
      g.mic_directions.emplace_back(kPi / 2.0, phi);
    }
    return g;
  }

  int mic_count() const { return static_cast<int>(mic_directions.size()); }

  /// Microphone directions with the array rotation applied.
  std::vector<Direction> rotated_mics() const {
    return rotate_azimuth(mic_directions, rotation_deg);
  }
};

/// Per-frequency M x L steering matrices for a set of plane-wave directions.
struct SteeringMatrix {
  VectorXd freqs;                    // Hz
  std::vector<MatrixXcd> values;     // values[k] is M x L at freqs[k]
  std::vector<Direction> directions; // the L plane-wave DOAs

  int mic_count() const { return values.empty() ? 0 : static_cast<int>(values[0].rows()); }
  int direction_count() const { return static_cast<int>(directions.size()); }
};

namespace detail {

/// P_n(cos angle) table for every (direction, mic) pair up to nmax.
/// Rows: pair index d * M + m; cols: order 0..nmax.
inline MatrixXd pair_legendre_table(const std::vector<Direction>& dirs,
                                    const std::vector<Direction>& mics, int nmax) {
  const int L = static_cast<int>(dirs.size());
  const int M = static_cast<int>(mics.size());
  MatrixXd table(static_cast<Eigen::Index>(L) * M, nmax + 1);
  std::vector<double> pn(static_cast<size_t>(nmax + 1));
  for (int d = 0; d < L; ++d)
    for (int m = 0; m < M; ++m) {
      legendre_all(nmax, cos_angle(dirs[static_cast<size_t>(d)],
                                   mics[static_cast<size_t>(m)]), pn.data());
      for (int n = 0; n <= nmax; ++n)
        table(static_cast<Eigen::Index>(d) * M + m, n) = pn[static_cast<size_t>(n)];
    }
  return table;
}

/// b_n(k;r,a) * (2n+1)/(4*pi) for n = 0..order, zero above `order`.
inline VectorXcd weighted_radial(int order, int nmax, double k, double r, double a) {
  auto b = rigid_sphere_radial_batch(order, k, r, a);
  VectorXcd w = VectorXcd::Zero(nmax + 1);
  for (int n = 0; n <= order; ++n)
    w(n) = b[static_cast<size_t>(n)] * ((2.0 * n + 1.0) / (4.0 * kPi));
  return w;
}

}  // namespace detail

/// Steering vector of the array for a plane wave from `dir` at frequency f.
/// Addition-theorem form of the SH series; order -1 selects the kr rule.
inline VectorXcd steering_vector(const ArrayGeometry& geom, const Direction& dir,
                                 double f_hz, int order = -1) {
  require(f_hz >= 0.0, "steering_vector: negative frequency");
  const auto mics = geom.rotated_mics();
  const int M = static_cast<int>(mics.size());
  if (f_hz == 0.0) return VectorXcd::Ones(M);  // DC plane wave is unity
  double k = wavenumber(f_hz);
  int ord = order >= 0 ? order : truncation_order(k, geom.sphere_radius);
  auto b = rigid_sphere_radial_batch(ord, k, geom.sphere_radius, geom.sphere_radius);
  std::vector<double> pn(static_cast<size_t>(ord + 1));
  VectorXcd v(M);
  for (int m = 0; m < M; ++m) {
    legendre_all(ord, cos_angle(dir, mics[static_cast<size_t>(m)]), pn.data());
    cd acc(0.0, 0.0);
    for (int n = 0; n <= ord; ++n)
      acc += b[static_cast<size_t>(n)] * ((2.0 * n + 1.0) / (4.0 * kPi)) *
             pn[static_cast<size_t>(n)];
    v(m) = acc;
  }
  return v;
}

/// Steering matrices at all requested frequencies (threaded over bins).
inline SteeringMatrix build_steering(const ArrayGeometry& geom,
                                     const std::vector<Direction>& dirs,
                                     const VectorXd& freqs_hz) {
  SteeringMatrix S;
  S.freqs = freqs_hz;
  S.directions = dirs;
  S.values.resize(static_cast<size_t>(freqs_hz.size()));
  const auto mics = geom.rotated_mics();
  const int M = static_cast<int>(mics.size());
  const int L = static_cast<int>(dirs.size());
  double fmax = freqs_hz.size() ? freqs_hz.maxCoeff() : 0.0;
  const int nmax = truncation_order(wavenumber(fmax), geom.sphere_radius);
  const MatrixXd table = detail::pair_legendre_table(dirs, mics, nmax);
  parallel_for(freqs_hz.size(), [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
    for (std::ptrdiff_t kk = b0; kk < b1; ++kk) {
      double f = freqs_hz(static_cast<Eigen::Index>(kk));
      require(f >= 0.0, "build_steering: negative frequency");
      MatrixXcd V(M, L);
      if (f == 0.0) {
        V.setOnes();
      } else {
        double k = wavenumber(f);
        int ord = truncation_order(k, geom.sphere_radius);
        VectorXcd w = detail::weighted_radial(ord, nmax, k, geom.sphere_radius,
                                              geom.sphere_radius);
        // V(m, d) = sum_n w_n P_n(cos angle(dir_d, mic_m))
        VectorXcd flat = table * w;  // (L*M) x 1
        for (int d = 0; d < L; ++d)
          for (int m = 0; m < M; ++m) V(m, d) = flat(static_cast<Eigen::Index>(d) * M + m);
      }
      S.values[static_cast<size_t>(kk)] = std::move(V);
    }
  });
  return S;
}

}  // namespace bsm
