// Spherical-harmonics machinery: complex SH matrices, Legendre recursions,
// spherical Bessel/Hankel batches and the rigid-sphere radial term b_n.
#pragma once

#include <limits>
#include <vector>

#include "bsm/common.hpp"
#include "bsm/direction.hpp"

namespace bsm {

inline int sh_count(int order) { return (order + 1) * (order + 1); }

/// Column index of (n, m) in the (0,0),(1,-1),(1,0),(1,1),... ordering.
inline int sh_index(int n, int m) { return n * n + n + m; }

/// Legendre polynomials P_0..P_nmax at x via three-term recurrence.
inline void legendre_all(int nmax, double x, double* out) {
  out[0] = 1.0;
  if (nmax == 0) return;
  out[1] = x;
  for (int n = 1; n < nmax; ++n)
    out[n + 1] = ((2.0 * n + 1.0) * x * out[n] - n * out[n - 1]) / (n + 1.0);
}

/// Orthonormalized associated Legendre values Pbar_n^m (m >= 0) including the
/// 1/sqrt(4*pi) factor, so that Y_n^m = (-1)^m * Pbar_n^m * e^{i m phi}.
/// Fills out[sh_index(n, m)] for m >= 0 only; stable to order a few hundred.
inline void norm_assoc_legendre(int order, double cos_theta, double sin_theta,
                                std::vector<double>& out) {
  out.assign(static_cast<size_t>(sh_count(order)), 0.0);
  double pmm = std::sqrt(1.0 / (4.0 * kPi));  // Pbar_0^0
  for (int m = 0; m <= order; ++m) {
    if (m > 0) pmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * sin_theta;
    out[static_cast<size_t>(sh_index(m, m))] = pmm;
    if (m == order) break;
    double p_prev = pmm;
    double p_curr = std::sqrt(2.0 * m + 3.0) * cos_theta * pmm;
    out[static_cast<size_t>(sh_index(m + 1, m))] = p_curr;
    for (int n = m + 2; n <= order; ++n) {
      double a = std::sqrt((4.0 * n * n - 1.0) / (static_cast<double>(n) * n - m * m));
      double b = std::sqrt((static_cast<double>(n - 1) * (n - 1) - m * m) /
                           (4.0 * static_cast<double>(n - 1) * (n - 1) - 1.0));
      double p_next = a * (cos_theta * p_curr - b * p_prev);
      out[static_cast<size_t>(sh_index(n, m))] = p_next;
      p_prev = p_curr;
      p_curr = p_next;
    }
  }
}

/// Complex spherical harmonics with Condon-Shortley phase.
/// Returns [dirs.size() x (order+1)^2], columns (0,0),(1,-1),(1,0),(1,1),...
inline MatrixXcd sph_harmonics(int order, const std::vector<Direction>& dirs) {
  require(order >= 0, "sph_harmonics: order must be >= 0");
  MatrixXcd Y(static_cast<Eigen::Index>(dirs.size()), sh_count(order));
  std::vector<double> pbar;
  for (size_t d = 0; d < dirs.size(); ++d) {
    const Direction& dir = dirs[d];
    require(std::isfinite(dir.theta) && std::isfinite(dir.phi),
            "sph_harmonics: non-finite direction");
    norm_assoc_legendre(order, std::cos(dir.theta), std::sin(dir.theta), pbar);
    for (int n = 0; n <= order; ++n) {
      Y(static_cast<Eigen::Index>(d), sh_index(n, 0)) =
          pbar[static_cast<size_t>(sh_index(n, 0))];
      for (int m = 1; m <= n; ++m) {
        double p = pbar[static_cast<size_t>(sh_index(n, m))];
        cd e = std::polar(1.0, m * dir.phi);
        double cs = (m % 2 == 0) ? 1.0 : -1.0;
        Y(static_cast<Eigen::Index>(d), sh_index(n, m)) = cs * p * e;
        Y(static_cast<Eigen::Index>(d), sh_index(n, -m)) = p * std::conj(e);
      }
    }
  }
  return Y;
}

/// Spherical Bessel j_0..j_nmax at x > 0. Downward Miller recurrence
/// normalized with sum (2n+1) j_n^2 = 1.
inline void sph_bessel_batch(int nmax, double x, std::vector<double>& j) {
  j.assign(static_cast<size_t>(nmax + 1), 0.0);
  if (x == 0.0) {
    j[0] = 1.0;
    return;
  }
  int start = nmax + 16 + static_cast<int>(std::ceil(1.2 * x));
  double jp = 0.0;  // holds j_{n+2} entering each step
  double jc = 1.0;  // holds j_{n+1} (arbitrary seed; fixed by normalization)
  double norm = 0.0;
  for (int n = start; n >= 0; --n) {
    double jm = (2.0 * n + 3.0) / x * jc - jp;  // j_n
    jp = jc;
    jc = jm;
    if (n <= nmax) j[static_cast<size_t>(n)] = jc;
    if (std::abs(jc) > 1e140) {  // keep jc^2 finite
      double s = 1e-140;
      jp *= s;
      jc *= s;
      norm *= s * s;
      for (auto& v : j) v *= s;
    }
    norm += (2.0 * n + 1.0) * jc * jc;
  }
  double scale = 1.0 / std::sqrt(norm);
  // Fix the overall sign against whichever closed form is better conditioned.
  double j0_true = std::sin(x) / x;
  double ref_true = j0_true, ref_comp = jc;
  if (nmax >= 1) {
    double j1_true = std::sin(x) / (x * x) - std::cos(x) / x;
    if (std::abs(j1_true) > std::abs(j0_true)) {
      ref_true = j1_true;
      ref_comp = j[1];
    }
  }
  if (ref_comp * ref_true < 0.0) scale = -scale;
  for (auto& v : j) v *= scale;
}

/// Spherical Neumann y_0..y_nmax at x > 0, upward recurrence. Values that
/// overflow are left as +-inf; callers treat those orders as fully decayed.
inline void sph_neumann_batch(int nmax, double x, std::vector<double>& y) {
  y.assign(static_cast<size_t>(nmax + 1), 0.0);
  double sx = std::sin(x), cx = std::cos(x);
  y[0] = -cx / x;
  if (nmax == 0) return;
  y[1] = -cx / (x * x) - sx / x;
  for (int n = 1; n < nmax; ++n)
    y[static_cast<size_t>(n + 1)] =
        (2.0 * n + 1.0) / x * y[static_cast<size_t>(n)] - y[static_cast<size_t>(n - 1)];
}

/// Derivative from the batch: f'_n = f_{n-1} - (n+1)/x * f_n, f'_0 = -f_1.
inline double sph_deriv(const std::vector<double>& f, int n, double x) {
  if (n == 0) return -f[1];
  return f[static_cast<size_t>(n - 1)] - (n + 1.0) / x * f[static_cast<size_t>(n)];
}

/// SH truncation order for wavenumber k and radius r: ceil(e*k*r/2)+8, min 20.
inline int truncation_order(double k, double r) {
  int n = static_cast<int>(std::ceil(std::numbers::e * k * r / 2.0)) + 8;
  return std::max(n, 20);
}

namespace detail {

/// Radial terms b_0..b_nmax for a point on the sphere surface (r == a):
/// b_n = -4*pi*i^{n+1} / ((ka)^2 h'_n(ka)), via the Wronskian identity.
inline void radial_surface_batch(int nmax, double ka, std::vector<cd>& b) {
  b.assign(static_cast<size_t>(nmax + 1), cd(0.0, 0.0));
  if (ka == 0.0) {
    b[0] = 4.0 * kPi;
    return;
  }
  std::vector<double> j, y;
  sph_bessel_batch(nmax + 1, ka, j);
  sph_neumann_batch(nmax + 1, ka, y);
  double ka2 = ka * ka;
  for (int n = 0; n <= nmax; ++n) {
    double jd = sph_deriv(j, n, ka);
    double yd = sph_deriv(y, n, ka);
    if (!std::isfinite(yd)) continue;  // |h'| huge -> b_n underflows to 0
    cd hd(jd, -yd);
    double mag2 = std::norm(hd);
    if (!std::isfinite(mag2) || mag2 == 0.0) continue;
    // -4*pi*i^{n+1} / (ka^2 * hd)
    b[static_cast<size_t>(n)] = -4.0 * kPi * ipow(n + 1) * std::conj(hd) / (ka2 * mag2);
  }
}

/// General r >= a case, directly from the scattering formula.
inline void radial_general_batch(int nmax, double k, double r, double a,
                                 std::vector<cd>& b) {
  b.assign(static_cast<size_t>(nmax + 1), cd(0.0, 0.0));
  if (k == 0.0) {
    b[0] = 4.0 * kPi;
    return;
  }
  double kr = k * r, ka = k * a;
  std::vector<double> jr, yr;
  sph_bessel_batch(nmax + 1, kr, jr);
  sph_neumann_batch(nmax + 1, kr, yr);
  std::vector<double> ja, ya;
  if (ka > 0.0) {
    sph_bessel_batch(nmax + 1, ka, ja);
    sph_neumann_batch(nmax + 1, ka, ya);
  }
  for (int n = 0; n <= nmax; ++n) {
    cd open = jr[static_cast<size_t>(n)];
    cd scatter(0.0, 0.0);
    if (ka > 0.0) {
      double jda = sph_deriv(ja, n, ka);
      double yda = sph_deriv(ya, n, ka);
      double yrn = yr[static_cast<size_t>(n)];
      // When y overflows the scattering part is ~ (a/r)^{2n+1} smaller than
      // the open term; drop it.
      if (std::isfinite(yda) && std::isfinite(yrn)) {
        cd hda(jda, -yda);
        cd hrn(jr[static_cast<size_t>(n)], -yrn);
        double mag2 = std::norm(hda);
        if (std::isfinite(mag2) && mag2 > 0.0 && std::isfinite(std::norm(hrn)))
          scatter = jda * hrn * std::conj(hda) / mag2;
      }
    }
    b[static_cast<size_t>(n)] = 4.0 * kPi * ipow(n) * (open - scatter);
  }
}

}  // namespace detail

/// Radial terms b_0..b_nmax(k, r, a) for a rigid sphere of radius a observed
/// at radius r >= a (a = 0 gives the open-sphere limit 4*pi*i^n*j_n(kr)).
inline std::vector<cd> rigid_sphere_radial_batch(int nmax, double k, double r,
                                                 double a) {
  require(nmax >= 0, "rigid_sphere_radial: order must be >= 0");
  require(k >= 0.0, "rigid_sphere_radial: k must be >= 0");
  require(a >= 0.0, "rigid_sphere_radial: sphere radius must be >= 0");
  require(r >= a, "rigid_sphere_radial: r < a (observation inside the sphere)");
  require(r > 0.0 || k == 0.0, "rigid_sphere_radial: r must be positive");
  std::vector<cd> b;
  if (a > 0.0 && std::abs(r - a) <= 1e-12 * a)
    detail::radial_surface_batch(nmax, k * a, b);
  else
    detail::radial_general_batch(nmax, k, r, a, b);
  return b;
}

inline cd rigid_sphere_radial(int n, double k, double r, double a) {
  auto b = rigid_sphere_radial_batch(n, k, r, a);
  return b[static_cast<size_t>(n)];
}

}  // namespace bsm
