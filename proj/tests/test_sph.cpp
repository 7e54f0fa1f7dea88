#include <catch2/catch_amalgamated.hpp>

#include "bsm/array.hpp"
#include "bsm/direction.hpp"
#include "bsm/sph.hpp"

using namespace bsm;

TEST_CASE("sph_harmonics order 0 is the constant 1/sqrt(4pi)") {
  std::vector<Direction> dirs = {Direction::from_degrees(34.0, 211.0),
                                 Direction::from_degrees(90.0, 0.0),
                                 Direction::from_degrees(180.0, 45.0)};
  MatrixXcd Y = sph_harmonics(0, dirs);
  for (int i = 0; i < 3; ++i)
    REQUIRE(std::abs(Y(i, 0) - cd(1.0 / std::sqrt(4.0 * kPi), 0.0)) < 1e-14);
}

TEST_CASE("sph_harmonics matches closed forms at low order") {
  Direction d(deg2rad(67.0), deg2rad(123.0));
  MatrixXcd Y = sph_harmonics(2, {d});
  double ct = std::cos(d.theta), st = std::sin(d.theta);
  cd e1 = std::polar(1.0, d.phi);
  CHECK(std::abs(Y(0, sh_index(1, 0)) - cd(std::sqrt(3.0 / (4.0 * kPi)) * ct)) < 1e-13);
  CHECK(std::abs(Y(0, sh_index(1, 1)) - (-std::sqrt(3.0 / (8.0 * kPi)) * st * e1)) < 1e-13);
  CHECK(std::abs(Y(0, sh_index(1, -1)) - (std::sqrt(3.0 / (8.0 * kPi)) * st * std::conj(e1))) <
        1e-13);
  CHECK(std::abs(Y(0, sh_index(2, 0)) -
                 cd(std::sqrt(5.0 / (16.0 * kPi)) * (3.0 * ct * ct - 1.0))) < 1e-13);
}

TEST_CASE("sph_harmonics addition theorem per degree") {
  std::vector<Direction> dirs = {Direction::from_degrees(12.0, 300.0),
                                 Direction::from_degrees(95.0, 10.0)};
  const int order = 9;
  MatrixXcd Y = sph_harmonics(order, dirs);
  for (int i = 0; i < 2; ++i)
    for (int n = 0; n <= order; ++n) {
      double sum = 0.0;
      for (int m = -n; m <= n; ++m) sum += std::norm(Y(i, sh_index(n, m)));
      REQUIRE(sum == Catch::Approx((2.0 * n + 1.0) / (4.0 * kPi)).epsilon(1e-11));
    }
}

TEST_CASE("sph_harmonics conjugation symmetry") {
  std::vector<Direction> dirs;
  for (int i = 0; i < 12; ++i)
    dirs.push_back(Direction(deg2rad(15.0 * i + 3.0), deg2rad(29.0 * i)));
  const int order = 14;
  MatrixXcd Y = sph_harmonics(order, dirs);
  for (int i = 0; i < static_cast<int>(dirs.size()); ++i)
    for (int n = 0; n <= order; ++n)
      for (int m = 1; m <= n; ++m) {
        cd lhs = Y(i, sh_index(n, -m));
        cd rhs = (m % 2 == 0 ? 1.0 : -1.0) * std::conj(Y(i, sh_index(n, m)));
        REQUIRE(std::abs(lhs - rhs) < 1e-12);
      }
}

TEST_CASE("sph_harmonics rejects non-finite angles") {
  std::vector<Direction> dirs = {Direction::from_degrees(90.0, 0.0)};
  dirs[0].theta = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS(sph_harmonics(2, dirs));
}

TEST_CASE("order-4 Gram matrix on the 400-point grid is near identity") {
  // Numerical quadrature oracle: equal weights 4pi/400 on the Fibonacci grid.
  SphereGrid grid = nearly_uniform_grid(400);
  MatrixXcd Y = sph_harmonics(4, grid.dirs);
  MatrixXcd gram = (4.0 * kPi / 400.0) * (Y.adjoint() * Y);
  double max_off = 0.0, max_diag_err = 0.0;
  for (int a = 0; a < gram.rows(); ++a)
    for (int b = 0; b < gram.cols(); ++b) {
      if (a == b)
        max_diag_err = std::max(max_diag_err, std::abs(gram(a, b) - cd(1.0, 0.0)));
      else
        max_off = std::max(max_off, std::abs(gram(a, b)));
    }
  CHECK(max_off < 1e-2);
  CHECK(max_diag_err < 1e-2);
}

TEST_CASE("spherical bessel batches agree with std::sph_bessel") {
  for (double x : {0.05, 0.7, 1.0, 3.14159265358979, 12.5, 44.0}) {
    const int nmax = 40;
    std::vector<double> j, y;
    sph_bessel_batch(nmax, x, j);
    sph_neumann_batch(nmax, x, y);
    for (int n = 0; n <= nmax; ++n) {
      double jref = std::sph_bessel(static_cast<unsigned>(n), x);
      double yref = std::sph_neumann(static_cast<unsigned>(n), x);
      REQUIRE(j[static_cast<size_t>(n)] ==
              Catch::Approx(jref).margin(1e-14).epsilon(1e-10));
      if (std::isfinite(y[static_cast<size_t>(n)]))
        REQUIRE(y[static_cast<size_t>(n)] ==
                Catch::Approx(yref).margin(1e-12).epsilon(1e-9));
    }
  }
}

TEST_CASE("rigid_sphere_radial open-sphere limit") {
  double k = wavenumber(1000.0), r = 0.1;
  for (int n = 0; n <= 6; ++n) {
    cd b = rigid_sphere_radial(n, k, r, 0.0);
    cd expect = 4.0 * kPi * ipow(n) * std::sph_bessel(static_cast<unsigned>(n), k * r);
    REQUIRE(std::abs(b - expect) < 1e-10 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("rigid_sphere_radial DC limit") {
  CHECK(std::abs(rigid_sphere_radial(0, 0.0, 0.1, 0.1) - cd(4.0 * kPi, 0.0)) < 1e-12);
  CHECK(std::abs(rigid_sphere_radial(1, 0.0, 0.1, 0.1)) < 1e-12);
  CHECK(std::abs(rigid_sphere_radial(3, 0.0, 0.2, 0.1)) < 1e-12);
}

TEST_CASE("rigid_sphere_radial rejects r < a") {
  REQUIRE_THROWS(rigid_sphere_radial(0, 1.0, 0.05, 0.1));
}

// Truncated-series oracle: the total on-surface pressure for a plane wave,
// summed to order 60, must match between the scattering-form b_n and the
// Wronskian closed form b_n = -4*pi*i^{n+1} / (x^2 h'_n(x)).
TEST_CASE("on-surface radial terms agree with the Wronskian closed form") {
  const double x = 1.0;  // kr = ka = 1
  const int order = 60;
  double k = x / 0.1, a = 0.1;
  // Scattering form evaluated just off the surface-detection branch.
  auto b_direct = rigid_sphere_radial_batch(order, k, a * (1.0 + 1e-9), a);
  auto b_surface = rigid_sphere_radial_batch(order, k, a, a);
  std::vector<double> pn(order + 1);
  for (double cosg : {1.0, 0.31, -0.55}) {
    legendre_all(order, cosg, pn.data());
    cd p1(0, 0), p2(0, 0);
    for (int n = 0; n <= order; ++n) {
      double w = (2.0 * n + 1.0) / (4.0 * kPi) * pn[static_cast<size_t>(n)];
      p1 += b_direct[static_cast<size_t>(n)] * w;
      p2 += b_surface[static_cast<size_t>(n)] * w;
    }
    REQUIRE(std::abs(p1 - p2) < 1e-8 * std::abs(p2));
  }
  // Spot value for n = 1 at kr = ka = 1 against the closed form.
  std::vector<double> j, y;
  sph_bessel_batch(2, x, j);
  sph_neumann_batch(2, x, y);
  cd hd(sph_deriv(j, 1, x), -sph_deriv(y, 1, x));
  cd expect = -4.0 * kPi * ipow(2) / (x * x * hd);
  REQUIRE(std::abs(rigid_sphere_radial(1, k, a, a) - expect) < 1e-10 * std::abs(expect));
}

TEST_CASE("radial terms decay past n = kr") {
  double k = wavenumber(4000.0), a = 0.1;
  double kr = k * a;
  auto b = rigid_sphere_radial_batch(static_cast<int>(kr) + 12, k, a, a);
  for (int n = static_cast<int>(kr) + 6; n + 1 < static_cast<int>(b.size()); ++n) {
    double num = std::abs(b[static_cast<size_t>(n + 1)]);
    double den = std::abs(b[static_cast<size_t>(n)]);
    if (den == 0.0) continue;
    REQUIRE(num / den < 1.0);
  }
}

TEST_CASE("steering vector is all-ones at DC") {
  auto geom = ArrayGeometry::semicircular();
  VectorXcd v = steering_vector(geom, Direction::from_degrees(90.0, 40.0), 0.0);
  for (int m = 0; m < v.size(); ++m) REQUIRE(std::abs(v(m) - cd(1.0, 0.0)) < 1e-14);
}

TEST_CASE("steering vector reflection symmetry about the y axis") {
  // Array rotated so its mics are mirror-symmetric about the y axis; a wave
  // from phi = 90deg then drives each symmetric microphone pair identically.
  auto geom = ArrayGeometry::semicircular(6, 0.10, 90.0);
  VectorXcd v = steering_vector(geom, Direction::from_degrees(90.0, 90.0), 2000.0);
  REQUIRE(std::abs(v(0) - v(5)) < 1e-10 * std::abs(v(0)));
  REQUIRE(std::abs(v(1) - v(4)) < 1e-10 * std::abs(v(1)));
  REQUIRE(std::abs(v(2) - v(3)) < 1e-10 * std::abs(v(2)));
}

TEST_CASE("steering vector truncation oracle at order 60") {
  auto geom = ArrayGeometry::semicircular(6);
  Direction dir = Direction::from_degrees(90.0, 40.0);
  VectorXcd v = steering_vector(geom, dir, 1000.0);
  VectorXcd vref = steering_vector(geom, dir, 1000.0, 60);
  for (int m = 0; m < 6; ++m)
    REQUIRE(std::abs(v(m) - vref(m)) < 1e-6 * std::abs(vref(m)));
}

TEST_CASE("steering vector explicit SH sum agrees with addition-theorem form") {
  auto geom = ArrayGeometry::semicircular(4);
  Direction dir = Direction::from_degrees(75.0, 132.0);
  const double f = 1500.0;
  const int order = 24;
  VectorXcd v = steering_vector(geom, dir, f, order);
  auto b = rigid_sphere_radial_batch(order, wavenumber(f), geom.sphere_radius,
                                     geom.sphere_radius);
  MatrixXcd Ysrc = sph_harmonics(order, {dir});
  MatrixXcd Ymic = sph_harmonics(order, geom.rotated_mics());
  for (int m = 0; m < 4; ++m) {
    cd acc(0, 0);
    for (int n = 0; n <= order; ++n)
      for (int mm = -n; mm <= n; ++mm)
        acc += b[static_cast<size_t>(n)] * std::conj(Ysrc(0, sh_index(n, mm))) *
               Ymic(m, sh_index(n, mm));
    REQUIRE(std::abs(acc - v(m)) < 1e-9 * std::abs(v(m)));
  }
}

TEST_CASE("steering vector is continuous in frequency") {
  auto geom = ArrayGeometry::semicircular();
  Direction dir = Direction::from_degrees(90.0, 10.0);
  VectorXcd v1 = steering_vector(geom, dir, 1000.0);
  VectorXcd v2 = steering_vector(geom, dir, 1001.0);
  REQUIRE((v1 - v2).norm() < 1e-2 * v1.norm());
}

TEST_CASE("steering vector rejects negative frequency") {
  auto geom = ArrayGeometry::semicircular();
  REQUIRE_THROWS(steering_vector(geom, Direction::from_degrees(90.0, 0.0), -1.0));
}

TEST_CASE("nearly_uniform_grid basics") {
  SphereGrid g1 = nearly_uniform_grid(1);
  REQUIRE(g1.dirs.size() == 1);
  REQUIRE(g1.weights(0) == Catch::Approx(4.0 * kPi));

  for (int L : {7, 100, 400}) {
    SphereGrid g = nearly_uniform_grid(L);
    REQUIRE(g.weights.sum() == Catch::Approx(4.0 * kPi).epsilon(1e-12));
  }

  SphereGrid g400 = nearly_uniform_grid(400);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& d : g400.dirs) mean += d.unit();
  mean /= 400.0;
  REQUIRE(mean.norm() < 0.02);
}

TEST_CASE("rotate_azimuth identities") {
  std::vector<Direction> dirs = {Direction::from_degrees(90.0, 0.0),
                                 Direction::from_degrees(45.0, 310.0)};
  auto same = rotate_azimuth(rotate_azimuth(dirs, 137.0), -137.0);
  for (size_t i = 0; i < dirs.size(); ++i) {
    REQUIRE(std::abs(same[i].theta - dirs[i].theta) < 1e-12);
    double dphi = std::remainder(same[i].phi - dirs[i].phi, 2.0 * kPi);
    REQUIRE(std::abs(dphi) < 1e-12);
  }
  auto r0 = rotate_azimuth(dirs, 0.0);
  auto r360 = rotate_azimuth(dirs, 360.0);
  for (size_t i = 0; i < dirs.size(); ++i) {
    REQUIRE(std::abs(r0[i].phi - dirs[i].phi) < 1e-12);
    REQUIRE(std::abs(std::remainder(r360[i].phi - dirs[i].phi, 2.0 * kPi)) < 1e-12);
  }
  Direction d = rotate_azimuth(Direction::from_degrees(90.0, 0.0), 90.0);
  REQUIRE(rad2deg(d.phi) == Catch::Approx(90.0));
  REQUIRE(rad2deg(d.theta) == Catch::Approx(90.0));
}
