#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "bsm/filters.hpp"

using namespace bsm;

namespace {

std::mt19937_64 g_rng(12345);

cd crand() {
  std::normal_distribution<double> gauss(0.0, 1.0);
  return cd(gauss(g_rng), gauss(g_rng));
}

MatrixXcd random_matrix(int rows, int cols) {
  MatrixXcd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = crand();
  return m;
}

VectorXcd random_vector(int n) {
  VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = crand();
  return v;
}

MatrixXcd random_pd(int n) {
  MatrixXcd a = random_matrix(n, n);
  return a * a.adjoint() + 0.1 * MatrixXcd::Identity(n, n);
}

/// Frames where x[t,k] = Vd[k] * s[t,k] exactly (per-bin narrowband model).
TimeFreqSignal model_frames(const std::vector<MatrixXcd>& Vd,
                            const std::vector<MatrixXcd>& S) {
  const int B = static_cast<int>(Vd.size());
  const int M = static_cast<int>(Vd[0].rows());
  const int T = static_cast<int>(S[0].cols());
  TimeFreqSignal tf;
  tf.win_len = 2 * (B - 1);
  tf.hop = tf.win_len / 4;
  tf.signal_len = tf.win_len + (T - 1) * tf.hop;
  tf.chan.assign(static_cast<size_t>(M), MatrixXcd::Zero(B, T));
  for (int k = 0; k < B; ++k) {
    MatrixXcd X = Vd[static_cast<size_t>(k)] * S[static_cast<size_t>(k)];  // M x T
    for (int m = 0; m < M; ++m) tf.chan[static_cast<size_t>(m)].row(k) = X.row(m);
  }
  return tf;
}

}  // namespace

TEST_CASE("bsm_ls scalar normal equation") {
  MatrixXcd V = MatrixXcd::Ones(1, 1);
  VectorXcd h = VectorXcd::Ones(1);
  VectorXcd c = bsm_ls(V, h, 1e12);
  REQUIRE(std::abs(c(0) - cd(1.0, 0.0)) < 1e-9);
}

TEST_CASE("bsm_ls perfect reconstruction for square invertible systems") {
  MatrixXcd V = random_matrix(4, 4);
  VectorXcd h = random_vector(4);
  VectorXcd c = bsm_ls(V, h, 1e12);
  VectorXcd recon = V.adjoint() * c;
  REQUIRE((recon - h.conjugate()).norm() < 1e-6 * h.norm());
}

TEST_CASE("bsm_ls satisfies its normal equations") {
  MatrixXcd V = random_matrix(6, 50);
  VectorXcd h = random_vector(50);
  double snr = 100.0;
  VectorXcd c = bsm_ls(V, h, snr);
  MatrixXcd G = V * V.adjoint() + MatrixXcd::Identity(6, 6) / snr;
  VectorXcd rhs = V * h.conjugate();
  REQUIRE((G * c - rhs).norm() < 1e-10 * rhs.norm());
  REQUIRE_THROWS(bsm_ls(V, h, 0.0));
}

TEST_CASE("mag_ls keeps a feasible magnitude target at zero objective") {
  MatrixXcd V = random_matrix(4, 4);
  VectorXcd c0 = random_vector(4);
  VectorXcd h = (V.adjoint() * c0).conjugate();
  MaglsResult mag = mag_ls(V, h, 1e12);
  VectorXcd c_ls = bsm_ls(V, h, 1e12);
  double ls_obj = ((V.adjoint() * c_ls).cwiseAbs() - h.cwiseAbs()).squaredNorm();
  REQUIRE(mag.objective <= ls_obj + 1e-10);
  REQUIRE(mag.objective < 1e-10);
}

TEST_CASE("mag_ls scalar magnitude-only fit") {
  MatrixXcd V = MatrixXcd::Ones(1, 1);
  VectorXcd h(1);
  h << std::polar(1.0, kPi / 3.0);
  MaglsResult res = mag_ls(V, h, 1e12);
  REQUIRE(std::abs(std::abs(res.c(0)) - 1.0) < 1e-9);
}

TEST_CASE("mag_ls objective is non-increasing on random systems") {
  for (int trial = 0; trial < 5; ++trial) {
    MatrixXcd V = random_matrix(6, 400);
    VectorXcd h = random_vector(400);
    // magls_core throws if the objective ever increases beyond slack.
    MaglsResult res = mag_ls(V, h, 100.0);
    REQUIRE(res.objective <= res.initial_objective + 1e-12);
  }
}

TEST_CASE("lcmv with identity weighting reduces to the pseudo-inverse") {
  MatrixXcd Vd = random_matrix(6, 2);
  MatrixXcd W = lcmv_weights(Vd, MatrixXcd::Identity(6, 6));
  MatrixXcd pinv = (Vd.adjoint() * Vd).ldlt().solve(Vd.adjoint());
  REQUIRE((W - pinv).cwiseAbs().maxCoeff() < 1e-8 * pinv.cwiseAbs().maxCoeff());
}

TEST_CASE("lcmv D=1 equals the MVDR row") {
  MatrixXcd Rx = random_pd(5);
  MatrixXcd v = random_matrix(5, 1);
  MatrixXcd W = lcmv_weights(v, Rx);
  MatrixXcd R = Rx;
  R.diagonal().array() += 1e-6 * Rx.trace().real() / 5.0;
  VectorXcd Rinv_v = R.llt().solve(v.col(0));
  cd denom = (v.col(0).adjoint() * Rinv_v)(0);
  Eigen::RowVectorXcd expect = (Rinv_v / denom).adjoint();
  REQUIRE((W.row(0) - expect).norm() < 1e-9 * expect.norm());
}

TEST_CASE("lcmv constraint holds on random PD instances") {
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXcd Vd = random_matrix(6, 2);
    MatrixXcd W = lcmv_weights(Vd, random_pd(6));
    REQUIRE((W * Vd - MatrixXcd::Identity(2, 2)).norm() < 1e-10);
  }
}

TEST_CASE("lcmv names the frequency on rank deficiency") {
  MatrixXcd Vd(6, 2);
  Vd.col(0) = random_vector(6);
  Vd.col(1) = Vd.col(0);  // exactly repeated column
  try {
    lcmv_weights(Vd, MatrixXcd::Identity(6, 6), 1234.5);
    FAIL("expected lcmv to reject a rank-deficient steering matrix");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("1234.5") != std::string::npos);
  }
}

TEST_CASE("source statistics vanish for the exact direct model") {
  const int B = 6, M = 5, D = 2, T = 24;
  std::vector<MatrixXcd> Vd(B), S(B), Wd(B);
  for (int k = 0; k < B; ++k) {
    Vd[static_cast<size_t>(k)] = random_matrix(M, D);
    S[static_cast<size_t>(k)] = random_matrix(D, T);
    Wd[static_cast<size_t>(k)] =
        lcmv_weights(Vd[static_cast<size_t>(k)], MatrixXcd::Identity(M, M));
  }
  TimeFreqSignal tf = model_frames(Vd, S);
  SourceStatistics stats = estimate_source_stats(tf, Vd, Wd, 400, 0);
  for (int k = 0; k < B; ++k) {
    REQUIRE(stats.sigma_r2(k) < 1e-12 * stats.R_sd[static_cast<size_t>(k)].norm());
    // Distortionless: R_sd equals the sample covariance of the true sources.
    MatrixXcd expect = S[static_cast<size_t>(k)] * S[static_cast<size_t>(k)].adjoint() / T;
    REQUIRE((stats.R_sd[static_cast<size_t>(k)] - expect).cwiseAbs().maxCoeff() <
            1e-10 * expect.cwiseAbs().maxCoeff());
    // Hermitian PSD
    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(stats.R_sd[static_cast<size_t>(k)]);
    REQUIRE(eig.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("com_filter matches the explicit two-path pipeline") {
  const int M = 6, D = 2;
  MatrixXcd Vd = random_matrix(M, D);
  MatrixXcd Wd = lcmv_weights(Vd, random_pd(M));
  VectorXcd c_bsm = random_vector(M);
  VectorXcd h_d = random_vector(D);
  VectorXcd c_com = com_filter(c_bsm, Vd, Wd, h_d);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXcd x = random_vector(M);
    cd direct = (h_d.transpose() * (Wd * x))(0);
    cd residual = (c_bsm.adjoint() *
                   ((MatrixXcd::Identity(M, M) - Vd * Wd) * x))(0);
    cd composed = (c_com.adjoint() * x)(0);
    REQUIRE(std::abs(composed - (direct + residual)) < 1e-12 * std::abs(composed));
  }
}

TEST_CASE("com_filter degenerate cases") {
  const int M = 4;
  VectorXcd c_bsm = random_vector(M);
  MatrixXcd Vd0(M, 0), Wd0(0, M);
  VectorXcd h0(0);
  REQUIRE((com_filter(c_bsm, Vd0, Wd0, h0) - c_bsm).norm() == 0.0);

  MatrixXcd Vd = random_matrix(M, 1);
  MatrixXcd Wd = lcmv_weights(Vd, MatrixXcd::Identity(M, M));
  VectorXcd h_d = random_vector(1);
  VectorXcd c = com_filter(VectorXcd::Zero(M), Vd, Wd, h_d);
  VectorXcd x = random_vector(M);
  cd expect = (h_d.transpose() * (Wd * x))(0);
  REQUIRE(std::abs((c.adjoint() * x)(0) - expect) < 1e-12 * std::abs(expect));
}

TEST_CASE("dbsm_filter collapses to bsm_ls when D = 0") {
  const int M = 6, L = 40;
  MatrixXcd Vr = random_matrix(M, L);
  VectorXcd hr = random_vector(L);
  double sr2 = 0.7, sn2 = 1e-3;
  MatrixXcd Vd(M, 0);
  MatrixXcd Rsd(0, 0);
  VectorXcd hd(0);
  VectorXcd c = dbsm_filter(Vd, Vr, Rsd, sr2, sn2, hd, hr);
  VectorXcd expect = bsm_ls(Vr, hr, sr2 / sn2);
  REQUIRE((c - expect).norm() < 1e-12 * expect.norm());
}

TEST_CASE("dbsm_filter with R_sd = sigma_r2 I equals the stacked system") {
  const int M = 6, D = 2, L = 30;
  MatrixXcd Vd = random_matrix(M, D), Vr = random_matrix(M, L);
  VectorXcd hd = random_vector(D), hr = random_vector(L);
  double sr2 = 0.42, sn2 = 1e-4;
  MatrixXcd Rsd = sr2 * MatrixXcd::Identity(D, D);
  VectorXcd c = dbsm_filter(Vd, Vr, Rsd, sr2, sn2, hd, hr);

  MatrixXcd V(M, D + L);
  V << Vd, Vr;
  VectorXcd h(D + L);
  h << hd, hr;
  MatrixXcd B = sr2 * (V * V.adjoint()) + sn2 * MatrixXcd::Identity(M, M);
  VectorXcd expect = B.llt().solve(sr2 * (V * h.conjugate()));
  REQUIRE((c - expect).norm() < 1e-10 * expect.norm());
}

TEST_CASE("dbsm system matrix stays PD with noise loading") {
  const int M = 6;
  MatrixXcd Vd = random_matrix(M, 1), Vr = random_matrix(M, 20);
  MatrixXcd Rsd = random_pd(1);
  double sr2 = 0.3, sn2 = 1e-6;
  MatrixXcd B = sr2 * (Vr * Vr.adjoint()) + Vd * Rsd * Vd.adjoint() +
                sn2 * MatrixXcd::Identity(M, M);
  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(B);
  REQUIRE(eig.eigenvalues().minCoeff() >= sn2 * (1.0 - 1e-10));
}

TEST_CASE("dbsm_magls with zero direct statistics reduces to mag_ls") {
  const int M = 5, L = 25;
  MatrixXcd Vd = random_matrix(M, 1), Vr = random_matrix(M, L);
  VectorXcd hd = random_vector(1), hr = random_vector(L);
  double sr2 = 0.9, sn2 = 1e-5;
  MatrixXcd Rsd = MatrixXcd::Zero(1, 1);
  MaglsResult a = dbsm_magls(Vd, Vr, Rsd, sr2, sn2, hd, hr);
  MaglsResult b = mag_ls(Vr, hr, sr2 / sn2);
  REQUIRE((a.c - b.c).norm() < 1e-10 * b.c.norm());
}

TEST_CASE("dbsm_magls monotone and feasible-target convergence") {
  const int M = 4, D = 1, L = 3;
  MatrixXcd Vd = random_matrix(M, D), Vr = random_matrix(M, L);
  MatrixXcd Rsd = random_pd(D);
  double sr2 = 0.6, sn2 = 1e-12;
  VectorXcd c0 = random_vector(M);
  VectorXcd hd = (Vd.adjoint() * c0).conjugate();
  VectorXcd hr = (Vr.adjoint() * c0).conjugate();
  MaglsResult res = dbsm_magls(Vd, Vr, Rsd, sr2, sn2, hd, hr);
  REQUIRE(res.objective <= res.initial_objective + 1e-12);
  REQUIRE(res.objective < 1e-10 * std::max(res.initial_objective, 1e-30));

  // Random instances stay monotone (magls_core throws otherwise).
  for (int trial = 0; trial < 5; ++trial) {
    MaglsResult r = dbsm_magls(random_matrix(M, D), random_matrix(M, L),
                               random_pd(D), 0.5, 1e-6, random_vector(D),
                               random_vector(L));
    REQUIRE(r.objective <= r.initial_objective + 1e-12);
  }
}

TEST_CASE("design_bsm dispatches LS below and MagLS at the cutoff") {
  auto geom = ArrayGeometry::semicircular(6);
  auto hrtf = std::make_shared<HrtfSet>(make_analytic_hrtf());
  // win_len 64 at 48 kHz puts bin 2 exactly at 1500 Hz.
  DesignSetup setup = make_design_setup(geom, hrtf, 40, 48000.0, 64, 16);
  DesignParams params;
  BinauralFilterBank bank = design_bsm(setup, params);
  REQUIRE(setup.freqs(2) == 1500.0);

  VectorXcd ls = bsm_ls(setup.V.values[1], setup.Hl.col(1), params.snr_linear);
  REQUIRE((bank.left.col(1) - ls).norm() < 1e-13 * ls.norm());

  MaglsResult mag = mag_ls(setup.V.values[2], setup.Hl.col(2), params.snr_linear);
  REQUIRE((bank.left.col(2) - mag.c).norm() < 1e-13 * mag.c.norm());
  VectorXcd not_mag = bsm_ls(setup.V.values[2], setup.Hl.col(2), params.snr_linear);
  REQUIRE((bank.left.col(2) - not_mag).norm() > 1e-6 * not_mag.norm());
}

TEST_CASE("apply_bank output scales linearly with the capture") {
  auto geom = ArrayGeometry::semicircular(4);
  auto hrtf = std::make_shared<HrtfSet>(make_analytic_hrtf());
  DesignSetup setup = make_design_setup(geom, hrtf, 30, 48000.0, 64, 16);
  BinauralFilterBank bank = design_bsm(setup);

  TimeFreqSignal tf;
  tf.fs = 48000.0;
  tf.win_len = 64;
  tf.hop = 16;
  tf.signal_len = 64 + 16 * 9;
  tf.chan.assign(4, MatrixXcd::Zero(33, 10));
  for (auto& c : tf.chan) c = random_matrix(33, 10);
  TimeFreqSignal scaled = tf;
  for (auto& c : scaled.chan) c *= 3.0;
  MatrixXd y = render_binaural(bank, tf);
  MatrixXd y3 = render_binaural(bank, scaled);
  REQUIRE((y3 - 3.0 * y).cwiseAbs().maxCoeff() < 1e-12 * y.cwiseAbs().maxCoeff());
}
