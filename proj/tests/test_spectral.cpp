#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "bsm/correlation.hpp"
#include "bsm/stft.hpp"

using namespace bsm;

namespace {

MatrixXd white(int channels, int n, uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  MatrixXd x(channels, n);
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < n; ++i) x(c, i) = gauss(rng);
  return x;
}

}  // namespace

TEST_CASE("stft of zeros is zero") {
  TimeFreqSignal tf = stft(MatrixXd::Zero(2, 4000), 48000.0);
  for (const auto& c : tf.chan) REQUIRE(c.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(tf.bins() == 769);
}

TEST_CASE("stft rejects empty and short signals") {
  REQUIRE_THROWS(stft(MatrixXd::Zero(1, 0), 48000.0));
  REQUIRE_THROWS(stft(MatrixXd::Zero(1, 100), 48000.0));
}

TEST_CASE("on-bin tone peaks at its bin in every frame") {
  const int win = 1536, k = 48;
  const double fs = 48000.0;
  const int n = win * 4;
  MatrixXd x(1, n);
  for (int i = 0; i < n; ++i) x(0, i) = std::cos(kTwoPi * k * i / win);
  TimeFreqSignal tf = stft(x, fs, win, win);  // hop == win_len
  for (int t = 0; t < tf.frames(); ++t) {
    int peak = 0;
    double best = 0.0;
    for (int b = 0; b < tf.bins(); ++b) {
      double mag = std::abs(tf.chan[0](b, t));
      if (mag > best) {
        best = mag;
        peak = b;
      }
    }
    REQUIRE(peak == k);
  }
}

TEST_CASE("stft/istft round trip reconstructs interior samples") {
  MatrixXd x = white(3, 20000, 21);
  TimeFreqSignal tf = stft(x, 48000.0);
  MatrixXd y = istft(tf);
  REQUIRE(y.cols() == x.cols());
  double worst = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int t = tf.win_len; t < x.cols() - tf.win_len; ++t)
      worst = std::max(worst, std::abs(y(c, t) - x(c, t)));
  REQUIRE(worst < 1e-6 * x.cwiseAbs().maxCoeff());
}

TEST_CASE("istft of zero frames is zero, and istft is linear") {
  MatrixXd a = white(1, 8000, 22), b = white(1, 8000, 23);
  TimeFreqSignal ta = stft(a, 48000.0), tb = stft(b, 48000.0);
  TimeFreqSignal tsum = ta;
  tsum.chan[0] += tb.chan[0];
  MatrixXd ya = istft(ta), yb = istft(tb), ysum = istft(tsum);
  REQUIRE((ysum - ya - yb).cwiseAbs().maxCoeff() <
          1e-12 * std::max(1.0, ya.cwiseAbs().maxCoeff()));
  TimeFreqSignal tz = ta;
  tz.chan[0].setZero();
  REQUIRE(istft(tz).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single frame with J=0 gives the exact rank-1 outer product") {
  MatrixXd x = white(4, 1536, 24);
  TimeFreqSignal tf = stft(x, 48000.0);
  TimeFreqSignal one = tf;
  for (auto& c : one.chan) c = c.leftCols(1).eval();
  SpatialCorrelation corr = estimate_correlation(one, 0);
  for (int k : {0, 100, 500}) {
    VectorXcd v = one.at(0, k);
    MatrixXcd expect = v * v.adjoint();
    REQUIRE((corr.R[static_cast<size_t>(k)] - expect).cwiseAbs().maxCoeff() <
            1e-12 * expect.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("independent white channels give near-diagonal correlation") {
  const double sigma = 0.5;
  MatrixXd x = white(4, 48000 * 2, 25, sigma);
  TimeFreqSignal tf = stft(x, 48000.0);
  SpatialCorrelation corr = estimate_correlation(tf, 1);
  // Mid-band bin: diagonal near (2J+1) * sigma^2 * sum(w^2), off-diagonal small.
  int k = 300;
  const MatrixXcd& R = corr.R[static_cast<size_t>(k)];
  double diag_mean = R.diagonal().real().mean();
  double max_off = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      if (a != b) max_off = std::max(max_off, std::abs(R(a, b)));
  REQUIRE(max_off < 0.1 * diag_mean);
}

TEST_CASE("correlation is Hermitian and PSD with nonnegative trace") {
  MatrixXd x = white(3, 20000, 26);
  TimeFreqSignal tf = stft(x, 48000.0);
  SpatialCorrelation corr = estimate_correlation(tf, 1);
  for (int k = 0; k < corr.bins(); k += 37) {
    const MatrixXcd& R = corr.R[static_cast<size_t>(k)];
    REQUIRE((R - R.adjoint()).cwiseAbs().maxCoeff() <=
            1e-12 * std::max(1.0, R.cwiseAbs().maxCoeff()));
    REQUIRE(R.trace().real() >= 0.0);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(R);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10 * R.trace().real());
  }
}

TEST_CASE("correlation is invariant to frame reordering") {
  MatrixXd x = white(2, 12000, 27);
  TimeFreqSignal tf = stft(x, 48000.0);
  TimeFreqSignal rev = tf;
  for (auto& c : rev.chan) c = c.rowwise().reverse().eval();
  SpatialCorrelation a = estimate_correlation(tf, 1);
  SpatialCorrelation b = estimate_correlation(rev, 1);
  for (int k = 0; k < a.bins(); k += 53)
    REQUIRE((a.R[static_cast<size_t>(k)] - b.R[static_cast<size_t>(k)]).cwiseAbs().maxCoeff() <
            1e-12 * std::max(1.0, a.R[static_cast<size_t>(k)].cwiseAbs().maxCoeff()));
}

TEST_CASE("scaling the input scales the correlation by |alpha|^2") {
  MatrixXd x = white(2, 12000, 28);
  TimeFreqSignal tf = stft(x, 48000.0);
  TimeFreqSignal scaled = stft((2.5 * x).eval(), 48000.0);
  SpatialCorrelation a = estimate_correlation(tf, 1);
  SpatialCorrelation b = estimate_correlation(scaled, 1);
  for (int k = 0; k < a.bins(); k += 101)
    REQUIRE((b.R[static_cast<size_t>(k)] - 6.25 * a.R[static_cast<size_t>(k)])
                .cwiseAbs()
                .maxCoeff() < 1e-10 * std::max(1.0, a.R[static_cast<size_t>(k)].cwiseAbs().maxCoeff()));
}
