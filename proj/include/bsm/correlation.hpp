// Spatial correlation matrices averaged across time frames and neighboring
// frequency bins.
#pragma once

#include <vector>

#include "bsm/common.hpp"
#include "bsm/stft.hpp"

namespace bsm {

struct SpatialCorrelation {
  std::vector<MatrixXcd> R;  // per-bin Hermitian M x M
  int smoothing_bins{1};     // J
  double bin_hz{0.0};
  int frames{0};

  int bins() const { return static_cast<int>(R.size()); }
};

/// R[f] = (1/T) sum_t sum_{j=-J..J} x[t,f+j] x[t,f+j]^H with the j range
/// truncated at the spectrum edges. Division is by T only.
inline SpatialCorrelation estimate_correlation(const TimeFreqSignal& tf, int J = 1) {
  require(J >= 0, "estimate_correlation: J must be >= 0");
  require(tf.frames() >= 1, "estimate_correlation: need at least one frame");
  const int M = tf.channels();
  const int B = tf.bins();
  const int T = tf.frames();

  // Per-bin time-summed outer products first, then frequency smoothing.
  std::vector<MatrixXcd> acc(static_cast<size_t>(B));
  parallel_for(B, [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
    VectorXcd x(M);
    for (std::ptrdiff_t k = b0; k < b1; ++k) {
      MatrixXcd a = MatrixXcd::Zero(M, M);
      for (int t = 0; t < T; ++t) {
        for (int m = 0; m < M; ++m)
          x(m) = tf.chan[static_cast<size_t>(m)](static_cast<Eigen::Index>(k), t);
        a.selfadjointView<Eigen::Lower>().rankUpdate(x);
      }
      acc[static_cast<size_t>(k)] = a.selfadjointView<Eigen::Lower>();
    }
  });

  SpatialCorrelation corr;
  corr.smoothing_bins = J;
  corr.bin_hz = tf.bins() > 1 ? tf.bin_hz(1) : 0.0;
  corr.frames = T;
  corr.R.resize(static_cast<size_t>(B));
  for (int k = 0; k < B; ++k) {
    MatrixXcd r = MatrixXcd::Zero(M, M);
    for (int j = -J; j <= J; ++j) {
      int kk = k + j;
      if (kk < 0 || kk >= B) continue;
      r += acc[static_cast<size_t>(kk)];
    }
    r /= static_cast<double>(T);
    corr.R[static_cast<size_t>(k)] = 0.5 * (r + r.adjoint());
  }
  return corr;
}

}  // namespace bsm
