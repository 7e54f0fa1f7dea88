// STFT analysis/synthesis: Bartlett analysis window, weighted overlap-add
// inverse with exact interior reconstruction.
#pragma once

#include <vector>

#include "bsm/common.hpp"
#include "bsm/fft.hpp"

namespace bsm {

/// Periodic Bartlett window, w[0] = 0, w[n/2] = 1.
inline VectorXd bartlett_window(int n) {
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = 1.0 - std::abs(2.0 * i / n - 1.0);
  return w;
}

/// One-sided STFT frames of a multichannel signal.
struct TimeFreqSignal {
  std::vector<MatrixXcd> chan;  // chan[m] is bins x frames
  double fs{48000.0};
  int win_len{1536};
  int hop{384};
  int signal_len{0};

  int channels() const { return static_cast<int>(chan.size()); }
  int bins() const { return chan.empty() ? 0 : static_cast<int>(chan[0].rows()); }
  int frames() const { return chan.empty() ? 0 : static_cast<int>(chan[0].cols()); }
  double bin_hz(int k) const { return k * fs / win_len; }
  VectorXd freqs() const {
    VectorXd f(bins());
    for (int k = 0; k < bins(); ++k) f(k) = bin_hz(k);
    return f;
  }
  /// Frame vector across channels at (frame t, bin k).
  VectorXcd at(int t, int k) const {
    VectorXcd x(channels());
    for (int m = 0; m < channels(); ++m) x(m) = chan[static_cast<size_t>(m)](k, t);
    return x;
  }
};

/// Bartlett-windowed one-sided STFT; the tail frame is zero-padded.
inline TimeFreqSignal stft(const MatrixXd& x, double fs, int win_len = 1536,
                           int hop = 384) {
  require(x.cols() > 0, "stft: empty signal");
  require(x.cols() >= win_len, "stft: signal shorter than the analysis window");
  require(hop >= 1 && hop <= win_len, "stft: hop must be in [1, win_len]");
  const int T = static_cast<int>(x.cols());
  const int num_frames =
      1 + static_cast<int>(std::ceil(std::max(0, T - win_len) / static_cast<double>(hop)));
  const int bins = win_len / 2 + 1;
  const VectorXd window = bartlett_window(win_len);

  TimeFreqSignal tf;
  tf.fs = fs;
  tf.win_len = win_len;
  tf.hop = hop;
  tf.signal_len = T;
  tf.chan.resize(static_cast<size_t>(x.rows()));
  RealFft plan(win_len);
  VectorXd frame(win_len);
  for (Eigen::Index m = 0; m < x.rows(); ++m) {
    MatrixXcd& spec = tf.chan[static_cast<size_t>(m)];
    spec.resize(bins, num_frames);
    for (int t = 0; t < num_frames; ++t) {
      const int start = t * hop;
      for (int i = 0; i < win_len; ++i) {
        int idx = start + i;
        frame(i) = idx < T ? x(m, idx) * window(i) : 0.0;
      }
      spec.col(t) = plan.forward(frame);
    }
  }
  return tf;
}

/// Weighted overlap-add inverse. Interior samples reconstruct stft() output
/// to machine precision; edges where the window sum vanishes are zeroed.
inline MatrixXd istft(const TimeFreqSignal& tf) {
  require(!tf.chan.empty(), "istft: no channels");
  require(tf.bins() == tf.win_len / 2 + 1, "istft: bin count inconsistent with win_len");
  const int num_frames = tf.frames();
  const int out_len = tf.signal_len > 0 ? tf.signal_len
                                        : (num_frames - 1) * tf.hop + tf.win_len;
  const VectorXd window = bartlett_window(tf.win_len);

  VectorXd denom = VectorXd::Zero(out_len + tf.win_len);
  for (int t = 0; t < num_frames; ++t)
    for (int i = 0; i < tf.win_len; ++i) denom(t * tf.hop + i) += window(i) * window(i);

  MatrixXd out = MatrixXd::Zero(static_cast<Eigen::Index>(tf.channels()), out_len);
  RealFft plan(tf.win_len);
  for (int m = 0; m < tf.channels(); ++m) {
    for (int t = 0; t < num_frames; ++t) {
      VectorXd frame = plan.inverse(tf.chan[static_cast<size_t>(m)].col(t));
      const int start = t * tf.hop;
      for (int i = 0; i < tf.win_len && start + i < out_len; ++i)
        out(m, start + i) += frame(i) * window(i);
    }
  }
  for (int s = 0; s < out_len; ++s) {
    if (denom(s) > 1e-12)
      out.col(s) /= denom(s);
    else
      out.col(s).setZero();
  }
  return out;
}

}  // namespace bsm
