// Objective evaluation measures: NMSE, directional error, ITD/ILD with the
// ERB filter bank, plus Schroeder decay analysis for the room simulator.
#pragma once

#include <vector>

#include "bsm/array.hpp"
#include "bsm/common.hpp"
#include "bsm/fft.hpp"
#include "bsm/filters.hpp"
#include "bsm/hrtf.hpp"

namespace bsm {

/// Per-frequency NMSE: complex error below 1.5 kHz, magnitude error at and
/// above it.
inline double nmse(cd p_hat, cd p_ref, double f_hz) {
  double ref = std::norm(p_ref);
  require(ref > 0.0, "nmse: zero reference bin");
  if (f_hz < 1500.0) return std::norm(p_hat - p_ref) / ref;
  double d = std::abs(p_hat) - std::abs(p_ref);
  return d * d / ref;
}

struct EarPair {
  double left{0.0};
  double right{0.0};
};

/// Directional error of a filter bank for a single DOA at a bank frequency
/// (f snaps to the nearest design bin). Relative first-power error in both
/// branches; the branch switches at the bank's MagLS cutoff.
inline EarPair directional_error(const BinauralFilterBank& bank,
                                 const ArrayGeometry& geom, const HrtfSet& hrtf,
                                 const Direction& dir, double f_hz) {
  require(bank.bins() >= 1, "directional_error: empty bank");
  double df = bank.bins() > 1 ? bank.freqs(1) - bank.freqs(0) : 1.0;
  int k = static_cast<int>(std::lround(f_hz / df));
  k = std::clamp(k, 0, bank.bins() - 1);
  double f = bank.freqs(k);
  VectorXcd v = steering_vector(geom, dir, f);
  VectorXd fv(1);
  fv << f;
  HrtfMatrices H = hrtf_at(hrtf, dir, fv);
  EarPair out;
  const cd h[2] = {H.left(0, 0), H.right(0, 0)};
  for (int ear = 0; ear < 2; ++ear) {
    double mag = std::abs(h[ear]);
    require(mag > 0.0, "directional_error: zero HRTF magnitude");
    cd resp = (v.adjoint() * (ear == 0 ? bank.left : bank.right).col(k))(0);
    double err = f < bank.magls_cutoff_hz ? std::abs(resp - std::conj(h[ear]))
                                          : std::abs(std::abs(resp) - mag);
    (ear == 0 ? out.left : out.right) = err / mag;
  }
  return out;
}

// ---------------------------------------------------------------------------
// ITD

/// Cascade of biquads (direct form II transposed).
struct BiquadCascade {
  struct Section {
    double b0, b1, b2, a1, a2;
  };
  std::vector<Section> sections;

  VectorXd apply(const VectorXd& x) const {
    VectorXd y = x;
    for (const auto& s : sections) {
      double z1 = 0.0, z2 = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        double in = y(i);
        double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        y(i) = out;
      }
    }
    return y;
  }
};

/// Even-order Butterworth low-pass via bilinear transform.
inline BiquadCascade butterworth_lowpass(int order, double fc, double fs) {
  require(order >= 2 && order % 2 == 0, "butterworth_lowpass: even order required");
  require(fc > 0.0 && fc < fs / 2.0, "butterworth_lowpass: cutoff out of range");
  const double wc = 2.0 * fs * std::tan(kPi * fc / fs);
  const double K = 2.0 * fs;
  BiquadCascade cas;
  for (int k = 1; k <= order / 2; ++k) {
    double a1 = 2.0 * wc * std::sin((2.0 * k - 1.0) * kPi / (2.0 * order));
    double a0 = wc * wc;
    double d0 = K * K + a1 * K + a0;
    BiquadCascade::Section s;
    s.b0 = a0 / d0;
    s.b1 = 2.0 * a0 / d0;
    s.b2 = a0 / d0;
    s.a1 = (-2.0 * K * K + 2.0 * a0) / d0;
    s.a2 = (K * K - a1 * K + a0) / d0;
    cas.sections.push_back(s);
  }
  return cas;
}

/// Zero-phase filtering: forward pass, time reversal, second pass.
inline VectorXd filtfilt(const BiquadCascade& cascade, const VectorXd& x) {
  VectorXd y = cascade.apply(x);
  y.reverseInPlace();
  y = cascade.apply(y);
  y.reverseInPlace();
  return y;
}

/// Cross-correlation ITD in seconds: both channels are low-passed at
/// 1.5 kHz (zero-phase 8th-order Butterworth), then
/// ITD = argmax_tau |sum_t p_r(t) p_l(t+tau)| over tau in [-1 ms, +1 ms].
/// Positive ITD means the left signal lags.
inline double itd(const VectorXd& p_left, const VectorXd& p_right, double fs) {
  require(p_left.size() == p_right.size(), "itd: length mismatch");
  require(p_left.size() > 0, "itd: empty signals");
  require(p_left.cwiseAbs().maxCoeff() > 0.0 && p_right.cwiseAbs().maxCoeff() > 0.0,
          "itd: all-zero input (argmax undefined)");
  BiquadCascade lp = butterworth_lowpass(8, 1500.0, fs);
  VectorXd l = filtfilt(lp, p_left);
  VectorXd r = filtfilt(lp, p_right);
  const int T = static_cast<int>(l.size());
  const int max_lag = static_cast<int>(std::lround(1e-3 * fs));
  double best = -1.0;
  int best_lag = 0;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double sum = 0.0;
    int lo = std::max(0, -lag);
    int hi = std::min(T, T - lag);
    for (int t = lo; t < hi; ++t) sum += r(t) * l(t + lag);
    if (std::abs(sum) > best) {
      best = std::abs(sum);
      best_lag = lag;
    }
  }
  return best_lag / fs;
}

inline double itd_error(double itd_test_s, double itd_ref_s) {
  return std::abs(itd_test_s - itd_ref_s);
}

// ---------------------------------------------------------------------------
// ILD over the ERB gammatone bank

inline double erb_bandwidth(double fc_hz) {
  return 24.7 * (4.37 * fc_hz / 1000.0 + 1.0);
}

inline double erb_number(double f_hz) {
  return 21.4 * std::log10(4.37 * f_hz / 1000.0 + 1.0);
}

inline double erb_number_inverse(double erb) {
  return 1000.0 * (std::pow(10.0, erb / 21.4) - 1.0) / 4.37;
}

struct ErbBand {
  double fc;
  double bandwidth;
  double fc_max;
};

struct ErbBank {
  std::vector<ErbBand> bands;
  double fs{48000.0};

  int size() const { return static_cast<int>(bands.size()); }

  /// 4th-order gammatone magnitude response, unity at the center.
  double response(double f_hz, int band) const {
    const ErbBand& b = bands[static_cast<size_t>(band)];
    double x = (f_hz - b.fc) / (1.019 * b.bandwidth);
    return std::pow(1.0 + x * x, -2.0);
  }
};

/// 22 gammatone bands, centers uniformly spaced on the ERB-number scale in
/// [1.5, 20] kHz; each band integrates up to fc + 4 ERB (or Nyquist).
inline ErbBank erb_bank(double fs) {
  require(fs >= 40000.0, "erb_bank: sample rate must be >= 40 kHz for the 20 kHz band");
  ErbBank bank;
  bank.fs = fs;
  const int count = 22;
  const double e_lo = erb_number(1500.0), e_hi = erb_number(20000.0);
  for (int i = 0; i < count; ++i) {
    double e = e_lo + (e_hi - e_lo) * i / (count - 1);
    ErbBand band;
    band.fc = erb_number_inverse(e);
    band.bandwidth = erb_bandwidth(band.fc);
    band.fc_max = std::min(fs / 2.0, band.fc + 4.0 * band.bandwidth);
    bank.bands.push_back(band);
  }
  return bank;
}

/// Per-band ILDs in dB: 10 log10 of the gammatone-weighted spectral power
/// ratio, bins summed up to each band's fc_max.
inline VectorXd ild_bands(const VectorXd& p_left, const VectorXd& p_right,
                          const ErbBank& bank) {
  require(p_left.size() == p_right.size() && p_left.size() > 0,
          "ild: invalid signals");
  const int nfft = next_pow2(static_cast<int>(p_left.size()));
  VectorXcd L = rfft(p_left, nfft);
  VectorXcd R = rfft(p_right, nfft);
  const double df = bank.fs / nfft;
  VectorXd out(bank.size());
  for (int band = 0; band < bank.size(); ++band) {
    const int kmax = std::min<int>(static_cast<int>(L.size()) - 1,
                                   static_cast<int>(bank.bands[static_cast<size_t>(band)].fc_max / df));
    double num = 0.0, den = 0.0;
    for (int k = 0; k <= kmax; ++k) {
      double g = bank.response(k * df, band);
      num += g * g * std::norm(L(k));
      den += g * g * std::norm(R(k));
    }
    require(den > 0.0, "ild: zero-energy band in the right channel");
    out(band) = 10.0 * std::log10(num / den);
  }
  return out;
}

inline double ild(const VectorXd& p_left, const VectorXd& p_right,
                  const ErbBank& bank) {
  return ild_bands(p_left, p_right, bank).mean();
}

/// Band-wise mean absolute ILD difference (absolute value inside the mean).
inline double ild_error(const VectorXd& test_left, const VectorXd& test_right,
                        const VectorXd& ref_left, const VectorXd& ref_right,
                        const ErbBank& bank) {
  VectorXd a = ild_bands(test_left, test_right, bank);
  VectorXd b = ild_bands(ref_left, ref_right, bank);
  return (a - b).cwiseAbs().mean();
}

// ---------------------------------------------------------------------------
// Misc statistics

inline double pearson(const VectorXd& x, const VectorXd& y) {
  require(x.size() == y.size() && x.size() >= 2, "pearson: invalid inputs");
  double mx = x.mean(), my = y.mean();
  VectorXd dx = x.array() - mx, dy = y.array() - my;
  double denom = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  require(denom > 0.0, "pearson: zero variance");
  return dx.dot(dy) / denom;
}

/// Schroeder energy-decay curve in dB, normalized to 0 dB at t = 0.
inline VectorXd schroeder_edc_db(const VectorXd& rir) {
  require(rir.size() > 0, "schroeder: empty impulse response");
  VectorXd edc(rir.size());
  double acc = 0.0;
  for (Eigen::Index i = rir.size() - 1; i >= 0; --i) {
    acc += rir(i) * rir(i);
    edc(i) = acc;
  }
  double total = edc(0);
  require(total > 0.0, "schroeder: zero-energy impulse response");
  for (Eigen::Index i = 0; i < edc.size(); ++i)
    edc(i) = 10.0 * std::log10(std::max(edc(i) / total, 1e-30));
  return edc;
}

/// Decay time to -60 dB extrapolated from a least-squares line fitted to the
/// EDC between lo_db and hi_db (e.g. -5..-25).
inline double decay_time_60(const VectorXd& edc_db, double fs, double lo_db = -5.0,
                            double hi_db = -25.0) {
  require(lo_db > hi_db, "decay_time_60: lo_db must be above hi_db");
  int i_lo = -1, i_hi = -1;
  for (Eigen::Index i = 0; i < edc_db.size(); ++i) {
    if (i_lo < 0 && edc_db(i) <= lo_db) i_lo = static_cast<int>(i);
    if (i_hi < 0 && edc_db(i) <= hi_db) {
      i_hi = static_cast<int>(i);
      break;
    }
  }
  require(i_lo >= 0 && i_hi > i_lo, "decay_time_60: EDC never reaches the fit range");
  const int n = i_hi - i_lo + 1;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int i = i_lo; i <= i_hi; ++i) {
    double t = i / fs;
    sx += t;
    sy += edc_db(i);
    sxx += t * t;
    sxy += t * edc_db(i);
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  require(slope < 0.0, "decay_time_60: non-decaying EDC");
  return -60.0 / slope;
}

}  // namespace bsm
