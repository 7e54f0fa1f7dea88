// Binaural filter designs: diffuse-field BSM (LS and MagLS), the LCMV
// beamformer, COMPASS-BSM composition and directional BSM with an informed
// source correlation matrix.
#pragma once

#include <memory>
#include <sstream>
#include <vector>

#include "bsm/array.hpp"
#include "bsm/common.hpp"
#include "bsm/correlation.hpp"
#include "bsm/hrtf.hpp"
#include "bsm/stft.hpp"

namespace bsm {

enum class RenderMethod { Bsm, Com, Dbsm, Reference };

inline const char* method_name(RenderMethod m) {
  switch (m) {
    case RenderMethod::Bsm: return "BSM";
    case RenderMethod::Com: return "COM";
    case RenderMethod::Dbsm: return "DBSM";
    default: return "REFERENCE";
  }
}

struct BinauralFilterBank {
  RenderMethod method{RenderMethod::Bsm};
  VectorXd freqs;
  MatrixXcd left;   // M x bins
  MatrixXcd right;  // M x bins
  double magls_cutoff_hz{1500.0};
  double snr_linear{100.0};

  int mic_count() const { return static_cast<int>(left.rows()); }
  int bins() const { return static_cast<int>(left.cols()); }
};

struct DesignParams {
  double snr_linear{100.0};  // 20 dB
  double magls_cutoff_hz{1500.0};
  double magls_tol{1e-20};   // effective tolerance is max(tol, 1e-12)
  int magls_max_iter{100000};
  double magls_init_phase_rad{kPi / 2.0};
  int smoothing_bins{1};     // J for correlation and source statistics
};

/// Solves (V V^H + I/snr) c = V t  (t is the target of V^H c).
inline VectorXcd bsm_ls_target(const MatrixXcd& V, const VectorXcd& target,
                               double snr) {
  require(snr > 0.0, "bsm_ls: snr must be positive");
  const int M = static_cast<int>(V.rows());
  MatrixXcd G = V * V.adjoint();
  G.diagonal().array() += 1.0 / snr;
  Eigen::LLT<MatrixXcd> llt(G);
  require(llt.info() == Eigen::Success, "bsm_ls: regularized system not PD");
  (void)M;
  return llt.solve(V * target);
}

/// Diffuse-field BSM least squares: c = (V V^H + I/snr)^{-1} V h*.
inline VectorXcd bsm_ls(const MatrixXcd& V, const VectorXcd& h, double snr) {
  return bsm_ls_target(V, h.conjugate(), snr);
}

struct MaglsResult {
  VectorXcd c;
  int iterations{0};
  double objective{0.0};
  double initial_objective{0.0};
};

namespace detail {

/// Variable-exchange minimization of || |A c| - |b| ||^2 + reg ||c||^2.
/// The normal matrix A^H A + reg I is factored once; each exchange step
/// re-solves against the rotated magnitude target.
inline MaglsResult magls_core(const MatrixXcd& A, const VectorXd& b_mag, double reg,
                              double init_phase, double tol, int max_iter) {
  require(reg > 0.0, "magls: regularizer must be positive");
  require(max_iter >= 1, "magls: max_iter must be >= 1");
  const int N = static_cast<int>(A.rows());
  MatrixXcd B = A.adjoint() * A;
  B.diagonal().array() += reg;
  Eigen::LLT<MatrixXcd> llt(B);
  require(llt.info() == Eigen::Success, "magls: normal matrix not PD");

  const double tol_eff = std::max(tol, 1e-12);
  VectorXcd t(N);
  for (int i = 0; i < N; ++i) t(i) = std::polar(b_mag(i), init_phase);

  MaglsResult res;
  res.initial_objective = b_mag.squaredNorm();  // objective of the zero filter
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  for (int it = 0; it < max_iter; ++it) {
    res.c = llt.solve(A.adjoint() * t);
    VectorXcd Ac = A * res.c;
    double obj = reg * res.c.squaredNorm();
    for (int i = 0; i < N; ++i) {
      double d = std::abs(Ac(i)) - b_mag(i);
      obj += d * d;
    }
    res.iterations = it + 1;
    res.objective = obj;
    trace.push_back(obj);
    if (std::isfinite(prev)) {
      double slack = 1e-12 * std::max(1.0, res.initial_objective);
      if (obj > prev + slack) {
        std::ostringstream msg;
        msg << "magls: objective increased at iteration " << it << " (" << prev
            << " -> " << obj << "); trace tail:";
        for (size_t i = trace.size() >= 5 ? trace.size() - 5 : 0; i < trace.size(); ++i)
          msg << " " << trace[i];
        throw std::runtime_error(msg.str());
      }
      if (prev - obj < tol_eff * std::max(prev, 1e-300)) break;
    }
    prev = obj;
    for (int i = 0; i < N; ++i) {
      cd v = Ac(i);
      double m = std::abs(v);
      t(i) = m > 0.0 ? cd(b_mag(i) * v.real() / m, b_mag(i) * v.imag() / m)
                     : std::polar(b_mag(i), init_phase);
    }
  }
  return res;
}

}  // namespace detail

/// Magnitude least squares via variable exchange, matching |V^H c| to |h|.
inline MaglsResult mag_ls(const MatrixXcd& V, const VectorXcd& h, double snr,
                          double init_phase = kPi / 2.0, double tol = 1e-20,
                          int max_iter = 100000) {
  require(snr > 0.0, "mag_ls: snr must be positive");
  return detail::magls_core(V.adjoint(), h.cwiseAbs(), 1.0 / snr, init_phase, tol,
                            max_iter);
}

/// LCMV weights W = (V_d^H R^{-1} V_d)^{-1} V_d^H R^{-1} with diagonal
/// loading eps = 1e-6 trace(R)/M. Returns D x M.
inline MatrixXcd lcmv_weights(const MatrixXcd& Vd, const MatrixXcd& Rx,
                              double freq_hz = -1.0) {
  const int M = static_cast<int>(Rx.rows());
  const int D = static_cast<int>(Vd.cols());
  auto fail = [&](const std::string& what) {
    std::ostringstream msg;
    msg << "lcmv: " << what;
    if (freq_hz >= 0.0) msg << " at " << freq_hz << " Hz";
    throw std::runtime_error(msg.str());
  };
  if (D == 0) return MatrixXcd::Zero(0, M);
  MatrixXcd R = Rx;
  double eps = 1e-6 * std::max(R.trace().real(), 0.0) / M;
  R.diagonal().array() += eps > 0.0 ? eps : 1e-12;
  Eigen::LLT<MatrixXcd> llt(R);
  if (llt.info() != Eigen::Success) fail("loaded correlation matrix not PD");
  MatrixXcd X = llt.solve(Vd);          // R^{-1} V_d, M x D
  MatrixXcd G = Vd.adjoint() * X;       // D x D
  Eigen::LDLT<MatrixXcd> gd(G);
  if (gd.info() != Eigen::Success) fail("steering matrix rank-deficient");
  MatrixXcd W = gd.solve(X.adjoint());  // D x M
  double residual = (W * Vd - MatrixXcd::Identity(D, D)).norm();
  if (!(residual < 1e-10)) fail("constraint residual " + std::to_string(residual) +
                                " (rank-deficient steering?)");
  return W;
}

/// Per-bin LCMV bank.
inline std::vector<MatrixXcd> lcmv(const std::vector<MatrixXcd>& Vd,
                                   const SpatialCorrelation& Rx) {
  require(Vd.size() == Rx.R.size(), "lcmv: bin count mismatch");
  std::vector<MatrixXcd> W(Vd.size());
  parallel_for(static_cast<std::ptrdiff_t>(Vd.size()),
               [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
                 for (std::ptrdiff_t k = b0; k < b1; ++k)
                   W[static_cast<size_t>(k)] =
                       lcmv_weights(Vd[static_cast<size_t>(k)],
                                    Rx.R[static_cast<size_t>(k)],
                                    Rx.bin_hz * static_cast<double>(k));
               });
  return W;
}

struct SourceStatistics {
  std::vector<MatrixXcd> R_sd;  // per bin, D x D Hermitian PSD
  VectorXd sigma_r2;            // per bin
  double sigma_n2{0.0};
  int smoothing_bins{1};
};

/// Beamformed source statistics: sd = W_d x, xr = (I - V_d W_d) x,
/// R_sd[f] = time average of sd sd^H (J-smoothed like R_x),
/// sigma_r2[f] = time average of ||xr||^2 / L.
inline SourceStatistics estimate_source_stats(const TimeFreqSignal& tf,
                                              const std::vector<MatrixXcd>& Vd,
                                              const std::vector<MatrixXcd>& Wd,
                                              int L, int J = 1) {
  const int B = tf.bins();
  const int T = tf.frames();
  const int M = tf.channels();
  require(static_cast<int>(Vd.size()) == B && static_cast<int>(Wd.size()) == B,
          "estimate_source_stats: bin count mismatch");
  require(L >= 1, "estimate_source_stats: L must be >= 1");
  require(T >= 1, "estimate_source_stats: need frames");

  std::vector<MatrixXcd> acc(static_cast<size_t>(B));
  VectorXd sig_r = VectorXd::Zero(B);
  parallel_for(B, [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
    VectorXcd x(M);
    for (std::ptrdiff_t k = b0; k < b1; ++k) {
      const MatrixXcd& W = Wd[static_cast<size_t>(k)];
      const MatrixXcd& V = Vd[static_cast<size_t>(k)];
      const int D = static_cast<int>(W.rows());
      MatrixXcd a = MatrixXcd::Zero(D, D);
      double r = 0.0;
      for (int t = 0; t < T; ++t) {
        for (int m = 0; m < M; ++m)
          x(m) = tf.chan[static_cast<size_t>(m)](static_cast<Eigen::Index>(k), t);
        VectorXcd sd = W * x;
        a += sd * sd.adjoint();
        r += (x - V * sd).squaredNorm();
      }
      acc[static_cast<size_t>(k)] = a;
      sig_r(static_cast<Eigen::Index>(k)) = r / (static_cast<double>(L) * T);
    }
  });

  SourceStatistics stats;
  stats.smoothing_bins = J;
  stats.sigma_r2 = sig_r;
  stats.R_sd.resize(static_cast<size_t>(B));
  for (int k = 0; k < B; ++k) {
    const int D = static_cast<int>(Wd[static_cast<size_t>(k)].rows());
    MatrixXcd r = MatrixXcd::Zero(D, D);
    for (int j = -J; j <= J; ++j) {
      int kk = k + j;
      if (kk < 0 || kk >= B) continue;
      r += acc[static_cast<size_t>(kk)];
    }
    r /= static_cast<double>(T);
    stats.R_sd[static_cast<size_t>(k)] = 0.5 * (r + r.adjoint());
  }
  return stats;
}

/// COM composition: c = (I - V_d W_d)^H c_bsm + W_d^H h_d^*.
inline VectorXcd com_filter(const VectorXcd& c_bsm, const MatrixXcd& Vd,
                            const MatrixXcd& Wd, const VectorXcd& h_d) {
  if (Wd.rows() == 0) return c_bsm;
  const int M = static_cast<int>(c_bsm.size());
  MatrixXcd P = MatrixXcd::Identity(M, M) - Vd * Wd;
  return P.adjoint() * c_bsm + Wd.adjoint() * h_d.conjugate();
}

/// d-BSM filter: c = B^{-1} (V_d R_sd h_d^* + sigma_r2 V_r h_r^*),
/// B = sigma_r2 V_r V_r^H + V_d R_sd V_d^H + sigma_n2 I.
inline VectorXcd dbsm_filter(const MatrixXcd& Vd, const MatrixXcd& Vr,
                             const MatrixXcd& R_sd, double sigma_r2,
                             double sigma_n2, const VectorXcd& h_d,
                             const VectorXcd& h_r) {
  require(sigma_r2 >= 0.0, "dbsm_filter: sigma_r2 must be >= 0");
  const int M = static_cast<int>(Vr.rows());
  MatrixXcd B = sigma_r2 * (Vr * Vr.adjoint());
  if (Vd.cols() > 0) B += Vd * R_sd * Vd.adjoint();
  B.diagonal().array() += sigma_n2;
  Eigen::LLT<MatrixXcd> llt(B);
  require(llt.info() == Eigen::Success,
          "dbsm_filter: B is singular; add diagonal loading via sigma_n2 > 0");
  VectorXcd rhs = sigma_r2 * (Vr * h_r.conjugate());
  if (Vd.cols() > 0) rhs += Vd * (R_sd * h_d.conjugate());
  (void)M;
  return llt.solve(rhs);
}

/// d-BSM MagLS: variable exchange on the R_s^{1/2}-weighted stacked system
/// [V_d V_r] with regularizer sigma_n2.
inline MaglsResult dbsm_magls(const MatrixXcd& Vd, const MatrixXcd& Vr,
                              const MatrixXcd& R_sd, double sigma_r2,
                              double sigma_n2, const VectorXcd& h_d,
                              const VectorXcd& h_r, double init_phase = kPi / 2.0,
                              double tol = 1e-20, int max_iter = 100000) {
  const int D = static_cast<int>(Vd.cols());
  const int L = static_cast<int>(Vr.cols());
  const int M = static_cast<int>(Vr.rows());
  const double sigma_r = std::sqrt(std::max(0.0, sigma_r2));
  MatrixXcd A(D + L, M);
  VectorXd b(D + L);
  if (D > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(R_sd);
    require(eig.info() == Eigen::Success, "dbsm_magls: R_sd eigensolve failed");
    VectorXd ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    MatrixXcd root = eig.eigenvectors() * ev.asDiagonal() *
                     eig.eigenvectors().adjoint();
    A.topRows(D) = root * Vd.adjoint();
    b.head(D) = (root * h_d.conjugate()).cwiseAbs();
  }
  A.bottomRows(L) = sigma_r * Vr.adjoint();
  b.tail(L) = sigma_r * h_r.cwiseAbs();
  return detail::magls_core(A, b, sigma_n2, init_phase, tol, max_iter);
}

/// Renders a filter bank against STFT frames: p[t,f] = c(f)^H x[t,f].
inline TimeFreqSignal apply_bank(const BinauralFilterBank& bank,
                                 const TimeFreqSignal& capture) {
  require(bank.bins() == capture.bins(), "apply_bank: bin count mismatch");
  require(bank.mic_count() == capture.channels(), "apply_bank: channel mismatch");
  TimeFreqSignal out;
  out.fs = capture.fs;
  out.win_len = capture.win_len;
  out.hop = capture.hop;
  out.signal_len = capture.signal_len;
  out.chan.assign(2, MatrixXcd::Zero(capture.bins(), capture.frames()));
  for (int k = 0; k < capture.bins(); ++k)
    for (int m = 0; m < capture.channels(); ++m) {
      out.chan[0].row(k) += std::conj(bank.left(m, k)) *
                            capture.chan[static_cast<size_t>(m)].row(k);
      out.chan[1].row(k) += std::conj(bank.right(m, k)) *
                            capture.chan[static_cast<size_t>(m)].row(k);
    }
  return out;
}

inline MatrixXd render_binaural(const BinauralFilterBank& bank,
                                const TimeFreqSignal& capture) {
  return istft(apply_bank(bank, capture));
}

// ---------------------------------------------------------------------------
// Bank-level designs

/// Precomputed design-grid quantities shared by every method for one
/// array/HRTF/rotation combination.
struct DesignSetup {
  ArrayGeometry geom;
  std::shared_ptr<const HrtfSet> hrtf;
  SphereGrid grid;       // the L-point reverberant/design grid
  SteeringMatrix V;      // M x L per bin
  MatrixXcd Hl, Hr;      // L x bins
  VectorXd freqs;        // STFT bin centers
  double fs{48000.0};
  int win_len{1536};
  int hop{384};

  int mic_count() const { return geom.mic_count(); }
  int grid_size() const { return static_cast<int>(grid.dirs.size()); }
};

inline DesignSetup make_design_setup(const ArrayGeometry& geom,
                                     std::shared_ptr<const HrtfSet> hrtf,
                                     int grid_size = 400, double fs = 48000.0,
                                     int win_len = 1536, int hop = 384) {
  DesignSetup s;
  s.geom = geom;
  s.hrtf = std::move(hrtf);
  s.grid = nearly_uniform_grid(grid_size);
  s.fs = fs;
  s.win_len = win_len;
  s.hop = hop;
  const int bins = win_len / 2 + 1;
  s.freqs.resize(bins);
  for (int k = 0; k < bins; ++k) s.freqs(k) = k * fs / win_len;
  s.V = build_steering(geom, s.grid.dirs, s.freqs);
  HrtfMatrices H = hrtf_design_matrices(*s.hrtf, s.grid.dirs, s.freqs);
  s.Hl = std::move(H.left);
  s.Hr = std::move(H.right);
  return s;
}

/// Diffuse-field BSM bank: LS below the cutoff, MagLS at and above it.
inline BinauralFilterBank design_bsm(const DesignSetup& setup,
                                     const DesignParams& params = {}) {
  const int bins = static_cast<int>(setup.freqs.size());
  const int M = setup.mic_count();
  BinauralFilterBank bank;
  bank.method = RenderMethod::Bsm;
  bank.freqs = setup.freqs;
  bank.magls_cutoff_hz = params.magls_cutoff_hz;
  bank.snr_linear = params.snr_linear;
  bank.left.resize(M, bins);
  bank.right.resize(M, bins);
  parallel_for(bins, [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
    for (std::ptrdiff_t k = b0; k < b1; ++k) {
      const MatrixXcd& V = setup.V.values[static_cast<size_t>(k)];
      const VectorXcd hl = setup.Hl.col(static_cast<Eigen::Index>(k));
      const VectorXcd hr = setup.Hr.col(static_cast<Eigen::Index>(k));
      if (setup.freqs(static_cast<Eigen::Index>(k)) < params.magls_cutoff_hz) {
        bank.left.col(static_cast<Eigen::Index>(k)) = bsm_ls(V, hl, params.snr_linear);
        bank.right.col(static_cast<Eigen::Index>(k)) = bsm_ls(V, hr, params.snr_linear);
      } else {
        bank.left.col(static_cast<Eigen::Index>(k)) =
            mag_ls(V, hl, params.snr_linear, params.magls_init_phase_rad,
                   params.magls_tol, params.magls_max_iter)
                .c;
        bank.right.col(static_cast<Eigen::Index>(k)) =
            mag_ls(V, hr, params.snr_linear, params.magls_init_phase_rad,
                   params.magls_tol, params.magls_max_iter)
                .c;
      }
    }
  });
  return bank;
}

namespace detail {

struct DirectPart {
  std::vector<MatrixXcd> Vd;  // per-bin M x D
  MatrixXcd Hdl, Hdr;         // D x bins
};

inline DirectPart direct_part(const DesignSetup& setup,
                              const std::vector<Direction>& omega_d) {
  DirectPart dp;
  const int bins = static_cast<int>(setup.freqs.size());
  dp.Vd.resize(static_cast<size_t>(bins));
  if (omega_d.empty()) {
    for (auto& v : dp.Vd) v = MatrixXcd::Zero(setup.mic_count(), 0);
    dp.Hdl = MatrixXcd::Zero(0, bins);
    dp.Hdr = MatrixXcd::Zero(0, bins);
    return dp;
  }
  SteeringMatrix S = build_steering(setup.geom, omega_d, setup.freqs);
  for (int k = 0; k < bins; ++k) dp.Vd[static_cast<size_t>(k)] = S.values[static_cast<size_t>(k)];
  HrtfMatrices H = hrtf_design_matrices(*setup.hrtf, omega_d, setup.freqs);
  dp.Hdl = std::move(H.left);
  dp.Hdr = std::move(H.right);
  return dp;
}

}  // namespace detail

/// COMPASS-BSM: LCMV direct-path extraction composed with the BSM residual
/// renderer. The parametric path applies at every frequency.
inline BinauralFilterBank design_com(const DesignSetup& setup,
                                     const TimeFreqSignal& capture,
                                     const std::vector<Direction>& omega_d,
                                     const DesignParams& params = {},
                                     const BinauralFilterBank* bsm_bank = nullptr) {
  BinauralFilterBank base =
      bsm_bank ? *bsm_bank : design_bsm(setup, params);
  detail::DirectPart dp = detail::direct_part(setup, omega_d);
  SpatialCorrelation Rx = estimate_correlation(capture, params.smoothing_bins);
  std::vector<MatrixXcd> Wd = lcmv(dp.Vd, Rx);

  BinauralFilterBank bank = base;
  bank.method = RenderMethod::Com;
  const int bins = static_cast<int>(setup.freqs.size());
  parallel_for(bins, [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
    for (std::ptrdiff_t k = b0; k < b1; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      const auto ks = static_cast<size_t>(k);
      bank.left.col(ki) =
          com_filter(base.left.col(ki), dp.Vd[ks], Wd[ks], dp.Hdl.col(ki));
      bank.right.col(ki) =
          com_filter(base.right.col(ki), dp.Vd[ks], Wd[ks], dp.Hdr.col(ki));
    }
  });
  return bank;
}

/// Directional BSM: informed source statistics from the capture, LS form
/// below the cutoff and the weighted MagLS form at and above it.
inline BinauralFilterBank design_dbsm(const DesignSetup& setup,
                                      const TimeFreqSignal& capture,
                                      const std::vector<Direction>& omega_d,
                                      const DesignParams& params = {},
                                      double sigma_n2 = -1.0) {
  detail::DirectPart dp = detail::direct_part(setup, omega_d);
  SpatialCorrelation Rx = estimate_correlation(capture, params.smoothing_bins);
  std::vector<MatrixXcd> Wd = lcmv(dp.Vd, Rx);
  SourceStatistics stats = estimate_source_stats(capture, dp.Vd, Wd,
                                                 setup.grid_size(),
                                                 params.smoothing_bins);
  if (sigma_n2 <= 0.0) {
    double mean_tr = 0.0;
    for (const auto& R : Rx.R) mean_tr += R.trace().real();
    mean_tr /= static_cast<double>(Rx.R.size());
    sigma_n2 = 1e-4 * mean_tr / setup.mic_count();
  }
  stats.sigma_n2 = sigma_n2;

  BinauralFilterBank bank;
  bank.method = RenderMethod::Dbsm;
  bank.freqs = setup.freqs;
  bank.magls_cutoff_hz = params.magls_cutoff_hz;
  bank.snr_linear = params.snr_linear;
  const int bins = static_cast<int>(setup.freqs.size());
  bank.left.resize(setup.mic_count(), bins);
  bank.right.resize(setup.mic_count(), bins);
  parallel_for(bins, [&](std::ptrdiff_t b0, std::ptrdiff_t b1) {
    for (std::ptrdiff_t k = b0; k < b1; ++k) {
      const auto ki = static_cast<Eigen::Index>(k);
      const auto ks = static_cast<size_t>(k);
      const MatrixXcd& Vr = setup.V.values[ks];
      const MatrixXcd& Vd = dp.Vd[ks];
      const MatrixXcd& Rsd = stats.R_sd[ks];
      const double sr2 = stats.sigma_r2(ki);
      const VectorXcd hdl = dp.Hdl.col(ki), hdr = dp.Hdr.col(ki);
      const VectorXcd hl = setup.Hl.col(ki), hr = setup.Hr.col(ki);
      if (setup.freqs(ki) < params.magls_cutoff_hz) {
        bank.left.col(ki) = dbsm_filter(Vd, Vr, Rsd, sr2, sigma_n2, hdl, hl);
        bank.right.col(ki) = dbsm_filter(Vd, Vr, Rsd, sr2, sigma_n2, hdr, hr);
      } else {
        bank.left.col(ki) = dbsm_magls(Vd, Vr, Rsd, sr2, sigma_n2, hdl, hl,
                                       params.magls_init_phase_rad, params.magls_tol,
                                       params.magls_max_iter)
                                .c;
        bank.right.col(ki) = dbsm_magls(Vd, Vr, Rsd, sr2, sigma_n2, hdr, hr,
                                        params.magls_init_phase_rad, params.magls_tol,
                                        params.magls_max_iter)
                                 .c;
      }
    }
  });
  return bank;
}

}  // namespace bsm
