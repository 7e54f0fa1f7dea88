// Frequency-domain scene synthesis: plane-wave mixtures with exact
// non-integer delays rendered to rigid-sphere receivers (array microphones,
// analytic ears) and to SH-domain reference binaural signals.
#pragma once

#include <array>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "bsm/array.hpp"
#include "bsm/common.hpp"
#include "bsm/fft.hpp"
#include "bsm/hrtf.hpp"
#include "bsm/room.hpp"

namespace bsm {

/// A receiver whose plane-wave response depends only on the angle to its
/// axis: a microphone or an ear on a rigid sphere. sphere_radius == 0 gives
/// the unity (omni, free-field) response at every frequency.
struct PlaneWaveChannel {
  Direction axis;
  double sphere_radius{0.0};
  double extra_delay_s{0.0};
};

struct SynthOptions {
  int exact_pair_limit{4096};  // direct series evaluation below this many pairs
  int table_size{4097};        // u-grid resolution of the interpolated path
  int tail_pad{96};            // output samples appended after the last image
  bool full_buffer{false};     // return the whole circular FFT buffer
  int threads{0};
};

namespace detail {

struct InterpStencil {
  int base;
  std::array<double, 4> w;
};

inline InterpStencil make_stencil(double u, int table_size) {
  double x = (u + 1.0) * 0.5 * (table_size - 1);
  int i = static_cast<int>(std::floor(x));
  i = std::clamp(i, 1, table_size - 3);
  double t = x - i;
  InterpStencil s;
  s.base = i - 1;
  s.w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
  s.w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  s.w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
  s.w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
  return s;
}

struct RadiusGroup {
  double radius{0.0};
  int nmax{0};
  std::vector<int> channels;              // channel indices in this group
  std::vector<std::pair<int, int>> pairs; // (image, channel) in image-major order
  bool exact{true};
  MatrixXd pair_table;                    // exact route: P_n per pair
  std::vector<InterpStencil> stencils;    // table route: one per pair
  MatrixXd u_table;                       // table route: P_n on the u grid
};

}  // namespace detail

/// Renders the plane-wave mixture to every channel. Output is
/// channels x Tout where Tout covers the signal plus the longest delay.
inline MatrixXd synth_plane_waves(const ImageSourceSet& images,
                                  const std::vector<PlaneWaveChannel>& channels,
                                  const VectorXd& signal, double fs,
                                  const SynthOptions& opts = {}) {
  require(!images.entries.empty(), "synth_plane_waves: empty image set");
  require(signal.size() > 0, "synth_plane_waves: empty signal");
  require(!channels.empty(), "synth_plane_waves: no channels");
  const int num_ch = static_cast<int>(channels.size());
  const int num_img = static_cast<int>(images.entries.size());

  double max_delay = 0.0, max_extra = 0.0;
  for (const auto& e : images.entries) max_delay = std::max(max_delay, e.delay_s);
  for (const auto& c : channels) max_extra = std::max(max_extra, c.extra_delay_s);
  int tout = static_cast<int>(signal.size()) +
             static_cast<int>(std::ceil((max_delay + max_extra) * fs)) +
             opts.tail_pad;
  const int nfft = next_pow2(tout);
  if (opts.full_buffer) tout = nfft;
  const int bins = nfft / 2 + 1;
  const double df = fs / nfft;

  RealFft plan(nfft);
  const VectorXcd S = plan.forward(signal);

  // Group channels by sphere radius; each group shares radial terms.
  std::map<double, detail::RadiusGroup> group_map;
  for (int c = 0; c < num_ch; ++c)
    group_map[channels[static_cast<size_t>(c)].sphere_radius].channels.push_back(c);
  std::vector<detail::RadiusGroup> groups;
  const double kmax = wavenumber(fs / 2.0);
  for (auto& [radius, g] : group_map) {
    g.radius = radius;
    g.nmax = radius > 0.0 ? truncation_order(kmax, radius) : 0;
    for (int img = 0; img < num_img; ++img)
      for (int c : g.channels) g.pairs.emplace_back(img, c);
    g.exact = static_cast<int>(g.pairs.size()) <= opts.exact_pair_limit;
    if (radius == 0.0) g.exact = true;  // unity response, no table needed
    std::vector<double> pn(static_cast<size_t>(g.nmax + 1));
    if (g.exact) {
      g.pair_table.resize(static_cast<Eigen::Index>(g.pairs.size()), g.nmax + 1);
      for (size_t p = 0; p < g.pairs.size(); ++p) {
        const auto& [img, c] = g.pairs[p];
        double u = cos_angle(images.entries[static_cast<size_t>(img)].direction,
                             channels[static_cast<size_t>(c)].axis);
        legendre_all(g.nmax, u, pn.data());
        for (int n = 0; n <= g.nmax; ++n)
          g.pair_table(static_cast<Eigen::Index>(p), n) = pn[static_cast<size_t>(n)];
      }
    } else {
      const int ts = opts.table_size;
      g.u_table.resize(ts, g.nmax + 1);
      for (int i = 0; i < ts; ++i) {
        double u = -1.0 + 2.0 * i / (ts - 1);
        legendre_all(g.nmax, u, pn.data());
        for (int n = 0; n <= g.nmax; ++n) g.u_table(i, n) = pn[static_cast<size_t>(n)];
      }
      g.stencils.reserve(g.pairs.size());
      for (const auto& [img, c] : g.pairs) {
        double u = cos_angle(images.entries[static_cast<size_t>(img)].direction,
                             channels[static_cast<size_t>(c)].axis);
        g.stencils.push_back(detail::make_stencil(u, ts));
      }
    }
    groups.push_back(std::move(g));
  }

  MatrixXcd X = MatrixXcd::Zero(num_ch, bins);
  parallel_for(
      bins,
      [&](std::ptrdiff_t k0, std::ptrdiff_t k1) {
        std::vector<cd> phasor(static_cast<size_t>(num_img));
        std::vector<cd> phasor_step(static_cast<size_t>(num_img));
        for (int i = 0; i < num_img; ++i) {
          const auto& e = images.entries[static_cast<size_t>(i)];
          phasor[static_cast<size_t>(i)] =
              e.gain * std::polar(1.0, -kTwoPi * (df * static_cast<double>(k0)) * e.delay_s);
          phasor_step[static_cast<size_t>(i)] = std::polar(1.0, -kTwoPi * df * e.delay_s);
        }
        std::vector<cd> gval;
        std::vector<cd> acc(static_cast<size_t>(num_ch));
        VectorXd br, bi;
        VectorXd gr, gi, tr, ti;
        for (std::ptrdiff_t k = k0; k < k1; ++k) {
          const double f = df * static_cast<double>(k);
          std::fill(acc.begin(), acc.end(), cd(0.0, 0.0));
          for (const auto& g : groups) {
            const int nmax = g.nmax;
            VectorXcd btilde(nmax + 1);
            if (g.radius > 0.0) {
              int ord = std::min(nmax, truncation_order(wavenumber(f), g.radius));
              auto b = rigid_sphere_radial_batch(ord, wavenumber(f), g.radius, g.radius);
              btilde.setZero();
              for (int n = 0; n <= ord; ++n)
                btilde(n) = b[static_cast<size_t>(n)] * ((2.0 * n + 1.0) / (4.0 * kPi));
            } else {
              btilde.setZero();
              btilde(0) = 1.0;  // omni unity channel
            }
            br = btilde.real();
            bi = btilde.imag();
            if (g.exact) {
              gr = g.pair_table * br;
              gi = g.pair_table * bi;
              for (size_t p = 0; p < g.pairs.size(); ++p) {
                const auto& [img, c] = g.pairs[p];
                acc[static_cast<size_t>(c)] +=
                    phasor[static_cast<size_t>(img)] *
                    cd(gr(static_cast<Eigen::Index>(p)), gi(static_cast<Eigen::Index>(p)));
              }
            } else {
              tr = g.u_table * br;
              ti = g.u_table * bi;
              for (size_t p = 0; p < g.pairs.size(); ++p) {
                const auto& st = g.stencils[p];
                double vr = 0.0, vi = 0.0;
                for (int j = 0; j < 4; ++j) {
                  vr += st.w[static_cast<size_t>(j)] * tr(st.base + j);
                  vi += st.w[static_cast<size_t>(j)] * ti(st.base + j);
                }
                const auto& [img, c] = g.pairs[p];
                acc[static_cast<size_t>(c)] += phasor[static_cast<size_t>(img)] * cd(vr, vi);
              }
            }
          }
          for (int c = 0; c < num_ch; ++c) {
            cd extra = channels[static_cast<size_t>(c)].extra_delay_s != 0.0
                           ? std::polar(1.0, -kTwoPi * f *
                                                 channels[static_cast<size_t>(c)].extra_delay_s)
                           : cd(1.0, 0.0);
            X(c, static_cast<Eigen::Index>(k)) = S(static_cast<Eigen::Index>(k)) *
                                                 acc[static_cast<size_t>(c)] * extra;
          }
          for (int i = 0; i < num_img; ++i)
            phasor[static_cast<size_t>(i)] *= phasor_step[static_cast<size_t>(i)];
        }
      },
      opts.threads);

  // Nyquist bin must stay real for the c2r transform.
  for (int c = 0; c < num_ch; ++c) X(c, bins - 1) = X(c, bins - 1).real();

  MatrixXd out(num_ch, tout);
  for (int c = 0; c < num_ch; ++c) {
    VectorXd t = plan.inverse(X.row(c).transpose());
    out.row(c) = t.head(tout).transpose();
  }
  return out;
}

/// White Gaussian noise via Box-Muller on a seeded mt19937_64 (deterministic
/// across standard libraries).
inline void add_white_noise(MatrixXd& x, double sigma, uint64_t seed) {
  if (sigma <= 0.0) return;
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  for (Eigen::Index c = 0; c < x.rows(); ++c)
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
      double u1 = uniform(), u2 = uniform();
      x(c, t) += sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }
}

/// Microphone capture of the image set: x_m(f) = sum_i g_i e^{-j2pi f tau_i}
/// v_m(Omega_i, f) s(f), plus white noise at snr_db relative to the
/// direct-path power averaged over microphones.
inline MatrixXd synth_mic_signals(const ImageSourceSet& images,
                                  const ArrayGeometry& geom, const VectorXd& signal,
                                  double fs, double snr_db,
                                  uint64_t seed = 0x5eed,
                                  const SynthOptions& opts = {}) {
  std::vector<PlaneWaveChannel> channels;
  for (const auto& d : geom.rotated_mics())
    channels.push_back({d, geom.sphere_radius, 0.0});
  MatrixXd x = synth_plane_waves(images, channels, signal, fs, opts);
  if (std::isfinite(snr_db)) {
    // SNR defined against the direct-path power averaged over microphones.
    ImageSourceSet direct;
    direct.entries.push_back(images.entries.front());
    MatrixXd xd = synth_plane_waves(direct, channels, signal, fs, opts);
    double sig_power = xd.array().square().mean();
    double noise_var = sig_power * std::pow(10.0, -snr_db / 10.0);
    add_white_noise(x, std::sqrt(noise_var), seed);
  }
  return x;
}

namespace detail {

/// Binaural rendering from SH coefficient impulse responses (left/right),
/// exact per-image phasors with the interpolated HRTF spectrum.
inline MatrixXd binaural_from_coeffs(const ImageSourceSet& images,
                                     const MatrixXcd& coef_left,
                                     const MatrixXcd& coef_right, int order,
                                     double fs_hrtf, const VectorXd& signal,
                                     double fs, const SynthOptions& opts) {
  require(fs_hrtf == fs, "binaural_from_coeffs: HRIR and signal rates differ");
  const int num_img = static_cast<int>(images.entries.size());
  const int taps = static_cast<int>(coef_left.cols());
  double max_delay = 0.0;
  for (const auto& e : images.entries) max_delay = std::max(max_delay, e.delay_s);
  const int tout = static_cast<int>(signal.size()) +
                   static_cast<int>(std::ceil(max_delay * fs)) + taps + opts.tail_pad;
  const int nfft = next_pow2(tout);
  const int bins = nfft / 2 + 1;
  const double df = fs / nfft;
  RealFft plan(nfft);
  const VectorXcd S = plan.forward(signal);

  std::vector<Direction> dirs;
  dirs.reserve(static_cast<size_t>(num_img));
  for (const auto& e : images.entries) dirs.push_back(e.direction);
  MatrixXcd Y = sph_harmonics(order, dirs);  // num_img x (order+1)^2

  // Per-image SH-interpolated HRIRs, then exact phasor accumulation.
  MatrixXcd P = MatrixXcd::Zero(2, bins);
  RealFft hr_plan(nfft);
  MatrixXcd Himg(2, bins);
  VectorXd hrir(nfft);
  for (int i = 0; i < num_img; ++i) {
    for (int ear = 0; ear < 2; ++ear) {
      const MatrixXcd& coef = ear == 0 ? coef_left : coef_right;
      VectorXcd h_t = coef.transpose() * Y.row(i).transpose();  // taps, ~real
      hrir.setZero();
      for (int t = 0; t < taps; ++t) hrir(t) = h_t(t).real();
      Himg.row(ear) = hr_plan.forward(hrir).transpose();
    }
    const auto& e = images.entries[static_cast<size_t>(i)];
    cd z = e.gain * cd(1.0, 0.0);
    cd step = std::polar(1.0, -kTwoPi * df * e.delay_s);
    for (int k = 0; k < bins; ++k) {
      P(0, k) += z * Himg(0, k);
      P(1, k) += z * Himg(1, k);
      z *= step;
    }
  }
  for (int ear = 0; ear < 2; ++ear) {
    for (int k = 0; k < bins; ++k) P(ear, k) *= S(k);
    P(ear, bins - 1) = P(ear, bins - 1).real();
  }
  MatrixXd out(2, tout);
  for (int ear = 0; ear < 2; ++ear)
    out.row(ear) = plan.inverse(P.row(ear).transpose()).head(tout).transpose();
  return out;
}

/// Large image sets: SH-domain RIRs with Kaiser-windowed sinc fractional
/// delays, convolved with the coefficient impulse responses.
inline MatrixXd binaural_from_coeffs_sinc(const ImageSourceSet& images,
                                          const MatrixXcd& coef_left,
                                          const MatrixXcd& coef_right, int order,
                                          const VectorXd& signal, double fs,
                                          const SynthOptions& opts) {
  const int taps = static_cast<int>(coef_left.cols());
  const int ncoef = sh_count(order);
  double max_delay = 0.0;
  for (const auto& e : images.entries) max_delay = std::max(max_delay, e.delay_s);
  const int sinc_half = 64;
  const int rir_len = static_cast<int>(std::ceil(max_delay * fs)) + 2 * sinc_half + 4;
  const int tout = static_cast<int>(signal.size()) + rir_len + taps + opts.tail_pad;
  const int nfft = next_pow2(tout);
  const int bins = nfft / 2 + 1;
  RealFft plan(nfft);
  const VectorXcd S = plan.forward(signal);

  std::vector<Direction> dirs;
  for (const auto& e : images.entries) dirs.push_back(e.direction);
  MatrixXcd Y = sph_harmonics(order, dirs);

  auto bessel_i0 = [](double v) {
    double sum = 1.0, term = 1.0;
    for (int m = 1; m < 60; ++m) {
      term *= (v / (2.0 * m)) * (v / (2.0 * m));
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    return sum;
  };
  const double kaiser_beta = 12.0;
  const double kaiser_norm = 1.0 / bessel_i0(kaiser_beta);
  auto frac_sinc = [&](double dt) {
    double x = dt / sinc_half;
    double arg = 1.0 - x * x;
    if (arg < 0.0) return 0.0;
    double s = dt == 0.0 ? 1.0 : std::sin(kPi * dt) / (kPi * dt);
    return s * bessel_i0(kaiser_beta * std::sqrt(arg)) * kaiser_norm;
  };

  MatrixXcd P = MatrixXcd::Zero(2, bins);
  std::mutex acc_mutex;
  parallel_for(ncoef, [&](std::ptrdiff_t c0, std::ptrdiff_t c1) {
    RealFft local(nfft);
    MatrixXcd Plocal = MatrixXcd::Zero(2, bins);
    VectorXd rir_re(nfft), rir_im(nfft), ir(nfft);
    for (std::ptrdiff_t nm = c0; nm < c1; ++nm) {
      // rho_nm(t) = sum_i g_i Y_nm(dir_i) delta(t - tau_i), complex weights.
      rir_re.setZero();
      rir_im.setZero();
      for (size_t i = 0; i < images.entries.size(); ++i) {
        const auto& e = images.entries[i];
        cd w = e.gain * Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nm));
        if (w == cd(0.0, 0.0)) continue;
        double t_center = e.delay_s * fs;
        int t0 = static_cast<int>(std::floor(t_center)) - sinc_half + 1;
        for (int t = 0; t < 2 * sinc_half; ++t) {
          int idx = t0 + t;
          if (idx < 0 || idx >= nfft) continue;
          double tap = frac_sinc(idx - t_center);
          rir_re(idx) += w.real() * tap;
          rir_im(idx) += w.imag() * tap;
        }
      }
      VectorXcd Rre = local.forward(rir_re);
      VectorXcd Rim = local.forward(rir_im);
      for (int ear = 0; ear < 2; ++ear) {
        const MatrixXcd& coef = ear == 0 ? coef_left : coef_right;
        ir.setZero();
        for (int t = 0; t < taps; ++t) ir(t) = coef(static_cast<Eigen::Index>(nm), t).real();
        VectorXcd Cre = local.forward(ir);
        ir.setZero();
        for (int t = 0; t < taps; ++t) ir(t) = coef(static_cast<Eigen::Index>(nm), t).imag();
        VectorXcd Cim = local.forward(ir);
        for (int k = 0; k < bins; ++k) {
          cd A = Rre(k) + cd(0, 1) * Rim(k);
          cd C = Cre(k) + cd(0, 1) * Cim(k);
          Plocal(ear, k) += A * C;
        }
      }
    }
    std::lock_guard<std::mutex> lock(acc_mutex);
    P += Plocal;
  });
  for (int ear = 0; ear < 2; ++ear) {
    for (int k = 0; k < bins; ++k) P(ear, k) *= S(k);
    P(ear, bins - 1) = P(ear, bins - 1).real();
  }
  MatrixXd out(2, tout);
  for (int ear = 0; ear < 2; ++ear)
    out.row(ear) = plan.inverse(P.row(ear).transpose()).head(tout).transpose();
  return out;
}

}  // namespace detail

/// Reference binaural signals: the exact plane-wave HRTF sum. The analytic
/// model uses the zonal engine; measured sets contract the order-30 SH
/// projection (identical algebra). head_rotation_deg rotates the listener
/// head against the scene.
inline MatrixXd synth_reference_binaural(const ImageSourceSet& images,
                                         const HrtfSet& hrtf, const VectorXd& signal,
                                         double fs, double head_rotation_deg = 0.0,
                                         const SynthOptions& opts = {}) {
  require(!images.entries.empty(), "synth_reference_binaural: empty image set");
  ImageSourceSet rotated = images;
  if (head_rotation_deg != 0.0)
    for (auto& e : rotated.entries)
      e.direction = rotate_azimuth(e.direction, -head_rotation_deg);
  if (hrtf.analytic) {
    const auto& model = *hrtf.analytic;
    std::vector<PlaneWaveChannel> ears = {
        {model.left_ear(), model.radius, model.align_delay_s},
        {model.right_ear(), model.radius, model.align_delay_s}};
    return synth_plane_waves(rotated, ears, signal, fs, opts);
  }
  auto coeffs = hrtf_sh_project(hrtf);
  if (static_cast<int>(rotated.entries.size()) <= 64)
    return detail::binaural_from_coeffs(rotated, coeffs->left, coeffs->right,
                                        coeffs->order, hrtf.fs, signal, fs, opts);
  return detail::binaural_from_coeffs_sinc(rotated, coeffs->left, coeffs->right,
                                           coeffs->order, signal, fs, opts);
}

/// Alternate reference path: order-limited HOA rendering (default order 14).
inline MatrixXd synth_reference_hoa(const ImageSourceSet& images, const HrtfSet& hrtf,
                                    const VectorXd& signal, double fs,
                                    int hoa_order = 14, double head_rotation_deg = 0.0,
                                    const SynthOptions& opts = {}) {
  require(!images.entries.empty(), "synth_reference_hoa: empty image set");
  ImageSourceSet rotated = images;
  if (head_rotation_deg != 0.0)
    for (auto& e : rotated.entries)
      e.direction = rotate_azimuth(e.direction, -head_rotation_deg);
  auto coeffs = hrtf_sh_project(hrtf);
  require(hoa_order <= coeffs->order, "synth_reference_hoa: order above the HRTF fit");
  MatrixXcd cl = coeffs->left.topRows(sh_count(hoa_order));
  MatrixXcd cr = coeffs->right.topRows(sh_count(hoa_order));
  if (static_cast<int>(rotated.entries.size()) <= 64)
    return detail::binaural_from_coeffs(rotated, cl, cr, hoa_order, hrtf.fs, signal,
                                        fs, opts);
  return detail::binaural_from_coeffs_sinc(rotated, cl, cr, hoa_order, signal, fs,
                                           opts);
}

/// Omnidirectional room impulse response at the array center (exact delays).
inline VectorXd omni_rir(const ImageSourceSet& images, double fs, double length_s) {
  require(!images.entries.empty(), "omni_rir: empty image set");
  VectorXd impulse = VectorXd::Zero(8);
  impulse(0) = 1.0;
  std::vector<PlaneWaveChannel> omni = {{Direction(), 0.0, 0.0}};
  MatrixXd r = synth_plane_waves(images, omni, impulse, fs);
  int want = static_cast<int>(length_s * fs);
  VectorXd out = VectorXd::Zero(want);
  int n = std::min<int>(want, static_cast<int>(r.cols()));
  out.head(n) = r.row(0).head(n).transpose();
  return out;
}

}  // namespace bsm
