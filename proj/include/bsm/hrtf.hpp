// HRTF sets: measurement-grid HRIRs with SH-domain interpolation, plus the
// analytic rigid-sphere substitute used for testing and default pipelines.
#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "bsm/array.hpp"
#include "bsm/common.hpp"
#include "bsm/direction.hpp"
#include "bsm/fft.hpp"
#include "bsm/sph.hpp"

namespace bsm {

/// Rigid-sphere head model: ears on the surface at phi = +-90deg + offset.
/// Responses carry a common causal alignment delay so sampled HRIRs are
/// causal; the delay is identical for both ears and all directions.
struct AnalyticSphereModel {
  double radius{0.0875};
  double ear_azimuth_offset_deg{0.0};
  double align_delay_s{64.0 / 48000.0};

  Direction left_ear() const {
    return Direction::from_degrees(90.0, 90.0 + ear_azimuth_offset_deg);
  }
  Direction right_ear() const {
    return Direction::from_degrees(90.0, -90.0 + ear_azimuth_offset_deg);
  }

  /// (left, right) transfer values for a plane wave from `dir` at f.
  std::pair<cd, cd> response(const Direction& dir, double f_hz) const {
    if (f_hz == 0.0) return {cd(1.0, 0.0), cd(1.0, 0.0)};
    double k = wavenumber(f_hz);
    int ord = truncation_order(k, radius);
    auto b = rigid_sphere_radial_batch(ord, k, radius, radius);
    std::vector<double> pn(static_cast<size_t>(ord + 1));
    cd phase = std::polar(1.0, -kTwoPi * f_hz * align_delay_s);
    cd out[2];
    const Direction ears[2] = {left_ear(), right_ear()};
    for (int e = 0; e < 2; ++e) {
      legendre_all(ord, cos_angle(dir, ears[e]), pn.data());
      cd acc(0.0, 0.0);
      for (int n = 0; n <= ord; ++n)
        acc += b[static_cast<size_t>(n)] * ((2.0 * n + 1.0) / (4.0 * kPi)) *
               pn[static_cast<size_t>(n)];
      out[e] = acc * phase;
    }
    return {out[0], out[1]};
  }
};

/// SH-domain HRIRs: one complex coefficient impulse response per (n, m).
struct HrtfShCoeffs {
  MatrixXcd left;   // (order+1)^2 x taps
  MatrixXcd right;
  int order{0};
  double fs{48000.0};
};

/// Direction-indexed HRIR pairs with SH interpolation capability.
struct HrtfSet {
  std::vector<Direction> grid;
  MatrixXd hrir_left;   // grid_size x taps
  MatrixXd hrir_right;  // grid_size x taps
  double fs{48000.0};
  int sh_order{30};
  std::string source{"measured"};  // "measured" | "analytic-sphere"
  std::optional<AnalyticSphereModel> analytic;

  int grid_size() const { return static_cast<int>(grid.size()); }
  int taps() const { return static_cast<int>(hrir_left.cols()); }

  void validate() const {
    require(hrir_left.rows() == grid_size() && hrir_right.rows() == grid_size(),
            "HrtfSet: HRIR row count must match grid size");
    require(hrir_left.cols() == hrir_right.cols(),
            "HrtfSet: left/right impulse-response lengths differ");
    require(sh_order >= 0, "HrtfSet: sh_order must be >= 0");
  }

  // Cache of the SH projection; built on first use.
  mutable std::shared_ptr<const HrtfShCoeffs> sh_cache;
};

namespace detail {

/// Least-squares SH projection of grid values. Tikhonov loading is applied
/// only when the grid is borderline for the requested order (or the plain
/// normal equations fail).
class ShFitOperator {
 public:
  ShFitOperator(const std::vector<Direction>& grid, int order) {
    const int ncoef = sh_count(order);
    require(static_cast<int>(grid.size()) >= ncoef,
            "SH fit: grid too sparse for requested order (under-determined)");
    Y_ = sph_harmonics(order, grid);
    MatrixXcd gram = Y_.adjoint() * Y_;
    bool borderline = static_cast<int>(grid.size()) < ncoef + ncoef / 4;
    if (borderline) add_loading(gram);
    llt_.compute(gram);
    if (llt_.info() != Eigen::Success) {
      add_loading(gram);
      llt_.compute(gram);
      require(llt_.info() == Eigen::Success, "SH fit: normal equations singular");
    }
  }

  /// Coefficients for grid-sampled values (one column per sample set).
  MatrixXcd solve(const MatrixXcd& values) const {
    return llt_.solve(Y_.adjoint() * values);
  }

  const MatrixXcd& basis() const { return Y_; }

 private:
  void add_loading(MatrixXcd& gram) const {
    // lambda = 1e-6 * (largest singular value)^2 of Y, via power iteration.
    VectorXcd v = VectorXcd::Ones(gram.rows());
    v /= v.norm();
    double lam = 0.0;
    for (int it = 0; it < 12; ++it) {
      VectorXcd w = gram.selfadjointView<Eigen::Lower>() * v;
      lam = w.norm();
      if (lam == 0.0) break;
      v = w / lam;
    }
    gram.diagonal().array() += 1e-6 * lam;
  }

  MatrixXcd Y_;
  Eigen::LLT<MatrixXcd> llt_;
};

inline MatrixXcd dtft_kernel(int taps, double fs, const VectorXd& freqs) {
  MatrixXcd E(taps, freqs.size());
  for (Eigen::Index k = 0; k < freqs.size(); ++k)
    for (int t = 0; t < taps; ++t)
      E(t, k) = std::polar(1.0, -kTwoPi * freqs(k) * t / fs);
  return E;
}

}  // namespace detail

/// SH projection of the set's HRIRs at set.sh_order (cached on the set).
inline std::shared_ptr<const HrtfShCoeffs> hrtf_sh_project(const HrtfSet& set) {
  if (set.sh_cache) return set.sh_cache;
  set.validate();
  detail::ShFitOperator fit(set.grid, set.sh_order);
  auto coeffs = std::make_shared<HrtfShCoeffs>();
  coeffs->order = set.sh_order;
  coeffs->fs = set.fs;
  coeffs->left = fit.solve(set.hrir_left.cast<cd>());
  coeffs->right = fit.solve(set.hrir_right.cast<cd>());
  set.sh_cache = coeffs;
  return coeffs;
}

/// SH-interpolated HRTF values (left, right) at the targets for frequency f.
inline std::pair<VectorXcd, VectorXcd> hrtf_interpolate(
    const HrtfSet& set, const std::vector<Direction>& targets, double f_hz) {
  auto coeffs = hrtf_sh_project(set);
  VectorXd freqs(1);
  freqs << f_hz;
  MatrixXcd E = detail::dtft_kernel(set.taps(), set.fs, freqs);
  VectorXcd cl = coeffs->left * E.col(0);
  VectorXcd cr = coeffs->right * E.col(0);
  MatrixXcd Y = sph_harmonics(set.sh_order, targets);
  return {Y * cl, Y * cr};
}

/// HRTF values on a direction list over a frequency grid, [dirs x freqs] per
/// ear. Uses the exact analytic model when available, otherwise the SH fit.
struct HrtfMatrices {
  MatrixXcd left;
  MatrixXcd right;
};

inline HrtfMatrices hrtf_design_matrices(const HrtfSet& set,
                                         const std::vector<Direction>& dirs,
                                         const VectorXd& freqs) {
  HrtfMatrices out;
  const Eigen::Index L = static_cast<Eigen::Index>(dirs.size());
  out.left.resize(L, freqs.size());
  out.right.resize(L, freqs.size());
  if (set.analytic) {
    const auto& model = *set.analytic;
    ArrayGeometry ears;
    ears.sphere_radius = model.radius;
    ears.mic_directions = {model.left_ear(), model.right_ear()};
    SteeringMatrix S = build_steering(ears, dirs, freqs);
    for (Eigen::Index k = 0; k < freqs.size(); ++k) {
      cd phase = std::polar(1.0, -kTwoPi * freqs(k) * model.align_delay_s);
      out.left.col(k) = S.values[static_cast<size_t>(k)].row(0).transpose() * phase;
      out.right.col(k) = S.values[static_cast<size_t>(k)].row(1).transpose() * phase;
    }
    return out;
  }
  auto coeffs = hrtf_sh_project(set);
  MatrixXcd E = detail::dtft_kernel(set.taps(), set.fs, freqs);
  MatrixXcd Y = sph_harmonics(set.sh_order, dirs);
  out.left = Y * (coeffs->left * E);
  out.right = Y * (coeffs->right * E);
  return out;
}

/// HRTF pair for a single direction over a frequency grid (2 x freqs rows).
inline HrtfMatrices hrtf_at(const HrtfSet& set, const Direction& dir,
                            const VectorXd& freqs) {
  return hrtf_design_matrices(set, {dir}, freqs);
}

/// Builds the analytic-sphere HRTF set: model plus sampled HRIRs on a
/// nearly-uniform grid (dense enough for the order-30 fit).
inline HrtfSet make_analytic_hrtf(double radius_m = 0.0875,
                                  double ear_offset_deg = 0.0,
                                  int grid_count = 1600, int taps = 512,
                                  double fs = 48000.0) {
  require(radius_m > 0.0, "make_analytic_hrtf: radius must be positive");
  require(taps >= 64 && taps % 2 == 0, "make_analytic_hrtf: taps must be even and >= 64");
  HrtfSet set;
  set.fs = fs;
  set.sh_order = 30;
  set.source = "analytic-sphere";
  AnalyticSphereModel model;
  model.radius = radius_m;
  model.ear_azimuth_offset_deg = ear_offset_deg;
  model.align_delay_s = 64.0 / fs;
  set.analytic = model;
  SphereGrid grid = nearly_uniform_grid(grid_count);
  set.grid = grid.dirs;

  const int bins = taps / 2 + 1;
  VectorXd freqs(bins);
  for (int k = 0; k < bins; ++k) freqs(k) = k * fs / taps;
  HrtfMatrices H = hrtf_design_matrices(set, set.grid, freqs);

  set.hrir_left.resize(grid_count, taps);
  set.hrir_right.resize(grid_count, taps);
  RealFft plan(taps);
  for (int g = 0; g < grid_count; ++g) {
    set.hrir_left.row(g) = plan.inverse(H.left.row(g).transpose()).transpose();
    set.hrir_right.row(g) = plan.inverse(H.right.row(g).transpose()).transpose();
  }
  return set;
}

}  // namespace bsm
