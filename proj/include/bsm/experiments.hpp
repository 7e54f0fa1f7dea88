// Experiment drivers: scenario rendering with NMSE reporting, source-azimuth
// sweeps with ITD/ILD analysis, off-source analysis and directional-error
// maps. Every report row carries full provenance.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bsm/config.hpp"
#include "bsm/correlation.hpp"
#include "bsm/filters.hpp"
#include "bsm/io.hpp"
#include "bsm/metrics.hpp"
#include "bsm/room.hpp"
#include "bsm/stft.hpp"
#include "bsm/synth.hpp"

namespace bsm {

constexpr double kItdJndSeconds = 100e-6;
constexpr double kIldJndDb = 1.0;
constexpr double kNmseFloorDb = -120.0;

struct MetricRow {
  std::string scenario_id;
  std::string method;
  double rotation_deg{0.0};
  double doa_err_az_deg{0.0};
  double doa_err_el_deg{0.0};
  uint64_t seed{0};
  std::string kind;  // nmse | sweep | offsource | dirmap
  double frequency_hz{std::nan("")};
  double azimuth_deg{std::nan("")};
  double elevation_deg{std::nan("")};
  double nmse_left_db{std::nan("")};
  double nmse_right_db{std::nan("")};
  double itd_us{std::nan("")};
  double itd_ref_us{std::nan("")};
  double itd_err_us{std::nan("")};
  int itd_within_jnd{-1};
  double ild_db{std::nan("")};
  double ild_ref_db{std::nan("")};
  double ild_err_db{std::nan("")};
  int ild_within_jnd{-1};
  double direrr_left{std::nan("")};
  double direrr_right{std::nan("")};
};

struct MetricReport {
  std::vector<MetricRow> rows;

  void write_csv(const std::string& path) const {
    CsvWriter csv({"scenario", "method", "rotation_deg", "doa_err_az_deg",
                   "doa_err_el_deg", "seed", "kind", "frequency_hz", "azimuth_deg",
                   "elevation_deg", "nmse_left_db", "nmse_right_db", "itd_us",
                   "itd_ref_us", "itd_err_us", "itd_within_jnd", "ild_db",
                   "ild_ref_db", "ild_err_db", "ild_within_jnd", "direrr_left",
                   "direrr_right"});
    auto cell = [](double v) { return std::isnan(v) ? std::string() : CsvWriter::num(v); };
    auto flag = [](int v) { return v < 0 ? std::string() : std::to_string(v); };
    for (const auto& r : rows)
      csv.add_row({r.scenario_id, r.method, CsvWriter::num(r.rotation_deg),
                   CsvWriter::num(r.doa_err_az_deg), CsvWriter::num(r.doa_err_el_deg),
                   std::to_string(r.seed), r.kind, cell(r.frequency_hz),
                   cell(r.azimuth_deg), cell(r.elevation_deg), cell(r.nmse_left_db),
                   cell(r.nmse_right_db), cell(r.itd_us), cell(r.itd_ref_us),
                   cell(r.itd_err_us), flag(r.itd_within_jnd), cell(r.ild_db),
                   cell(r.ild_ref_db), cell(r.ild_err_db), flag(r.ild_within_jnd),
                   cell(r.direrr_left), cell(r.direrr_right)});
    csv.write(path);
  }
};

// ---------------------------------------------------------------------------

struct SceneArtifacts {
  ImageSourceSet images;
  MatrixXd mic_time;        // M x T
  TimeFreqSignal mic_tf;
  MatrixXd reference;       // 2 x T (exact HRTF-sum path)
  VectorXd source;
  Direction omega_d;        // true direct DOA
  double sigma_n2_stft{-1.0};  // implied per-bin noise variance, <0 if unknown
};

/// Simulates one room scenario end to end at the configured desk scale.
inline SceneArtifacts simulate_scene(const ExperimentConfig& cfg,
                                     const ArrayGeometry& geom, const HrtfSet& hrtf,
                                     uint64_t noise_salt = 0) {
  Scenario scn = cfg.scenario;
  scn.t60_s = cfg.effective_t60();
  scn.duration_s = cfg.effective_duration();
  scn.head_rotation_deg = cfg.rotation_deg;
  SceneArtifacts art;
  // The source realization is tied to the scenario identity so that
  // noise-free runs carry no seed dependence; cfg.seed drives only the noise.
  uint64_t source_seed = 0xcbf29ce484222325ull;
  for (char ch : scn.id) source_seed = (source_seed ^ static_cast<uint8_t>(ch)) * 0x100000001b3ull;
  art.source = resolve_source_signal(cfg.source, scn.duration_s, scn.fs, source_seed);
  art.images = image_sources(scn, cfg.effective_max_order());
  art.omega_d = art.images.entries.front().direction;
  const int M = geom.mic_count();
  std::vector<PlaneWaveChannel> channels;
  for (const auto& d : geom.rotated_mics())
    channels.push_back({d, geom.sphere_radius, 0.0});
  if (hrtf.analytic) {
    // Microphones and analytic ears rendered in one pass over the images.
    channels.push_back(
        {hrtf.analytic->left_ear(), hrtf.analytic->radius, hrtf.analytic->align_delay_s});
    channels.push_back(
        {hrtf.analytic->right_ear(), hrtf.analytic->radius, hrtf.analytic->align_delay_s});
    MatrixXd all = synth_plane_waves(art.images, channels, art.source, scn.fs);
    art.mic_time = all.topRows(M);
    art.reference = all.bottomRows(2);
    channels.resize(static_cast<size_t>(M));
  } else {
    art.mic_time = synth_plane_waves(art.images, channels, art.source, scn.fs);
    art.reference = synth_reference_binaural(art.images, hrtf, art.source, scn.fs);
  }
  if (std::isfinite(scn.snr_db)) {
    ImageSourceSet direct;
    direct.entries.push_back(art.images.entries.front());
    MatrixXd xd = synth_plane_waves(direct, channels, art.source, scn.fs);
    double noise_var =
        xd.array().square().mean() * std::pow(10.0, -scn.snr_db / 10.0);
    art.sigma_n2_stft = noise_var * bartlett_window(1536).squaredNorm();
    add_white_noise(art.mic_time, std::sqrt(noise_var),
                    cfg.seed * 0x9e3779b97f4a7c15ull + noise_salt);
  }
  art.mic_tf = stft(art.mic_time, scn.fs);
  return art;
}

/// The direct DOA handed to the informed designs (true DOA + assumed error).
inline std::vector<Direction> assumed_doa(const SceneArtifacts& art,
                                          const ExperimentConfig& cfg) {
  Direction d = art.omega_d;
  double theta = d.theta + deg2rad(cfg.doa_error_el_deg);
  theta = std::clamp(theta, 0.0, kPi);
  return {Direction(theta, d.phi + deg2rad(cfg.doa_error_az_deg))};
}

inline DesignParams design_params(const ExperimentConfig& cfg) {
  DesignParams p;
  p.snr_linear = std::pow(10.0, cfg.design_snr_db / 10.0);
  p.magls_cutoff_hz = cfg.magls_cutoff_hz;
  p.smoothing_bins = cfg.smoothing_bins;
  return p;
}

/// Designs one method's bank against a simulated scene. The BSM bank is
/// capture-independent; pass it in to avoid redesigning per scene.
inline BinauralFilterBank design_method(RenderMethod method, const DesignSetup& setup,
                                        const SceneArtifacts& art,
                                        const ExperimentConfig& cfg,
                                        const BinauralFilterBank* bsm_cache = nullptr) {
  DesignParams params = design_params(cfg);
  switch (method) {
    case RenderMethod::Bsm:
      return bsm_cache ? *bsm_cache : design_bsm(setup, params);
    case RenderMethod::Com:
      return design_com(setup, art.mic_tf, assumed_doa(art, cfg), params, bsm_cache);
    case RenderMethod::Dbsm:
      return design_dbsm(setup, art.mic_tf, assumed_doa(art, cfg), params,
                         art.sigma_n2_stft);
    default:
      throw std::invalid_argument("design_method: REFERENCE has no filter bank");
  }
}

namespace detail {

/// Per-bin NMSE (dB) between rendered and reference binaural signals,
/// aggregated over STFT frames: sum_t |P - Pref|^2 / sum_t |Pref|^2 below
/// the cutoff and the magnitude version at and above it.
inline std::pair<VectorXd, VectorXd> nmse_per_bin(const MatrixXd& rendered,
                                                  const MatrixXd& reference,
                                                  double fs, double cutoff_hz) {
  const int n = static_cast<int>(std::min(rendered.cols(), reference.cols()));
  TimeFreqSignal A = stft(rendered.leftCols(n), fs);
  TimeFreqSignal B = stft(reference.leftCols(n), fs);
  VectorXd out[2];
  for (int ear = 0; ear < 2; ++ear) {
    out[ear] = VectorXd::Constant(A.bins(), std::nan(""));
    for (int k = 0; k < A.bins(); ++k) {
      double num = 0.0, den = 0.0;
      bool mag_branch = A.bin_hz(k) >= cutoff_hz;
      for (int t = 0; t < A.frames(); ++t) {
        cd p = A.chan[static_cast<size_t>(ear)](k, t);
        cd r = B.chan[static_cast<size_t>(ear)](k, t);
        if (mag_branch) {
          double d = std::abs(p) - std::abs(r);
          num += d * d;
        } else {
          num += std::norm(p - r);
        }
        den += std::norm(r);
      }
      if (den > 0.0)
        out[ear](k) = std::max(10.0 * std::log10(num / den), kNmseFloorDb);
    }
  }
  return {out[0], out[1]};
}

inline MetricRow base_row(const ExperimentConfig& cfg, RenderMethod method,
                          const std::string& kind) {
  MetricRow row;
  row.scenario_id = cfg.scenario.id;
  row.method = method_name(method);
  row.rotation_deg = cfg.rotation_deg;
  row.doa_err_az_deg = cfg.doa_error_az_deg;
  row.doa_err_el_deg = cfg.doa_error_el_deg;
  row.seed = cfg.seed;
  row.kind = kind;
  return row;
}

}  // namespace detail

/// Full scenario run: simulate, design every requested method, render,
/// report per-bin NMSE against the exact reference, optionally write WAVs.
inline MetricReport run_scenario(const ExperimentConfig& cfg,
                                 bool write_outputs = true) {
  cfg.validate();
  auto geom = ArrayGeometry::semicircular(cfg.mic_count, cfg.array_radius,
                                          cfg.rotation_deg);
  auto hrtf = std::make_shared<const HrtfSet>(resolve_hrtf(cfg.hrtf));
  SceneArtifacts art = simulate_scene(cfg, geom, *hrtf);
  DesignSetup setup = make_design_setup(geom, hrtf, cfg.grid_size, cfg.scenario.fs);

  namespace fs = std::filesystem;
  if (write_outputs) fs::create_directories(cfg.output_dir);
  if (write_outputs)
    write_wav(cfg.output_dir + "/" + cfg.scenario.id + "_reference.wav",
              normalize_peak(art.reference), cfg.scenario.fs);

  MetricReport report;
  std::optional<BinauralFilterBank> bsm_cache;
  for (RenderMethod method : cfg.methods) {
    MatrixXd rendered;
    if (method == RenderMethod::Reference) {
      rendered = art.reference;
    } else {
      if (!bsm_cache) bsm_cache = design_bsm(setup, design_params(cfg));
      BinauralFilterBank bank = design_method(method, setup, art, cfg, &*bsm_cache);
      rendered = render_binaural(bank, art.mic_tf);
    }
    auto [nl, nr] = detail::nmse_per_bin(rendered, art.reference, cfg.scenario.fs,
                                         cfg.magls_cutoff_hz);
    for (int k = 0; k < nl.size(); ++k) {
      if (std::isnan(nl(k)) && std::isnan(nr(k))) continue;
      MetricRow row = detail::base_row(cfg, method, "nmse");
      row.frequency_hz = k * cfg.scenario.fs / 1536.0;
      row.nmse_left_db = nl(k);
      row.nmse_right_db = nr(k);
      report.rows.push_back(row);
    }
    if (write_outputs)
      write_wav(cfg.output_dir + "/" + cfg.scenario.id + "_" +
                    method_name(method) + ".wav",
                normalize_peak(rendered), cfg.scenario.fs);
  }
  if (write_outputs) report.write_csv(cfg.output_dir + "/" + cfg.scenario.id + "_nmse.csv");
  return report;
}

struct FreeFieldEval {
  double itd_s{0.0}, itd_ref_s{0.0}, itd_err_s{0.0};
  double ild_db{0.0}, ild_ref_db{0.0}, ild_err_db{0.0};
};

/// Free-field plane-wave scene shared across method evaluations at one DOA.
struct FreeFieldScene {
  TimeFreqSignal capture;
  VectorXd ref_left, ref_right;
  double fs{48000.0};
  int crop_lo{0}, crop_len{0};
};

inline FreeFieldScene make_free_field_scene(const ArrayGeometry& geom,
                                            const HrtfSet& hrtf, const Direction& dir,
                                            const VectorXd& signal, double fs) {
  ImageSourceSet ff;
  ff.entries.push_back({dir, 0.001, 1.0});
  double inf = std::numeric_limits<double>::infinity();
  MatrixXd x = synth_mic_signals(ff, geom, signal, fs, inf);
  MatrixXd reference = synth_reference_binaural(ff, hrtf, signal, fs);
  const int win = 1536;
  const int n = static_cast<int>(std::min(x.cols(), reference.cols()));
  require(n > 3 * win, "free-field eval: signal too short for interior cropping");
  FreeFieldScene scene;
  scene.fs = fs;
  scene.crop_lo = win;
  scene.crop_len = n - 2 * win;
  scene.capture = stft(x, fs);
  scene.ref_left = reference.row(0).segment(win, scene.crop_len).transpose();
  scene.ref_right = reference.row(1).segment(win, scene.crop_len).transpose();
  return scene;
}

/// The paper's two-part ITD/ILD procedure: filters from the room capture are
/// applied to a free-field plane wave and compared against the HRTF render.
inline FreeFieldEval eval_free_field(const BinauralFilterBank& bank,
                                     const FreeFieldScene& scene,
                                     const ErbBank& bands) {
  MatrixXd rendered = render_binaural(bank, scene.capture);
  require(rendered.cols() >= scene.crop_lo + scene.crop_len,
          "eval_free_field: render shorter than the reference crop");
  VectorXd rl = rendered.row(0).segment(scene.crop_lo, scene.crop_len).transpose();
  VectorXd rr = rendered.row(1).segment(scene.crop_lo, scene.crop_len).transpose();
  FreeFieldEval out;
  out.itd_s = itd(rl, rr, scene.fs);
  out.itd_ref_s = itd(scene.ref_left, scene.ref_right, scene.fs);
  out.itd_err_s = itd_error(out.itd_s, out.itd_ref_s);
  out.ild_db = ild(rl, rr, bands);
  out.ild_ref_db = ild(scene.ref_left, scene.ref_right, bands);
  out.ild_err_db = ild_error(rl, rr, scene.ref_left, scene.ref_right, bands);
  return out;
}

inline FreeFieldEval eval_free_field(const BinauralFilterBank& bank,
                                     const ArrayGeometry& geom, const HrtfSet& hrtf,
                                     const Direction& dir, const VectorXd& signal,
                                     double fs, const ErbBank& bands) {
  return eval_free_field(bank, make_free_field_scene(geom, hrtf, dir, signal, fs),
                         bands);
}

namespace detail {

inline MetricRow eval_row(const ExperimentConfig& cfg, RenderMethod method,
                          const std::string& kind, double az_deg,
                          const FreeFieldEval& e) {
  MetricRow row = base_row(cfg, method, kind);
  row.azimuth_deg = az_deg;
  row.elevation_deg = 90.0;
  row.itd_us = e.itd_s * 1e6;
  row.itd_ref_us = e.itd_ref_s * 1e6;
  row.itd_err_us = e.itd_err_s * 1e6;
  row.itd_within_jnd = e.itd_err_s < kItdJndSeconds ? 1 : 0;
  row.ild_db = e.ild_db;
  row.ild_ref_db = e.ild_ref_db;
  row.ild_err_db = e.ild_err_db;
  row.ild_within_jnd = e.ild_err_db < kIldJndDb ? 1 : 0;
  return row;
}

}  // namespace detail

/// Azimuth sweep: for each source azimuth, simulate the room, design the
/// requested methods, then evaluate ITD/ILD on a free-field source from the
/// same direction.
inline MetricReport sweep_doa(const ExperimentConfig& cfg, bool write_outputs = true) {
  cfg.validate();
  auto geom = ArrayGeometry::semicircular(cfg.mic_count, cfg.array_radius,
                                          cfg.rotation_deg);
  auto hrtf = std::make_shared<const HrtfSet>(resolve_hrtf(cfg.hrtf));
  DesignSetup setup = make_design_setup(geom, hrtf, cfg.grid_size, cfg.scenario.fs);
  ErbBank bands = erb_bank(cfg.scenario.fs);
  std::optional<BinauralFilterBank> bsm_cache;

  MetricReport report;
  std::vector<Direction> azimuths =
      horizontal_scan(cfg.sweep.start_deg, cfg.sweep.stop_deg, cfg.sweep.step_deg);
  int az_index = 0;
  for (const Direction& dir : azimuths) {
    ExperimentConfig local = cfg;
    local.scenario.source_direction = dir;
    SceneArtifacts art = simulate_scene(local, geom, *hrtf,
                                        static_cast<uint64_t>(az_index) * 1000003ull);
    std::optional<FreeFieldScene> scene;
    for (RenderMethod method : cfg.methods) {
      FreeFieldEval e;
      if (method == RenderMethod::Reference) {
        // self-comparison: zero errors by construction
        if (!scene)
          scene = make_free_field_scene(geom, *hrtf, dir, art.source, cfg.scenario.fs);
        e.itd_s = e.itd_ref_s = itd(scene->ref_left, scene->ref_right, cfg.scenario.fs);
        e.ild_db = e.ild_ref_db = ild(scene->ref_left, scene->ref_right, bands);
      } else {
        if (!bsm_cache) bsm_cache = design_bsm(setup, design_params(cfg));
        BinauralFilterBank bank = design_method(method, setup, art, local, &*bsm_cache);
        if (!scene)
          scene = make_free_field_scene(geom, *hrtf, dir, art.source, cfg.scenario.fs);
        e = eval_free_field(bank, *scene, bands);
      }
      report.rows.push_back(
          detail::eval_row(local, method, "sweep", rad2deg(dir.phi), e));
    }
    ++az_index;
  }
  if (write_outputs) {
    std::filesystem::create_directories(cfg.output_dir);
    report.write_csv(cfg.output_dir + "/" + cfg.scenario.id + "_sweep.csv");
  }
  return report;
}

/// Off-source analysis: one room capture fixes the filters (source at the
/// scenario direction); ITD/ILD are then evaluated at every sweep azimuth.
inline MetricReport off_source_analysis(const ExperimentConfig& cfg,
                                        bool write_outputs = true) {
  cfg.validate();
  auto geom = ArrayGeometry::semicircular(cfg.mic_count, cfg.array_radius,
                                          cfg.rotation_deg);
  auto hrtf = std::make_shared<const HrtfSet>(resolve_hrtf(cfg.hrtf));
  DesignSetup setup = make_design_setup(geom, hrtf, cfg.grid_size, cfg.scenario.fs);
  ErbBank bands = erb_bank(cfg.scenario.fs);
  SceneArtifacts art = simulate_scene(cfg, geom, *hrtf);

  std::vector<std::pair<RenderMethod, BinauralFilterBank>> banks;
  std::optional<BinauralFilterBank> bsm_cache;
  for (RenderMethod method : cfg.methods) {
    if (method == RenderMethod::Reference) continue;
    if (!bsm_cache) bsm_cache = design_bsm(setup, design_params(cfg));
    banks.emplace_back(method, design_method(method, setup, art, cfg, &*bsm_cache));
  }

  MetricReport report;
  std::vector<Direction> azimuths =
      horizontal_scan(cfg.sweep.start_deg, cfg.sweep.stop_deg, cfg.sweep.step_deg);
  for (const Direction& dir : azimuths) {
    FreeFieldScene scene =
        make_free_field_scene(geom, *hrtf, dir, art.source, cfg.scenario.fs);
    for (const auto& [method, bank] : banks) {
      FreeFieldEval e = eval_free_field(bank, scene, bands);
      report.rows.push_back(
          detail::eval_row(cfg, method, "offsource", rad2deg(dir.phi), e));
    }
    for (RenderMethod method : cfg.methods) {
      if (method != RenderMethod::Reference) continue;
      FreeFieldEval e;  // self-comparison
      report.rows.push_back(
          detail::eval_row(cfg, method, "offsource", rad2deg(dir.phi), e));
    }
  }
  if (write_outputs) {
    std::filesystem::create_directories(cfg.output_dir);
    report.write_csv(cfg.output_dir + "/" + cfg.scenario.id + "_offsource.csv");
  }
  return report;
}

/// Directional-error surface over azimuth (horizontal plane) and the STFT
/// frequency grid, for each filter-based method.
inline MetricReport directional_error_map(const ExperimentConfig& cfg,
                                          bool write_outputs = true) {
  cfg.validate();
  auto geom = ArrayGeometry::semicircular(cfg.mic_count, cfg.array_radius,
                                          cfg.rotation_deg);
  auto hrtf = std::make_shared<const HrtfSet>(resolve_hrtf(cfg.hrtf));
  DesignSetup setup = make_design_setup(geom, hrtf, cfg.grid_size, cfg.scenario.fs);

  std::vector<Direction> azimuths = horizontal_scan(0.0, 360.0, cfg.dirmap_step_deg);
  SteeringMatrix S = build_steering(geom, azimuths, setup.freqs);
  HrtfMatrices H = hrtf_design_matrices(*hrtf, azimuths, setup.freqs);

  MetricReport report;
  std::optional<BinauralFilterBank> bsm_cache;
  std::optional<SceneArtifacts> art;
  for (RenderMethod method : cfg.methods) {
    if (method == RenderMethod::Reference) continue;
    BinauralFilterBank bank;
    if (method == RenderMethod::Bsm) {
      if (!bsm_cache) bsm_cache = design_bsm(setup, design_params(cfg));
      bank = *bsm_cache;
    } else {
      if (!art) art = simulate_scene(cfg, geom, *hrtf);
      if (!bsm_cache) bsm_cache = design_bsm(setup, design_params(cfg));
      bank = design_method(method, setup, *art, cfg, &*bsm_cache);
    }
    for (size_t a = 0; a < azimuths.size(); ++a) {
      for (int k = 1; k < bank.bins(); ++k) {
        double f = bank.freqs(k);
        MetricRow row = detail::base_row(cfg, method, "dirmap");
        row.frequency_hz = f;
        row.azimuth_deg = rad2deg(azimuths[a].phi);
        row.elevation_deg = 90.0;
        bool low = f < bank.magls_cutoff_hz;
        for (int ear = 0; ear < 2; ++ear) {
          cd h = ear == 0 ? H.left(static_cast<Eigen::Index>(a), k)
                          : H.right(static_cast<Eigen::Index>(a), k);
          double mag = std::abs(h);
          if (mag <= 0.0) continue;
          VectorXcd v = S.values[static_cast<size_t>(k)].col(static_cast<Eigen::Index>(a));
          cd resp = (v.adjoint() * (ear == 0 ? bank.left : bank.right).col(k))(0);
          double err = low ? std::abs(resp - std::conj(h)) : std::abs(std::abs(resp) - mag);
          (ear == 0 ? row.direrr_left : row.direrr_right) = err / mag;
        }
        report.rows.push_back(row);
      }
    }
  }
  if (write_outputs) {
    std::filesystem::create_directories(cfg.output_dir);
    report.write_csv(cfg.output_dir + "/" + cfg.scenario.id + "_dirmap.csv");
  }
  return report;
}

}  // namespace bsm
