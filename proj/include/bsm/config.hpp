// Experiment configuration: versioned JSON schema, scenario resolution and
// deterministic synthetic source signals.
#pragma once

#include <json.hpp>

#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "bsm/common.hpp"
#include "bsm/filters.hpp"
#include "bsm/io.hpp"
#include "bsm/room.hpp"

namespace bsm {

struct HrtfConfig {
  std::string kind{"analytic-sphere"};  // or "dir" (HRIR grid directory)
  double radius_mm{87.5};
  double ear_offset_deg{0.0};
  std::string path;
  int sh_order{30};
};

struct SourceConfig {
  std::string kind{"speech"};  // speech | clicks | noise | file
  std::string path;
};

struct SweepConfig {
  double start_deg{0.0};
  double stop_deg{360.0};
  double step_deg{5.0};
};

struct ExperimentConfig {
  int version{1};
  Scenario scenario;
  SourceConfig source;
  HrtfConfig hrtf;
  int mic_count{6};
  double array_radius{0.10};
  std::vector<RenderMethod> methods{RenderMethod::Bsm, RenderMethod::Com,
                                    RenderMethod::Dbsm, RenderMethod::Reference};
  double rotation_deg{0.0};
  double doa_error_az_deg{0.0};
  double doa_error_el_deg{0.0};
  SweepConfig sweep;
  double design_snr_db{20.0};
  double magls_cutoff_hz{1500.0};
  int grid_size{400};
  int smoothing_bins{1};
  bool desk_scale{true};
  int max_order{-1};  // <= 0: derived from t60 (clamped by desk scale)
  uint64_t seed{1234};
  std::string output_dir{"out"};
  double dirmap_step_deg{5.0};

  void validate() const {
    require(!methods.empty(), "config: at least one method required");
    require(mic_count >= 1, "config: mic_count must be >= 1");
    require(grid_size >= 1, "config: grid_size must be >= 1");
  }

  /// T60 after the desk-scale clamp.
  double effective_t60() const {
    return desk_scale ? std::min(scenario.t60_s, 0.3) : scenario.t60_s;
  }
  double effective_duration() const {
    return desk_scale ? std::min(scenario.duration_s, 1.0) : scenario.duration_s;
  }
  int effective_max_order() const {
    if (max_order > 0) return max_order;
    int order = default_max_order(scenario.room_dims, effective_t60());
    return desk_scale ? std::min(order, 10) : order;
  }
};

inline RenderMethod method_from_string(const std::string& s) {
  if (s == "BSM") return RenderMethod::Bsm;
  if (s == "COM") return RenderMethod::Com;
  if (s == "DBSM") return RenderMethod::Dbsm;
  if (s == "REFERENCE") return RenderMethod::Reference;
  throw std::invalid_argument("config: unknown method '" + s + "'");
}

/// Deterministic synthetic source signals (white, speech-shaped, clicks).
inline VectorXd make_source_signal(const std::string& kind, double seconds,
                                   double fs, uint64_t seed) {
  const int n = static_cast<int>(seconds * fs);
  require(n > 0, "make_source_signal: non-positive duration");
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() {
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  auto gauss = [&]() {
    double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  };
  VectorXd x(n);
  if (kind == "noise") {
    for (int i = 0; i < n; ++i) x(i) = gauss();
  } else if (kind == "speech") {
    // Low-passed noise with a syllabic envelope plus a broadband floor,
    // keeping energy in every ERB band up to 20 kHz.
    double lp1 = 0.0, lp2 = 0.0, env_state = 0.0;
    const double a = std::exp(-kTwoPi * 1200.0 / fs);
    const double ae = std::exp(-kTwoPi * 3.5 / fs);
    for (int i = 0; i < n; ++i) {
      double w = gauss();
      lp1 = a * lp1 + (1.0 - a) * w;
      lp2 = a * lp2 + (1.0 - a) * lp1;
      double e = gauss();
      env_state = ae * env_state + (1.0 - ae) * std::abs(e);
      double env = 0.25 + 3.0 * env_state;
      x(i) = env * (8.0 * lp2 + 0.05 * w);
    }
  } else if (kind == "clicks") {
    x.setZero();
    const int period = static_cast<int>(0.21 * fs);
    const int burst = static_cast<int>(0.002 * fs);
    for (int start = 480; start + burst < n; start += period)
      for (int i = 0; i < burst; ++i)
        x(start + i) = gauss() * std::exp(-5.0 * i / burst);
    // tiny floor keeps correlation estimates nonsingular between bursts
    for (int i = 0; i < n; ++i) x(i) += 1e-4 * gauss();
  } else {
    throw std::invalid_argument("make_source_signal: unknown kind '" + kind + "'");
  }
  double rms = std::sqrt(x.squaredNorm() / n);
  if (rms > 0.0) x *= 0.1 / rms;
  return x;
}

inline VectorXd resolve_source_signal(const SourceConfig& src, double seconds,
                                      double fs, uint64_t seed) {
  if (src.kind == "file") {
    WavData wav = read_wav(src.path);
    require(wav.fs == fs, "source file sample rate mismatch");
    int n = std::min<int>(static_cast<int>(seconds * fs),
                          static_cast<int>(wav.samples.cols()));
    return wav.samples.row(0).head(n).transpose();
  }
  return make_source_signal(src.kind, seconds, fs, seed);
}

inline HrtfSet resolve_hrtf(const HrtfConfig& cfg) {
  if (cfg.kind == "analytic-sphere")
    return make_analytic_hrtf(cfg.radius_mm / 1000.0, cfg.ear_offset_deg);
  if (cfg.kind == "dir") return load_hrtf_dir(cfg.path, cfg.sh_order);
  throw std::invalid_argument("config: unknown hrtf kind '" + cfg.kind + "'");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.version = j.value("version", 1);
  require(cfg.version == 1, "config: unsupported schema version");
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    cfg.scenario.id = s.value("id", std::string("scenario"));
    if (s.contains("room_dims_m")) {
      auto v = s.at("room_dims_m").get<std::vector<double>>();
      require(v.size() == 3, "config: room_dims_m must have 3 entries");
      cfg.scenario.room_dims = {v[0], v[1], v[2]};
    }
    cfg.scenario.t60_s = s.value("t60_s", cfg.scenario.t60_s);
    if (s.contains("array_position_m")) {
      auto v = s.at("array_position_m").get<std::vector<double>>();
      require(v.size() == 3, "config: array_position_m must have 3 entries");
      cfg.scenario.array_position = {v[0], v[1], v[2]};
    }
    cfg.scenario.source_distance = s.value("source_distance_m", cfg.scenario.source_distance);
    double az = s.value("source_azimuth_deg", 40.0);
    double el = s.value("source_elevation_deg", 90.0);
    cfg.scenario.source_direction = Direction::from_degrees(el, az);
    cfg.scenario.duration_s = s.value("duration_s", cfg.scenario.duration_s);
    cfg.scenario.fs = s.value("fs", cfg.scenario.fs);
    if (s.contains("snr_db")) {
      if (s.at("snr_db").is_null())
        cfg.scenario.snr_db = std::numeric_limits<double>::infinity();
      else
        cfg.scenario.snr_db = s.at("snr_db").get<double>();
    }
    if (s.contains("source")) {
      cfg.source.kind = s.at("source").value("kind", cfg.source.kind);
      cfg.source.path = s.at("source").value("path", cfg.source.path);
    }
  }
  if (j.contains("array")) {
    cfg.mic_count = j.at("array").value("mic_count", cfg.mic_count);
    cfg.array_radius = j.at("array").value("radius_m", cfg.array_radius);
    cfg.rotation_deg = j.at("array").value("rotation_deg", cfg.rotation_deg);
  }
  if (j.contains("hrtf")) {
    const auto& h = j.at("hrtf");
    cfg.hrtf.kind = h.value("kind", cfg.hrtf.kind);
    cfg.hrtf.radius_mm = h.value("radius_mm", cfg.hrtf.radius_mm);
    cfg.hrtf.ear_offset_deg = h.value("ear_azimuth_offset_deg", cfg.hrtf.ear_offset_deg);
    cfg.hrtf.path = h.value("path", cfg.hrtf.path);
    cfg.hrtf.sh_order = h.value("sh_order", cfg.hrtf.sh_order);
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_string(m));
  }
  cfg.rotation_deg = j.value("rotation_deg", cfg.rotation_deg);
  if (j.contains("doa_error_deg")) {
    auto v = j.at("doa_error_deg").get<std::vector<double>>();
    require(v.size() >= 1 && v.size() <= 2, "config: doa_error_deg takes 1-2 values");
    cfg.doa_error_az_deg = v[0];
    cfg.doa_error_el_deg = v.size() > 1 ? v[1] : 0.0;
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    cfg.sweep.start_deg = s.value("azimuth_start_deg", cfg.sweep.start_deg);
    cfg.sweep.stop_deg = s.value("azimuth_stop_deg", cfg.sweep.stop_deg);
    cfg.sweep.step_deg = s.value("azimuth_step_deg", cfg.sweep.step_deg);
  }
  if (j.contains("design")) {
    const auto& d = j.at("design");
    cfg.design_snr_db = d.value("snr_db", cfg.design_snr_db);
    cfg.magls_cutoff_hz = d.value("magls_cutoff_hz", cfg.magls_cutoff_hz);
    cfg.grid_size = d.value("grid_size", cfg.grid_size);
    cfg.smoothing_bins = d.value("smoothing_bins", cfg.smoothing_bins);
  }
  cfg.desk_scale = j.value("desk_scale", cfg.desk_scale);
  cfg.max_order = j.value("max_order", cfg.max_order);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.dirmap_step_deg = j.value("dirmap_step_deg", cfg.dirmap_step_deg);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "load_config: cannot open " + path);
  nlohmann::json j;
  is >> j;
  return config_from_json(j);
}

}  // namespace bsm
