// Command-line front end: scenario simulation, filter design, rendering and
// the objective-evaluation experiment drivers.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>

#include "bsm/bsm.hpp"

using namespace bsm;

namespace {

struct CommonOpts {
  std::string scenario_path;
  std::vector<std::string> methods;
  double rotation_deg{std::nan("")};
  std::vector<double> doa_error_deg;
  uint64_t seed{0};
  bool has_seed{false};
  bool full_scale{false};
  std::string out_dir;
  double duration_s{0.0};
  int max_order{0};
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_scenario = true) {
  auto* opt = cmd->add_option("--scenario", o.scenario_path, "scenario/config JSON");
  if (need_scenario) opt->required();
  cmd->add_option("--method", o.methods, "methods: BSM COM DBSM REFERENCE");
  cmd->add_option("--rotation-deg", o.rotation_deg, "array rotation in degrees");
  cmd->add_option("--doa-error-deg", o.doa_error_deg,
                  "assumed DOA error (azimuth [elevation]) in degrees")
      ->expected(1, 2);
  cmd->add_option("--seed", o.seed, "random seed")->each([&](const std::string&) {
    o.has_seed = true;
  });
  cmd->add_flag("--full-scale", o.full_scale,
                "run the full published parameters instead of desk scale");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--duration", o.duration_s, "override duration in seconds");
  cmd->add_option("--max-order", o.max_order, "override image-method order");
}

ExperimentConfig resolve(const CommonOpts& o) {
  ExperimentConfig cfg = load_config(o.scenario_path);
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : o.methods) cfg.methods.push_back(method_from_string(m));
  }
  if (!std::isnan(o.rotation_deg)) cfg.rotation_deg = o.rotation_deg;
  if (!o.doa_error_deg.empty()) {
    cfg.doa_error_az_deg = o.doa_error_deg[0];
    cfg.doa_error_el_deg = o.doa_error_deg.size() > 1 ? o.doa_error_deg[1] : 0.0;
  }
  if (o.has_seed) cfg.seed = o.seed;
  if (o.full_scale) cfg.desk_scale = false;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.duration_s > 0.0) cfg.scenario.duration_s = o.duration_s;
  if (o.max_order > 0) cfg.max_order = o.max_order;
  return cfg;
}

int cmd_simulate(const CommonOpts& o) {
  ExperimentConfig cfg = resolve(o);
  auto geom = ArrayGeometry::semicircular(cfg.mic_count, cfg.array_radius,
                                          cfg.rotation_deg);
  HrtfSet hrtf = resolve_hrtf(cfg.hrtf);
  SceneArtifacts art = simulate_scene(cfg, geom, hrtf);
  std::filesystem::create_directories(cfg.output_dir);
  write_wav(cfg.output_dir + "/" + cfg.scenario.id + "_capture.wav", art.mic_time,
            cfg.scenario.fs);
  write_wav(cfg.output_dir + "/" + cfg.scenario.id + "_reference.wav",
            normalize_peak(art.reference), cfg.scenario.fs);
  CsvWriter csv({"azimuth_deg", "elevation_deg", "delay_s", "gain"});
  for (const auto& e : art.images.entries)
    csv.add_row({CsvWriter::num(rad2deg(e.direction.phi)),
                 CsvWriter::num(rad2deg(e.direction.theta)),
                 CsvWriter::num(e.delay_s), CsvWriter::num(e.gain)});
  csv.write(cfg.output_dir + "/" + cfg.scenario.id + "_images.csv");
  std::printf("simulate: %zu image sources, %d mic samples -> %s\n",
              art.images.entries.size(), static_cast<int>(art.mic_time.cols()),
              cfg.output_dir.c_str());
  return 0;
}

int cmd_design(const CommonOpts& o, const std::string& bank_path,
               const std::string& capture_path) {
  ExperimentConfig cfg = resolve(o);
  require(cfg.methods.size() == 1, "design: pass exactly one --method");
  auto geom = ArrayGeometry::semicircular(cfg.mic_count, cfg.array_radius,
                                          cfg.rotation_deg);
  auto hrtf = std::make_shared<const HrtfSet>(resolve_hrtf(cfg.hrtf));
  DesignSetup setup = make_design_setup(geom, hrtf, cfg.grid_size, cfg.scenario.fs);
  RenderMethod method = cfg.methods.front();
  BinauralFilterBank bank;
  if (method == RenderMethod::Bsm) {
    bank = design_bsm(setup, design_params(cfg));
  } else {
    SceneArtifacts art;
    if (!capture_path.empty()) {
      WavData wav = read_wav(capture_path);
      require(wav.fs == cfg.scenario.fs, "design: capture sample rate mismatch");
      art.mic_time = wav.samples;
      art.mic_tf = stft(art.mic_time, wav.fs);
      art.omega_d = cfg.scenario.source_direction;
      art.sigma_n2_stft = -1.0;
      art.images.entries.push_back({art.omega_d, 0.0, 1.0});
    } else {
      art = simulate_scene(cfg, geom, *hrtf);
    }
    bank = design_method(method, setup, art, cfg);
  }
  write_bank(bank_path, bank);
  std::printf("design: %s bank, %d mics x %d bins -> %s\n", method_name(method),
              bank.mic_count(), bank.bins(), bank_path.c_str());
  return 0;
}

int cmd_render(const std::string& bank_path, const std::string& capture_path,
               const std::string& out_path) {
  BinauralFilterBank bank = read_bank(bank_path);
  WavData wav = read_wav(capture_path);
  require(wav.samples.rows() == bank.mic_count(),
          "render: capture channel count does not match bank");
  MatrixXd out = render_binaural(bank, stft(wav.samples, wav.fs));
  write_wav(out_path, normalize_peak(out), wav.fs);
  std::printf("render: %d samples -> %s\n", static_cast<int>(out.cols()),
              out_path.c_str());
  return 0;
}

int cmd_evaluate(const CommonOpts& o) {
  ExperimentConfig cfg = resolve(o);
  MetricReport report = run_scenario(cfg);
  std::printf("evaluate: %zu rows -> %s/%s_nmse.csv\n", report.rows.size(),
              cfg.output_dir.c_str(), cfg.scenario.id.c_str());
  return 0;
}

int cmd_sweep(const CommonOpts& o, double step_deg) {
  ExperimentConfig cfg = resolve(o);
  if (step_deg > 0.0) cfg.sweep.step_deg = step_deg;
  MetricReport report = sweep_doa(cfg);
  std::printf("sweep: %zu rows -> %s/%s_sweep.csv\n", report.rows.size(),
              cfg.output_dir.c_str(), cfg.scenario.id.c_str());
  return 0;
}

int cmd_offsource(const CommonOpts& o, double step_deg) {
  ExperimentConfig cfg = resolve(o);
  if (step_deg > 0.0) cfg.sweep.step_deg = step_deg;
  MetricReport report = off_source_analysis(cfg);
  std::printf("offsource: %zu rows -> %s/%s_offsource.csv\n", report.rows.size(),
              cfg.output_dir.c_str(), cfg.scenario.id.c_str());
  return 0;
}

int cmd_dirmap(const CommonOpts& o, double step_deg) {
  ExperimentConfig cfg = resolve(o);
  if (step_deg > 0.0) cfg.dirmap_step_deg = step_deg;
  MetricReport report = directional_error_map(cfg);
  std::printf("dirmap: %zu rows -> %s/%s_dirmap.csv\n", report.rows.size(),
              cfg.output_dir.c_str(), cfg.scenario.id.c_str());
  return 0;
}

int cmd_report(const std::string& csv_path) {
  std::ifstream is(csv_path);
  require(is.good(), "report: cannot open " + csv_path);
  std::string line;
  std::getline(is, line);
  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  int c_method = col("method"), c_ild = col("ild_err_db"), c_itd = col("itd_err_us");
  int c_nl = col("nmse_left_db"), c_nr = col("nmse_right_db");
  struct Agg {
    double ild_sum{0}, itd_sum{0}, nmse_sum{0};
    int ild_n{0}, itd_n{0}, nmse_n{0};
  };
  std::map<std::string, Agg> agg;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (c_method < 0 || cells.size() <= static_cast<size_t>(c_method)) continue;
    Agg& a = agg[cells[static_cast<size_t>(c_method)]];
    auto take = [&](int idx, double& sum, int& n) {
      if (idx >= 0 && static_cast<size_t>(idx) < cells.size() &&
          !cells[static_cast<size_t>(idx)].empty()) {
        sum += std::stod(cells[static_cast<size_t>(idx)]);
        ++n;
      }
    };
    take(c_ild, a.ild_sum, a.ild_n);
    take(c_itd, a.itd_sum, a.itd_n);
    take(c_nl, a.nmse_sum, a.nmse_n);
    take(c_nr, a.nmse_sum, a.nmse_n);
  }
  std::printf("%-10s %14s %14s %14s\n", "method", "mean ILD err", "mean ITD err",
              "mean NMSE dB");
  for (const auto& [name, a] : agg)
    std::printf("%-10s %14s %14s %14s\n", name.c_str(),
                a.ild_n ? CsvWriter::num(a.ild_sum / a.ild_n).c_str() : "-",
                a.itd_n ? CsvWriter::num(a.itd_sum / a.itd_n).c_str() : "-",
                a.nmse_n ? CsvWriter::num(a.nmse_sum / a.nmse_n).c_str() : "-");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binaural signal matching toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string bank_path, capture_path, out_path, csv_path;
  double step_deg = 0.0;

  auto* simulate = app.add_subcommand("simulate", "simulate a scenario capture");
  add_common(simulate, opts);

  auto* design = app.add_subcommand("design", "design a filter bank");
  add_common(design, opts);
  design->add_option("--out-bank", bank_path, "output bank file")->required();
  design->add_option("--capture", capture_path, "capture WAV (else simulated)");

  auto* render = app.add_subcommand("render", "apply a bank to a capture");
  render->add_option("--bank", bank_path, "bank file")->required();
  render->add_option("--capture", capture_path, "capture WAV")->required();
  render->add_option("--out-wav", out_path, "output WAV")->required();

  auto* evaluate = app.add_subcommand("evaluate", "full scenario NMSE evaluation");
  add_common(evaluate, opts);

  auto* sweep = app.add_subcommand("sweep", "source-azimuth ITD/ILD sweep");
  add_common(sweep, opts);
  sweep->add_option("--step-deg", step_deg, "azimuth step");

  auto* offsource = app.add_subcommand("offsource", "fixed-filter off-source analysis");
  add_common(offsource, opts);
  offsource->add_option("--step-deg", step_deg, "azimuth step");

  auto* dirmap = app.add_subcommand("dirmap", "directional-error surface");
  add_common(dirmap, opts);
  dirmap->add_option("--step-deg", step_deg, "azimuth step");

  auto* report = app.add_subcommand("report", "summarize a metric CSV");
  report->add_option("--csv", csv_path, "metric CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(opts);
    if (design->parsed()) return cmd_design(opts, bank_path, capture_path);
    if (render->parsed()) return cmd_render(bank_path, capture_path, out_path);
    if (evaluate->parsed()) return cmd_evaluate(opts);
    if (sweep->parsed()) return cmd_sweep(opts, step_deg);
    if (offsource->parsed()) return cmd_offsource(opts, step_deg);
    if (dirmap->parsed()) return cmd_dirmap(opts, step_deg);
    if (report->parsed()) return cmd_report(csv_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
