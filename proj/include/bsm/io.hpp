// File I/O: WAV (float32 write, float32/PCM16/24 read), CSV tables, the
// HRIR-grid directory layout and the binary filter-bank container.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bsm/common.hpp"
#include "bsm/direction.hpp"
#include "bsm/filters.hpp"
#include "bsm/hrtf.hpp"

namespace bsm {

struct WavData {
  MatrixXd samples;  // channels x frames
  double fs{48000.0};
};

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
               static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  os.write(b, 4);
}
inline void put_u16(std::ostream& os, uint16_t v) {
  char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
inline uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace detail

/// Writes 32-bit float WAV, channels interleaved.
inline void write_wav(const std::string& path, const MatrixXd& samples, double fs) {
  require(samples.rows() >= 1, "write_wav: need at least one channel");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "write_wav: cannot open " + path);
  const uint32_t channels = static_cast<uint32_t>(samples.rows());
  const uint32_t frames = static_cast<uint32_t>(samples.cols());
  const uint32_t data_bytes = channels * frames * 4;
  os.write("RIFF", 4);
  detail::put_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  detail::put_u32(os, 16);
  detail::put_u16(os, 3);  // IEEE float
  detail::put_u16(os, static_cast<uint16_t>(channels));
  detail::put_u32(os, static_cast<uint32_t>(fs));
  detail::put_u32(os, static_cast<uint32_t>(fs) * channels * 4);
  detail::put_u16(os, static_cast<uint16_t>(channels * 4));
  detail::put_u16(os, 32);
  os.write("data", 4);
  detail::put_u32(os, data_bytes);
  for (uint32_t t = 0; t < frames; ++t)
    for (uint32_t c = 0; c < channels; ++c) {
      float v = static_cast<float>(samples(c, t));
      os.write(reinterpret_cast<const char*>(&v), 4);
    }
  require(os.good(), "write_wav: write failed for " + path);
}

inline WavData read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "read_wav: cannot open " + path);
  char tag[5] = {0};
  is.read(tag, 4);
  require(std::strncmp(tag, "RIFF", 4) == 0, "read_wav: not a RIFF file: " + path);
  detail::get_u32(is);
  is.read(tag, 4);
  require(std::strncmp(tag, "WAVE", 4) == 0, "read_wav: not a WAVE file: " + path);
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> data;
  while (is.good()) {
    is.read(tag, 4);
    if (!is.good()) break;
    uint32_t size = detail::get_u32(is);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = detail::get_u16(is);
      channels = detail::get_u16(is);
      rate = detail::get_u32(is);
      detail::get_u32(is);
      detail::get_u16(is);
      bits = detail::get_u16(is);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(size);
      is.read(data.data(), size);
      break;
    } else {
      is.seekg(size + (size & 1u), std::ios::cur);
    }
  }
  require(channels > 0 && rate > 0, "read_wav: missing fmt chunk in " + path);
  require(!data.empty(), "read_wav: missing data chunk in " + path);
  const uint32_t bytes_per = bits / 8;
  const uint32_t frames = static_cast<uint32_t>(data.size()) / (channels * bytes_per);
  WavData wav;
  wav.fs = rate;
  wav.samples.resize(channels, frames);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
  for (uint32_t t = 0; t < frames; ++t)
    for (uint32_t c = 0; c < channels; ++c) {
      double v = 0.0;
      if (format == 3 && bits == 32) {
        float f;
        std::memcpy(&f, p, 4);
        v = f;
      } else if (format == 1 && bits == 16) {
        int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
        v = s / 32768.0;
      } else if (format == 1 && bits == 24) {
        int32_t s = static_cast<int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else if (format == 1 && bits == 32) {
        int32_t s;
        std::memcpy(&s, p, 4);
        v = s / 2147483648.0;
      } else {
        require(false, "read_wav: unsupported sample format in " + path);
      }
      wav.samples(c, t) = v;
      p += bytes_per;
    }
  return wav;
}

/// Peak-normalizes to -3 dBFS (no-op for silent input).
inline MatrixXd normalize_peak(const MatrixXd& x, double dbfs = -3.0) {
  double peak = x.cwiseAbs().maxCoeff();
  if (peak <= 0.0) return x;
  return x * (std::pow(10.0, dbfs / 20.0) / peak);
}

/// Minimal CSV table: header row plus stringified cells, UTF-8.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<std::string>& cells) {
    require(cells.size() == header_.size(), "CsvWriter: cell count mismatch");
    rows_.push_back(cells);
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    require(os.good(), "CsvWriter: cannot open " + path);
    os << join(header_) << "\n";
    for (const auto& r : rows_) os << join(r) << "\n";
    require(os.good(), "CsvWriter: write failed for " + path);
  }

  static std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ",";
      line += cells[i];
    }
    return line;
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// HRIR grid directory: directions.csv (azimuth_deg, elevation_deg; elevation
/// measured from +z downward) plus multichannel hrir_left.wav / hrir_right.wav
/// with channel i matching row i.
inline void write_hrtf_dir(const std::string& dir_path, const HrtfSet& set) {
  namespace fs = std::filesystem;
  fs::create_directories(dir_path);
  CsvWriter csv({"azimuth_deg", "elevation_deg"});
  for (const auto& d : set.grid)
    csv.add_row({CsvWriter::num(rad2deg(d.phi)), CsvWriter::num(rad2deg(d.theta))});
  csv.write(dir_path + "/directions.csv");
  write_wav(dir_path + "/hrir_left.wav", set.hrir_left, set.fs);
  write_wav(dir_path + "/hrir_right.wav", set.hrir_right, set.fs);
}

/// Binary filter-bank container: magic "BSMF", version, method, shape,
/// cutoff/snr metadata, frequency grid, then interleaved re/im coefficients
/// (left bank then right, bin-major).
inline void write_bank(const std::string& path, const BinauralFilterBank& bank) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "write_bank: cannot open " + path);
  os.write("BSMF", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<uint32_t>(bank.method));
  detail::put_u32(os, static_cast<uint32_t>(bank.mic_count()));
  detail::put_u32(os, static_cast<uint32_t>(bank.bins()));
  auto put_f64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  put_f64(bank.magls_cutoff_hz);
  put_f64(bank.snr_linear);
  for (int k = 0; k < bank.bins(); ++k) put_f64(bank.freqs(k));
  for (const auto* m : {&bank.left, &bank.right})
    for (int k = 0; k < bank.bins(); ++k)
      for (int mm = 0; mm < bank.mic_count(); ++mm) {
        put_f64((*m)(mm, k).real());
        put_f64((*m)(mm, k).imag());
      }
  require(os.good(), "write_bank: write failed for " + path);
}

inline BinauralFilterBank read_bank(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "read_bank: cannot open " + path);
  char magic[5] = {0};
  is.read(magic, 4);
  require(std::strncmp(magic, "BSMF", 4) == 0, "read_bank: bad magic in " + path);
  require(detail::get_u32(is) == 1, "read_bank: unsupported version");
  BinauralFilterBank bank;
  bank.method = static_cast<RenderMethod>(detail::get_u32(is));
  uint32_t M = detail::get_u32(is);
  uint32_t bins = detail::get_u32(is);
  auto get_f64 = [&]() {
    double v;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  bank.magls_cutoff_hz = get_f64();
  bank.snr_linear = get_f64();
  bank.freqs.resize(bins);
  for (uint32_t k = 0; k < bins; ++k) bank.freqs(k) = get_f64();
  bank.left.resize(M, bins);
  bank.right.resize(M, bins);
  for (auto* m : {&bank.left, &bank.right})
    for (uint32_t k = 0; k < bins; ++k)
      for (uint32_t mm = 0; mm < M; ++mm) {
        double re = get_f64(), im = get_f64();
        (*m)(mm, k) = cd(re, im);
      }
  require(is.good(), "read_bank: truncated file " + path);
  return bank;
}

inline HrtfSet load_hrtf_dir(const std::string& dir_path, int sh_order = 30) {
  std::ifstream is(dir_path + "/directions.csv");
  require(is.good(), "load_hrtf_dir: missing directions.csv in " + dir_path);
  HrtfSet set;
  set.sh_order = sh_order;
  set.source = "measured";
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string az, el;
    require(static_cast<bool>(std::getline(ss, az, ',')) &&
                static_cast<bool>(std::getline(ss, el, ',')),
            "load_hrtf_dir: malformed row in directions.csv: " + line);
    set.grid.push_back(Direction::from_degrees(std::stod(el), std::stod(az)));
  }
  require(!set.grid.empty(), "load_hrtf_dir: empty direction grid");
  WavData left = read_wav(dir_path + "/hrir_left.wav");
  WavData right = read_wav(dir_path + "/hrir_right.wav");
  require(left.samples.rows() == static_cast<Eigen::Index>(set.grid.size()),
          "load_hrtf_dir: hrir_left channel count does not match grid");
  require(right.samples.rows() == static_cast<Eigen::Index>(set.grid.size()),
          "load_hrtf_dir: hrir_right channel count does not match grid");
  require(left.samples.cols() == right.samples.cols(),
          "load_hrtf_dir: left/right HRIR lengths differ");
  require(left.fs == right.fs, "load_hrtf_dir: left/right sample rates differ");
  set.fs = left.fs;
  set.hrir_left = left.samples;
  set.hrir_right = right.samples;
  set.validate();
  return set;
}

}  // namespace bsm
