// Shared aliases, constants and small numeric helpers.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bsm {

using cd = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kSpeedOfSound = 343.0;  // m/s, fixed

/// Acoustic wavenumber at frequency f (Hz).
inline double wavenumber(double f_hz) { return kTwoPi * f_hz / kSpeedOfSound; }

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// i^n for integer n (n may be negative).
inline cd ipow(int n) {
  switch (((n % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Runs fn(begin, end) on contiguous index chunks across hardware threads.
/// Chunks are disjoint, so writes to per-index slots stay deterministic.
inline void parallel_for(std::ptrdiff_t n,
                         const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& fn,
                         int max_threads = 0) {
  if (n <= 0) return;
  int hw = max_threads > 0 ? max_threads
                           : static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  std::ptrdiff_t nthreads = std::min<std::ptrdiff_t>(hw, n);
  if (nthreads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(nthreads));
  std::ptrdiff_t chunk = (n + nthreads - 1) / nthreads;
  std::exception_ptr err;
  std::mutex err_mutex;
  for (std::ptrdiff_t t = 0; t < nthreads; ++t) {
    std::ptrdiff_t b = t * chunk;
    std::ptrdiff_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace bsm
