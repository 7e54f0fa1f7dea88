// Thin RAII layer over FFTW3 (double precision). Plan creation is
// mutex-guarded; each plan instance is meant for serial reuse by one caller.
#pragma once

#include <fftw3.h>

#include <mutex>

#include "bsm/common.hpp"

namespace bsm {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex forward transform of fixed size n (one-sided output).
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    require(n >= 1, "RealFft: size must be >= 1");
    in_ = fftw_alloc_real(static_cast<size_t>(n));
    out_ = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  /// x (length <= n, zero-padded) -> one-sided spectrum (n/2+1 bins).
  VectorXcd forward(const Eigen::Ref<const VectorXd>& x) {
    require(x.size() <= n_, "RealFft::forward: input longer than plan size");
    for (int i = 0; i < n_; ++i) in_[i] = i < x.size() ? x(i) : 0.0;
    fftw_execute(fwd_);
    VectorXcd spec(bins());
    for (int k = 0; k < bins(); ++k) spec(k) = cd(out_[k][0], out_[k][1]);
    return spec;
  }

  /// One-sided spectrum -> real signal of length n (includes 1/n scaling).
  VectorXd inverse(const Eigen::Ref<const VectorXcd>& spec) {
    require(spec.size() == bins(), "RealFft::inverse: bin count mismatch");
    for (int k = 0; k < bins(); ++k) {
      out_[k][0] = spec(k).real();
      out_[k][1] = spec(k).imag();
    }
    fftw_execute(inv_);
    VectorXd x(n_);
    double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) x(i) = in_[i] * scale;
    return x;
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

inline int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// One-shot helpers for occasional transforms.
inline VectorXcd rfft(const Eigen::Ref<const VectorXd>& x, int nfft = 0) {
  int n = nfft > 0 ? nfft : static_cast<int>(x.size());
  RealFft plan(n);
  return plan.forward(x);
}

inline VectorXd irfft(const Eigen::Ref<const VectorXcd>& spec, int nfft) {
  RealFft plan(nfft);
  return plan.inverse(spec);
}

}  // namespace bsm
