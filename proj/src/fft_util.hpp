#pragma once

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace wgstab::detail {

// FFTW's planner is not re-entrant; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// RAII wrapper around an in-place complex 3-D transform (row-major n0 x n1 x n2).
class Fft3d {
 public:
  Fft3d(int n0, int n1, int n2) : n0_(n0), n1_(n1), n2_(n2), buf_(static_cast<std::size_t>(n0) * n1 * n2) {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    auto* p = reinterpret_cast<fftw_complex*>(buf_.data());
    fwd_ = fftw_plan_dft_3d(n0, n1, n2, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_3d(n0, n1, n2, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Fft3d() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  Fft3d(const Fft3d&) = delete;
  Fft3d& operator=(const Fft3d&) = delete;

  std::vector<std::complex<double>>& data() { return buf_; }
  void forward() { fftw_execute(fwd_); }
  void backward() { fftw_execute(bwd_); }
  std::size_t size() const { return buf_.size(); }

 private:
  int n0_, n1_, n2_;
  std::vector<std::complex<double>> buf_;
  fftw_plan fwd_{}, bwd_{};
};

// 2-D DST-I (FFTW RODFT00) of a real n x n array, in place.
inline void dst2d(std::vector<double>& a, int n) {
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_r2r_2d(n, n, a.data(), a.data(), FFTW_RODFT00, FFTW_RODFT00, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

}  // namespace wgstab::detail
