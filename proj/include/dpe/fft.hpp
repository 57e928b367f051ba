#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <cstring>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace dpe {

using Spectrum = std::vector<std::complex<double>>;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// Real-to-complex 2-D transform of a fixed height x width grid.
///
/// Plans are built once with FFTW_ESTIMATE, which is deterministic, and
/// executed through the new-array interface on per-call buffers, so a
/// single instance may be shared between threads.
class Fft2d {
 public:
  Fft2d(std::size_t width, std::size_t height) : width_(width), height_(height) {
    std::lock_guard lock(detail::fftw_planner_mutex());
    auto* real = fftw_alloc_real(real_size());
    auto* cplx = fftw_alloc_complex(spectrum_size());
    forward_ = fftw_plan_dft_r2c_2d(static_cast<int>(height_), static_cast<int>(width_),
                                    real, cplx, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_2d(static_cast<int>(height_), static_cast<int>(width_),
                                    cplx, real, FFTW_ESTIMATE);
    fftw_free(real);
    fftw_free(cplx);
  }

  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  ~Fft2d() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t real_size() const { return width_ * height_; }
  std::size_t spectrum_size() const { return height_ * (width_ / 2 + 1); }

  Spectrum forward(std::span<const double> in) const {
    std::unique_ptr<double, detail::FftwFree> real(fftw_alloc_real(real_size()));
    std::unique_ptr<fftw_complex, detail::FftwFree> cplx(fftw_alloc_complex(spectrum_size()));
    std::memcpy(real.get(), in.data(), real_size() * sizeof(double));
    fftw_execute_dft_r2c(forward_, real.get(), cplx.get());
    Spectrum out(spectrum_size());
    for (std::size_t i = 0; i < spectrum_size(); ++i) out[i] = {cplx.get()[i][0], cplx.get()[i][1]};
    return out;
  }

  /// Normalized inverse; inverse(forward(x)) == x up to rounding.
  void inverse(const Spectrum& in, std::span<double> out) const {
    std::unique_ptr<double, detail::FftwFree> real(fftw_alloc_real(real_size()));
    std::unique_ptr<fftw_complex, detail::FftwFree> cplx(fftw_alloc_complex(spectrum_size()));
    std::memcpy(cplx.get(), in.data(), spectrum_size() * sizeof(fftw_complex));
    fftw_execute_dft_c2r(inverse_, cplx.get(), real.get());
    const double scale = 1.0 / static_cast<double>(real_size());
    for (std::size_t i = 0; i < real_size(); ++i) out[i] = real.get()[i] * scale;
  }

 private:
  std::size_t width_;
  std::size_t height_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace dpe
