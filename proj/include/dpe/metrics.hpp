#pragma once

#include <cmath>
#include <vector>

#include "dpe/image_plane.hpp"

namespace dpe {

inline constexpr double kPsnrCap = 99.0;

inline double mse(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// 10 log10(peak² / MSE), capped at 99 dB.
inline double psnr(const ImagePlane& a, const ImagePlane& b, double peak = 1.0) {
  const double e = mse(a, b);
  if (e < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(peak * peak / e);
}

inline double l1_error(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "l1_error");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

struct SsimOptions {
  int radius = 5;  // 11x11 window
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

namespace detail {

// Separable Gaussian weighted mean; windows are truncated at the border and
// renormalized over the in-image taps.
inline std::vector<double> local_mean(const std::vector<double>& v, std::size_t w, std::size_t h,
                                      const std::vector<double>& taps, int radius) {
  std::vector<double> tmp(v.size()), out(v.size());
  const long lw = static_cast<long>(w), lh = static_cast<long>(h);
  for (long y = 0; y < lh; ++y)
    for (long x = 0; x < lw; ++x) {
      double s = 0.0, n = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const long j = x + k;
        if (j < 0 || j >= lw) continue;
        const double t = taps[static_cast<std::size_t>(k + radius)];
        s += t * v[static_cast<std::size_t>(y * lw + j)];
        n += t;
      }
      tmp[static_cast<std::size_t>(y * lw + x)] = s / n;
    }
  for (long y = 0; y < lh; ++y)
    for (long x = 0; x < lw; ++x) {
      double s = 0.0, n = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const long j = y + k;
        if (j < 0 || j >= lh) continue;
        const double t = taps[static_cast<std::size_t>(k + radius)];
        s += t * tmp[static_cast<std::size_t>(j * lw + x)];
        n += t;
      }
      out[static_cast<std::size_t>(y * lw + x)] = s / n;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM over all pixels and channels (Gaussian window).
inline double ssim(const ImagePlane& a, const ImagePlane& b, const SsimOptions& opt = {}) {
  require_same_shape(a, b, "ssim");
  std::vector<double> taps(static_cast<std::size_t>(2 * opt.radius + 1));
  for (int k = -opt.radius; k <= opt.radius; ++k) {
    taps[static_cast<std::size_t>(k + opt.radius)] = std::exp(-(k * k) / (2.0 * opt.sigma * opt.sigma));
  }
  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
  const std::size_t w = a.width(), h = a.height(), n = w * h;

  double total = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c) {
    std::vector<double> xa(a.channel(c).begin(), a.channel(c).end());
    std::vector<double> xb(b.channel(c).begin(), b.channel(c).end());
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      aa[i] = xa[i] * xa[i];
      bb[i] = xb[i] * xb[i];
      ab[i] = xa[i] * xb[i];
    }
    const auto mu_a = detail::local_mean(xa, w, h, taps, opt.radius);
    const auto mu_b = detail::local_mean(xb, w, h, taps, opt.radius);
    const auto m_aa = detail::local_mean(aa, w, h, taps, opt.radius);
    const auto m_bb = detail::local_mean(bb, w, h, taps, opt.radius);
    const auto m_ab = detail::local_mean(ab, w, h, taps, opt.radius);
    for (std::size_t i = 0; i < n; ++i) {
      const double var_a = m_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(a.size());
}

}  // namespace dpe
