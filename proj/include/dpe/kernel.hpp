#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpe/error.hpp"

namespace dpe {

/// Blur kernel with odd dimensions, row-major, centred at (width/2, height/2).
struct Kernel {
  std::size_t width = 1;
  std::size_t height = 1;
  std::vector<double> values{1.0};

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  /// Throws unless dims are odd, values nonnegative and the sum is 1.
  void validate() const {
    if (width % 2 == 0 || height % 2 == 0) {
      throw DimensionError("kernel dimensions must be odd, got " + std::to_string(height) +
                           "x" + std::to_string(width));
    }
    if (values.size() != width * height) {
      throw DimensionError("kernel value count does not match its dimensions");
    }
    for (double v : values) {
      if (!std::isfinite(v) || v < 0.0) throw FormatError("kernel has a negative or non-finite value");
    }
    if (std::abs(sum() - 1.0) > 1e-9) {
      throw FormatError("kernel must sum to 1 (sum = " + std::to_string(sum()) + ")");
    }
  }

  static Kernel delta() { return Kernel{}; }
};

/// Normalized isotropic Gaussian of the given std; radius defaults to ceil(3 sigma).
inline Kernel gaussian_kernel(double sigma, int radius = -1) {
  if (!(sigma > 0.0)) return Kernel::delta();
  if (radius < 0) radius = static_cast<int>(std::ceil(3.0 * sigma));
  const std::size_t n = static_cast<std::size_t>(2 * radius + 1);
  Kernel k{n, n, std::vector<double>(n * n)};
  double total = 0.0;
  for (int y = -radius; y <= radius; ++y) {
    for (int x = -radius; x <= radius; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k.values[static_cast<std::size_t>((y + radius) * static_cast<int>(n) + x + radius)] = v;
      total += v;
    }
  }
  for (double& v : k.values) v /= total;
  return k;
}

/// Text kernel format: "H W" on the first line, then H rows of W reals.
/// The result is normalized to unit sum; tiny negatives (>= -1e-12) are zeroed.
inline Kernel parse_kernel(std::istream& in, const std::string& source = "kernel") {
  long long h = 0, w = 0;
  if (!(in >> h >> w) || h <= 0 || w <= 0) {
    throw FormatError(source + ": expected \"H W\" header");
  }
  if (h % 2 == 0 || w % 2 == 0) throw FormatError(source + ": kernel dimensions must be odd");
  Kernel k{static_cast<std::size_t>(w), static_cast<std::size_t>(h),
           std::vector<double>(static_cast<std::size_t>(h * w))};
  for (std::size_t i = 0; i < k.values.size(); ++i) {
    if (!(in >> k.values[i])) {
      throw FormatError(source + ": expected " + std::to_string(k.values.size()) +
                        " values, got " + std::to_string(i));
    }
    if (!std::isfinite(k.values[i])) throw FormatError(source + ": non-finite kernel value");
    if (k.values[i] < -1e-12) {
      throw FormatError(source + ": negative kernel value at index " + std::to_string(i));
    }
    if (k.values[i] < 0.0) k.values[i] = 0.0;
  }
  const double s = k.sum();
  if (!(s > 0.0)) throw FormatError(source + ": kernel sums to zero");
  for (double& v : k.values) v /= s;
  k.validate();
  return k;
}

inline Kernel load_kernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel file " + path);
  return parse_kernel(in, path);
}

inline void save_kernel(const Kernel& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write kernel file " + path);
  out << k.height << ' ' << k.width << '\n';
  out.precision(17);
  for (std::size_t y = 0; y < k.height; ++y) {
    for (std::size_t x = 0; x < k.width; ++x) out << (x ? " " : "") << k.at(x, y);
    out << '\n';
  }
}

}  // namespace dpe
