#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpe/error.hpp"

namespace dpe {

struct Shape {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;

  std::size_t pixels() const { return width * height; }
  std::size_t size() const { return width * height * channels; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(width) + "x" + std::to_string(height) + "x" +
           std::to_string(channels);
  }
};

/// Real-valued image, row-major within a channel, channels stored as
/// consecutive planes.
class ImagePlane {
 public:
  ImagePlane() = default;

  ImagePlane(std::size_t width, std::size_t height, std::size_t channels = 1,
             double fill = 0.0)
      : shape_{width, height, channels}, data_(shape_.size(), fill) {}

  explicit ImagePlane(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}

  ImagePlane(Shape shape, std::vector<double> data)
      : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw DimensionError("plane data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t width() const { return shape_.width; }
  std::size_t height() const { return shape_.height; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * shape_.pixels(), shape_.pixels());
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * shape_.pixels(),
                                                  shape_.pixels());
  }

  /// Copy of channel `c` as a single-channel plane.
  ImagePlane extract_channel(std::size_t c) const {
    ImagePlane out(shape_.width, shape_.height, 1);
    std::ranges::copy(channel(c), out.data_.begin());
    return out;
  }

  void set_channel(std::size_t c, const ImagePlane& src) {
    if (src.width() != width() || src.height() != height() || src.channels() != 1) {
      throw DimensionError("set_channel: source " + src.shape().str() +
                           " incompatible with " + shape_.str());
    }
    std::ranges::copy(src.data(), channel(c).begin());
  }

  bool all_finite() const {
    return std::ranges::all_of(data_, [](double v) { return std::isfinite(v); });
  }

  ImagePlane& operator+=(const ImagePlane& o);
  ImagePlane& operator-=(const ImagePlane& o);
  ImagePlane& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

 private:
  Shape shape_{0, 0, 1};
  std::vector<double> data_;
};

inline void require_same_shape(const ImagePlane& a, const ImagePlane& b,
                               const char* context) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(context) + ": shape " + a.shape().str() +
                         " vs " + b.shape().str());
  }
}

inline ImagePlane& ImagePlane::operator+=(const ImagePlane& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

inline ImagePlane& ImagePlane::operator-=(const ImagePlane& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

inline ImagePlane operator+(ImagePlane a, const ImagePlane& b) { return a += b; }
inline ImagePlane operator-(ImagePlane a, const ImagePlane& b) { return a -= b; }
inline ImagePlane operator*(double s, ImagePlane a) { return a *= s; }

/// a += s * b
inline void axpy(ImagePlane& a, double s, const ImagePlane& b) {
  require_same_shape(a, b, "axpy");
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += s * bv[i];
}

// Sequential summation keeps reductions bit-deterministic.
inline double dot(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const ImagePlane& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

inline double norm(const ImagePlane& a) { return std::sqrt(squared_norm(a)); }

inline double distance(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double max_abs_diff(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double mean(const ImagePlane& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return a.empty() ? 0.0 : s / static_cast<double>(a.size());
}

}  // namespace dpe
