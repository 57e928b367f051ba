#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <string>

#include "dpe/error.hpp"
#include "dpe/fft.hpp"
#include "dpe/image_plane.hpp"
#include "dpe/kernel.hpp"
#include "dpe/rng.hpp"

namespace dpe {

/// Spectrum of `kernel` zero-padded to width x height with its centre moved
/// to the origin (circular boundary). Kernels larger than the grid wrap.
inline Spectrum kernel_transfer(const Kernel& kernel, const Fft2d& fft) {
  const std::size_t w = fft.width(), h = fft.height();
  std::vector<double> padded(w * h, 0.0);
  const long cx = static_cast<long>(kernel.width / 2);
  const long cy = static_cast<long>(kernel.height / 2);
  const long lw = static_cast<long>(w), lh = static_cast<long>(h);
  for (std::size_t ky = 0; ky < kernel.height; ++ky) {
    for (std::size_t kx = 0; kx < kernel.width; ++kx) {
      const long x = ((static_cast<long>(kx) - cx) % lw + lw) % lw;
      const long y = ((static_cast<long>(ky) - cy) % lh + lh) % lh;
      padded[static_cast<std::size_t>(y * lw + x)] += kernel.at(kx, ky);
    }
  }
  return fft.forward(padded);
}

/// Filters every channel of `x` by `transfer` (or its conjugate).
inline ImagePlane filter_channels(const ImagePlane& x, const Spectrum& transfer,
                                  const Fft2d& fft, bool conjugate) {
  ImagePlane out(x.shape());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    Spectrum s = fft.forward(x.channel(c));
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] *= conjugate ? std::conj(transfer[i]) : transfer[i];
    }
    fft.inverse(s, out.channel(c));
  }
  return out;
}

/// Linear degradation A of the fidelity term ½‖A x − y‖².
///
/// Immutable after construction; every member is safe to call concurrently.
class DegradationOperator {
 public:
  enum class Kind { identity, convolution, mask, downsample };

  /// Anti-aliasing blur std used by the downsampling operator.
  static double downsample_sigma(int scale) { return 0.8 * scale / 2.0; }

  static DegradationOperator identity(Shape shape) {
    DegradationOperator op(Kind::identity, shape, shape);
    return op;
  }

  static DegradationOperator convolution(Kernel kernel, Shape shape) {
    kernel.validate();
    DegradationOperator op(Kind::convolution, shape, shape);
    op.fft_ = std::make_shared<const Fft2d>(shape.width, shape.height);
    op.transfer_ = kernel_transfer(kernel, *op.fft_);
    op.kernel_ = std::move(kernel);
    return op;
  }

  /// `mask` holds 1 at observed and 0 at missing samples.
  static DegradationOperator mask(ImagePlane mask) {
    for (double v : mask.data()) {
      if (v != 0.0 && v != 1.0) throw FormatError("mask values must be 0 or 1");
    }
    DegradationOperator op(Kind::mask, mask.shape(), mask.shape());
    op.mask_ = std::move(mask);
    return op;
  }

  /// Circular Gaussian anti-aliasing blur followed by keeping every
  /// `scale`-th row and column (starting at 0).
  static DegradationOperator downsample(Shape shape, int scale) {
    if (scale < 2) throw DimensionError("downsample scale must be >= 2");
    const auto s = static_cast<std::size_t>(scale);
    Shape out{(shape.width + s - 1) / s, (shape.height + s - 1) / s, shape.channels};
    DegradationOperator op(Kind::downsample, shape, out);
    op.scale_ = scale;
    op.kernel_ = gaussian_kernel(downsample_sigma(scale));
    op.fft_ = std::make_shared<const Fft2d>(shape.width, shape.height);
    op.transfer_ = kernel_transfer(op.kernel_, *op.fft_);
    return op;
  }

  Kind kind() const { return kind_; }
  const Shape& input_shape() const { return in_; }
  const Shape& output_shape() const { return out_; }
  const Kernel& kernel() const { return kernel_; }
  const ImagePlane& mask_plane() const { return mask_; }
  int scale() const { return scale_; }

  std::string name() const {
    switch (kind_) {
      case Kind::identity: return "identity";
      case Kind::convolution: return "convolution";
      case Kind::mask: return "mask";
      case Kind::downsample: return "downsample";
    }
    return "?";
  }

  ImagePlane apply(const ImagePlane& x) const {
    check(x.shape(), in_, "apply");
    switch (kind_) {
      case Kind::identity:
        return x;
      case Kind::convolution:
        return filter_channels(x, transfer_, *fft_, false);
      case Kind::mask: {
        ImagePlane out = x;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask_[i];
        return out;
      }
      case Kind::downsample: {
        const ImagePlane blurred = filter_channels(x, transfer_, *fft_, false);
        ImagePlane out(out_);
        const auto s = static_cast<std::size_t>(scale_);
        for (std::size_t c = 0; c < out_.channels; ++c)
          for (std::size_t y = 0; y < out_.height; ++y)
            for (std::size_t xx = 0; xx < out_.width; ++xx)
              out.at(xx, y, c) = blurred.at(xx * s, y * s, c);
        return out;
      }
    }
    return x;
  }

  ImagePlane adjoint(const ImagePlane& r) const {
    check(r.shape(), out_, "adjoint");
    switch (kind_) {
      case Kind::identity:
      case Kind::mask:
        return kind_ == Kind::identity ? r : apply(r);
      case Kind::convolution:
        return filter_channels(r, transfer_, *fft_, true);
      case Kind::downsample: {
        ImagePlane up(in_);
        const auto s = static_cast<std::size_t>(scale_);
        for (std::size_t c = 0; c < out_.channels; ++c)
          for (std::size_t y = 0; y < out_.height; ++y)
            for (std::size_t x = 0; x < out_.width; ++x) up.at(x * s, y * s, c) = r.at(x, y, c);
        return filter_channels(up, transfer_, *fft_, true);
      }
    }
    return r;
  }

  /// argmin_x ½‖A x − y‖² + (eta/2)‖x − x_prev‖².
  ///
  /// Closed form for identity, mask and convolution; conjugate gradient on
  /// (AᵀA + eta I) x = Aᵀy + eta x_prev for downsampling.
  ImagePlane warm_start(const ImagePlane& x_prev, const ImagePlane& y, double eta,
                        int cg_iterations = cg_max_iterations) const {
    if (!(eta > 0.0)) throw DimensionError("warm_start requires eta > 0");
    check(x_prev.shape(), in_, "warm_start x_prev");
    check(y.shape(), out_, "warm_start y");
    switch (kind_) {
      case Kind::identity: {
        ImagePlane out(in_);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (y[i] + eta * x_prev[i]) / (1.0 + eta);
        return out;
      }
      case Kind::mask: {
        ImagePlane out(in_);
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = (mask_[i] * y[i] + eta * x_prev[i]) / (mask_[i] + eta);
        }
        return out;
      }
      case Kind::convolution: {
        ImagePlane out(in_);
        for (std::size_t c = 0; c < in_.channels; ++c) {
          const Spectrum ys = fft_->forward(y.channel(c));
          Spectrum xs = fft_->forward(x_prev.channel(c));
          for (std::size_t i = 0; i < xs.size(); ++i) {
            const auto& k = transfer_[i];
            xs[i] = (std::conj(k) * ys[i] + eta * xs[i]) / (std::norm(k) + eta);
          }
          fft_->inverse(xs, out.channel(c));
        }
        return out;
      }
      case Kind::downsample:
        return conjugate_gradient(x_prev, y, eta, cg_iterations);
    }
    return x_prev;
  }

  /// (AᵀA + eta I) x
  ImagePlane normal_apply(const ImagePlane& x, double eta) const {
    ImagePlane out = adjoint(apply(x));
    axpy(out, eta, x);
    return out;
  }

  static constexpr double cg_tolerance = 1e-8;
  static constexpr int cg_max_iterations = 500;

 private:
  DegradationOperator(Kind kind, Shape in, Shape out) : kind_(kind), in_(in), out_(out) {}

  static void check(const Shape& got, const Shape& want, const char* what) {
    if (got != want) {
      throw DimensionError(std::string(what) + ": expected " + want.str() + ", got " + got.str());
    }
  }

  ImagePlane conjugate_gradient(const ImagePlane& x_prev, const ImagePlane& y, double eta,
                                int max_iterations) const {
    ImagePlane rhs = adjoint(y);
    axpy(rhs, eta, x_prev);
    const double rhs_norm = norm(rhs);
    if (rhs_norm == 0.0) return ImagePlane(in_);

    ImagePlane x = x_prev;
    ImagePlane r = rhs - normal_apply(x, eta);
    ImagePlane p = r;
    double rr = squared_norm(r);
    for (int it = 0; it < max_iterations; ++it) {
      if (std::sqrt(rr) < cg_tolerance * rhs_norm) return x;
      const ImagePlane ap = normal_apply(p, eta);
      const double alpha = rr / dot(p, ap);
      axpy(x, alpha, p);
      axpy(r, -alpha, ap);
      const double rr_next = squared_norm(r);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + (rr_next / rr) * p[i];
      rr = rr_next;
    }
    const double residual = std::sqrt(rr) / rhs_norm;
    if (residual < cg_tolerance) return x;
    throw SolverError("conjugate gradient did not converge in " +
                          std::to_string(max_iterations) + " iterations (relative residual " +
                          std::to_string(residual) + ")",
                      residual);
  }

  Kind kind_;
  Shape in_;
  Shape out_;
  Kernel kernel_;
  ImagePlane mask_;
  int scale_ = 1;
  std::shared_ptr<const Fft2d> fft_;
  Spectrum transfer_;
};

/// Largest eigenvalue of AᵀA by power iteration from a seeded start.
inline double normal_operator_norm(const DegradationOperator& op, int iterations = 100,
                                   std::uint64_t seed = 0x5eed) {
  Rng rng(seed);
  ImagePlane v(op.input_shape());
  for (double& e : v.data()) e = rng.uniform(0.5, 1.5);
  double lambda = 0.0;
  for (int i = 0; i < iterations; ++i) {
    const double n = norm(v);
    if (n == 0.0) return 0.0;
    v *= 1.0 / n;
    ImagePlane w = op.adjoint(op.apply(v));
    lambda = dot(v, w);
    v = std::move(w);
  }
  return lambda;
}

}  // namespace dpe
