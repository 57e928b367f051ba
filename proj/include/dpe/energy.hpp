#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpe/image_plane.hpp"
#include "dpe/operators.hpp"

namespace dpe {

struct EnergyParams {
  double lambda = 1e-4;   ///< prior weight
  double theta = 400.0;   ///< prior shape
  double alpha = 0.0;     ///< lower pixel bound
  double beta = 1.0;      ///< upper pixel bound
  double eta = 1.0;       ///< proximal weight of the current stage

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(theta > 0.0)) throw ConfigError("theta must be > 0");
    if (!(alpha < beta)) throw ConfigError("alpha must be < beta");
    if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  }
};

/// Tolerance on the box bounds when evaluating the indicator.
inline constexpr double kFeasibilityTolerance = 1e-12;

/// Circular forward differences, per channel.
struct GradientField {
  ImagePlane dx;
  ImagePlane dy;
};

inline GradientField forward_differences(const ImagePlane& x) {
  GradientField g{ImagePlane(x.shape()), ImagePlane(x.shape())};
  const std::size_t w = x.width(), h = x.height();
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w; ++i) {
        const double v = x.at(i, y, c);
        g.dx.at(i, y, c) = x.at((i + 1) % w, y, c) - v;
        g.dy.at(i, y, c) = x.at(i, (y + 1) % h, c) - v;
      }
  return g;
}

/// Adjoint of forward_differences applied to (u, v).
inline ImagePlane difference_adjoint(const ImagePlane& u, const ImagePlane& v) {
  require_same_shape(u, v, "difference_adjoint");
  ImagePlane out(u.shape());
  const std::size_t w = u.width(), h = u.height();
  for (std::size_t c = 0; c < u.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t i = 0; i < w; ++i) {
        out.at(i, y, c) = u.at((i + w - 1) % w, y, c) - u.at(i, y, c) +
                          v.at(i, (y + h - 1) % h, c) - v.at(i, y, c);
      }
  return out;
}

/// ½‖A x − y‖²
inline double eval_fidelity(const DegradationOperator& op, const ImagePlane& x,
                            const ImagePlane& y) {
  const ImagePlane ax = op.apply(x);
  require_same_shape(ax, y, "eval_fidelity");
  return 0.5 * squared_norm(ax - y);
}

/// λ Σ [log(1 + θ dx²) + log(1 + θ dy²)] over circular forward differences.
inline double eval_prior(const ImagePlane& x, const EnergyParams& params) {
  if (!(params.theta > 0.0)) throw ConfigError("theta must be > 0");
  const GradientField g = forward_differences(x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += std::log1p(params.theta * g.dx[i] * g.dx[i]);
    s += std::log1p(params.theta * g.dy[i] * g.dy[i]);
  }
  return params.lambda * s;
}

inline ImagePlane grad_prior(const ImagePlane& x, const EnergyParams& params) {
  GradientField g = forward_differences(x);
  const double t = params.theta;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = g.dx[i], b = g.dy[i];
    g.dx[i] = params.lambda * 2.0 * t * a / (1.0 + t * a * a);
    g.dy[i] = params.lambda * 2.0 * t * b / (1.0 + t * b * b);
  }
  return difference_adjoint(g.dx, g.dy);
}

/// Gradient of f + g without the proximal term.
inline ImagePlane grad_model(const ImagePlane& x, const ImagePlane& y,
                             const DegradationOperator& op, const EnergyParams& params) {
  ImagePlane r = op.apply(x);
  require_same_shape(r, y, "grad_model");
  r -= y;
  ImagePlane out = op.adjoint(r);
  out += grad_prior(x, params);
  return out;
}

/// ∇ψ(x) = Aᵀ(A x − y) + ∇g(x) + η (x − x_anchor)
inline ImagePlane grad_smooth(const ImagePlane& x, const ImagePlane& y,
                              const ImagePlane& x_anchor, const DegradationOperator& op,
                              const EnergyParams& params) {
  require_same_shape(x, x_anchor, "grad_smooth");
  ImagePlane out = grad_model(x, y, op, params);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += params.eta * (x[i] - x_anchor[i]);
  return out;
}

/// ψ(x) = f + g + (η/2)‖x − x_anchor‖²
inline double eval_smooth(const ImagePlane& x, const ImagePlane& y,
                          const ImagePlane& x_anchor, const DegradationOperator& op,
                          const EnergyParams& params) {
  return eval_fidelity(op, x, y) + eval_prior(x, params) +
         0.5 * params.eta * squared_norm(x - x_anchor);
}

inline bool is_feasible(const ImagePlane& x, const EnergyParams& params,
                        double tol = kFeasibilityTolerance) {
  return std::ranges::all_of(x.data(), [&](double v) {
    return v >= params.alpha - tol && v <= params.beta + tol;
  });
}

/// Ψ = f + g + indicator of the box; +infinity outside it.
inline double eval_energy(const ImagePlane& x, const ImagePlane& y,
                          const DegradationOperator& op, const EnergyParams& params) {
  if (!is_feasible(x, params)) return std::numeric_limits<double>::infinity();
  return eval_fidelity(op, x, y) + eval_prior(x, params);
}

inline ImagePlane project_box(ImagePlane x, const EnergyParams& params) {
  for (double& v : x.data()) v = std::clamp(v, params.alpha, params.beta);
  return x;
}

}  // namespace dpe
