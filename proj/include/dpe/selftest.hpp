#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "dpe/energy.hpp"
#include "dpe/io.hpp"
#include "dpe/metrics.hpp"
#include "dpe/operators.hpp"
#include "dpe/predictor.hpp"
#include "dpe/propagation.hpp"
#include "dpe/tasks.hpp"

namespace dpe {

struct SelfTestCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

inline ImagePlane random_plane(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  ImagePlane x(s);
  for (double& v : x.data()) v = rng.uniform(lo, hi);
  return x;
}

inline std::vector<DegradationOperator> selftest_operators(Shape s, Rng& rng) {
  std::vector<DegradationOperator> ops;
  ops.push_back(DegradationOperator::identity(s));
  ops.push_back(DegradationOperator::convolution(gaussian_kernel(1.0), s));
  ops.push_back(DegradationOperator::mask(random_mask(s.width, s.height, s.channels, 0.5, rng.next())));
  ops.push_back(DegradationOperator::downsample(s, 2));
  return ops;
}

}  // namespace detail

/// Invariant checks that need nothing beyond the library itself.
inline std::vector<SelfTestCase> run_selftest() {
  std::vector<SelfTestCase> out;
  const auto check = [&](const std::string& name, const std::function<std::string()>& body) {
    SelfTestCase c{name, false, ""};
    try {
      c.detail = body();
      c.passed = c.detail.empty();
    } catch (const std::exception& e) {
      c.detail = std::string("exception: ") + e.what();
    }
    out.push_back(std::move(c));
  };
  const Shape s{8, 8, 1};
  EnergyParams params;
  params.lambda = 0.003;
  params.theta = 30.0;
  params.eta = 0.8;

  check("gradient vs central differences", [&]() -> std::string {
    Rng rng(101);
    for (const auto& op : detail::selftest_operators(s, rng)) {
      const ImagePlane x = detail::random_plane(s, rng, 0.1, 0.9);
      const ImagePlane y = detail::random_plane(op.output_shape(), rng);
      const ImagePlane anchor = detail::random_plane(s, rng);
      const ImagePlane g = grad_smooth(x, y, anchor, op, params);
      ImagePlane fd(s), xp = x;
      const double h = 1e-6;
      for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = eval_smooth(xp, y, anchor, op, params);
        xp[i] = x[i] - h;
        const double fm = eval_smooth(xp, y, anchor, op, params);
        xp[i] = x[i];
        fd[i] = (fp - fm) / (2.0 * h);
      }
      const double err = distance(g, fd) / norm(g);
      if (!(err < 1e-5)) return op.name() + ": relative error " + format_real(err);
    }
    return "";
  });

  check("adjoint inner-product identity", [&]() -> std::string {
    Rng rng(102);
    for (const auto& op : detail::selftest_operators(s, rng)) {
      const ImagePlane u = detail::random_plane(s, rng, -1, 1);
      const ImagePlane v = detail::random_plane(op.output_shape(), rng, -1, 1);
      const double lhs = dot(op.apply(u), v), rhs = dot(u, op.adjoint(v));
      const double err = std::abs(lhs - rhs) / std::abs(lhs);
      if (!(err < 1e-10)) return op.name() + ": relative error " + format_real(err);
    }
    return "";
  });

  check("warm start solves the normal equations", [&]() -> std::string {
    Rng rng(103);
    for (const auto& op : detail::selftest_operators(s, rng)) {
      const ImagePlane prev = detail::random_plane(s, rng);
      const ImagePlane y = detail::random_plane(op.output_shape(), rng);
      const ImagePlane x = op.warm_start(prev, y, params.eta);
      ImagePlane rhs = op.adjoint(y);
      axpy(rhs, params.eta, prev);
      const double err = distance(op.normal_apply(x, params.eta), rhs) / norm(rhs);
      if (!(err < 1e-6)) return op.name() + ": residual " + format_real(err);
    }
    return "";
  });

  check("fixed-point identity of a stage", [&]() -> std::string {
    Rng rng(104);
    const auto op = DegradationOperator::convolution(gaussian_kernel(1.2), s);
    const ImagePlane y = detail::random_plane(s, rng, -0.1, 1.1);
    const ImagePlane xk = detail::random_plane(s, rng);
    PropagationConfig cfg;
    cfg.eta_schedule = {params.eta};
    const auto st = dpe_stage(0, xk, y, op, params, Predictor::classical(0.05), cfg);
    ImagePlane z = st.x_next - grad_smooth(st.x_next, y, xk, op, params);
    z += st.m;
    const double err = max_abs_diff(project_box(z, params), st.x_next);
    if (!(err <= 1e-10 * (1.0 + norm(st.x_next)))) return "deviation " + format_real(err);
    return "";
  });

  check("error bound and descent on a deconvolution run", [&]() -> std::string {
    TaskSpec spec;
    spec.noise = 0.01;
    const auto inst = synthesize(TaskKind::deconv, synthetic_scene(32, 32, 1, 7), spec, 42);
    PropagationConfig cfg;
    const RunResult r = run(inst.observation, inst.op, EnergyParams{}, PredictorBank::classical_bank(), cfg);
    for (const auto& st : r.trace.stages) {
      if (st.accepted && !(st.m_norm <= st.bound)) return "stage " + std::to_string(st.k) + ": bound violated";
    }
    const MonitorReport rep = monitor(r.trace, cfg);
    if (!rep.ok()) return rep.violations.empty() ? "monitor failed" : rep.violations.front();
    return "";
  });

  check("metric closed forms", []() -> std::string {
    const ImagePlane a(16, 16, 1, 0.25);
    ImagePlane b = a;
    for (double& v : b.data()) v += 16.0 / 255.0;
    if (!(std::abs(psnr(a, b) - 24.0487) < 0.01)) return "psnr offset " + format_real(psnr(a, b));
    const ImagePlane c = synthetic_scene(16, 16, 1, 3);
    if (ssim(c, c) != 1.0) return "ssim(a, a) != 1";
    if (l1_error(c, c) != 0.0) return "l1(a, a) != 0";
    return "";
  });

  check("haze model inversion", []() -> std::string {
    const ImagePlane j = synthetic_scene(24, 24, 3, 5);
    const ImagePlane t = synthetic_transmission(24, 24, 5);
    const Airlight a{0.9, 0.85, 0.95};
    const double err = max_abs_diff(recover_radiance(apply_haze(j, t, a), t, a, 0.1, false), j);
    if (!(err < 1e-12)) return "residual " + format_real(err);
    return "";
  });

  check("image and weight round trips", []() -> std::string {
    Rng rng(105);
    const ImagePlane x = detail::random_plane({9, 7, 3}, rng);
    const double err = max_abs_diff(decode_pnm(encode_pnm(x, 16)), x);
    if (!(err <= 0.5 / 65535 + 1e-15)) return "16-bit PNM error " + format_real(err);
    std::vector<ConvLayer> layers;
    for (std::uint32_t d : kDilationPattern) {
      ConvLayer l;
      l.in_channels = l.out_channels = 1;
      l.dilation = d;
      l.weights.resize(l.weight_count());
      for (float& w : l.weights) w = static_cast<float>(rng.uniform(-1, 1));
      l.bias = {static_cast<float>(rng.uniform(-1, 1))};
      layers.push_back(std::move(l));
    }
    const Predictor p = Predictor::conv_net(layers);
    if (!(decode_weights(encode_weights(p)).layers() == p.layers())) return "DPEW round trip differs";
    return "";
  });

  return out;
}

/// Prints one line per case; returns true when all pass.
inline bool report_selftest(const std::vector<SelfTestCase>& cases, std::ostream& os) {
  bool ok = true;
  for (const auto& c : cases) {
    os << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed) os << ": " << c.detail;
    os << '\n';
    ok = ok && c.passed;
  }
  return ok;
}

}  // namespace dpe
