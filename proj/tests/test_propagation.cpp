#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using dpe::DegradationOperator;
using dpe::EnergyParams;
using dpe::ImagePlane;
using dpe::PropagationConfig;
using dpe::Shape;
using dpe::Variant;

namespace {

EnergyParams params(double lambda, double theta, double eta = 1.0) {
  EnergyParams p;
  p.lambda = lambda;
  p.theta = theta;
  p.eta = eta;
  return p;
}

struct Deconv {
  ImagePlane truth;
  DegradationOperator op = DegradationOperator::identity({1, 1, 1});
  ImagePlane y;
};

Deconv deconv_instance(std::size_t n, std::uint64_t seed) {
  dpe::TaskSpec spec;
  spec.blur_sigma = 1.5;
  spec.noise = 0.01;
  const ImagePlane truth = dpe::synthetic_scene(n, n, 1, seed);
  auto inst = dpe::synthesize(dpe::TaskKind::deconv, truth, spec, seed + 1);
  return {truth, inst.op, inst.observation};
}

}  // namespace

TEST(ComputeError, CancelsWhenPointsCoincide) {
  dpe::Rng rng(1);
  const Shape s{6, 6, 1};
  const auto op = DegradationOperator::identity(s);
  const ImagePlane x = oracle::random_plane(s, rng), y = oracle::random_plane(s, rng);
  const ImagePlane m = dpe::compute_error(x, x, oracle::random_plane(s, rng), y, op, params(0.01, 10));
  EXPECT_EQ(dpe::norm(m), 0.0);
}

TEST(ComputeError, InteriorStepLeavesOnlyTheGradient) {
  dpe::Rng rng(2);
  const Shape s{8, 8, 1};
  const auto op = DegradationOperator::convolution(dpe::gaussian_kernel(1.0), s);
  const auto p = params(0.001, 20, 1.0);
  const ImagePlane y = oracle::random_plane(s, rng, 0.4, 0.6);
  const ImagePlane xk = oracle::random_plane(s, rng, 0.4, 0.6);
  const ImagePlane xdd = oracle::random_plane(s, rng, 0.4, 0.6);
  const ImagePlane xn = xdd - dpe::grad_smooth(xdd, y, xk, op, p);
  ASSERT_TRUE(dpe::is_feasible(xn, p));
  const ImagePlane m = dpe::compute_error(xdd, xn, xk, y, op, p);
  EXPECT_LT(dpe::max_abs_diff(m, dpe::grad_smooth(xn, y, xk, op, p)), 1e-14);
}

TEST(ComputeError, FixedPointIdentityOnRandomStage) {
  dpe::Rng rng(3);
  const Shape s{8, 8, 1};
  const auto op = DegradationOperator::convolution(dpe::gaussian_kernel(1.2), s);
  const auto p = params(1e-4, 400);
  PropagationConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    const ImagePlane y = oracle::random_plane(s, rng, -0.1, 1.1);
    const ImagePlane xk = oracle::random_plane(s, rng);
    const auto st = dpe::dpe_stage(0, xk, y, op, p, dpe::Predictor::classical(0.05), cfg);
    ImagePlane z = st.x_next - dpe::grad_smooth(st.x_next, y, xk, op, p);
    z += st.m;
    const ImagePlane back = dpe::project_box(z, p);
    EXPECT_LT(dpe::max_abs_diff(back, st.x_next), 1e-10 * (1.0 + dpe::norm(st.x_next)));
  }
}

TEST(Condition, Examples) {
  ImagePlane zero(2, 1), xk(2, 1), xn(2, 1);
  xn[0] = 1.0;
  EXPECT_TRUE(dpe::check_condition(zero, xn, xk, 0.4).holds);
  EXPECT_TRUE(dpe::check_condition(zero, xk, xk, 0.4).holds);
  ImagePlane m(2, 1);
  m[1] = 1.0;
  const auto r = dpe::check_condition(m, xn, xk, 0.5);
  EXPECT_FALSE(r.holds);
  EXPECT_DOUBLE_EQ(r.margin, -0.5);
  EXPECT_THROW(dpe::check_condition(m, xn, xk, 0.0), dpe::ConfigError);
}

TEST(Stage, DegenerateConvexCaseDescends) {
  dpe::Rng rng(4);
  const Shape s{8, 8, 1};
  const auto op = DegradationOperator::identity(s);
  const auto p = params(0.0, 1.0);
  PropagationConfig cfg;
  cfg.t_max = 50;
  const ImagePlane y = oracle::random_plane(s, rng, -0.2, 1.2);
  const ImagePlane xk = oracle::random_plane(s, rng);
  const auto st = dpe::dpe_stage(0, xk, y, op, p, dpe::Predictor::identity(), cfg);
  EXPECT_TRUE(dpe::is_feasible(st.x_next, p, 0.0));
  EXPECT_LE(st.record.energy, st.record.energy_prev);
}

TEST(Stage, AcceptedStageSatisfiesSufficientDescent) {
  const auto inst = deconv_instance(16, 21);
  const auto p = params(1e-4, 400);
  PropagationConfig cfg;
  const ImagePlane x0 = dpe::project_box(inst.y, p);
  const auto st = dpe::dpe_stage(0, x0, inst.y, inst.op, p, dpe::Predictor::classical(20 * 3.0 / 255), cfg);
  ASSERT_TRUE(st.accepted);
  const double eta = cfg.eta(0), c = cfg.c(0);
  const double d = st.record.step_norm;
  EXPECT_GE(st.record.descent_margin, (eta / 4 - c * c / eta) * d * d - 1e-10);
  EXPECT_LE(st.record.m_norm, st.record.bound);
}

TEST(Stage, SDpeProjectsTheDescentPointOnly) {
  const auto inst = deconv_instance(16, 22);
  const auto p = params(1e-4, 400);
  PropagationConfig cfg;
  cfg.variant = Variant::s_dpe;
  const ImagePlane x0 = dpe::project_box(inst.y, p);
  const auto pred = dpe::Predictor::classical(0.1);
  const auto st = dpe::dpe_stage(0, x0, inst.y, inst.op, p, pred, cfg);
  const ImagePlane xdd = pred.descent_step(inst.op.warm_start(x0, inst.y, 1.0));
  EXPECT_EQ(dpe::max_abs_diff(st.x_next, dpe::project_box(xdd, p)), 0.0);
  EXPECT_EQ(st.t_used, 1);
}

TEST(Stage, InnerCapIsRecorded) {
  dpe::Rng rng(5);
  const Shape s{8, 8, 1};
  const auto op = DegradationOperator::mask(dpe::random_mask(8, 8, 1, 0.5, 3));
  PropagationConfig cfg;
  cfg.t_max = 2;
  cfg.c_ratio = 1e-6;
  const ImagePlane y = op.apply(oracle::random_plane(s, rng));
  const auto st = dpe::dpe_stage(0, oracle::random_plane(s, rng), y, op, params(0.01, 10), dpe::Predictor::identity(), cfg);
  EXPECT_FALSE(st.accepted);
  EXPECT_EQ(st.t_used, 2);
}

TEST(Run, ConstantFeasibleObservationIsAFixedPoint) {
  const Shape s{8, 8, 1};
  const ImagePlane y(s, 0.3);
  const auto r = dpe::run(y, DegradationOperator::identity(s), params(0.0, 1.0),
                          dpe::PredictorBank::identity_bank(), PropagationConfig{});
  EXPECT_LE(r.trace.stages.size(), 2u);
  EXPECT_LT(dpe::max_abs_diff(r.x, y), 1e-12);
}

TEST(Run, ProximalGradientReduction) {
  const auto inst = deconv_instance(8, 31);
  const auto p = params(1e-3, 50, 0.8);
  PropagationConfig cfg;
  cfg.variant = Variant::c_dpe;
  cfg.t_max = 1;
  cfg.k_max = 50;
  cfg.stop_tol = 0.0;
  cfg.eta_schedule = {0.8};
  const auto ref = oracle::proximal_gradient(oracle::dense_operator(inst.op), inst.y, p, 50);
  ImagePlane x = dpe::project_box(inst.y, p);
  for (int k = 0; k < 50; ++k) {
    const auto st = dpe::dpe_stage(k, x, inst.y, inst.op, p, dpe::Predictor::identity(), cfg);
    x = st.x_next;
    ASSERT_LT(dpe::max_abs_diff(x, ref[static_cast<std::size_t>(k) + 1]), 1e-10) << "iterate " << k + 1;
  }
  cfg.variant = Variant::pg;
  cfg.t_max = 10;
  const auto r = dpe::run(inst.y, inst.op, p, dpe::PredictorBank::classical_bank(), cfg);
  EXPECT_LT(dpe::max_abs_diff(r.x, ref.back()), 1e-10);
}

TEST(Run, GradientDescentReduction) {
  const auto inst = deconv_instance(8, 32);
  const auto p = params(1e-3, 50);
  PropagationConfig cfg;
  cfg.variant = Variant::gd;
  cfg.k_max = 50;
  cfg.stop_tol = 0.0;
  const auto a = oracle::dense_operator(inst.op);
  const double step = 1.0 / (oracle::largest_eigenvalue(a.transpose() * a) + 16 * p.lambda * p.theta);
  cfg.gd_step = step;
  const auto ref = oracle::gradient_descent(a, inst.y, p, step, 50);
  const auto r = dpe::run(inst.y, inst.op, p, dpe::PredictorBank::identity_bank(), cfg);
  ASSERT_EQ(r.trace.stages.size(), 50u);
  EXPECT_LT(dpe::max_abs_diff(r.x, ref.back()), 1e-10);
  EXPECT_NEAR(dpe::gd_step_size(inst.op, p), step, 1e-6 * step);
}

TEST(Run, NonFiniteEnergyAborts) {
  const auto inst = deconv_instance(8, 33);
  PropagationConfig cfg;
  cfg.variant = Variant::gd;
  cfg.gd_step = 1e300;
  EXPECT_THROW(dpe::run(inst.y, inst.op, params(1e-3, 50), dpe::PredictorBank::identity_bank(), cfg),
               dpe::SolverError);
  ImagePlane bad = inst.y;
  bad[0] = std::nan("");
  EXPECT_THROW(dpe::run(bad, inst.op, params(1e-3, 50), dpe::PredictorBank::identity_bank(), PropagationConfig{}),
               dpe::SolverError);
}

TEST(Run, ShapeChangingOperatorNeedsInitialEstimate) {
  const auto op = DegradationOperator::downsample({8, 8, 1}, 2);
  EXPECT_THROW(dpe::run(ImagePlane(4, 4), op, params(0, 1), dpe::PredictorBank::identity_bank(), PropagationConfig{}),
               dpe::DimensionError);
}

TEST(Run, OutputIsFeasibleAndTraceIsComplete) {
  const auto inst = deconv_instance(32, 34);
  const auto p = params(1e-4, 400);
  const auto r = dpe::run(inst.y, inst.op, p, dpe::PredictorBank::classical_bank(), PropagationConfig{}, std::nullopt,
                          &inst.truth);
  EXPECT_TRUE(dpe::is_feasible(r.x, p, 0.0));
  ASSERT_FALSE(r.trace.stages.empty());
  for (std::size_t i = 0; i < r.trace.stages.size(); ++i) {
    const auto& st = r.trace.stages[i];
    EXPECT_EQ(st.k, static_cast<int>(i));
    EXPECT_TRUE(std::isfinite(st.psnr));
    if (st.accepted) {
      EXPECT_LE(st.m_norm, st.bound);
    }
  }
}

TEST(Monitor, AllAcceptedRunPasses) {
  const auto inst = deconv_instance(32, 35);
  PropagationConfig cfg;
  const auto r = dpe::run(inst.y, inst.op, params(1e-4, 400), dpe::PredictorBank::classical_bank(), cfg);
  const auto rep = dpe::monitor(r.trace, cfg);
  EXPECT_TRUE(rep.ok()) << rep.to_text();
  EXPECT_DOUBLE_EQ(rep.alpha1, 0.25 - 0.16);
  EXPECT_DOUBLE_EQ(rep.alpha2, 1.4);
}

TEST(Monitor, CapStagesAreFlaggedNotFailed) {
  dpe::Trace t;
  for (int k = 0; k < 3; ++k) {
    dpe::StageRecord r;
    r.k = k;
    r.eta = 1.0;
    r.c = 0.4;
    r.step_norm = 1.0 / (k + 1);
    r.m_norm = k == 1 ? 10.0 : 0.0;
    r.bound = 0.4 * r.step_norm;
    r.accepted = k != 1;
    r.descent_margin = 1.0;
    t.stages.push_back(r);
  }
  const auto rep = dpe::monitor(t, PropagationConfig{});
  EXPECT_TRUE(rep.ok()) << rep.to_text();
  ASSERT_EQ(rep.unguaranteed_stages.size(), 1u);
  EXPECT_EQ(rep.unguaranteed_stages[0], 1);
}

TEST(Monitor, DetectsViolations) {
  dpe::Trace t;
  dpe::StageRecord r;
  r.eta = 1.0;
  r.c = 0.4;
  r.step_norm = 1.0;
  r.descent_margin = 0.01;
  r.accepted = true;
  t.stages.push_back(r);
  r.k = 1;
  r.step_norm = 2.0;
  r.descent_margin = 1.0;
  r.m_norm = 0.5;
  t.stages.push_back(r);
  const auto rep = dpe::monitor(t, PropagationConfig{});
  EXPECT_FALSE(rep.descent_ok);
  EXPECT_TRUE(rep.subgradient_ok);
  EXPECT_FALSE(rep.cauchy_ok);
  EXPECT_FALSE(rep.ok());
}

TEST(Monitor, SingleStageIsVacuous) {
  dpe::Trace t;
  dpe::StageRecord r;
  r.eta = 1.0;
  r.c = 0.4;
  t.stages.push_back(r);
  EXPECT_TRUE(dpe::monitor(t, PropagationConfig{}).cauchy_ok);
}

TEST(TraceCsv, HeaderAndDeterminism) {
  const auto inst = deconv_instance(16, 36);
  const auto once = [&] {
    const auto r = dpe::run(inst.y, inst.op, params(1e-4, 400), dpe::PredictorBank::classical_bank(),
                            PropagationConfig{});
    std::ostringstream out;
    dpe::write_trace_csv(r.trace, out);
    return out.str();
  };
  const std::string a = once(), b = once();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, a.find('\n')), dpe::kTraceHeader);
}

TEST(Config, ValidationOfPropagationSettings) {
  PropagationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.c_ratio = 0.5;
  EXPECT_THROW(cfg.validate(), dpe::ConfigError);
  cfg = {};
  cfg.eta_schedule = {};
  EXPECT_THROW(cfg.validate(), dpe::ConfigError);
  cfg = {};
  cfg.eta_schedule = {2.0, 1.0};
  EXPECT_EQ(cfg.eta(0), 2.0);
  EXPECT_EQ(cfg.eta(7), 1.0);
  EXPECT_DOUBLE_EQ(cfg.c(0), 0.8);
  EXPECT_EQ(dpe::parse_variant("s-dpe"), Variant::s_dpe);
  EXPECT_THROW(dpe::parse_variant("adam"), dpe::ConfigError);
}
