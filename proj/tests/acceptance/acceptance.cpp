// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

using dpe::DegradationOperator;
using dpe::EnergyParams;
using dpe::ImagePlane;
using dpe::PropagationConfig;
using dpe::Shape;

namespace {

// Pinned tolerances.
constexpr double kGradientRel = 1e-5;
constexpr double kGradientSeconds = 10.0;
constexpr double kWarmStartRel = 1e-6;
constexpr double kFixedPointRel = 1e-10;
constexpr double kAcceptedFraction = 0.90;
constexpr double kDescentSlack = 1e-10;
constexpr double kReductionAbs = 1e-10;
constexpr double kDeconvGainDb = 2.0;
constexpr double kInpaintGainDb = 5.0;
constexpr double kTaskSeconds = 30.0;
constexpr double kInversionAbs = 1e-12;
constexpr double kPsnrOffsetDb = 0.01;

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) { return dpe::format_real(v); }

EnergyParams energy(double lambda, double theta, double eta = 1.0) {
  EnergyParams p;
  p.lambda = lambda;
  p.theta = theta;
  p.eta = eta;
  return p;
}

std::vector<DegradationOperator> operators_8x8(dpe::Rng& rng) {
  const Shape s{8, 8, 1};
  return {DegradationOperator::identity(s),
          DegradationOperator::convolution(oracle::gaussian(1.0 + rng.uniform()), s),
          DegradationOperator::mask(dpe::random_mask(8, 8, 1, 0.5, rng.next())),
          DegradationOperator::downsample(s, 2)};
}

dpe::TaskInstance deconv_instance() {
  dpe::TaskSpec spec;
  spec.blur_sigma = 1.5;
  spec.noise = 0.01;
  return dpe::synthesize(dpe::TaskKind::deconv, dpe::synthetic_scene(64, 64, 1, 7), spec, 42);
}

Outcome gradient_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  dpe::Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto ops = operators_8x8(rng);
    const DegradationOperator& op = ops[static_cast<std::size_t>(i) % ops.size()];
    const auto p = energy(rng.uniform(1e-4, 1e-2), rng.uniform(5.0, 400.0), rng.uniform(0.1, 2.0));
    const ImagePlane x = oracle::random_plane(op.input_shape(), rng);
    const ImagePlane y = oracle::random_plane(op.output_shape(), rng);
    const ImagePlane anchor = oracle::random_plane(op.input_shape(), rng);
    const ImagePlane g = dpe::grad_smooth(x, y, anchor, op, p);
    const ImagePlane fd = oracle::finite_difference_gradient(
        [&](const ImagePlane& z) { return dpe::eval_smooth(z, y, anchor, op, p); }, x);
    worst = std::max(worst, dpe::distance(g, fd) / dpe::norm(fd));
  }
  const double secs = seconds_since(t0);
  o.detail = "max rel " + num(worst) + ", " + num(secs) + " s";
  if (!(worst < kGradientRel)) o.fail("max rel " + num(worst));
  if (!(secs < kGradientSeconds)) o.fail("took " + num(secs) + " s");
  return o;
}

Outcome warm_start_oracle() {
  Outcome o;
  dpe::Rng rng(77);
  double worst = 0.0;
  for (double eta : {0.1, 1.0, 3.0}) {
    for (const auto& op : operators_8x8(rng)) {
      const ImagePlane prev = oracle::random_plane(op.input_shape(), rng);
      const ImagePlane y = oracle::random_plane(op.output_shape(), rng);
      const ImagePlane ref = oracle::warm_start(oracle::dense_operator(op), prev, y, eta);
      const double rel = dpe::distance(op.warm_start(prev, y, eta), ref) / dpe::norm(ref);
      if (!(rel < kWarmStartRel)) o.fail(op.name() + " eta " + num(eta) + ": rel " + num(rel));
      worst = std::max(worst, rel);
    }
  }
  if (o.pass) o.detail = "max rel " + num(worst);
  return o;
}

Outcome fixed_point_identity() {
  Outcome o;
  const auto inst = deconv_instance();
  const EnergyParams p;
  PropagationConfig cfg;
  cfg.k_max = 30;
  const auto bank = dpe::PredictorBank::classical_bank();
  ImagePlane x = dpe::project_box(inst.observation, p);
  double worst = 0.0;
  for (int k = 0; k < cfg.k_max; ++k) {
    const auto choice = dpe::select_level(bank, k, cfg.schedule);
    const auto st = dpe::dpe_stage(k, x, inst.observation, inst.op, p, *choice.predictor, cfg);
    EnergyParams pk = p;
    pk.eta = cfg.eta(k);
    ImagePlane z = st.x_next - dpe::grad_smooth(st.x_next, inst.observation, x, inst.op, pk);
    z += st.m;
    const double dev = dpe::max_abs_diff(dpe::project_box(z, pk), st.x_next);
    const double tol = kFixedPointRel * (1.0 + dpe::norm(st.x_next));
    worst = std::max(worst, dev / tol);
    if (!(dev <= tol)) o.fail("stage " + std::to_string(k) + ": deviation " + num(dev));
    x = st.x_next;
  }
  if (o.pass) o.detail = "30 stages, worst deviation " + num(worst) + " of tolerance";
  return o;
}

struct CsvRow {
  int k = 0;
  double step_norm = 0, m_norm = 0, bound = 0, descent_margin = 0;
  bool accepted = false;
};

std::vector<CsvRow> parse_trace(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    CsvRow r;
    r.k = std::stoi(f[0]);
    r.step_norm = std::stod(f[2]);
    r.m_norm = std::stod(f[3]);
    r.bound = std::stod(f[4]);
    r.descent_margin = std::stod(f[5]);
    r.accepted = f[7] == "1";
    rows.push_back(r);
  }
  return rows;
}

Outcome feedback_acceptance(const dpe::Trace& trace) {
  Outcome o;
  std::ostringstream csv;
  dpe::write_trace_csv(trace, csv);
  const auto rows = parse_trace(csv.str());
  std::size_t accepted = 0;
  for (const auto& r : rows) {
    if (!r.accepted) continue;
    ++accepted;
    if (!(r.m_norm <= r.bound)) o.fail("stage " + std::to_string(r.k) + ": m_norm " + num(r.m_norm) + " > " + num(r.bound));
  }
  const double frac = rows.empty() ? 0.0 : static_cast<double>(accepted) / static_cast<double>(rows.size());
  if (!(frac >= kAcceptedFraction)) o.fail("accepted fraction " + num(frac));
  if (o.pass) o.detail = std::to_string(accepted) + "/" + std::to_string(rows.size()) + " stages accepted";
  return o;
}

Outcome sufficient_descent(const dpe::Trace& trace) {
  Outcome o;
  double path = 0.0;
  for (const auto& r : trace.stages) {
    path += r.step_norm;
    if (!r.accepted) continue;
    const double need = (r.eta / 4.0 - r.c * r.c / r.eta) * r.step_norm * r.step_norm - kDescentSlack;
    if (!(r.descent_margin >= need)) {
      o.fail("stage " + std::to_string(r.k) + ": margin " + num(r.descent_margin) + " < " + num(need));
    }
  }
  if (!std::isfinite(path)) o.fail("path length not finite");
  const std::size_t n = trace.stages.size();
  if (n < 5) o.fail("fewer than 5 stages");
  for (std::size_t i = n >= 5 ? n - 4 : 1; i < n; ++i) {
    if (trace.stages[i].step_norm > trace.stages[i - 1].step_norm) {
      o.fail("tail step norm rises at stage " + std::to_string(trace.stages[i].k));
    }
  }
  if (o.pass) o.detail = "path length " + num(path);
  return o;
}

Outcome reduction_equivalence() {
  Outcome o;
  dpe::TaskSpec spec;
  spec.blur_sigma = 1.2;
  spec.noise = 0.01;
  const auto inst = dpe::synthesize(dpe::TaskKind::deconv, dpe::synthetic_scene(8, 8, 1, 31), spec, 32);
  const ImagePlane& y = inst.observation;
  const auto a = oracle::dense_operator(inst.op);
  const auto p = energy(1e-3, 50.0, 0.8);
  constexpr int kIters = 50;

  PropagationConfig cfg;
  cfg.t_max = 1;
  cfg.k_max = kIters;
  cfg.stop_tol = 0.0;
  cfg.eta_schedule = {p.eta};
  const auto pg = oracle::proximal_gradient(a, y, p, kIters);
  ImagePlane x = dpe::project_box(y, p);
  double worst_pg = 0.0;
  for (int k = 0; k < kIters; ++k) {
    x = dpe::dpe_stage(k, x, y, inst.op, p, dpe::Predictor::identity(), cfg).x_next;
    worst_pg = std::max(worst_pg, dpe::max_abs_diff(x, pg[static_cast<std::size_t>(k) + 1]));
  }
  if (!(worst_pg < kReductionAbs)) o.fail("proximal gradient deviation " + num(worst_pg));

  cfg.variant = dpe::Variant::gd;
  const double step = 1.0 / (oracle::largest_eigenvalue(a.transpose() * a) + 16.0 * p.lambda * p.theta);
  cfg.gd_step = step;
  const auto gd = oracle::gradient_descent(a, y, p, step, kIters);
  x = y;
  double worst_gd = 0.0;
  for (int k = 0; k < kIters; ++k) {
    x = dpe::dpe_stage(k, x, y, inst.op, p, dpe::Predictor::identity(), cfg).x_next;
    worst_gd = std::max(worst_gd, dpe::max_abs_diff(x, gd[static_cast<std::size_t>(k) + 1]));
  }
  if (!(worst_gd < kReductionAbs)) o.fail("gradient descent deviation " + num(worst_gd));
  if (o.pass) o.detail = "pg " + num(worst_pg) + ", gd " + num(worst_gd);
  return o;
}

dpe::RestoreResult restore_with_preset(const dpe::TaskInstance& inst) {
  const dpe::TaskPreset preset = dpe::task_preset(inst.kind);
  PropagationConfig cfg;
  cfg.eta_schedule = {preset.eta};
  return dpe::restore(inst, dpe::PredictorBank::classical_bank(), cfg,
                      energy(preset.lambda, preset.theta, preset.eta));
}

Outcome task_improvement() {
  Outcome o;
  std::ostringstream detail;
  const auto check = [&](const dpe::TaskInstance& inst, double gain, const std::string& name) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = restore_with_preset(inst);
    const double secs = seconds_since(t0);
    const double in = dpe::psnr(dpe::observation_on_target(inst), *inst.truth);
    const double out = dpe::psnr(res.image, *inst.truth);
    detail << name << " " << num(in) << " -> " << num(out) << " dB in " << num(secs) << " s; ";
    if (!(out >= in + gain)) o.fail(name + ": " + num(in) + " -> " + num(out) + " dB");
    if (!(secs < kTaskSeconds)) o.fail(name + ": took " + num(secs) + " s");
  };
  check(deconv_instance(), kDeconvGainDb, "deconv");
  dpe::TaskSpec spec;
  spec.missing = 0.5;
  spec.noise = 0.01;
  check(dpe::synthesize(dpe::TaskKind::inpaint, dpe::synthetic_scene(64, 64, 1, 7), spec, 42), kInpaintGainDb,
        "inpaint");
  if (o.pass) o.detail = detail.str();
  return o;
}

Outcome dehaze_round_trip() {
  Outcome o;
  const auto inst = dpe::synthesize(dpe::TaskKind::dehaze, dpe::synthetic_scene(64, 64, 3, 7), {}, 42);
  const dpe::HazeScene& h = *inst.haze;
  const double inversion =
      dpe::max_abs_diff(dpe::recover_radiance(h.hazy, h.transmission, h.airlight, 0.1, false), h.radiance);
  if (!(inversion < kInversionAbs)) o.fail("inversion residual " + num(inversion));
  const auto res = restore_with_preset(inst);
  const ImagePlane unrefined = dpe::recover_radiance(h.hazy, *res.transmission_init, res.airlight, inst.spec.t_floor);
  const double l1_init = dpe::l1_error(unrefined, h.radiance);
  const double l1_refined = dpe::l1_error(res.image, h.radiance);
  if (!(l1_refined < l1_init)) o.fail("refined L1 " + num(l1_refined) + " >= unrefined " + num(l1_init));
  if (o.pass) o.detail = "residual " + num(inversion) + ", L1 " + num(l1_init) + " -> " + num(l1_refined);
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  const ImagePlane a = dpe::synthetic_scene(32, 32, 1, 11);
  ImagePlane b = a;
  for (double& v : b.data()) v += 16.0 / 255.0;
  const double expected = 20.0 * std::log10(255.0 / 16.0);
  const double got = dpe::psnr(a, b);
  if (!(std::abs(got - expected) < kPsnrOffsetDb)) o.fail("psnr " + num(got) + " vs " + num(expected));
  if (!(std::abs(got - oracle::psnr(a, b)) < kPsnrOffsetDb)) o.fail("psnr disagrees with loop oracle");
  if (dpe::ssim(a, a) != 1.0) o.fail("ssim(a, a) = " + num(dpe::ssim(a, a)));
  if (dpe::l1_error(a, a) != 0.0) o.fail("l1(a, a) = " + num(dpe::l1_error(a, a)));
  if (o.pass) o.detail = "psnr offset " + num(got) + " dB";
  return o;
}

}  // namespace

int main() {
  PropagationConfig defaults;
  const auto inst = deconv_instance();
  const dpe::RunResult run =
      dpe::run(inst.observation, inst.op, EnergyParams{}, dpe::PredictorBank::classical_bank(), defaults);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient_oracle", gradient_oracle},
      {"warm_start_oracle", warm_start_oracle},
      {"fixed_point_identity", fixed_point_identity},
      {"feedback_acceptance", [&] { return feedback_acceptance(run.trace); }},
      {"sufficient_descent", [&] { return sufficient_descent(run.trace); }},
      {"reduction_equivalence", reduction_equivalence},
      {"task_improvement", task_improvement},
      {"dehaze_round_trip", dehaze_round_trip},
      {"metric_oracles", metric_oracles},
  };
  int failures = 0;
  for (const auto& [name, body] : criteria) {
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
