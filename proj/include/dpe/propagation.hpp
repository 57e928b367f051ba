#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dpe/energy.hpp"
#include "dpe/metrics.hpp"
#include "dpe/operators.hpp"
#include "dpe/predictor.hpp"

namespace dpe {

/// C-DPE: full scheme with feedback-controlled prior projection.
/// S-DPE: warm start + residual descent + box projection only.
/// PG:    warm start followed by one projected gradient step on ψ.
/// GD:    fixed-step gradient descent on f + g, no projection.
enum class Variant { c_dpe, s_dpe, pg, gd };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::c_dpe: return "c-dpe";
    case Variant::s_dpe: return "s-dpe";
    case Variant::pg: return "pg";
    case Variant::gd: return "gd";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::c_dpe, Variant::s_dpe, Variant::pg, Variant::gd}) {
    if (variant_name(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (expected c-dpe, s-dpe, pg or gd)");
}

struct PropagationConfig {
  std::vector<double> eta_schedule{1.0};  ///< last entry repeats
  double c_ratio = 0.4;                   ///< c^k / η^k, in (0, 1/2)
  int t_max = 10;
  int k_max = 30;
  double stop_tol = 1e-4;
  Variant variant = Variant::c_dpe;
  NoiseSchedule schedule;
  std::optional<double> gd_step;  ///< defaults to 1/L

  double eta(int k) const {
    const auto i = std::min(static_cast<std::size_t>(k), eta_schedule.size() - 1);
    return eta_schedule[i];
  }
  double c(int k) const { return c_ratio * eta(k); }

  void validate() const {
    if (eta_schedule.empty()) throw ConfigError("eta schedule is empty");
    for (double e : eta_schedule) {
      if (!(e > 0.0)) throw ConfigError("eta must be > 0");
    }
    if (!(c_ratio > 0.0 && c_ratio < 0.5)) {
      throw ConfigError("c_ratio must lie in the open interval (0, 0.5) so that c^k < eta^k/2");
    }
    if (t_max < 1) throw ConfigError("t_max must be >= 1");
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    if (!(stop_tol >= 0.0)) throw ConfigError("stop_tol must be >= 0");
    if (gd_step && !(*gd_step > 0.0)) throw ConfigError("gd_step must be > 0");
  }
};

struct StageRecord {
  int k = 0;
  int level = 0;
  double eta = 0.0;
  double c = 0.0;
  double energy = 0.0;          ///< Ψ(x^{k+1})
  double energy_prev = 0.0;     ///< Ψ(x^k)
  double step_norm = 0.0;       ///< ‖x^{k+1} − x^k‖
  double m_norm = 0.0;          ///< ‖m^{k+1}‖
  double bound = 0.0;           ///< c^k ‖x^{k+1} − x^k‖
  double descent_margin = 0.0;  ///< Ψ(x^k) − Ψ(x^{k+1})
  double subgradient_norm = 0.0;  ///< ‖η^k (x^k − x^{k+1}) + m^{k+1}‖
  int t_used = 0;
  bool accepted = false;  ///< error bound held (false: inner cap reached)
  double psnr = std::numeric_limits<double>::quiet_NaN();
};

struct Trace {
  std::vector<StageRecord> stages;
};

struct PropagationState {
  int k = 0;
  ImagePlane x_k;
  ImagePlane x_dot;
  ImagePlane x_ddot;  ///< input of the last projection
  ImagePlane x_next;
  ImagePlane m;
  bool accepted = false;
  int t_used = 0;
  StageRecord record;
};

/// m = ẍ − x + ∇ψ(x) − ∇ψ(ẍ), gradients anchored at x^k.
inline ImagePlane compute_error(const ImagePlane& x_ddot, const ImagePlane& x_next,
                                const ImagePlane& x_k, const ImagePlane& y,
                                const DegradationOperator& op, const EnergyParams& params) {
  require_same_shape(x_ddot, x_next, "compute_error");
  ImagePlane m = x_ddot - x_next;
  m += grad_smooth(x_next, y, x_k, op, params);
  m -= grad_smooth(x_ddot, y, x_k, op, params);
  return m;
}

struct ConditionCheck {
  bool holds = false;
  double margin = 0.0;  ///< c‖Δ‖ − ‖m‖
  double m_norm = 0.0;
  double bound = 0.0;
};

/// ‖m‖ ≤ c ‖x_next − x_k‖
inline ConditionCheck check_condition(const ImagePlane& m, const ImagePlane& x_next,
                                      const ImagePlane& x_k, double c) {
  if (!(c > 0.0)) throw ConfigError("error bound constant must be > 0");
  ConditionCheck r;
  r.m_norm = norm(m);
  r.bound = c * distance(x_next, x_k);
  r.margin = r.bound - r.m_norm;
  r.holds = r.m_norm <= r.bound;
  return r;
}

/// Step size 1/L for the GD baseline: L = ‖AᵀA‖ + 16λθ.
inline double gd_step_size(const DegradationOperator& op, const EnergyParams& params) {
  const double lipschitz = normal_operator_norm(op) + 2.0 * params.lambda * params.theta * 8.0;
  return 1.0 / lipschitz;
}

/// One propagation stage from x^k. The predictor is ignored by PG and GD.
inline PropagationState dpe_stage(int k, const ImagePlane& x_k, const ImagePlane& y,
                                  const DegradationOperator& op, const EnergyParams& base_params,
                                  const Predictor& predictor, const PropagationConfig& config) {
  EnergyParams params = base_params;
  params.eta = config.eta(k);
  const double c = config.c(k);

  PropagationState s;
  s.k = k;
  s.x_k = x_k;
  s.record.k = k;
  s.record.eta = params.eta;
  s.record.c = c;

  ConditionCheck cond;
  switch (config.variant) {
    case Variant::gd: {
      const double step = config.gd_step.value_or(gd_step_size(op, params));
      s.x_dot = x_k;
      s.x_ddot = x_k;
      s.x_next = x_k;
      axpy(s.x_next, -step, grad_model(x_k, y, op, params));
      s.m = ImagePlane(x_k.shape());
      s.t_used = 1;
      cond = check_condition(s.m, s.x_next, x_k, c);
      break;
    }
    case Variant::s_dpe: {
      s.x_dot = op.warm_start(x_k, y, params.eta);
      s.x_ddot = predictor.descent_step(s.x_dot);
      s.x_next = project_box(s.x_ddot, params);
      // Projection alone: the normal-cone element is ẍ − x.
      s.m = s.x_ddot - s.x_next;
      s.m += grad_smooth(s.x_next, y, x_k, op, params);
      s.t_used = 1;
      cond = check_condition(s.m, s.x_next, x_k, c);
      break;
    }
    case Variant::pg:
    case Variant::c_dpe: {
      s.x_dot = op.warm_start(x_k, y, params.eta);
      s.x_ddot = config.variant == Variant::pg ? s.x_dot : predictor.descent_step(s.x_dot);
      const int t_max = config.variant == Variant::pg ? 1 : config.t_max;
      ImagePlane grad_ddot = grad_smooth(s.x_ddot, y, x_k, op, params);
      for (int t = 1; t <= t_max; ++t) {
        ImagePlane x_t = project_box(s.x_ddot - grad_ddot, params);
        ImagePlane grad_t = grad_smooth(x_t, y, x_k, op, params);
        ImagePlane m = s.x_ddot - x_t;
        m += grad_t;
        m -= grad_ddot;
        cond = check_condition(m, x_t, x_k, c);
        s.t_used = t;
        if (cond.holds || t == t_max) {
          s.x_next = std::move(x_t);
          s.m = std::move(m);
          break;
        }
        s.x_ddot = std::move(x_t);
        grad_ddot = std::move(grad_t);
      }
      break;
    }
  }

  s.accepted = cond.holds;
  StageRecord& r = s.record;
  if (config.variant == Variant::gd) {
    r.energy_prev = eval_fidelity(op, x_k, y) + eval_prior(x_k, params);
    r.energy = eval_fidelity(op, s.x_next, y) + eval_prior(s.x_next, params);
  } else {
    r.energy_prev = eval_energy(x_k, y, op, params);
    r.energy = eval_energy(s.x_next, y, op, params);
  }
  r.step_norm = distance(s.x_next, x_k);
  r.m_norm = cond.m_norm;
  r.bound = cond.bound;
  r.descent_margin = r.energy_prev - r.energy;
  ImagePlane p = s.m;
  axpy(p, params.eta, x_k - s.x_next);
  r.subgradient_norm = norm(p);
  r.t_used = s.t_used;
  r.accepted = s.accepted;
  return s;
}

struct RunResult {
  ImagePlane x;
  Trace trace;
};

/// Iterates stages from x⁰ (default: y projected onto the box) until the
/// relative step drops below stop_tol or k_max stages have run.
inline RunResult run(const ImagePlane& y, const DegradationOperator& op, const EnergyParams& params,
                     const PredictorBank& bank, const PropagationConfig& config,
                     const std::optional<ImagePlane>& x0 = std::nullopt,
                     const ImagePlane* reference = nullptr) {
  params.validate();
  config.validate();
  if (!y.all_finite()) throw SolverError("observation contains non-finite values", 0.0);
  if (y.shape() != op.output_shape()) {
    throw DimensionError("observation shape " + y.shape().str() + " does not match operator output " +
                         op.output_shape().str());
  }
  RunResult result;
  if (x0) {
    result.x = *x0;
  } else {
    if (op.input_shape() != y.shape()) {
      throw DimensionError("an initial estimate is required when A changes the shape");
    }
    result.x = y;
  }
  if (config.variant != Variant::gd) result.x = project_box(std::move(result.x), params);

  for (int k = 0; k < config.k_max; ++k) {
    const LevelChoice choice = select_level(bank, k, config.schedule);
    PropagationState s = dpe_stage(k, result.x, y, op, params, *choice.predictor, config);
    s.record.level = choice.level;
    if (reference) s.record.psnr = psnr(s.x_next, *reference);
    const bool finite = std::isfinite(s.record.energy) && s.x_next.all_finite();
    const double scale = std::max(norm(result.x), 1.0);
    result.trace.stages.push_back(s.record);
    if (!finite) {
      throw SolverError("non-finite energy at stage " + std::to_string(k) + " (step norm " +
                            std::to_string(s.record.step_norm) + ")",
                        s.record.energy);
    }
    result.x = std::move(s.x_next);
    if (s.record.step_norm / scale < config.stop_tol) break;
  }
  return result;
}

// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MonitorReport {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double path_length = 0.0;
  bool descent_ok = true;
  bool subgradient_ok = true;
  bool cauchy_ok = true;
  std::vector<int> unguaranteed_stages;  ///< inner cap reached without the bound
  std::vector<std::string> violations;

  bool ok() const { return descent_ok && subgradient_ok && cauchy_ok; }

  std::string to_text() const {
    std::ostringstream out;
    out.precision(12);
    out << "alpha1 = " << alpha1 << "\n"
        << "alpha2 = " << alpha2 << "\n"
        << "path_length = " << path_length << "\n"
        << "sufficient_descent = " << (descent_ok ? "pass" : "FAIL") << "\n"
        << "subgradient_bound = " << (subgradient_ok ? "pass" : "FAIL") << "\n"
        << "finite_length = " << (cauchy_ok ? "pass" : "FAIL") << "\n"
        << "unguaranteed_stages =";
    for (int k : unguaranteed_stages) out << ' ' << k;
    out << "\n";
    for (const auto& v : violations) out << "violation: " << v << "\n";
    return out.str();
  }
};

inline constexpr double kDescentTolerance = 1e-10;
inline constexpr double kSubgradientRelTolerance = 1e-9;
inline constexpr std::size_t kTailLength = 5;

/// Checks the convergence invariants on a completed trace (report only).
inline MonitorReport monitor(const Trace& trace, const PropagationConfig& config) {
  (void)config;
  MonitorReport rep;
  if (trace.stages.empty()) return rep;
  rep.alpha1 = std::numeric_limits<double>::infinity();
  for (const StageRecord& r : trace.stages) {
    rep.alpha1 = std::min(rep.alpha1, r.eta / 4.0 - r.c * r.c / r.eta);
    rep.alpha2 = std::max(rep.alpha2, r.eta + r.c);
  }
  for (const StageRecord& r : trace.stages) {
    rep.path_length += r.step_norm;
    if (!r.accepted) {
      rep.unguaranteed_stages.push_back(r.k);
      continue;
    }
    const double alpha1_k = r.eta / 4.0 - r.c * r.c / r.eta;
    const double need = alpha1_k * r.step_norm * r.step_norm - kDescentTolerance;
    if (!(r.descent_margin >= need)) {
      rep.descent_ok = false;
      rep.violations.push_back("stage " + std::to_string(r.k) + ": energy decrease " +
                               format_real(r.descent_margin) + " below " + format_real(need));
    }
    // ‖P‖ ≤ ‖m‖ + η‖Δ‖, checked against α₂‖Δ‖.
    const double surrogate = r.m_norm + r.eta * r.step_norm;
    const double cap = rep.alpha2 * r.step_norm * (1.0 + kSubgradientRelTolerance) + 1e-15;
    if (!(surrogate <= cap)) {
      rep.subgradient_ok = false;
      rep.violations.push_back("stage " + std::to_string(r.k) + ": subgradient surrogate " +
                               format_real(surrogate) + " above " + format_real(cap));
    }
  }
  if (!std::isfinite(rep.path_length)) {
    rep.cauchy_ok = false;
    rep.violations.push_back("path length is not finite");
  }
  const std::size_t n = trace.stages.size();
  const std::size_t first = n > kTailLength ? n - kTailLength : 0;
  for (std::size_t i = first + 1; i < n; ++i) {
    if (trace.stages[i].step_norm > trace.stages[i - 1].step_norm) {
      rep.cauchy_ok = false;
      rep.violations.push_back("step norm increases in the tail at stage " +
                               std::to_string(trace.stages[i].k));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

inline constexpr const char* kTraceHeader =
    "k,energy,step_norm,m_norm,bound,descent_margin,t_used,accepted,psnr";

inline void write_trace_csv(const Trace& trace, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const StageRecord& r : trace.stages) {
    out << r.k << ',' << format_real(r.energy) << ',' << format_real(r.step_norm) << ','
        << format_real(r.m_norm) << ',' << format_real(r.bound) << ','
        << format_real(r.descent_margin) << ',' << r.t_used << ',' << (r.accepted ? 1 : 0) << ','
        << format_real(r.psnr) << '\n';
  }
}

}  // namespace dpe
