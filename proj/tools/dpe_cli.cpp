// dpe: restore images by feedback-controlled propagation.
//
//   dpe deconv  --input blurred.ppm --kernel k.txt --output out.ppm
//   dpe inpaint --input holes.pgm --mask mask.pgm --output out.pgm
//   dpe sr      --input small.ppm --scale 2 --output big.ppm
//   dpe dehaze  --input hazy.ppm --output clear.ppm
//   dpe bench   --manifest runs.txt --output results.csv
//   dpe selftest
//
// Exit codes: 0 ok, 1 configuration, 2 I/O or format, 3 solver,
// 4 monitor violation under --strict or failed selftest.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dpe/dpe.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kIo = 2, kSolver = 3, kMonitor = 4 };

// Command-line flags that map onto configuration keys.
struct KeyFlag {
  const char* flag;
  const char* key;
  const char* help;
};

const KeyFlag kKeyFlags[] = {
    {"--input", "input", "observed image (PGM/PPM)"},
    {"--output", "output", "restored image"},
    {"--truth", "truth", "ground truth for PSNR in the trace and report"},
    {"--trace", "trace", "trace CSV (default: OUTPUT.trace.csv)"},
    {"--report", "report", "monitor report (default: OUTPUT.report.txt)"},
    {"--predictor", "predictor", "classical | convnet | identity"},
    {"--weights-dir", "weights_dir", "directory of sigma_NN.dpew files"},
    {"--seed", "seed", "random seed"},
    {"--lambda", "lambda", "prior weight"},
    {"--theta", "theta", "prior sharpness"},
    {"--alpha", "alpha", "lower pixel bound"},
    {"--beta", "beta", "upper pixel bound"},
    {"--eta", "eta", "anchor weight, comma list for a schedule"},
    {"--c-ratio", "c_ratio", "error-bound ratio c/eta in (0, 0.5)"},
    {"--t-max", "t_max", "inner feedback iterations per stage"},
    {"--k-max", "k_max", "maximum stages"},
    {"--stop-tol", "stop_tol", "relative step size that ends the run"},
    {"--variant", "variant", "c_dpe | s_dpe | pg | gd"},
    {"--sigma0", "sigma0", "initial noise level of the predictor schedule"},
    {"--rho", "rho", "noise level decay per stage"},
    {"--classical-scale", "classical_scale", "blur std per level of the classical bank"},
};

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  bool strict = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
  for (const auto& f : kKeyFlags) cmd->add_option(f.flag, o.flags[f.key], f.help);
  cmd->add_flag("--strict", o.strict, "exit 4 when a convergence check fails");
}

dpe::RunConfig load_config(const CommonOptions& o, const std::string& task,
                           std::vector<std::pair<std::string, std::string>> extra = {}) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& [key, value] : o.flags) {
    if (!value.empty()) overrides.emplace_back(key, value);
  }
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw dpe::ConfigError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (auto& kv : extra) overrides.push_back(std::move(kv));
  dpe::RunConfig cfg = o.config.empty() ? dpe::parse_config("", overrides) : dpe::parse_config_file(o.config, overrides);
  if (cfg.task.empty()) cfg.task = task;
  if (cfg.task != task) throw dpe::ConfigError("key 'task': configuration says '" + cfg.task + "' but the subcommand is " + task);
  return cfg;
}

// Task presets fill η, λ and θ unless a file or flag set them.
void apply_preset(dpe::RunConfig& cfg, dpe::TaskKind kind) {
  const dpe::TaskPreset p = dpe::task_preset(kind);
  if (!cfg.is_set("eta")) cfg.propagation.eta_schedule = {p.eta};
  if (!cfg.is_set("lambda")) cfg.energy.lambda = p.lambda;
  if (!cfg.is_set("theta")) cfg.energy.theta = p.theta;
}

dpe::PredictorBank make_bank(const dpe::RunConfig& cfg) {
  if (cfg.predictor == "identity") return dpe::PredictorBank::identity_bank();
  if (cfg.predictor == "convnet") {
    if (cfg.weights_dir.empty()) throw dpe::ConfigError("key 'weights_dir': required by predictor = convnet");
    return dpe::PredictorBank::load_directory(cfg.weights_dir);
  }
  return dpe::PredictorBank::classical_bank(cfg.classical_scale);
}

dpe::ImagePlane binarize(const dpe::ImagePlane& m, std::size_t channels) {
  if (m.channels() != 1 && m.channels() != channels) {
    throw dpe::DimensionError("mask has " + std::to_string(m.channels()) + " channels, image has " +
                              std::to_string(channels));
  }
  dpe::ImagePlane out(m.width(), m.height(), channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto src = m.channel(m.channels() == 1 ? 0 : c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw dpe::IoError("cannot write " + path);
  out << text;
  if (!out) throw dpe::IoError("failed writing " + path);
}

int run_task(dpe::TaskKind kind, const CommonOptions& o, const std::string& kernel_path,
             const std::string& mask_path, int scale, int patch, double t_floor) {
  std::vector<std::pair<std::string, std::string>> extra;
  if (!kernel_path.empty()) extra.emplace_back("kernel", kernel_path);
  if (!mask_path.empty()) extra.emplace_back("mask", mask_path);
  if (scale > 0) extra.emplace_back("scale", std::to_string(scale));
  if (patch > 0) extra.emplace_back("patch", std::to_string(patch));
  if (t_floor > 0) extra.emplace_back("t_floor", dpe::format_real(t_floor));
  dpe::RunConfig cfg = load_config(o, dpe::task_name(kind), std::move(extra));
  apply_preset(cfg, kind);
  if (cfg.input.empty()) throw dpe::ConfigError("key 'input': required");
  if (cfg.output.empty()) throw dpe::ConfigError("key 'output': required");

  const dpe::ImagePlane observed = dpe::read_image(cfg.input);
  const dpe::Shape shape = observed.shape();
  dpe::TaskSpec spec;
  spec.patch = cfg.patch;
  spec.t_floor = cfg.t_floor;
  spec.scale = cfg.scale;
  dpe::Shape target = shape;
  dpe::ImagePlane y = observed;
  dpe::DegradationOperator op = dpe::DegradationOperator::identity(shape);
  switch (kind) {
    case dpe::TaskKind::deconv:
      if (cfg.kernel.empty()) throw dpe::ConfigError("key 'kernel': required by deconv");
      op = dpe::DegradationOperator::convolution(dpe::load_kernel(cfg.kernel), shape);
      break;
    case dpe::TaskKind::inpaint: {
      if (cfg.mask.empty()) throw dpe::ConfigError("key 'mask': required by inpaint");
      const dpe::ImagePlane m = binarize(dpe::read_image(cfg.mask), shape.channels);
      if (m.width() != shape.width || m.height() != shape.height) {
        throw dpe::DimensionError("mask " + m.shape().str() + " does not match image " + shape.str());
      }
      op = dpe::DegradationOperator::mask(m);
      y = op.apply(observed);
      break;
    }
    case dpe::TaskKind::sr: {
      const auto s = static_cast<std::size_t>(cfg.scale);
      target = {shape.width * s, shape.height * s, shape.channels};
      op = dpe::DegradationOperator::downsample(target, cfg.scale);
      break;
    }
    case dpe::TaskKind::dehaze:
      if (shape.channels != 3) throw dpe::DimensionError("dehaze needs an RGB (P6) input");
      break;
  }
  dpe::TaskInstance inst = dpe::make_instance(kind, y, op, target, spec);
  if (!cfg.truth.empty()) {
    dpe::ImagePlane truth = dpe::read_image(cfg.truth);
    if (truth.shape() != target) {
      throw dpe::DimensionError("truth " + truth.shape().str() + " does not match output " + target.str());
    }
    inst.truth = std::move(truth);
  }

  const dpe::PredictorBank bank = make_bank(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const dpe::RestoreResult res = dpe::restore(inst, bank, cfg.propagation, cfg.energy);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  dpe::write_image(res.image, cfg.output);
  const std::string trace_path = cfg.trace.empty() ? cfg.output + ".trace.csv" : cfg.trace;
  std::ostringstream trace;
  dpe::write_trace_csv(res.trace, trace);
  write_text(trace_path, trace.str());
  if (res.transmission) dpe::write_image(*res.transmission, cfg.output + ".transmission.pgm");

  const dpe::MonitorReport rep = dpe::monitor(res.trace, cfg.propagation);
  std::ostringstream report;
  report << "task = " << dpe::task_name(kind) << "\n"
         << "variant = " << dpe::variant_name(cfg.propagation.variant) << "\n"
         << "predictor = " << cfg.predictor << "\n"
         << "stages = " << res.trace.stages.size() << "\n"
         << "seconds = " << dpe::format_real(seconds) << "\n";
  if (inst.truth) {
    report << "psnr_in = " << dpe::format_real(dpe::psnr(dpe::observation_on_target(inst), *inst.truth)) << "\n"
           << "psnr_out = " << dpe::format_real(dpe::psnr(res.image, *inst.truth)) << "\n"
           << "ssim_out = " << dpe::format_real(dpe::ssim(res.image, *inst.truth)) << "\n"
           << "l1_out = " << dpe::format_real(dpe::l1_error(res.image, *inst.truth)) << "\n";
  }
  report << rep.to_text();
  const std::string report_path = cfg.report.empty() ? cfg.output + ".report.txt" : cfg.report;
  write_text(report_path, report.str());

  std::cout << "wrote " << cfg.output << " (" << res.trace.stages.size() << " stages, "
            << (rep.ok() ? "checks pass" : "checks FAIL") << ")\n";
  if (!rep.ok()) {
    for (const auto& v : rep.violations) std::cerr << "monitor: " << v << "\n";
    if (o.strict) return kMonitor;
  }
  return kOk;
}

struct BenchRow {
  std::string id;
  double psnr_in = 0, psnr_out = 0, ssim_out = 0, l1_out = 0, seconds = 0;
  std::size_t stages = 0;
  std::string error;
};

int run_bench(const CommonOptions& o, const std::string& manifest, const std::string& output, int jobs,
              const std::string& l1_on) {
  if (l1_on != "radiance" && l1_on != "transmission") {
    throw dpe::ConfigError("--l1-on expects radiance or transmission");
  }
  std::ifstream in(manifest);
  if (!in) throw dpe::IoError("cannot open manifest " + manifest);
  struct Entry {
    dpe::TaskKind kind;
    std::string path, spec;
    std::uint64_t seed;
    std::string id;
  };
  std::vector<Entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string kind, path, spec, seed;
    if (!(ls >> kind)) continue;
    if (!(ls >> path >> spec >> seed)) {
      throw dpe::ConfigError(manifest + ":" + std::to_string(lineno) + ": expected 'kind path spec seed'");
    }
    Entry e{dpe::parse_task(kind), path, spec, 0, ""};
    try {
      e.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw dpe::ConfigError(manifest + ":" + std::to_string(lineno) + ": bad seed '" + seed + "'");
    }
    e.id = std::filesystem::path(path).stem().string() + "-" + kind + "-" + seed;
    entries.push_back(std::move(e));
  }
  const dpe::RunConfig base = load_config(o, "bench");

  std::vector<BenchRow> rows(entries.size());
  const auto work = [&](std::size_t i) {
    const Entry& e = entries[i];
    BenchRow& row = rows[i];
    row.id = e.id;
    try {
      dpe::RunConfig cfg = base;
      apply_preset(cfg, e.kind);
      const dpe::ImagePlane truth = dpe::read_image(e.path);
      const dpe::TaskInstance inst = dpe::synthesize(e.kind, truth, dpe::TaskSpec::parse(e.spec), e.seed);
      const auto t0 = std::chrono::steady_clock::now();
      const dpe::RestoreResult res = dpe::restore(inst, make_bank(cfg), cfg.propagation, cfg.energy);
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const dpe::ImagePlane& ref = *inst.truth;
      row.psnr_in = dpe::psnr(dpe::observation_on_target(inst), ref);
      row.psnr_out = dpe::psnr(res.image, ref);
      row.ssim_out = dpe::ssim(res.image, ref);
      row.l1_out = e.kind == dpe::TaskKind::dehaze && l1_on == "transmission"
                       ? dpe::l1_error(*res.transmission, inst.haze->transmission)
                       : dpe::l1_error(res.image, ref);
      row.stages = res.trace.stages.size();
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, std::max<std::size_t>(entries.size(), 1));
  std::vector<std::thread> pool;
  std::mutex next_mutex;
  std::size_t next = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(next_mutex);
          if (next >= entries.size()) return;
          i = next++;
        }
        work(i);
      }
    });
  }
  for (auto& t : pool) t.join();

  std::ostringstream csv;
  csv << "id,psnr_in,psnr_out,ssim_out,l1_out,stages,seconds\n";
  int failures = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      std::cerr << r.id << ": " << r.error << "\n";
      ++failures;
      continue;
    }
    csv << r.id << ',' << dpe::format_real(r.psnr_in) << ',' << dpe::format_real(r.psnr_out) << ','
        << dpe::format_real(r.ssim_out) << ',' << dpe::format_real(r.l1_out) << ',' << r.stages << ','
        << dpe::format_real(r.seconds) << '\n';
  }
  if (output.empty()) std::cout << csv.str();
  else write_text(output, csv.str());
  return failures == 0 ? kOk : kSolver;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-controlled propagation for image restoration"};
  app.require_subcommand(1);
  app.fallthrough(false);

  CommonOptions opts;
  std::string kernel, mask, manifest, l1_on = "radiance";
  int scale = 0, patch = 0, jobs = 1;
  double t_floor = 0.0;

  auto* deconv = app.add_subcommand("deconv", "non-blind deconvolution");
  add_common(deconv, opts);
  deconv->add_option("--kernel", kernel, "blur kernel text file (\"H W\" then rows)");
  auto* inpaint = app.add_subcommand("inpaint", "fill missing pixels");
  add_common(inpaint, opts);
  inpaint->add_option("--mask", mask, "mask image, white = observed");
  auto* sr = app.add_subcommand("sr", "super-resolution");
  add_common(sr, opts);
  sr->add_option("--scale", scale, "upscaling factor")->check(CLI::Range(2, 16));
  auto* dehaze = app.add_subcommand("dehaze", "transmission refinement and radiance recovery");
  add_common(dehaze, opts);
  dehaze->add_option("--patch", patch, "dark-channel patch size (odd)");
  dehaze->add_option("--t-floor", t_floor, "transmission floor for recovery");
  auto* bench = app.add_subcommand("bench", "run a manifest of synthetic instances");
  add_common(bench, opts);
  bench->add_option("--manifest", manifest, "lines of 'kind truth_path spec seed'")->required();
  bench->add_option("--jobs", jobs, "parallel instances")->check(CLI::Range(1, 256));
  bench->add_option("--l1-on", l1_on, "dehaze L1 on radiance or transmission");
  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kConfig;
  }

  try {
    if (selftest->parsed()) {
      return dpe::report_selftest(dpe::run_selftest(), std::cout) ? kOk : kMonitor;
    }
    if (bench->parsed()) return run_bench(opts, manifest, opts.flags["output"], jobs, l1_on);
    if (deconv->parsed()) return run_task(dpe::TaskKind::deconv, opts, kernel, "", 0, 0, 0.0);
    if (inpaint->parsed()) return run_task(dpe::TaskKind::inpaint, opts, "", mask, 0, 0, 0.0);
    if (sr->parsed()) return run_task(dpe::TaskKind::sr, opts, "", "", scale, 0, 0.0);
    if (dehaze->parsed()) return run_task(dpe::TaskKind::dehaze, opts, "", "", 0, patch, t_floor);
  } catch (const dpe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const dpe::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return kConfig;
  } catch (const dpe::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const dpe::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const dpe::SolverError& e) {
    std::cerr << "solver error: " << e.what() << " (residual " << e.residual() << ")\n";
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kSolver;
  }
  std::cerr << app.help();
  return kConfig;
}
