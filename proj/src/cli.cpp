#include "onestep/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>

#include "onestep/alphacert.hpp"
#include "onestep/errors.hpp"
#include "onestep/synth.hpp"

namespace onestep::cli {

namespace fs = std::filesystem;

namespace {

const ControlSystem& require_system(const ExperimentConfig& cfg) {
  if (!cfg.system) throw ConfigError("config: system.name or system.polynomial is required");
  return *cfg.system;
}

Vec require_x0(const ExperimentConfig& cfg) {
  if (cfg.x0.size() == 0) throw ConfigError("config: mpc.x0 is required");
  return cfg.x0;
}

StorageFunction require_storage(const ExperimentConfig& cfg) {
  const fs::path p = cfg.storage_path();
  if (!fs::exists(p)) throw ConfigError("storage file '" + p.string() + "' does not exist");
  StorageFunction v = load_storage(p.string());
  if (v.state_dim() != require_system(cfg).state_dim())
    throw ConfigError("storage file '" + p.string() + "' has the wrong state dimension");
  return v;
}

double resolve_alpha(const ExperimentConfig& cfg) {
  if (cfg.alpha) return *cfg.alpha;
  const fs::path p = cfg.certificate_path();
  if (!fs::exists(p))
    throw ConfigError("mpc.alpha is not set and no certificate exists at '" + p.string() + "'");
  std::ifstream in(p);
  const AlphaCertificate c = AlphaCertificate::read(in);
  if (!(c.alpha_est > 0.0)) throw ConfigError("certificate '" + p.string() + "' has no positive alpha_est");
  return c.alpha_est;
}

std::ofstream open_output(const fs::path& p) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write '" + p.string() + "'");
  return f;
}

VerifyOptions verify_options(const ExperimentConfig& cfg) {
  VerifyOptions o;
  o.samples = cfg.verify_samples;
  o.tol = cfg.verify_tol;
  o.seed = cfg.seed;
  return o;
}

int report_verification(const ExperimentConfig& cfg, const StorageFunction& v, std::ostream& out) {
  const VerifyReport rep = verify_storage(require_system(cfg), v, verify_options(cfg));
  {
    auto f = open_output(cfg.output_dir / "verify_report.txt");
    rep.write_text(f);
  }
  {
    auto f = open_output(cfg.output_dir / "verify_report.csv");
    rep.write_csv(f);
  }
  rep.write_text(out);
  return rep.passed() ? kOk : kVerificationFailure;
}

Controller make_controller(ControllerKind kind, const ExperimentConfig& cfg, const StorageFunction* v,
                           std::optional<double> alpha) {
  if (kind == ControllerKind::OneStep) return OneStepController{*alpha, v, cfg.weights()};
  return FullHorizonController{cfg.horizon, cfg.weights(), v};
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

double worst(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::max_element(v.begin(), v.end());
}

}  // namespace

// ------------------------------------------------------------------ commands

int cmd_synthesize(const ExperimentConfig& cfg, std::ostream& out) {
  const ControlSystem& sys = require_system(cfg);
  if (!cfg.grid_given) throw ConfigError("config: synth.grid is required for synthesize-storage");
  StorageFunction v = synthesize_storage(sys, cfg.synth);
  if (cfg.reverse_stages) {
    std::vector<ScalarFunction> st(v.stages().rbegin(), v.stages().rend());
    v = StorageFunction(std::move(st));
  }
  const fs::path p = cfg.storage_path();
  {
    auto f = open_output(p);
    write_storage(f, v);
  }
  out << "storage written to " << p.string() << " (T = " << v.horizon() << ")\n";
  return report_verification(cfg, v, out);
}

int cmd_verify(const ExperimentConfig& cfg, std::ostream& out) {
  const StorageFunction v = require_storage(cfg);
  return report_verification(cfg, v, out);
}

int cmd_estimate_alpha(const ExperimentConfig& cfg, std::ostream& out) {
  const ControlSystem& sys = require_system(cfg);
  const StorageFunction v = require_storage(cfg);
  AlphaOptions o;
  o.safety_factor = cfg.alpha_safety_factor;
  o.seed = cfg.seed;
  o.tol = cfg.alpha_tol;
  const AlphaCertificate c = estimate_alpha(sys, v, cfg.weights(), cfg.alpha_samples, cfg.alpha_origin_exclusion, o);
  const fs::path p = cfg.certificate_path();
  {
    auto f = open_output(p);
    c.write(f);
  }
  out << "alpha_est " << c.alpha_est << " from " << c.sample_count << " of " << c.samples_drawn
      << " samples, min margin " << c.min_margin << (c.valid ? ", valid" : ", INVALID") << '\n';
  if (c.offending_point) out << "non-decreasing sample at (" << c.offending_point->transpose() << ")\n";
  out << "certificate written to " << p.string() << '\n';
  return c.valid ? kOk : kVerificationFailure;
}

int cmd_run(const ExperimentConfig& cfg, std::ostream& out) {
  const ControlSystem& sys = require_system(cfg);
  const Vec x0 = require_x0(cfg);
  std::optional<StorageFunction> v;
  std::optional<double> alpha = cfg.alpha;
  if (cfg.controller == ControllerKind::OneStep) {
    v = require_storage(cfg);
    alpha = resolve_alpha(cfg);
  } else if (fs::exists(cfg.storage_path())) {
    v = require_storage(cfg);
  }
  const Controller ctl = make_controller(cfg.controller, cfg, v ? &*v : nullptr, alpha);
  TrajectoryLog log = run_closed_loop(ctl, sys, sys, x0, cfg.steps, cfg.solver);
  if (v && alpha) verify_eq11_along(log, *v, cfg.weights(), *alpha);

  {
    auto f = open_output(cfg.output_dir / "trajectory.csv");
    log.write_csv(f);
  }
  {
    auto f = open_output(cfg.output_dir / "trajectory.gp");
    write_plot_script(f, "trajectory.csv", sys.state_dim(), sys.input_dim());
  }
  const auto flagged = std::count(log.flagged.begin(), log.flagged.end(), true);
  out << to_string(cfg.controller) << " closed loop: " << log.steps() << " steps";
  if (alpha && cfg.controller == ControllerKind::OneStep) out << ", alpha " << *alpha;
  out << ", " << flagged << " non-converged solves\n";
  out << "final state (" << log.states.back().transpose() << "), terminal constraint "
      << sys.l(log.states.back()) << '\n';
  if (!log.eq11_residuals.empty())
    out << "min decrease residual " << *std::min_element(log.eq11_residuals.begin(), log.eq11_residuals.end())
        << '\n';
  out << "wrote " << (cfg.output_dir / "trajectory.csv").string() << " and trajectory.gp\n";
  return kOk;
}

int cmd_compare(const ExperimentConfig& cfg, std::ostream& out) {
  const ControlSystem& sys = require_system(cfg);
  const Vec x0 = require_x0(cfg);
  const StorageFunction v = require_storage(cfg);
  const double alpha = resolve_alpha(cfg);
  const int steps = cfg.compare_steps.value_or(cfg.steps);

  const TrajectoryLog a = run_closed_loop(make_controller(ControllerKind::OneStep, cfg, &v, alpha), sys, sys, x0,
                                          steps, cfg.solver);
  const TrajectoryLog b = run_closed_loop(make_controller(cfg.compare_baseline, cfg, &v, alpha), sys, sys, x0,
                                          steps, cfg.solver);
  {
    auto f = open_output(cfg.output_dir / "compare.csv");
    write_compare_csv(f, a.solve_times, b.solve_times);
  }
  const TimingSummary s = summarize_timings(a.solve_times, b.solve_times);
  out << "one-step vs " << to_string(cfg.compare_baseline) << " over " << steps << " steps\n";
  out << "median ms: " << s.onestep_median_ms << " vs " << s.baseline_median_ms << '\n';
  out << "worst ms:  " << s.onestep_worst_ms << " vs " << s.baseline_worst_ms << '\n';
  out << "speedup (median) " << s.speedup_median << ", (worst) " << s.speedup_worst << '\n';
  out << "wrote " << (cfg.output_dir / "compare.csv").string() << '\n';
  return kOk;
}

// ------------------------------------------------------------------- outputs

TimingSummary summarize_timings(const std::vector<double>& onestep_s, const std::vector<double>& baseline_s) {
  TimingSummary s;
  s.onestep_median_ms = 1e3 * median(onestep_s);
  s.baseline_median_ms = 1e3 * median(baseline_s);
  s.onestep_worst_ms = 1e3 * worst(onestep_s);
  s.baseline_worst_ms = 1e3 * worst(baseline_s);
  s.speedup_median = s.baseline_median_ms / s.onestep_median_ms;
  s.speedup_worst = s.baseline_worst_ms / s.onestep_worst_ms;
  return s;
}

void write_compare_csv(std::ostream& out, const std::vector<double>& onestep_s,
                       const std::vector<double>& baseline_s) {
  if (onestep_s.size() != baseline_s.size()) throw UsageError("write_compare_csv: timing series differ in length");
  const auto prec = out.precision();
  out << std::setprecision(10);
  out << "t,onestep_ms,fullhorizon_ms\n";
  for (std::size_t t = 0; t < onestep_s.size(); ++t)
    out << t << ',' << 1e3 * onestep_s[t] << ',' << 1e3 * baseline_s[t] << '\n';
  const TimingSummary s = summarize_timings(onestep_s, baseline_s);
  auto num = [&](double x) -> std::ostream& { return std::isnan(x) ? out << "nan" : out << x; };
  out << "median,";
  num(s.onestep_median_ms) << ',';
  num(s.baseline_median_ms) << '\n';
  out << "worst,";
  num(s.onestep_worst_ms) << ',';
  num(s.baseline_worst_ms) << '\n';
  out << "speedup,";
  num(s.speedup_median) << ',';
  num(s.speedup_worst) << '\n';
  out.precision(prec);
}

void write_plot_script(std::ostream& out, const std::string& csv_name, int state_dim, int input_dim) {
  const int residual_col = 1 + state_dim + input_dim + 3;
  out << "# gnuplot -persist trajectory.gp\n";
  out << "set datafile separator ','\n";
  out << "set key autotitle columnhead\n";
  out << "set terminal pngcairo size 1200,500\n";
  out << "set output 'trajectory.png'\n";
  out << "set multiplot layout 1,2\n";
  if (state_dim >= 2) {
    out << "set title 'phase plot'\nset xlabel 'x_1'\nset ylabel 'x_2'\n";
    out << "plot '" << csv_name << "' using 2:3 with linespoints pt 7 ps 0.3\n";
  } else {
    out << "set title 'state'\nset xlabel 't'\nset ylabel 'x_1'\n";
    out << "plot '" << csv_name << "' using 1:2 with linespoints pt 7 ps 0.3\n";
  }
  out << "set title 'alpha*(V(1,x_t) - V(1,x_{t+1})) - W(x_t,u_t)'\nset xlabel 't'\nset ylabel 'residual'\n";
  out << "plot '" << csv_name << "' using 1:" << residual_col << " with lines, 0 with lines dt 2 notitle\n";
  out << "unset multiplot\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const PreconditionError*>(&e)) return kPreconditionFailure;
  if (dynamic_cast<const SynthesisError*>(&e)) return kVerificationFailure;
  return kConfigError;
}

int main(int argc, char** argv) {
  CLI::App app{"One-step MPC with storage-function terminal constraints"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const ExperimentConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"synthesize-storage", "Synthesize V by dynamic programming, save and verify it", cmd_synthesize},
      {"verify", "Check the storage, contraction and non-emptiness conditions of a saved V", cmd_verify},
      {"estimate-alpha", "Estimate the stabilizing terminal weight by sampling", cmd_estimate_alpha},
      {"run", "Simulate the closed loop and write trajectory.csv and trajectory.gp", cmd_run},
      {"compare", "Time one-step against the baseline controller and write compare.csv", cmd_compare},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "Experiment config file")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Sampling seed (overrides seed)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed) cfg.seed = *seed;
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.fn(cfg, std::cout);
  } catch (const PreconditionError& e) {
    std::cerr << "precondition failed: " << e.what() << '\n';
    return kPreconditionFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kConfigError;
}

}  // namespace onestep::cli
