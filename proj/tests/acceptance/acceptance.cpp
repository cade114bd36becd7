// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "onestep/alphacert.hpp"
#include "onestep/mpc.hpp"
#include "onestep/nlpsolve.hpp"
#include "onestep/synth.hpp"
#include "oracles.hpp"

using namespace onestep;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("criterion %d %-28s %s  %s\n", id, name, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec vec1(double a) { return Vec::Constant(1, a); }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

SolverConfig analytic() {
  SolverConfig cfg;
  cfg.gradient_mode = GradientMode::AnalyticIfAvailable;
  return cfg;
}

CostWeights vdp_weights() { return CostWeights(Mat::Identity(2, 2), Mat::Identity(1, 1), vdp_terminal_matrix()); }

SynthConfig scalar_config() {
  SynthConfig cfg;
  cfg.grid_axes = {GridAxis{-1.0, 1.0, 201}};
  cfg.input_levels = {21};
  cfg.horizon = 5;
  return cfg;
}

SynthConfig vdp_config() {
  SynthConfig cfg;
  cfg.grid_axes = {GridAxis{-1.0, 1.0, 101}, GridAxis{-1.0, 1.0, 101}};
  cfg.input_levels = {21};
  cfg.horizon = 100;
  cfg.stage_weight = 0.1;
  return cfg;
}

TrajectoryLog one_step_loop(const StorageFunction& v, double alpha, const Vec& x0, int steps) {
  const auto sys = make_vdp();
  return run_closed_loop(OneStepController{alpha, &v, vdp_weights()}, sys, sys, x0, steps, analytic());
}

void criterion1() {
  const auto t0 = Clock::now();
  const auto sys = make_scalar_integrator();
  const auto cfg = scalar_config();
  const auto v = synthesize_storage(sys, cfg);
  const int T = cfg.horizon;
  const double cell = cfg.grid_axes[0].spacing();

  double worst_edge = 0.0;
  for (int t = 0; t <= T; ++t) {
    const double r = oracle::scalar_reach_radius(t, T);
    for (double sign : {1.0, -1.0}) {
      double edge = -1.0;
      for (int k = 0; k <= 10000; ++k) {
        if (v(t, vec1(sign * k * 1e-4)) > 0.0) break;
        edge = k * 1e-4;
      }
      worst_edge = std::max(worst_edge, std::abs(edge - r));
    }
  }

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  int members = 0, certified = 0;
  while (members < 50) {
    const double x = d(rng);
    if (v(0, vec1(x)) > 0.0) continue;
    ++members;
    if (oracle::scalar_tree_search(x, T, 21)) ++certified;
  }
  const double secs = seconds_since(t0);
  report(1, "oracle-equivalence", worst_edge <= cell && certified == 50 && secs < 10.0,
         fmt("max interval edge error %.4g (cell %.4g), tree search %d/50, %.2f s", worst_edge, cell, certified, secs));
}

void criterion2(const StorageFunction& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  int runs = 0, solves = 0, converged = 0;
  double worst_v = -INFINITY;
  while (runs < 100) {
    const Vec x0 = vec2(d(rng), d(rng));
    if (v(0, x0) > 0.0) continue;
    ++runs;
    const auto log = one_step_loop(v, 18.0023, x0, 100);
    for (std::size_t t = 0; t < log.steps(); ++t) {
      ++solves;
      if (log.statuses[t] == SolveStatus::Converged && log.storage_values[t] <= 1e-6) ++converged;
      worst_v = std::max(worst_v, log.storage_values[t]);
    }
  }
  const double secs = seconds_since(t0);
  report(2, "recursive-feasibility", converged == solves && secs < 60.0,
         fmt("%d/%d solves converged with V(1,x+) <= 1e-6, max V(1,x+) %.3g, %.1f s", converged, solves, worst_v, secs));
}

void criterion3_4(const StorageFunction& v, const AlphaCertificate& cert) {
  const auto sys = make_vdp();
  const Vec x0 = vec2(-0.4, 0.2);
  const auto slow = one_step_loop(v, 1.0, x0, 600);
  double min_norm = INFINITY;
  for (std::size_t t = 101; t < slow.states.size(); ++t) min_norm = std::min(min_norm, slow.states[t].norm());

  const double alpha = 1.1 * cert.alpha_est;
  auto fast = one_step_loop(v, alpha, x0, 600);
  const Vec& xf = fast.states.back();
  const bool ok3 = min_norm > 0.3 && sys.l(xf) <= 0.0 && xf.norm() <= 0.2 && cert.alpha_est >= 1.0 &&
                   cert.alpha_est <= 100.0;
  report(3, "limit-cycle-vs-convergence", ok3,
         fmt("alpha=1: min |x(t>100)| %.3f; alpha=%.3f: l(x600) %.3f, |x600| %.2e; alpha_est %.3f", min_norm, alpha,
             sys.l(xf), xf.norm(), cert.alpha_est));

  const auto r = verify_eq11_along(fast, v, vdp_weights(), alpha);
  const double min_r = r.empty() ? 0.0 : *std::min_element(r.begin(), r.end());
  const double half = cert.alpha_est / 2;
  auto low = one_step_loop(v, half, x0, 600);
  const auto rl = verify_eq11_along(low, v, vdp_weights(), half);
  const int negative = static_cast<int>(std::count_if(rl.begin(), rl.end(), [](double x) { return x < 0.0; }));
  const bool converges = sys.l(low.states.back()) <= 0.0 && low.states.back().norm() <= 0.2;
  const char* outcome = negative > 0 ? "violations" : (converges ? "converges" : "neither");
  report(4, "decrease-condition", min_r >= -1e-6 && (negative > 0 || converges),
         fmt("min residual %.3g at alpha=%.3f; alpha=%.3f: %s (%d negative residuals, |x600| %.2e)", min_r, alpha, half,
             outcome, negative, low.states.back().norm()));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

void criterion5(const StorageFunction& v, const AlphaCertificate& cert) {
  const auto t0 = Clock::now();
  const auto sys = make_vdp();
  const Vec x0 = vec2(-0.4, 0.2);
  const auto one = one_step_loop(v, 1.1 * cert.alpha_est, x0, 100);
  const auto full = run_closed_loop(FullHorizonController{100, vdp_weights(), nullptr}, sys, sys, x0, 100, analytic());
  const double m1 = median(one.solve_times), m2 = median(full.solve_times);
  const int fh_converged = static_cast<int>(
      std::count(full.statuses.begin(), full.statuses.end(), SolveStatus::Converged));
  const double secs = seconds_since(t0);
  report(5, "timing", m2 / m1 >= 5.0 && secs < 300.0,
         fmt("median one-step %.3f ms, full-horizon %.1f ms, speedup %.1fx, full-horizon converged %d/100, %.0f s",
             1e3 * m1, 1e3 * m2, m2 / m1, fh_converged, secs));
}

void criterion6(const StorageFunction& v) {
  auto scalar = [](std::function<double(double)> f, std::function<double(double)> df) {
    SmoothFunction s;
    s.value = [f](const Vec& z) { return f(z[0]); };
    s.value_and_gradient = [f, df](const Vec& z, Vec& g) {
      g = vec1(df(z[0]));
      return f(z[0]);
    };
    return s;
  };
  const Bounds box{vec1(-1.0), vec1(1.0)};
  const SolverConfig cfg;
  const auto none = SmoothFunction::constant(-1.0);
  const auto r1 = minimize(scalar([](double z) { return z * z; }, [](double z) { return 2 * z; }), none, box, cfg,
                           {vec1(0.7)});
  const auto r2 = minimize(scalar([](double z) { return (z - 2) * (z - 2); }, [](double z) { return 2 * (z - 2); }),
                           none, box, cfg, {vec1(0.0)});
  const auto r3 = minimize(scalar([](double z) { return z * z; }, [](double z) { return 2 * z; }),
                           scalar([](double z) { return 0.25 - z; }, [](double) { return -1.0; }), box, cfg,
                           {vec1(-0.8)});
  const double e = std::max({std::abs(r1.minimizer[0]), std::abs(r2.minimizer[0] - 1.0), std::abs(r3.minimizer[0] - 0.25)});
  const bool solved = e <= 1e-6 && r1.status == SolveStatus::Converged && r2.status == SolveStatus::Converged &&
                      r3.status == SolveStatus::Converged;

  const auto sys = make_vdp();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  int points = 0;
  double worst_rel = 0.0;
  while (points < 100) {
    const Vec x0 = vec2(d(rng), d(rng));
    if (v(1, x0) > 0.0) continue;
    ++points;
    const OneStepProblem p(sys, v, vdp_weights(), 18.0023, x0);
    const Vec u = vec1(d(rng));
    Vec g;
    p.objective(u, g);
    const double h = cfg.fd_step * (1 + std::abs(u[0]));
    const double fd = (p.objective(vec1(u[0] + h)) - p.objective(vec1(u[0] - h))) / (2 * h);
    worst_rel = std::max(worst_rel, std::abs(fd - g[0]) / std::max(1.0, std::abs(g[0])));
  }
  report(6, "solver-sanity", solved && worst_rel <= 1e-4,
         fmt("example error %.2e, worst relative gradient mismatch %.2e over %d points", e, worst_rel, points));
}

void criterion7(const StorageFunction& vdp) {
  const auto si = make_scalar_integrator();
  const auto vs = synthesize_storage(si, scalar_config());
  const auto di = make_double_integrator();
  SynthConfig dcfg;
  dcfg.grid_axes = {GridAxis{-1.0, 1.0, 81}, GridAxis{-1.0, 1.0, 81}};
  dcfg.horizon = 20;
  dcfg.stage_weight = 1.0;
  const auto vd = synthesize_storage(di, dcfg);
  const auto a = verify_storage(make_vdp(), vdp, 1000, 1e-6);
  const auto b = verify_storage(si, vs, 1000, 1e-6);
  const auto c = verify_storage(di, vd, 1000, 1e-6);
  auto line = [](const char* name, const VerifyReport& r) {
    return fmt("%s: gap %.2e contraction %.2e nonempty %d", name, r.max_storage_gap, r.min_contraction_gap,
               r.nonempty_ok);
  };
  report(7, "storage-properties", a.passed() && b.passed() && c.passed(),
         line("vdp", a) + "; " + line("scalar", b) + "; " + line("double integrator", c));
}

}  // namespace

int main() {
  criterion1();
  const auto t0 = Clock::now();
  const auto v = synthesize_storage(make_vdp(), vdp_config());
  const auto cert = estimate_alpha(make_vdp(), v, vdp_weights(), 4000, 1e-3);
  std::printf("van der pol storage synthesized in %.1f s, alpha_est %.4f (%s)\n", seconds_since(t0), cert.alpha_est,
              cert.valid ? "valid" : "invalid");
  criterion2(v);
  criterion3_4(v, cert);
  criterion5(v, cert);
  criterion6(v);
  criterion7(v);
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
