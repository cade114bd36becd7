#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "onestep/errors.hpp"
#include "onestep/mpc.hpp"
#include "oracles.hpp"

using namespace onestep;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec vec1(double a) { return Vec::Constant(1, a); }

const Vec& x_ref() {
  static const Vec x = vec2(-0.4, 0.2);
  return x;
}

SolverConfig analytic() {
  SolverConfig cfg;
  cfg.gradient_mode = GradientMode::AnalyticIfAvailable;
  return cfg;
}

CostWeights unit_weights(int n) { return CostWeights(Mat::Identity(n, n), Mat::Identity(1, 1), Mat::Identity(n, n)); }

// Uniform samples of the VdP state box with V(t, x) <= 0.
std::vector<Vec> feasible_states(int t, int count, std::uint64_t seed) {
  const auto& v = fixture::vdp_storage();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<Vec> out;
  while (static_cast<int>(out.size()) < count) {
    const Vec x = vec2(d(rng), d(rng));
    if (v(t, x) <= 0.0) out.push_back(x);
  }
  return out;
}

TrajectoryLog vdp_loop(double alpha, int steps, const SolverConfig& cfg = analytic()) {
  const auto sys = make_vdp();
  return run_closed_loop(OneStepController{alpha, &fixture::vdp_storage(), fixture::vdp_weights()}, sys, sys, x_ref(),
                         steps, cfg);
}

}  // namespace

TEST(OneStep, OriginIsOptimalAtOrigin) {
  const auto sys = make_vdp();
  const auto& v = fixture::vdp_storage();
  for (double alpha : {1.0, 18.0023}) {
    const OneStepProblem p(sys, v, fixture::vdp_weights(), alpha, Vec::Zero(2));
    const auto sol = solve_one_step(p, SolverConfig{});
    EXPECT_EQ(sol.result.status, SolveStatus::Converged);
    // The grid interpolant of V(1,.) has its minimum within interpolation
    // error of the origin, not exactly on it.
    EXPECT_NEAR(sol.u[0], 0.0, 1e-4);
    EXPECT_LE(sol.result.objective, alpha * v(1, Vec::Zero(2)) + 1e-12);
    EXPECT_NEAR(sol.result.objective, alpha * v(1, Vec::Zero(2)), 1e-8);
  }
}

TEST(OneStep, ReferenceInitialStateConverges) {
  const auto sys = make_vdp();
  const OneStepProblem p(sys, fixture::vdp_storage(), fixture::vdp_weights(), 18.0023, x_ref());
  const auto sol = solve_one_step(p, SolverConfig{});
  EXPECT_EQ(sol.result.status, SolveStatus::Converged);
  EXPECT_LE(fixture::vdp_storage()(1, sol.x_next), 1e-6);
  EXPECT_EQ(sol.x_next, rk4_step(sys, x_ref(), sol.u));
}

TEST(OneStep, MatchesExhaustiveInputScan) {
  const auto sys = make_vdp();
  const auto& v = fixture::vdp_storage();
  const double alpha = 18.0023;
  for (const Vec& x0 : feasible_states(0, 20, 41)) {
    const OneStepProblem p(sys, v, fixture::vdp_weights(), alpha, x0);
    const auto sol = solve_one_step(p, SolverConfig{});
    ASSERT_EQ(sol.result.status, SolveStatus::Converged);
    const auto scan = oracle::exhaustive_1d(
        [&](double u) {
          const Vec xp = rk4_step(sys, x0, vec1(u));
          return alpha * v(1, xp) + x0.squaredNorm() + u * u;
        },
        [&](double u) { return v(1, rk4_step(sys, x0, vec1(u))) <= 0.0; }, -1.0, 1.0, 10001);
    ASSERT_TRUE(scan.found);
    EXPECT_LE(sol.result.objective, scan.value + 1e-9) << x0.transpose();
    EXPECT_NEAR(sol.u[0], scan.u, 2e-3) << x0.transpose();
  }
}

TEST(OneStep, FiniteDifferenceGradientsMatchAnalytic) {
  const auto sys = make_vdp();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> du(-1.0, 1.0);
  int checked = 0;
  for (const Vec& x0 : feasible_states(1, 100, 43)) {
    const OneStepProblem p(sys, fixture::vdp_storage(), fixture::vdp_weights(), 18.0023, x0);
    const Vec u = vec1(du(rng));
    Vec g;
    p.objective(u, g);
    const double h = 1e-6 * (1 + std::abs(u[0]));
    const double fd = (p.objective(vec1(u[0] + h)) - p.objective(vec1(u[0] - h))) / (2 * h);
    EXPECT_LE(std::abs(fd - g[0]), 1e-4 * std::max(1.0, std::abs(g[0]))) << x0.transpose() << " u=" << u[0];
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(OneStep, ViableInputKeepsStatesInside) {
  const auto sys = make_vdp();
  const auto& v = fixture::vdp_storage();
  for (const Vec& x : feasible_states(1, 200, 44)) {
    const Vec u = select_viable_input(sys, v, 1, x);
    EXPECT_LE(v(1, rk4_step(sys, x, u)), 1e-6) << x.transpose();
  }
}

TEST(OneStep, RejectsBadAlpha) {
  const auto sys = make_vdp();
  EXPECT_THROW(OneStepProblem(sys, fixture::vdp_storage(), fixture::vdp_weights(), 0.0, x_ref()), UsageError);
}

TEST(FullHorizon, StartInsideTargetNeedsNoInput) {
  const auto sys = make_scalar_integrator();
  const FullHorizonProblem p(sys, unit_weights(1), 5, vec1(0.05));
  const auto sol = solve_full_horizon(p, SolverConfig{});
  EXPECT_EQ(sol.result.status, SolveStatus::Converged);
  for (const Vec& u : sol.inputs) EXPECT_LE(std::abs(u[0]), 0.1);
  EXPECT_LE(sol.result.objective, 6 * 0.05 * 0.05);
  EXPECT_LE(sol.max_violation, 0.0);
}

TEST(FullHorizon, ScalarIntegratorReachableInFiveSteps) {
  const auto sys = make_scalar_integrator();
  const FullHorizonProblem p(sys, unit_weights(1), 5, vec1(0.5));
  const auto sol = solve_full_horizon(p, SolverConfig{});
  EXPECT_EQ(sol.result.status, SolveStatus::Converged);
  ASSERT_EQ(sol.states.size(), 6u);
  EXPECT_LE(std::abs(sol.states.back()[0]), 0.1 + 1e-6);
  EXPECT_LE(sol.max_violation, 1e-6);
}

TEST(FullHorizon, ScalarIntegratorUnreachableInThreeSteps) {
  const auto sys = make_scalar_integrator();
  const FullHorizonProblem p(sys, unit_weights(1), 3, vec1(0.5));
  const auto sol = solve_full_horizon(p, SolverConfig{});
  EXPECT_EQ(sol.result.status, SolveStatus::Infeasible);
  EXPECT_NEAR(sol.max_violation, 0.2 * 0.2 - 0.01, 1e-4);
}

TEST(FullHorizon, FeasibilityMatchesReachability) {
  const auto sys = make_scalar_integrator();
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int T : {3, 5, 8}) {
    const double r = oracle::scalar_reach_radius(0, T);
    int checked = 0;
    while (checked < 50) {
      const double x0 = d(rng);
      // The smoothed constraint is conservative right at the boundary.
      if (std::abs(std::abs(x0) - r) < 0.02) continue;
      const FullHorizonProblem p(sys, unit_weights(1), T, vec1(x0));
      const auto sol = solve_full_horizon(p, analytic());
      EXPECT_EQ(sol.result.status == SolveStatus::Converged, std::abs(x0) <= r) << "T=" << T << " x0=" << x0;
      ++checked;
    }
  }
}

TEST(FullHorizon, AnalyticGradientsMatchFiniteDifferences) {
  const auto sys = make_vdp();
  const FullHorizonProblem p(sys, fixture::vdp_weights(), 10, x_ref());
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Vec z(10);
  for (auto& zi : z) zi = d(rng);
  Vec gf, gc;
  p.objective(z, gf);
  p.constraint(z, gc);
  for (int i = 0; i < 10; ++i) {
    Vec zp = z, zm = z;
    zp[i] += 1e-6;
    zm[i] -= 1e-6;
    EXPECT_NEAR((p.objective(zp) - p.objective(zm)) / 2e-6, gf[i], 1e-5 * std::max(1.0, std::abs(gf[i])));
    EXPECT_NEAR((p.constraint(zp) - p.constraint(zm)) / 2e-6, gc[i], 1e-5 * std::max(1.0, std::abs(gc[i])));
  }
  EXPECT_GE(p.constraint(z), p.max_violation(z));
}

TEST(FullHorizon, StackUnstackRoundTrip) {
  const auto sys = make_vdp();
  const FullHorizonProblem p(sys, fixture::vdp_weights(), 4, x_ref());
  const std::vector<Vec> us{vec1(0.1), vec1(-0.2), vec1(0.3), vec1(1.0)};
  EXPECT_EQ(p.unstack(p.stack(us)), us);
  const auto xs = p.rollout(p.stack(us));
  ASSERT_EQ(xs.size(), 5u);
  EXPECT_EQ(xs[2], rk4_step(sys, rk4_step(sys, x_ref(), us[0]), us[1]));
  EXPECT_THROW(FullHorizonProblem(sys, fixture::vdp_weights(), 1, x_ref()), UsageError);
}

TEST(ClosedLoop, ReplayReproducesStates) {
  const auto sys = make_vdp();
  const auto log = vdp_loop(18.0023, 60);
  ASSERT_EQ(log.states.size(), log.inputs.size() + 1);
  Vec x = log.states.front();
  for (std::size_t t = 0; t < log.steps(); ++t) {
    x = rk4_step(sys, x, log.inputs[t]);
    EXPECT_EQ(x, log.states[t + 1]) << t;
  }

  const auto si = make_scalar_integrator();
  const auto fh = run_closed_loop(FullHorizonController{5, unit_weights(1), nullptr}, si, si, vec1(0.5), 8, analytic());
  Vec y = fh.states.front();
  for (std::size_t t = 0; t < fh.steps(); ++t) {
    y = rk4_step(si, y, fh.inputs[t]);
    EXPECT_EQ(y, fh.states[t + 1]);
  }
  EXPECT_TRUE(std::isnan(fh.storage_values.front()));
}

TEST(ClosedLoop, StorageStaysNonpositive) {
  const auto log = vdp_loop(18.0023, 100);
  for (std::size_t t = 0; t < log.steps(); ++t) {
    EXPECT_EQ(log.statuses[t], SolveStatus::Converged) << t;
    EXPECT_LE(log.storage_values[t], 1e-6) << t;
  }
}

TEST(ClosedLoop, RecursivelyFeasibleFromRandomStarts) {
  const auto sys = make_vdp();
  for (const Vec& x0 : feasible_states(0, 10, 47)) {
    const auto log = run_closed_loop(OneStepController{18.0023, &fixture::vdp_storage(), fixture::vdp_weights()}, sys,
                                     sys, x0, 100, analytic());
    for (std::size_t t = 0; t < log.steps(); ++t) {
      ASSERT_EQ(log.statuses[t], SolveStatus::Converged) << x0.transpose() << " t=" << t;
      ASSERT_LE(log.storage_values[t], 1e-6);
    }
  }
}

TEST(ClosedLoop, StageCostsSummableAboveAlphaEstimate) {
  const double alpha = 1.1 * fixture::vdp_certificate().alpha_est;
  const auto log = vdp_loop(alpha, 300);
  const auto& v = fixture::vdp_storage();
  const std::size_t N = log.steps();
  double sum = 0.0;
  for (std::size_t t = 1; t < N; ++t) sum += log.stage_costs[t];
  const double bound = alpha * (v(1, log.states[1]) - v(1, log.states[N]));
  EXPECT_LE(sum, bound + 1e-6 * N);
}

TEST(ClosedLoop, SmallAlphaStaysOnLimitCycle) {
  const auto log = vdp_loop(1.0, 600);
  double min_norm = INFINITY;
  for (std::size_t t = 101; t < log.states.size(); ++t) min_norm = std::min(min_norm, log.states[t].norm());
  EXPECT_GT(min_norm, 0.3);
}

TEST(ClosedLoop, CertifiedAlphaConverges) {
  const auto sys = make_vdp();
  const auto log = vdp_loop(1.1 * fixture::vdp_certificate().alpha_est, 600);
  EXPECT_LE(log.states.back().norm(), 0.2);
  EXPECT_LE(sys.l(log.states.back()), 0.0);
}

TEST(ClosedLoop, InitialStateOutsideSublevelSetIsPreconditionError) {
  const auto sys = make_vdp();
  EXPECT_THROW(run_closed_loop(OneStepController{1.0, &fixture::vdp_storage(), fixture::vdp_weights()}, sys, sys,
                               vec2(5.0, 5.0), 10, SolverConfig{}),
               PreconditionError);
  EXPECT_THROW(run_closed_loop(OneStepController{1.0, nullptr, fixture::vdp_weights()}, sys, sys, x_ref(), 10,
                               SolverConfig{}),
               UsageError);
}

TEST(ClosedLoop, PlantMismatchIsRecordedNotFatal) {
  const auto model = make_vdp();
  // Damping coefficient 1.5 instead of 1.
  const VectorField f(2, 1, [](std::span<const double> x, std::span<const double> u, std::span<double> xd) {
    xd[0] = x[1];
    xd[1] = 1.5 * (1 - x[0] * x[0]) * x[1] - x[0] + u[0];
  });
  const ControlSystem plant("vdp_mismatch", f, model.input_box(), model.state_constraint(), model.terminal_constraint(),
                            model.step_size());
  const auto log = run_closed_loop(OneStepController{18.0023, &fixture::vdp_storage(), fixture::vdp_weights()}, model,
                                   plant, x_ref(), 50, analytic());
  EXPECT_EQ(log.steps(), 50u);
  EXPECT_EQ(log.flagged.size(), 50u);
  EXPECT_EQ(log.states[1], rk4_step(plant, x_ref(), log.inputs[0]));
}

TEST(ClosedLoop, ZeroStepsGiveSingleState) {
  const auto log = vdp_loop(1.0, 0);
  EXPECT_EQ(log.states.size(), 1u);
  EXPECT_EQ(log.steps(), 0u);
}

TEST(TrajectoryCsv, HeaderAndRows) {
  const auto log = vdp_loop(18.0023, 5);
  std::ostringstream out;
  log.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x_1,x_2,u_1,stage_cost,V1_next,eq11_residual,solve_time_s,status");
  int rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
    if (rows <= 5) {
      EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8) << line;
      EXPECT_NE(line.find(",converged"), std::string::npos) << line;
    }
  }
  EXPECT_EQ(rows, 6);
  EXPECT_EQ(last.rfind("5,", 0), 0u);
}
