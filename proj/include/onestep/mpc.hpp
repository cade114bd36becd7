#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "onestep/dynamics.hpp"
#include "onestep/funcspace.hpp"
#include "onestep/nlpsolve.hpp"

namespace onestep {

// min_u alpha*V(1, f(x0,u)) + W(x0,u)  s.t.  V(1, f(x0,u)) <= 0, u in U.
// Holds references: sys and V must outlive the problem.
class OneStepProblem {
 public:
  OneStepProblem(const ControlSystem& sys, const StorageFunction& v, CostWeights weights, double alpha, Vec x0);

  const ControlSystem& sys() const { return *sys_; }
  const StorageFunction& storage() const { return *v_; }
  const CostWeights& weights() const { return weights_; }
  double alpha() const { return alpha_; }
  const Vec& x0() const { return x0_; }

  double objective(const Vec& u) const;
  double objective(const Vec& u, Vec& grad) const;
  // V(1, x+) when x+ lies in the domain of V; outside a grid box the value is
  // max(V, 0) plus the distance to the box, so extrapolated points are never
  // feasible.
  double constraint(const Vec& u) const;
  double constraint(const Vec& u, Vec& grad) const;

  SmoothFunction objective_function() const;
  SmoothFunction constraint_function() const;
  Bounds bounds() const;

 private:
  double storage_term(const Vec& xp, Vec* grad_x, bool as_constraint) const;

  const ControlSystem* sys_;
  const StorageFunction* v_;
  CostWeights weights_;
  double alpha_;
  Vec x0_;
};

struct OneStepSolution {
  Vec u;
  Vec x_next;
  SolveResult result;
};

// Starts: the lattice over U, the warm start and the input minimizing V(1, f(x0,.)).
OneStepSolution solve_one_step(const OneStepProblem& p, const SolverConfig& cfg,
                               const std::optional<Vec>& warm_start = std::nullopt);

// Single shooting over (u_0, ..., u_{T-1}); states by repeated rk4_step.
class FullHorizonProblem {
 public:
  FullHorizonProblem(const ControlSystem& sys, CostWeights weights, int horizon, Vec x0,
                     double sharpness = 100.0);

  const ControlSystem& sys() const { return *sys_; }
  const CostWeights& weights() const { return weights_; }
  int horizon() const { return horizon_; }
  const Vec& x0() const { return x0_; }
  double sharpness() const { return beta_; }
  int decision_dim() const { return horizon_ * sys_->input_dim(); }

  // States x_0..x_T for the stacked input sequence z.
  std::vector<Vec> rollout(const Vec& z) const;
  // x_T' P x_T + sum_t W(x_t, u_t).
  double objective(const Vec& z) const;
  double objective(const Vec& z, Vec& grad) const;
  // Log-sum-exp over g(x_1..x_T) and l(x_T) with sharpness beta; an upper
  // bound of the true maximum.
  double constraint(const Vec& z) const;
  double constraint(const Vec& z, Vec& grad) const;
  // Unsmoothed max over g(x_1..x_T) and l(x_T).
  double max_violation(const Vec& z) const;

  SmoothFunction objective_function() const;
  SmoothFunction constraint_function() const;
  Bounds bounds() const;

  Vec stack(const std::vector<Vec>& inputs) const;
  std::vector<Vec> unstack(const Vec& z) const;

 private:
  struct Cache;
  const Cache& evaluate(const Vec& z, bool with_gradient) const;

  const ControlSystem* sys_;
  CostWeights weights_;
  int horizon_;
  Vec x0_;
  double beta_;
  std::shared_ptr<Cache> cache_;
};

struct FullHorizonSolution {
  std::vector<Vec> inputs;
  std::vector<Vec> states;
  SolveResult result;
  double max_violation = 0.0;
};

// Starts: the warm-start sequence when given, otherwise the lattice.
FullHorizonSolution solve_full_horizon(const FullHorizonProblem& p, const SolverConfig& cfg,
                                       const std::optional<std::vector<Vec>>& warm_start = std::nullopt);

struct OneStepController {
  double alpha = 1.0;
  const StorageFunction* storage = nullptr;
  CostWeights weights;
};

struct FullHorizonController {
  int horizon = 100;
  CostWeights weights;
  // Optional: records V(1, x_{t+1}) in the log when set.
  const StorageFunction* storage = nullptr;
};

using Controller = std::variant<OneStepController, FullHorizonController>;

struct TrajectoryLog {
  std::vector<Vec> states;
  std::vector<Vec> inputs;
  std::vector<double> stage_costs;
  // V(1, x_{t+1}); NaN when no storage function is attached.
  std::vector<double> storage_values;
  // Filled by verify_eq11_along.
  std::vector<double> eq11_residuals;
  std::vector<double> solve_times;
  std::vector<SolveStatus> statuses;
  // Steps whose solve did not converge; the least violating input was applied.
  std::vector<bool> flagged;

  std::size_t steps() const { return inputs.size(); }
  // Columns t, x_1..x_n, u_1..u_m, stage_cost, V1_next, eq11_residual,
  // solve_time_s, status. The last row carries only t and the final state.
  void write_csv(std::ostream& out) const;
};

TrajectoryLog run_closed_loop(const Controller& controller, const ControlSystem& model, const ControlSystem& plant,
                              const Vec& x0, int steps, const SolverConfig& cfg);

}  // namespace onestep
