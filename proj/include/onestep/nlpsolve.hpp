#pragma once

#include <functional>
#include <string>
#include <vector>

#include "onestep/types.hpp"

namespace onestep {

enum class GradientMode { AnalyticIfAvailable, CentralDifference };

struct SolverConfig {
  int max_outer_iters = 30;
  int max_inner_iters = 200;
  double constraint_tol = 1e-6;
  double stationarity_tol = 1e-6;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  int multistart_points = 9;
  GradientMode gradient_mode = GradientMode::CentralDifference;
  // Finite-difference step is fd_step * (1 + |z_i|).
  double fd_step = 1e-6;

  void validate() const;
};

enum class SolveStatus { Converged, MaxIters, Infeasible };

std::string to_string(SolveStatus s);
SolveStatus parse_status(const std::string& s);

struct SolveResult {
  Vec minimizer;
  double objective = 0.0;
  double constraint_value = 0.0;
  SolveStatus status = SolveStatus::Infeasible;
  double wall_time = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  // Stationarity of the Lagrangian at the minimizer (see minimize()).
  double stationarity = 0.0;
  // Constraint violation max(0, c) after each outer iteration of the start
  // that produced the minimizer.
  std::vector<double> violation_history;
};

// Scalar function of the decision vector with an optional analytic gradient.
struct SmoothFunction {
  std::function<double(const Vec&)> value;
  // Returns the value and writes the gradient; may be empty.
  std::function<double(const Vec&, Vec&)> value_and_gradient;

  static SmoothFunction constant(double c);
};

struct Bounds {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  Vec project(const Vec& z) const { return z.cwiseMax(lower).cwiseMin(upper); }
  void validate() const;
};

// Uniform lattice of about `count` points over the box: a tensor lattice
// when count allows at least two levels per axis, otherwise `count` points
// on the diagonal from lower to upper.
std::vector<Vec> lattice_starts(const Bounds& box, int count);

// Minimizes objective(z) subject to inequality(z) <= 0 and z in the box.
// Augmented Lagrangian on the inequality; each subproblem is solved by
// spectral projected gradient: Barzilai-Borwein steps, projected onto the
// box, with a nonmonotone Armijo test against the largest of the last ten
// subproblem values. Stationarity is measured on the Lagrangian
// f + lambda*c as the smaller of the projected-gradient infinity norm and a
// one-sided difference measure (largest descent slope available along a
// coordinate within one difference step), so minimizers at kinks of
// piecewise-smooth functions are recognized. Every start is run; the best
// converged result wins (ties: lower objective, then lexicographically
// smaller minimizer). Without a converged start the best feasible result is
// returned with status max-iters; without a feasible one the least violating
// point is returned with status infeasible. An empty start list means
// lattice_starts(box, cfg.multistart_points).
SolveResult minimize(const SmoothFunction& objective, const SmoothFunction& inequality, const Bounds& box,
                     const SolverConfig& cfg, const std::vector<Vec>& starts);

}  // namespace onestep
