#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "onestep/dynamics.hpp"
#include "onestep/funcspace.hpp"
#include "onestep/mpc.hpp"
#include "onestep/synth.hpp"

namespace onestep {

struct AlphaOptions {
  double safety_factor = 1.1;
  std::uint64_t seed = 0;
  // Margin tolerance for validity.
  double tol = 1e-6;
  // Sampling box; defaults to the bounding box of {V(1,.) <= 0} for grid V.
  std::optional<std::vector<GridAxis>> box;
  InputSearchOptions input;
};

struct AlphaCertificate {
  double alpha_est = 0.0;
  // max W/dV over kept samples, before the safety factor.
  double raw_max_ratio = 0.0;
  double safety_factor = 1.1;
  int samples_drawn = 0;
  int sample_count = 0;
  double origin_exclusion = 1e-3;
  std::uint64_t seed = 0;
  Vec worst_ratio_point;
  // min over kept samples of alpha_est*dV - W.
  double min_margin = 0.0;
  double tol = 1e-6;
  bool valid = false;
  // First sample with dV <= 0, if any.
  std::optional<Vec> offending_point;

  void write(std::ostream& out) const;
  static AlphaCertificate read(std::istream& in);
};

// Draws `samples` uniform points of the sampling box and keeps those with
// V(1,x) <= 0 and |x| >= origin_exclusion. Each kept x uses
// u = select_viable_input(V, 1, x) and dV = V(1,x) - V(1, f(x,u)).
AlphaCertificate estimate_alpha(const ControlSystem& sys, const StorageFunction& v, const CostWeights& weights,
                                int samples, double origin_exclusion, const AlphaOptions& opts = {});

struct MarginCheck {
  double min_margin = 0.0;
  Vec worst_point;
  int sample_count = 0;
  int nonpositive_decrease = 0;
};

// min over a fresh sample set of alpha*dV - W, sampled as in estimate_alpha.
MarginCheck check_alpha_margin(const ControlSystem& sys, const StorageFunction& v, const CostWeights& weights,
                               double alpha, int samples, double origin_exclusion, const AlphaOptions& opts = {});

// residual(t) = alpha*(V(1,x_t) - V(1,x_{t+1})) - W(x_t,u_t); also stored in the log.
std::vector<double> verify_eq11_along(TrajectoryLog& log, const StorageFunction& v, const CostWeights& weights,
                                      double alpha);

}  // namespace onestep
