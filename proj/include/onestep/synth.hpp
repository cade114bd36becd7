#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "onestep/dynamics.hpp"
#include "onestep/funcspace.hpp"

namespace onestep {

struct SynthConfig {
  std::vector<GridAxis> grid_axes;
  // Levels per input dimension (>= 3, endpoints included). A single entry
  // applies to every input dimension.
  std::vector<int> input_levels{21};
  // Contraction margin eps. Stage t receives the margin eps*(t+1)/(T+1)*|x|^2,
  // so consecutive stages differ by a strictly positive amount away from 0.
  double contraction_margin = 1e-3;
  int horizon = 100;
  // Weight kappa of the running cost kappa*(|x|^2 + |u|^2) accumulated by the
  // recursion. Zero gives a pure reachability value function.
  double stage_weight = 0.0;
  // Slope applied to strictly feasible constraint values (g < 0 becomes K*g).
  double interior_gain = 2.0;
  // Node values are saturated here; only the sign matters far from 0.
  double value_cap = 1.0;
  // Interpolate on top of a per-stage quadratic from the linearization at the
  // origin. Used only when stage_weight > 0 and the origin is an equilibrium.
  bool quadratic_base = true;
  // Golden-section iterations refining the best input level per dimension.
  int refine_iterations = 16;
  int terminal_max_iterations = 5000;
  double terminal_tolerance = 1e-13;

  int levels_for(int input_index) const;
  // Throws UsageError on invalid settings or a grid that does not cover the
  // state constraint set.
  void validate(const ControlSystem& sys) const;
};

// Backward dynamic programming on the grid. Let mu_t = eps*(t+1)/(T+1),
// rho = |x|^2 and phi(g) = g for g > 0, K*g otherwise. With
// (B V)(x) = min_u V(f(x,u)) + kappa*|u|^2:
//   V(T) = fixed point of V = min(cap, max(V_T0, B V + (kappa + mu_T) rho)),
//          V_T0 = min(cap, max(phi(g) + mu_T rho, l))
//   V(t) = min(cap, max(phi(g) + mu_t rho, B V(t+1) + (kappa + mu_t) rho)).
// Successors leaving the grid box count as cap.
StorageFunction synthesize_storage(const ControlSystem& sys, const SynthConfig& cfg);

struct InputSearchOptions {
  // Levels per input dimension; a single entry applies to all.
  std::vector<int> levels{21};
  int refine_iterations = 40;
};

// argmin over the discretized input box of V(t+1, f(x,u)), refined by a
// golden-section search per input dimension around the best level. Ties go
// to the smallest |u|. Requires 0 <= t < T; no sign condition on V(t,x).
Vec minimizing_input(const ControlSystem& sys, const StorageFunction& v, int t, const Vec& x,
                     const InputSearchOptions& opts = {});

class InfeasibleInputError : public std::runtime_error {
 public:
  InfeasibleInputError(const std::string& what, double value)
      : std::runtime_error(what), value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

// The viable-input policy: minimizing_input() restricted to V(t,x) <= tol.
Vec select_viable_input(const ControlSystem& sys, const StorageFunction& v, int t, const Vec& x,
                        const InputSearchOptions& opts = {}, double tol = 1e-6);

struct VerifyOptions {
  int samples = 1000;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  double origin_exclusion = 1e-6;
  // Sampling box; defaults to the grid of a grid-kind V. Required for
  // polynomial V.
  std::optional<std::vector<GridAxis>> box;
  // Rejection-sampling budget: draws per requested sample.
  int draws_per_sample = 200;
  InputSearchOptions input;
};

struct StageReport {
  int stage = 0;
  int samples = 0;
  // max over samples of min_u V(t+1, f(x,u)) - V(t,x); -inf when t = T or no samples.
  double worst_storage_gap = 0.0;
  Vec worst_point;
  bool nonempty = false;
};

struct VerifyReport {
  std::vector<StageReport> stages;
  double max_storage_gap = 0.0;
  int storage_worst_stage = -1;
  Vec storage_worst_point;
  // min over sampled x != 0 with V(2,x) <= 0 of V(2,x) - V(1,x).
  double min_contraction_gap = 0.0;
  Vec contraction_worst_point;
  int contraction_samples = 0;
  bool contraction_applicable = true;
  bool storage_ok = false;
  bool contraction_ok = false;
  bool nonempty_ok = false;
  double tol = 0.0;
  std::uint64_t seed = 0;

  bool passed() const { return storage_ok && contraction_ok && nonempty_ok; }
  void write_text(std::ostream& out) const;
  void write_csv(std::ostream& out) const;
};

// Box around {V(t,.) <= 0} for rejection sampling of a grid-kind V: the
// bounding box of nonpositive nodes padded by two cells, clipped to the grid.
// Returns nullopt when no node is nonpositive.
std::optional<std::vector<GridAxis>> sublevel_bounding_box(const StorageFunction& v, int t);

VerifyReport verify_storage(const ControlSystem& sys, const StorageFunction& v, const VerifyOptions& opts);
VerifyReport verify_storage(const ControlSystem& sys, const StorageFunction& v, int samples, double tol);

}  // namespace onestep
