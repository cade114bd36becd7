#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "onestep/alphacert.hpp"
#include "onestep/dynamics.hpp"
#include "onestep/nlpsolve.hpp"
#include "onestep/synth.hpp"

namespace onestep {

// Flat `key = value` file. `#` starts a comment. Numeric lists are separated
// by commas or blanks; matrix rows are separated by `;`.
//
//   system.name = vdp
//   synth.grid = -1.1 1.1 101; -0.7 0.7 101
//   weights.P = 6.4314 0.4580; 0.4580 5.8227
//   mpc.x0 = -0.4, 0.2
//
// Every key is optional at parse time; commands check what they need.
// Unknown keys, repeated keys and malformed values raise ConfigError.

enum class ControllerKind { OneStep, FullHorizon };

struct ExperimentConfig {
  std::optional<ControlSystem> system;

  SynthConfig synth;
  bool grid_given = false;
  // Resolved against output_dir when relative.
  std::filesystem::path storage_file = "storage.txt";
  // Stores V(T - t) as stage t; for exercising the verifier.
  bool reverse_stages = false;
  int verify_samples = 1000;
  double verify_tol = 1e-6;

  SolverConfig solver;

  Mat Q, R, P;

  // Unset means: take alpha_est from the certificate next to the storage file.
  std::optional<double> alpha;
  int horizon = 100;
  int steps = 100;
  Vec x0;
  ControllerKind controller = ControllerKind::OneStep;
  double sharpness = 100.0;

  int alpha_samples = 4000;
  double alpha_origin_exclusion = 1e-3;
  double alpha_safety_factor = 1.1;
  double alpha_tol = 1e-6;

  ControllerKind compare_baseline = ControllerKind::FullHorizon;
  // Steps timed by `compare`; unset means mpc.steps.
  std::optional<int> compare_steps;

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = ".";

  CostWeights weights() const;
  std::filesystem::path storage_path() const;
  std::filesystem::path certificate_path() const;
};

std::string to_string(ControllerKind k);

// Raw key/value pairs with their line numbers, before interpretation.
std::map<std::string, std::pair<std::string, int>> parse_key_values(std::istream& in);

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace onestep
