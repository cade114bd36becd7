#pragma once

#include <iosfwd>
#include <vector>

#include "onestep/config.hpp"
#include "onestep/mpc.hpp"

namespace onestep::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kVerificationFailure = 2,
  kPreconditionFailure = 3,
};

// Each command writes its artifacts under cfg.output_dir and a short human
// readable summary to `out`. Errors propagate as exceptions; exit_code_for
// maps them to the exit-code contract.
int cmd_synthesize(const ExperimentConfig& cfg, std::ostream& out);
int cmd_verify(const ExperimentConfig& cfg, std::ostream& out);
int cmd_estimate_alpha(const ExperimentConfig& cfg, std::ostream& out);
int cmd_run(const ExperimentConfig& cfg, std::ostream& out);
int cmd_compare(const ExperimentConfig& cfg, std::ostream& out);

struct TimingSummary {
  double onestep_median_ms = 0.0;
  double baseline_median_ms = 0.0;
  double onestep_worst_ms = 0.0;
  double baseline_worst_ms = 0.0;
  // baseline / one-step, from medians and from worst cases. NaN without steps.
  double speedup_median = 0.0;
  double speedup_worst = 0.0;
};

TimingSummary summarize_timings(const std::vector<double>& onestep_s, const std::vector<double>& baseline_s);
// t,onestep_ms,fullhorizon_ms rows, then median, worst and speedup rows.
void write_compare_csv(std::ostream& out, const std::vector<double>& onestep_s, const std::vector<double>& baseline_s);
// gnuplot script: phase plot (or x_1 over t for n = 1) and the residual plot.
void write_plot_script(std::ostream& out, const std::string& csv_name, int state_dim, int input_dim);

int exit_code_for(const std::exception& e);

// Full command line entry point; returns the process exit code.
int main(int argc, char** argv);

}  // namespace onestep::cli
