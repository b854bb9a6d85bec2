#pragma once

#include "dgp/bayes_opt.hpp"
#include "dgp/bayes_quad.hpp"
#include "dgp/common.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dgp::harness {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct MissingTraces : std::runtime_error {
  explicit MissingTraces(const std::string& what) : std::runtime_error(what) {}
};

enum class ExperimentKind { bo_race, bq_error, condition_sweep, kernel_validation,
                            hyper_contraction };

struct MethodSpec {
  std::string name;
  DerivLevel level = DerivLevel::plain;
  Backend backend = Backend::dual;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::bo_race;
  std::string objective_name = "branin";
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds;
  int budget = 50;
  int n_init = 3;
  McmcConfig mcmc;
  AcquisitionSpec acq;
  InnerOptConfig inner;
  GridConfig grid;
  double noise_var = 1e-6;
  double spectral_delta_frac = 0.25;
  std::string out_dir;

  // bq_error
  std::vector<GaussianBump> bumps;
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double bq_rho = 0.5;
  double bq_delta = 0.3;
  int bq_candidates = 256;
  int bq_budget = 20;

  // condition_sweep
  double delta_lo = 0.01;
  double delta_hi = 10.0;
  int n_delta = 50;
  int sweep_points = 100;
  double sweep_spacing = 0.2;

  // kernel_validation
  std::vector<std::string> val_families{"se"};
  std::vector<int> val_dims{1};
  int val_points = 5;
  double val_rho = 1.3;
  double val_delta = 0.7;

  std::string raw_text;  // canonical config text, hashed into the manifest
};

/// Parse and validate the key/value config format; unknown keys or malformed
/// values raise ConfigError with line diagnostics.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

struct RunOptions {
  int jobs = 1;
  std::string out_override;
  bool resume = false;
};

struct RunReport {
  int total_cells = 0;
  int completed = 0;
  int skipped = 0;  // resume hits
  int failed = 0;
  std::vector<std::string> failures;
  std::string out_dir;
};

/// Execute all (method, seed) cells, write per-cell trace CSVs atomically,
/// then the summary and manifest JSON files. Cell failures are recorded
/// without aborting siblings.
RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options);

struct MethodSummary {
  std::string name;
  int n_seeds = 0;
  std::vector<double> median_incumbent;  // per iteration
  std::vector<double> iqr_lo;
  std::vector<double> iqr_hi;
  std::vector<double> median_dist;
  std::vector<int> iters_to_tol;  // per seed; budget+1 when never reached
  double median_iters_to_tol = 0.0;
};

struct SummaryReport {
  std::vector<MethodSummary> methods;
  double tol = 0.01;
  double threshold_gap = 0.0;
  std::string objective;
  // ordering verdicts keyed like "hess<=grad"
  std::map<std::string, bool> verdicts;
};

/// Aggregate the trace CSVs of a bo_race output directory.
SummaryReport summarize_dir(const std::string& dir, double tol = 0.01);

void write_summary_report(const SummaryReport& report, const std::string& path);

/// %.17g rendering used for all CSV floats (bit-stable round trips).
std::string format_double(double v);
std::string csv_field(const std::string& raw);

std::uint64_t fnv1a(const std::string& text);

}  // namespace dgp::harness
