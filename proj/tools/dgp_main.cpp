#include <dgp/harness.hpp>
#include <dgp/simd.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitPartialFailure = 3;

int do_run(const std::string& config_path, const dgp::harness::RunOptions& options) {
  dgp::harness::ExperimentConfig config;
  try {
    config = dgp::harness::load_config(config_path);
  } catch (const dgp::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  const auto report = dgp::harness::run_experiment(config, options);
  std::cout << "out: " << report.out_dir << "\n"
            << "cells: " << report.total_cells << " completed: " << report.completed
            << " skipped: " << report.skipped << " failed: " << report.failed << "\n";
  for (const auto& f : report.failures) std::cerr << "failed: " << f << "\n";
  return report.failed > 0 ? kExitPartialFailure : kExitOk;
}

int do_summarize(const std::string& dir, double tol) {
  try {
    const auto report = dgp::harness::summarize_dir(dir, tol);
    dgp::harness::write_summary_report(report, dir + "/summary_report.json");
    std::cout << "objective: " << report.objective
              << "  threshold gap: " << report.threshold_gap << "\n";
    for (const auto& m : report.methods) {
      std::cout << m.name << ": seeds=" << m.n_seeds
                << " median_iters_to_tol=" << m.median_iters_to_tol;
      if (!m.median_incumbent.empty()) {
        std::cout << " final_median_incumbent=" << m.median_incumbent.back();
      }
      std::cout << "\n";
    }
    for (const auto& [k, v] : report.verdicts) {
      std::cout << "verdict " << k << ": " << (v ? "yes" : "no") << "\n";
    }
    return kExitOk;
  } catch (const dgp::harness::MissingTraces& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

int run_generated(const std::string& text, const std::string& name,
                  dgp::harness::RunOptions options, bool print) {
  dgp::harness::ExperimentConfig config;
  try {
    config = dgp::harness::parse_config_text(text, name);
  } catch (const dgp::harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
  const auto report = dgp::harness::run_experiment(config, options);
  for (const auto& f : report.failures) std::cerr << "failed: " << f << "\n";
  std::cout << "out: " << report.out_dir << "\n";
  if (print) {
    for (const auto& entry : std::filesystem::directory_iterator(report.out_dir)) {
      if (entry.path().extension() == ".csv") {
        std::ifstream in(entry.path());
        std::cout << in.rdbuf();
      }
    }
  }
  return report.failed > 0 ? kExitPartialFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Derivative-enhanced Gaussian-process experiments (BO/BQ) and diagnostics"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dir;
  int jobs = 1;
  bool resume = false, print = false;
  double tol = 0.01;

  auto* run = app.add_subcommand("run", "execute an experiment config file");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--jobs", jobs, "parallel (method, seed) cells");
  run->add_option("--out", out_dir, "output directory override");
  run->add_flag("--resume", resume, "complete only missing cells");

  auto* summ = app.add_subcommand("summarize", "aggregate a trace directory");
  summ->add_option("dir", dir, "trace directory")->required();
  summ->add_option("--tol", tol, "relative threshold for iterations-to-tolerance");

  std::string families = "se,matern_factorizable", dims = "1,2,3";
  double t_knob = 8.0, cond_target = 1e14, max_grid = 200000;
  auto* validate = app.add_subcommand("validate-kernels",
                                      "spectral reconstruction vs analytic joint grams");
  validate->add_option("--family", families, "comma list: se, matern_factorizable");
  validate->add_option("--dim", dims, "comma list of dimensions");
  validate->add_option("--t", t_knob, "boundary parameter");
  validate->add_option("--cond-target", cond_target, "prior spectrum condition target");
  validate->add_option("--max-grid", max_grid, "frequency grid size cap");
  validate->add_option("--out", out_dir, "output directory");
  validate->add_flag("--print", print, "print the CSV to stdout");

  double delta_lo = 0.01, delta_hi = 10.0, spacing = 0.2, noise = 1e-6;
  int n_delta = 50, n_points = 100;
  auto* sweep = app.add_subcommand("condition-sweep",
                                   "condition numbers of joint grams across length scales");
  sweep->add_option("--delta-lo", delta_lo);
  sweep->add_option("--delta-hi", delta_hi);
  sweep->add_option("--n", n_delta, "number of delta values (log-spaced)");
  sweep->add_option("--points", n_points, "observation count");
  sweep->add_option("--spacing", spacing, "observation spacing");
  sweep->add_option("--noise", noise, "noise variance on the diagonal");
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_flag("--print", print, "print the CSV to stdout");

  CLI11_PARSE(app, argc, argv);

  dgp::harness::RunOptions options;
  options.jobs = jobs;
  options.out_override = out_dir;
  options.resume = resume;

  if (run->parsed()) return do_run(config_path, options);
  if (summ->parsed()) return do_summarize(dir, tol);

  if (validate->parsed()) {
    std::ostringstream cfg;
    cfg << "kind = kernel_validation\n[validation]\nfamilies = " << families
        << "\ndims = " << dims << "\n[grid]\nt = " << t_knob << "\ncond_target = " << cond_target
        << "\nmax_grid = " << max_grid << "\n";
    return run_generated(cfg.str(), "<validate-kernels>", options, print);
  }
  if (sweep->parsed()) {
    std::ostringstream cfg;
    cfg << "kind = condition_sweep\n[sweep]\ndelta_lo = " << delta_lo
        << "\ndelta_hi = " << delta_hi << "\nn = " << n_delta << "\npoints = " << n_points
        << "\nspacing = " << spacing << "\n[gp]\nnoise_var = " << noise << "\n";
    return run_generated(cfg.str(), "<condition-sweep>", options, print);
  }
  return kExitOk;
}
