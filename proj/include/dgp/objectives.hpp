#pragma once

#include "dgp/common.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dgp {

/// Benchmark objective with analytic derivatives and optional known-optimum
/// metadata. eval fills grad/hess only when the pointers are non-null.
struct Objective {
  std::string name;
  int dim = 1;
  Mat bounds;  // dim x 2 (lo, hi)
  bool minimize = true;
  std::optional<double> best_value;
  Mat optima;  // k x dim known optimizer locations; 0 rows when unknown
  std::function<double(const Vec&, Vec*, Mat*)> eval;

  double operator()(const Vec& x, Vec* grad = nullptr, Mat* hess = nullptr) const {
    return eval(x, grad, hess);
  }

  /// Euclidean distance from x to the nearest known optimizer (NaN if none).
  double distance_to_optimum(const Vec& x) const;
};

Objective rosenbrock(int dim);

/// The printed two-term Branin variant on the standard box
/// x1 in [-5, 10], x2 in [0, 15]; minima at (pi, 2.25), (-pi, 12.25),
/// (3 pi, 2.25) with value 10/(8 pi).
Objective branin();

Objective shubert();

/// Forrester-modified Branin (extra 5*x1 term), inputs affinely mapped from
/// [-1, 1]^2 to the Branin box, restricted to the slice x2 = -0.5.
Objective forrester_branin_1d();

/// Synthetic Bayesian linear regression with a smooth Gaussian prior over the
/// weights: C_ij = exp(-r - (i - j)^2 / (2 l^2)) on a 1D coefficient lattice.
struct AsdData {
  Mat design;  // n x p
  Vec y;       // n
  double r_true = 0.0;
  double l_true = 1.0;
  double sigma2_true = 1.0;
  std::uint64_t seed = 0;
};

AsdData make_asd_data(int n, int p, double r, double l, double sigma2, std::uint64_t seed);

void save_asd_data(const AsdData& data, const std::string& path);
AsdData load_asd_data(const std::string& path);

/// Gaussian-evidence objective over theta = (r, l, sigma^2) with analytic
/// gradient; maximized by BO. Factorization failure maps to -inf.
Objective asd_log_evidence(std::shared_ptr<const AsdData> data);

/// The same evidence surface over (r, log l, log sigma^2) — the
/// search-friendly parameterization for the scale parameters; gradients are
/// chain-ruled from asd_log_evidence.
Objective asd_log_evidence_log_scales(std::shared_ptr<const AsdData> data);

/// Sum of Gaussian bumps; the desk-scale BQ integrand with analytic
/// derivatives and a closed-form integral against a Gaussian density.
struct GaussianBump {
  double amplitude = 1.0;
  double center = 0.0;
  double width = 1.0;
};

Objective gaussian_bumps_1d(std::vector<GaussianBump> bumps, double lo, double hi);
double gaussian_bumps_integral(const std::vector<GaussianBump>& bumps, double mean, double var);

/// Registry used by the harness config ("rosenbrock2", "branin", "shubert",
/// "forrester1d").
Objective objective_by_name(const std::string& name);

}  // namespace dgp
