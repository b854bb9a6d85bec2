#pragma once

#include "dgp/common.hpp"
#include "dgp/dual_gp.hpp"
#include "dgp/hyper.hpp"
#include "dgp/objectives.hpp"
#include "dgp/spectral_gp.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace dgp {

enum class AcqKind { ei, ucb };
enum class OptDirection { maximize, minimize };

struct AcquisitionSpec {
  AcqKind kind = AcqKind::ei;
  double ei_xi = 0.01;
  double ucb_kappa = 2.0;
  OptDirection direction = OptDirection::maximize;
};

double expected_improvement(double mean, double sd, double incumbent, double xi,
                            OptDirection direction = OptDirection::maximize);

/// Score to maximize: mean + kappa*sd for Maximize, negated lower bound for
/// Minimize.
double ucb(double mean, double sd, double kappa,
           OptDirection direction = OptDirection::maximize);

enum class DerivLevel { plain, grad, hess };
enum class Backend { dual, spectral, auto_select };

Orders orders_for(DerivLevel level);

struct InnerOptConfig {
  int n_candidates = 1024;
  int refine_starts = 5;
  int refine_sweeps = 2;
  int line_scan = 16;
  int line_shrinks = 20;
};

/// Candidate sweep (stratified uniform) followed by coordinate-wise line
/// refinement from the top starts. Deterministic given the rng state; the
/// returned point is strictly inside the bounds.
Vec maximize_acquisition(const std::function<Vec(const Mat&)>& acq, const Mat& bounds,
                         const InnerOptConfig& cfg, std::mt19937_64& rng);

struct GridConfig {
  double boundary_t = 8.0;
  double cond_target = 1e14;
  std::size_t max_grid = 200000;
};

/// One GP posterior behind a common predict surface: the dual form is fitted
/// in rescaled coordinates, the spectral form over a box-spanning grid.
class BackendModel {
 public:
  static BackendModel fit_dual(const KernelSpec& spec, const ObservationSet& obs,
                               double noise_var);
  static BackendModel fit_spectral(const KernelSpec& spec, const ObservationSet& obs,
                                   double noise_var, const GridConfig& grid_cfg, double support);

  void predict(const Mat& xs, Vec& mean, Vec& sd) const;
  bool is_spectral() const { return std::holds_alternative<SpectralModel>(impl_); }

 private:
  BackendModel() = default;
  std::variant<DualPosterior, SpectralModel> impl_;
  double delta_scale = 1.0;
};

struct BoConfig {
  int budget = 50;
  int n_init = 3;
  DerivLevel level = DerivLevel::plain;
  Backend backend = Backend::dual;
  McmcConfig mcmc;
  AcquisitionSpec acq;
  InnerOptConfig inner;
  GridConfig grid;
  double noise_var = 1e-6;
  double spectral_delta_frac = 0.25;  // Auto: spectral when delta > frac * span
  std::uint64_t seed = 0;
  std::optional<HyperPriorSpec> priors;  // default: derived from bounds and data
};

struct BoIterRecord {
  int iter = 0;  // 1-based evaluation index
  Vec x;
  double f = 0.0;          // objective value, native direction
  double incumbent = 0.0;  // best value so far, native direction
  Vec incumbent_x;
  double dist_to_opt = std::numeric_limits<double>::quiet_NaN();
  std::string backend = "init";
  double rho_mean = 0.0;
  double delta_sq_mean = 0.0;
  double delta_sq_var = 0.0;
};

struct BoTrace {
  std::vector<BoIterRecord> iters;
  bool aborted = false;
  std::string abort_reason;
};

BoTrace run_bo(const Objective& objective, const BoConfig& cfg);

/// Default hyperpriors for a search box and observed values: shape-2 Gammas
/// with delta^2 prior mean (diag/4)^2 and rho prior mean max(var f, 1).
HyperPriorSpec default_priors(const Mat& bounds, const Vec& observed);

}  // namespace dgp
