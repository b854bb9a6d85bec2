#pragma once

#include "dgp/bayes_opt.hpp"
#include "dgp/common.hpp"
#include "dgp/objectives.hpp"
#include "dgp/spectral_gp.hpp"

#include <vector>

namespace dgp {

struct GaussianPriorDensity {
  Vec mean;  // d
  Mat cov;   // d x d, SPD

  int dim() const { return static_cast<int>(mean.size()); }
  double density(const Vec& x) const;
  void validate() const;
};

/// Closed-form integrals of the basis features against the Gaussian density:
/// the complex identity int e^{2 pi i w.x} p(x) dx = exp(2 pi i w.m - 2 pi^2
/// w^T S w) split into cos/sin components.
Vec basis_integral(const FrequencyGrid& grid, const GaussianPriorDensity& prior);

/// Spectral model plus the basis-integral vector; integral moments are linear
/// and bilinear forms in Z_B.
class QuadratureState {
 public:
  QuadratureState(SpectralModel model, GaussianPriorDensity prior);

  const SpectralModel& model() const { return model_; }
  const GaussianPriorDensity& prior() const { return prior_; }
  const Vec& zb() const { return zb_; }

  double integral_mean() const;      // Z_B^T alpha-tilde
  double integral_variance() const;  // Z_B^T Sigma-tilde Z_B

  QuadratureState with_observation(const PointObservation& pobs, const NoiseSpec& noise) const;

 private:
  SpectralModel model_;
  GaussianPriorDensity prior_;
  Vec zb_;
};

/// argmin over candidates of the look-ahead integral variance after
/// hypothetically observing the given derivative orders at the candidate
/// (the unseen values do not enter the variance). Ties break to the lowest
/// candidate index.
int select_next_variance(const QuadratureState& state, const Mat& candidates,
                         const NoiseSpec& noise, const Orders& orders);

/// argmax over candidates of posterior variance times squared prior density;
/// ties break to the lowest candidate index.
int select_next_integrand(const QuadratureState& state, const Mat& candidates);

struct BqConfig {
  KernelSpec kernel;  // fixed hyperparameters for the integrand GP
  GaussianPriorDensity prior;
  DerivLevel level = DerivLevel::plain;
  int budget = 20;
  int n_candidates = 256;
  double noise_var = 1e-6;
  GridConfig grid;
  bool variance_rule = false;  // look-ahead integral-variance rule instead of
                               // the integrand-uncertainty rule
  double candidate_half_width_sds = 4.0;
  std::uint64_t seed = 0;
};

struct BqIterRecord {
  int iter = 0;  // 0 = prior, then 1-based evaluations
  Vec x;         // empty for the prior row
  double integral_mean = 0.0;
  double integral_var = 0.0;
  double abs_error = 0.0;
};

struct BqTrace {
  std::vector<BqIterRecord> iters;
  double z_true = 0.0;
};

/// Sequential active quadrature of integrand(x) against the Gaussian prior
/// density; z_true supplies the ground truth for the error trace.
BqTrace run_bq(const Objective& integrand, double z_true, const BqConfig& cfg);

}  // namespace dgp
