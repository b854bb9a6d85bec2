#pragma once

#include "dgp/common.hpp"
#include "dgp/dual_gp.hpp"

#include <cstdint>
#include <vector>

namespace dgp {

struct GammaPrior {
  double shape = 2.0;
  double rate = 1.0;

  double mean() const { return shape / rate; }
  double log_density(double x) const;  // normalized

  static GammaPrior with_mean(double shape_, double mean_) {
    return GammaPrior{shape_, shape_ / mean_};
  }
};

/// Gamma hyperpriors on rho and delta^2. sigma_n^2 is fixed per experiment.
struct HyperPriorSpec {
  GammaPrior rho = GammaPrior{2.0, 2.0};
  GammaPrior delta_sq = GammaPrior{2.0, 2.0};
};

struct HyperSample {
  double rho = 1.0;
  double delta = 1.0;
  double noise_var = 0.0;
  double log_post = 0.0;
  int chain = 0;
  int iter = 0;

  double delta_sq() const { return delta * delta; }
  KernelSpec kernel(KernelFamily family, int dim) const {
    return KernelSpec{family, rho, delta, dim};
  }
};

struct McmcConfig {
  int n_samples = 50;
  int burn_in = 500;
  int thinning = 5;
  double step = 0.25;  // initial random-walk step in log units (adapted during burn-in)
  std::uint64_t seed = 0;
};

/// Evaluation context for the hyperparameter posterior: which kernel family
/// the likelihood uses and the fixed observation-noise variance.
struct HyperModel {
  KernelFamily family = KernelFamily::squared_exponential;
  double noise_var = 1e-6;
};

/// Gamma log-prior plus the GP evidence of the derivative-augmented
/// observation vector; -inf when the candidate is invalid or factorization
/// fails. An empty observation set gives the prior alone.
double log_hyper_posterior(const ObservationSet& obs, const HyperSample& theta,
                           const HyperPriorSpec& prior, const HyperModel& model);

/// Random-walk Metropolis over (log rho, log delta^2). Deterministic given
/// cfg.seed; throws AllProposalsRejected when nothing is accepted after
/// burn-in.
std::vector<HyperSample> sample_hypers(const ObservationSet& obs, const HyperPriorSpec& prior,
                                       const McmcConfig& cfg, const HyperModel& model,
                                       double* acceptance_rate = nullptr);

/// Mean over hyperparameter samples of a per-sample vector-valued function;
/// the Monte Carlo marginalization used by the acquisition.
template <class Fn>
Vec marginalized(Fn&& fn, const std::vector<HyperSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("marginalized: no hyperparameter samples");
  Vec acc = fn(samples.front());
  for (std::size_t i = 1; i < samples.size(); ++i) acc += fn(samples[i]);
  return acc / static_cast<double>(samples.size());
}

}  // namespace dgp
