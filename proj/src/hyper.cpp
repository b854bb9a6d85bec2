#include "dgp/hyper.hpp"

#include <cmath>
#include <random>

namespace dgp {

double GammaPrior::log_density(double x) const {
  if (!(x > 0.0) || !std::isfinite(x)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_hyper_posterior(const ObservationSet& obs, const HyperSample& theta,
                           const HyperPriorSpec& prior, const HyperModel& model) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (!(theta.rho > 0.0) || !(theta.delta > 0.0) || !std::isfinite(theta.rho) ||
      !std::isfinite(theta.delta)) {
    return kNegInf;
  }
  double lp = prior.rho.log_density(theta.rho) + prior.delta_sq.log_density(theta.delta_sq());
  if (!std::isfinite(lp)) return kNegInf;
  if (obs.n() == 0) return lp;

  const KernelSpec spec = theta.kernel(model.family, obs.dim());
  try {
    const double lml = log_marginal_likelihood(spec, obs, NoiseSpec::uniform(model.noise_var));
    if (!std::isfinite(lml)) return kNegInf;
    return lp + lml;
  } catch (const FactorizationFailed&) {
    return kNegInf;
  } catch (const std::invalid_argument&) {
    return kNegInf;
  }
}

std::vector<HyperSample> sample_hypers(const ObservationSet& obs, const HyperPriorSpec& prior,
                                       const McmcConfig& cfg, const HyperModel& model,
                                       double* acceptance_rate) {
  if (cfg.n_samples < 1 || cfg.burn_in < 0 || cfg.thinning < 1) {
    throw std::invalid_argument("sample_hypers: invalid chain configuration");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // state in log coordinates (log rho, log delta^2); the Jacobian terms keep
  // the chain targeting the posterior of (rho, delta^2)
  double u1 = std::log(prior.rho.mean());
  double u2 = std::log(prior.delta_sq.mean());

  auto target = [&](double a, double b, HyperSample& out) {
    out.rho = std::exp(a);
    out.delta = std::exp(0.5 * b);
    out.noise_var = model.noise_var;
    out.log_post = log_hyper_posterior(obs, out, prior, model);
    return out.log_post + a + b;
  };

  HyperSample current;
  double log_target = target(u1, u2, current);

  std::vector<HyperSample> samples;
  samples.reserve(cfg.n_samples);
  const int total = cfg.burn_in + cfg.n_samples * cfg.thinning;
  long accepted_after_burn_in = 0;
  long proposals_after_burn_in = 0;
  // Robbins-Monro step adaptation toward ~30% acceptance during burn-in; the
  // step freezes afterwards so the retained samples come from a valid chain.
  double step = cfg.step;
  constexpr double kTargetAcceptance = 0.3;
  constexpr double kAdaptGain = 0.05;
  for (int it = 0; it < total; ++it) {
    const double p1 = u1 + step * gauss(rng);
    const double p2 = u2 + step * gauss(rng);
    HyperSample cand;
    const double cand_target = target(p1, p2, cand);
    const bool accept = std::log(unif(rng)) < cand_target - log_target;
    if (it < cfg.burn_in) {
      step *= std::exp(kAdaptGain * ((accept ? 1.0 : 0.0) - kTargetAcceptance));
      step = std::min(std::max(step, 1e-6), 10.0);
    } else {
      ++proposals_after_burn_in;
      if (accept) ++accepted_after_burn_in;
    }
    if (accept) {
      u1 = p1;
      u2 = p2;
      current = cand;
      log_target = cand_target;
    }
    if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thinning == 0) {
      HyperSample s = current;
      s.iter = it;
      samples.push_back(s);
    }
  }
  if (acceptance_rate != nullptr) {
    *acceptance_rate = proposals_after_burn_in > 0
                           ? static_cast<double>(accepted_after_burn_in) / proposals_after_burn_in
                           : 0.0;
  }
  if (accepted_after_burn_in == 0) {
    throw AllProposalsRejected("no accepted proposals after burn-in; retune step sizes");
  }
  return samples;
}

}  // namespace dgp
