#include "dgp/bayes_opt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dgp {

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Vec stratified_point(const Mat& bounds, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(bounds.rows());
  for (int j = 0; j < bounds.rows(); ++j) {
    x[j] = bounds(j, 0) + (bounds(j, 1) - bounds(j, 0)) * u(rng);
  }
  return x;
}

// Latin-hypercube style candidate sweep: per-dimension shuffled strata with
// uniform jitter inside each stratum.
Mat candidate_sweep(const Mat& bounds, int n, std::mt19937_64& rng) {
  const int d = static_cast<int>(bounds.rows());
  Mat x(n, d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> perm(n);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) {
      const double frac = (perm[i] + u(rng)) / n;
      x(i, j) = bounds(j, 0) + (bounds(j, 1) - bounds(j, 0)) * frac;
    }
  }
  return x;
}

Vec clamp_inside(Vec x, const Mat& bounds) {
  for (int j = 0; j < bounds.rows(); ++j) {
    const double margin = 1e-9 * (bounds(j, 1) - bounds(j, 0));
    x[j] = std::min(std::max(x[j], bounds(j, 0) + margin), bounds(j, 1) - margin);
  }
  return x;
}

}  // namespace

double expected_improvement(double mean, double sd, double incumbent, double xi,
                            OptDirection direction) {
  const double gain = direction == OptDirection::maximize ? mean - incumbent - xi
                                                          : incumbent - mean - xi;
  if (sd <= 0.0) return std::max(gain, 0.0);
  const double z = gain / sd;
  return std::max(gain * normal_cdf(z) + sd * normal_pdf(z), 0.0);
}

double ucb(double mean, double sd, double kappa, OptDirection direction) {
  return direction == OptDirection::maximize ? mean + kappa * sd : -(mean - kappa * sd);
}

Orders orders_for(DerivLevel level) {
  switch (level) {
    case DerivLevel::plain:
      return Orders{false, false};
    case DerivLevel::grad:
      return Orders{true, false};
    default:
      return Orders{true, true};
  }
}

Vec maximize_acquisition(const std::function<Vec(const Mat&)>& acq, const Mat& bounds,
                         const InnerOptConfig& cfg, std::mt19937_64& rng) {
  const int d = static_cast<int>(bounds.rows());
  const Mat cands = candidate_sweep(bounds, cfg.n_candidates, rng);
  const Vec vals = acq(cands);

  std::vector<int> order(cfg.n_candidates);
  for (int i = 0; i < cfg.n_candidates; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] > vals[b]; });

  Vec best_x = cands.row(order[0]).transpose();
  double best_v = vals[order[0]];

  auto eval_one = [&](const Vec& x) {
    Mat m(1, d);
    m.row(0) = x.transpose();
    return acq(m)[0];
  };

  const int starts = std::min(cfg.refine_starts, cfg.n_candidates);
  for (int s = 0; s < starts; ++s) {
    Vec x = cands.row(order[s]).transpose();
    double fx = vals[order[s]];
    for (int sweep = 0; sweep < cfg.refine_sweeps; ++sweep) {
      for (int j = 0; j < d; ++j) {
        // coarse scan along the coordinate, then golden-style shrinking
        double lo = bounds(j, 0), hi = bounds(j, 1);
        Mat line(cfg.line_scan, d);
        for (int k = 0; k < cfg.line_scan; ++k) {
          line.row(k) = x.transpose();
          line(k, j) = lo + (hi - lo) * (k + 0.5) / cfg.line_scan;
        }
        const Vec lv = acq(line);
        int kb = 0;
        for (int k = 1; k < cfg.line_scan; ++k)
          if (lv[k] > lv[kb]) kb = k;
        if (lv[kb] > fx) {
          fx = lv[kb];
          x[j] = line(kb, j);
        }
        double w = (hi - lo) / cfg.line_scan;
        for (int step = 0; step < cfg.line_shrinks; ++step) {
          Mat probe(2, d);
          probe.row(0) = x.transpose();
          probe.row(1) = x.transpose();
          probe(0, j) = std::max(lo, x[j] - w);
          probe(1, j) = std::min(hi, x[j] + w);
          const Vec pv = acq(probe);
          if (pv[0] > fx && pv[0] >= pv[1]) {
            fx = pv[0];
            x[j] = probe(0, j);
          } else if (pv[1] > fx) {
            fx = pv[1];
            x[j] = probe(1, j);
          }
          w *= 0.6;
        }
      }
    }
    if (fx > best_v) {
      best_v = fx;
      best_x = x;
    }
  }
  return clamp_inside(best_x, bounds);
}

BackendModel BackendModel::fit_dual(const KernelSpec& spec, const ObservationSet& obs,
                                    double noise_var) {
  BackendModel m;
  ObservationSet work = obs;
  work.noise_var = noise_var;
  const RescaledSystem rs = rescale(spec, work);
  m.impl_ = fit(rs.spec, rs.obs, rs.noise);
  m.delta_scale = spec.delta;
  return m;
}

BackendModel BackendModel::fit_spectral(const KernelSpec& spec, const ObservationSet& obs,
                                        double noise_var, const GridConfig& grid_cfg,
                                        double support) {
  BackendModel m;
  const FrequencyGrid grid =
      build_grid(support, spec, grid_cfg.boundary_t, grid_cfg.cond_target, grid_cfg.max_grid);
  SpectralModel model(spec, grid);
  std::vector<PointObservation> pts(obs.n());
  for (int i = 0; i < obs.n(); ++i) {
    pts[i].x = obs.X.row(i).transpose();
    pts[i].value = obs.f[i];
    if (obs.grad) pts[i].grad = obs.grad->row(i).transpose();
    if (obs.hess) pts[i].hess = obs.hess->row(i).transpose();
  }
  // per-order noise matching the rescaled dual backend, so the two backends
  // represent the same model
  m.impl_ = model.updated_batch(pts, NoiseSpec::rescaled_mode(noise_var, spec.delta));
  m.delta_scale = 1.0;
  return m;
}

void BackendModel::predict(const Mat& xs, Vec& mean, Vec& sd) const {
  Vec var;
  if (const auto* dual = std::get_if<DualPosterior>(&impl_)) {
    dgp::predict(*dual, xs / delta_scale, mean, var);
  } else {
    std::get<SpectralModel>(impl_).predict(xs, mean, var);
  }
  sd = var.cwiseMax(0.0).cwiseSqrt();
}

HyperPriorSpec default_priors(const Mat& bounds, const Vec& observed) {
  HyperPriorSpec priors;
  const double diag = (bounds.col(1) - bounds.col(0)).norm();
  const double d_mean = std::max(diag / 4.0, 1e-3);
  priors.delta_sq = GammaPrior::with_mean(2.0, d_mean * d_mean);
  double var_f = 1.0;
  if (observed.size() > 1) {
    const double mu = observed.mean();
    var_f = (observed.array() - mu).square().sum() / (observed.size() - 1.0);
  }
  priors.rho = GammaPrior::with_mean(2.0, std::max(var_f, 1.0));
  return priors;
}

namespace {

struct Evaluation {
  double f;
  Vec grad;
  Mat hess;
};

Evaluation evaluate(const Objective& obj, const Vec& x, DerivLevel level) {
  Evaluation e;
  Vec* g = level != DerivLevel::plain ? &e.grad : nullptr;
  Mat* h = level == DerivLevel::hess ? &e.hess : nullptr;
  e.f = obj(x, g, h);
  return e;
}

void append_observation(ObservationSet& obs, const Vec& x, const Evaluation& e, bool minimize,
                        DerivLevel level) {
  const double sign = minimize ? -1.0 : 1.0;
  const int n = obs.n();
  obs.X.conservativeResize(n + 1, Eigen::NoChange);
  obs.X.row(n) = x.transpose();
  obs.f.conservativeResize(n + 1);
  obs.f[n] = sign * e.f;
  if (level != DerivLevel::plain) {
    obs.grad->conservativeResize(n + 1, Eigen::NoChange);
    obs.grad->row(n) = sign * e.grad.transpose();
  }
  if (level == DerivLevel::hess) {
    obs.hess->conservativeResize(n + 1, Eigen::NoChange);
    obs.hess->row(n) = (sign * hess_to_vec(e.hess)).transpose();
  }
}

}  // namespace

BoTrace run_bo(const Objective& objective, const BoConfig& cfg) {
  if (cfg.n_init < 1 || cfg.budget < cfg.n_init) {
    throw std::invalid_argument("run_bo: need n_init >= 1 and budget >= n_init");
  }
  const int d = objective.dim;
  const Orders orders = orders_for(cfg.level);
  const double span = (objective.bounds.col(1) - objective.bounds.col(0)).maxCoeff();
  const double support = (objective.bounds.col(1) - objective.bounds.col(0)).norm();

  BoTrace trace;
  ObservationSet obs;
  obs.X = Mat::Zero(0, d);
  obs.f = Vec::Zero(0);
  if (orders.gradient) obs.grad = Mat::Zero(0, d);
  if (orders.hessian) obs.hess = Mat::Zero(0, hess_vec_size(d));
  obs.noise_var = cfg.noise_var;

  double best_f = objective.minimize ? std::numeric_limits<double>::infinity()
                                     : -std::numeric_limits<double>::infinity();
  Vec best_x = Vec::Zero(d);

  auto record = [&](int iter, const Vec& x, double f, const std::string& backend,
                    const std::vector<HyperSample>& samples) {
    const bool better = objective.minimize ? f < best_f : f > best_f;
    if (better) {
      best_f = f;
      best_x = x;
    }
    BoIterRecord rec;
    rec.iter = iter;
    rec.x = x;
    rec.f = f;
    rec.incumbent = best_f;
    rec.incumbent_x = best_x;
    rec.dist_to_opt = objective.distance_to_optimum(best_x);
    rec.backend = backend;
    if (!samples.empty()) {
      double mr = 0.0, md = 0.0, vd = 0.0;
      for (const auto& s : samples) {
        mr += s.rho;
        md += s.delta_sq();
      }
      mr /= samples.size();
      md /= samples.size();
      for (const auto& s : samples) vd += (s.delta_sq() - md) * (s.delta_sq() - md);
      vd /= samples.size();
      rec.rho_mean = mr;
      rec.delta_sq_mean = md;
      rec.delta_sq_var = vd;
    }
    trace.iters.push_back(std::move(rec));
  };

  std::mt19937_64 init_rng(derive_seed(cfg.seed, 1));
  for (int i = 0; i < cfg.n_init; ++i) {
    const Vec x = stratified_point(objective.bounds, init_rng);
    const Evaluation e = evaluate(objective, x, cfg.level);
    append_observation(obs, x, e, objective.minimize, cfg.level);
    record(i + 1, x, e.f, "init", {});
  }

  for (int iter = cfg.n_init; iter < cfg.budget; ++iter) {
    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = derive_seed(cfg.seed, 1000 + iter);
    const HyperPriorSpec priors =
        cfg.priors ? *cfg.priors : default_priors(objective.bounds, obs.f);
    const HyperModel model{KernelFamily::squared_exponential, cfg.noise_var};

    std::vector<HyperSample> samples;
    try {
      samples = sample_hypers(obs, priors, mcmc, model);
    } catch (const AllProposalsRejected&) {
      // retune once: a much smaller initial step and a fresh proposal stream
      McmcConfig retry = mcmc;
      retry.step = mcmc.step * 0.05;
      retry.seed = derive_seed(cfg.seed, 3000 + iter);
      try {
        samples = sample_hypers(obs, priors, retry, model);
      } catch (const AllProposalsRejected& e) {
        trace.aborted = true;
        trace.abort_reason = e.what();
        break;
      }
    }

    // fit one posterior per distinct hyperparameter sample
    std::vector<BackendModel> models;
    std::vector<int> model_of_sample(samples.size());
    std::map<std::pair<double, double>, int> seen;
    bool any_dual = false, any_spectral = false;
    bool fit_failed = false;
    std::string fail_reason;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto key = std::make_pair(samples[s].rho, samples[s].delta);
      auto it = seen.find(key);
      if (it != seen.end()) {
        model_of_sample[s] = it->second;
        continue;
      }
      const KernelSpec spec = samples[s].kernel(KernelFamily::squared_exponential, d);
      bool use_spectral = cfg.backend == Backend::spectral;
      if (cfg.backend == Backend::auto_select) {
        use_spectral = spec.delta > cfg.spectral_delta_frac * span;
      }
      try {
        BackendModel m = [&]() {
          if (use_spectral) {
            try {
              BackendModel sm =
                  BackendModel::fit_spectral(spec, obs, cfg.noise_var, cfg.grid, support);
              return sm;
            } catch (const GridTooLarge&) {
              return BackendModel::fit_dual(spec, obs, cfg.noise_var);
            }
          }
          return BackendModel::fit_dual(spec, obs, cfg.noise_var);
        }();
        any_spectral |= m.is_spectral();
        any_dual |= !m.is_spectral();
        models.push_back(std::move(m));
      } catch (const FactorizationFailed& e) {
        // dual failed: spectral fallback, then give up on the run
        try {
          models.push_back(
              BackendModel::fit_spectral(spec, obs, cfg.noise_var, cfg.grid, support));
          any_spectral = true;
        } catch (const std::exception& e2) {
          fit_failed = true;
          fail_reason = std::string(e.what()) + "; spectral fallback: " + e2.what();
          break;
        }
      }
      seen[key] = static_cast<int>(models.size()) - 1;
      model_of_sample[s] = seen[key];
    }
    if (fit_failed) {
      trace.aborted = true;
      trace.abort_reason = fail_reason;
      break;
    }

    const double incumbent_internal = objective.minimize ? -best_f : best_f;
    auto acq_batch = [&](const Mat& xs) {
      Vec acc = Vec::Zero(xs.rows());
      Vec mean, sd;
      std::vector<Vec> means(models.size()), sds(models.size());
      for (std::size_t m = 0; m < models.size(); ++m) {
        models[m].predict(xs, means[m], sds[m]);
      }
      for (std::size_t s = 0; s < samples.size(); ++s) {
        const Vec& mu = means[model_of_sample[s]];
        const Vec& sg = sds[model_of_sample[s]];
        for (int i = 0; i < xs.rows(); ++i) {
          acc[i] += cfg.acq.kind == AcqKind::ei
                        ? expected_improvement(mu[i], sg[i], incumbent_internal, cfg.acq.ei_xi,
                                               OptDirection::maximize)
                        : ucb(mu[i], sg[i], cfg.acq.ucb_kappa, OptDirection::maximize);
        }
      }
      return Vec(acc / static_cast<double>(samples.size()));
    };

    std::mt19937_64 inner_rng(derive_seed(cfg.seed, 2000 + iter));
    const Vec x_next = maximize_acquisition(acq_batch, objective.bounds, cfg.inner, inner_rng);
    const Evaluation e = evaluate(objective, x_next, cfg.level);
    append_observation(obs, x_next, e, objective.minimize, cfg.level);

    const std::string backend = any_dual && any_spectral ? "mixed"
                                : any_spectral           ? "spectral"
                                                         : "dual";
    record(iter + 1, x_next, e.f, backend, samples);
  }
  return trace;
}

}  // namespace dgp
