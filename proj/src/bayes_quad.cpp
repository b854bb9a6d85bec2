#include "dgp/bayes_quad.hpp"

#include "dgp/simd.hpp"

#include <cmath>
#include <random>

namespace dgp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void GaussianPriorDensity::validate() const {
  if (cov.rows() != dim() || cov.cols() != dim()) {
    throw DimensionMismatch("GaussianPriorDensity: cov shape mismatch");
  }
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("GaussianPriorDensity: covariance not positive definite");
  }
}

double GaussianPriorDensity::density(const Vec& x) const {
  Eigen::LLT<Mat> llt(cov);
  const Vec diff = x - mean;
  const Vec half = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (int i = 0; i < dim(); ++i) log_det += std::log(Mat(llt.matrixL())(i, i));
  return std::exp(-0.5 * half.squaredNorm() - log_det - 0.5 * dim() * std::log(kTwoPi));
}

Vec basis_integral(const FrequencyGrid& grid, const GaussianPriorDensity& prior) {
  if (grid.dim != prior.dim()) throw DimensionMismatch("basis_integral: dim mismatch");
  const int n = grid.n_features();
  Vec zb(n);
  // angles 2 pi w.m and decay exp(-2 pi^2 w^T S w)
  Vec angles = kTwoPi * (grid.freqs * prior.mean);
  Vec cs(n), sn(n);
  simd::sincos_batch(angles.data(), cs.data(), sn.data(), n);
  Vec decay_args(n);
  for (int j = 0; j < n; ++j) {
    const Vec w = grid.freqs.row(j).transpose();
    decay_args[j] = -2.0 * M_PI * M_PI * w.dot(prior.cov * w);
  }
  Vec decay(n);
  simd::exp_batch(decay_args.data(), decay.data(), n);
  for (int j = 0; j < n; ++j) {
    switch (grid.kind[j]) {
      case 0:
        zb[j] = 1.0;  // integral of the density
        break;
      case 1:
        zb[j] = decay[j] * cs[j];
        break;
      default:
        zb[j] = decay[j] * sn[j];
        break;
    }
  }
  return zb;
}

QuadratureState::QuadratureState(SpectralModel model, GaussianPriorDensity prior)
    : model_(std::move(model)), prior_(std::move(prior)) {
  prior_.validate();
  zb_ = basis_integral(model_.grid(), prior_);
}

double QuadratureState::integral_mean() const { return zb_.dot(model_.posterior_mean()); }

double QuadratureState::integral_variance() const {
  return std::max(model_.posterior_quad(zb_), 0.0);
}

QuadratureState QuadratureState::with_observation(const PointObservation& pobs,
                                                  const NoiseSpec& noise) const {
  QuadratureState next = *this;
  next.model_ = model_.updated(pobs, noise);
  return next;
}

int select_next_variance(const QuadratureState& state, const Mat& candidates,
                         const NoiseSpec& noise, const Orders& orders) {
  if (candidates.rows() == 0) throw std::invalid_argument("select_next_variance: no candidates");
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i < candidates.rows(); ++i) {
    // hypothetical update; the integral variance does not involve the values,
    // so zeros stand in for the unseen observations
    PointObservation pobs;
    pobs.x = candidates.row(i).transpose();
    pobs.value = 0.0;
    if (orders.gradient) pobs.grad = Vec::Zero(state.model().grid().dim);
    if (orders.hessian) pobs.hess = Vec::Zero(hess_vec_size(state.model().grid().dim));
    const QuadratureState look = state.with_observation(pobs, noise);
    const double v = look.integral_variance();
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

int select_next_integrand(const QuadratureState& state, const Mat& candidates) {
  if (candidates.rows() == 0) throw std::invalid_argument("select_next_integrand: no candidates");
  Vec mean, var;
  state.model().predict(candidates, mean, var);
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < candidates.rows(); ++i) {
    const double p = state.prior().density(candidates.row(i).transpose());
    const double score = var[i] * p * p;
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

BqTrace run_bq(const Objective& integrand, double z_true, const BqConfig& cfg) {
  cfg.prior.validate();
  const int d = cfg.prior.dim();
  if (integrand.dim != d) throw DimensionMismatch("run_bq: integrand dim != prior dim");

  // support covers the candidate band around the prior mass
  Vec sds(d);
  for (int j = 0; j < d; ++j) sds[j] = std::sqrt(cfg.prior.cov(j, j));
  const double support = 2.0 * cfg.candidate_half_width_sds * sds.maxCoeff();

  const FrequencyGrid grid = build_grid(support, cfg.kernel, cfg.grid.boundary_t,
                                        cfg.grid.cond_target, cfg.grid.max_grid);
  QuadratureState state(SpectralModel(cfg.kernel, grid), cfg.prior);
  const NoiseSpec noise = NoiseSpec::uniform(cfg.noise_var);
  const Orders orders = orders_for(cfg.level);

  BqTrace trace;
  trace.z_true = z_true;
  auto push = [&](int iter, const Vec& x) {
    BqIterRecord rec;
    rec.iter = iter;
    rec.x = x;
    rec.integral_mean = state.integral_mean();
    rec.integral_var = state.integral_variance();
    rec.abs_error = std::abs(rec.integral_mean - z_true);
    trace.iters.push_back(std::move(rec));
  };
  push(0, Vec());

  std::mt19937_64 rng(derive_seed(cfg.seed, 17));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int iter = 1; iter <= cfg.budget; ++iter) {
    // stratified candidates within +- k sd of the prior mean per dimension
    Mat cands(cfg.n_candidates, d);
    std::vector<int> perm(cfg.n_candidates);
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < cfg.n_candidates; ++i) perm[i] = i;
      std::shuffle(perm.begin(), perm.end(), rng);
      const double lo = cfg.prior.mean[j] - cfg.candidate_half_width_sds * sds[j];
      const double hi = cfg.prior.mean[j] + cfg.candidate_half_width_sds * sds[j];
      for (int i = 0; i < cfg.n_candidates; ++i) {
        cands(i, j) = lo + (hi - lo) * (perm[i] + u(rng)) / cfg.n_candidates;
      }
    }

    const int pick = cfg.variance_rule ? select_next_variance(state, cands, noise, orders)
                                       : select_next_integrand(state, cands);
    const Vec x = cands.row(pick).transpose();

    PointObservation pobs;
    pobs.x = x;
    Vec g;
    Mat h;
    pobs.value = integrand(x, orders.gradient ? &g : nullptr, orders.hessian ? &h : nullptr);
    if (orders.gradient) pobs.grad = g;
    if (orders.hessian) pobs.hess = hess_to_vec(h);
    state = state.with_observation(pobs, noise);
    push(iter, x);
  }
  return trace;
}

}  // namespace dgp
