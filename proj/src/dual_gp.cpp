#include "dgp/dual_gp.hpp"

#include <cmath>

namespace dgp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Eigen::LLT<Mat> factor_with_retry(Mat& gram, bool& jitter_applied) {
  Eigen::LLT<Mat> llt(gram);
  jitter_applied = false;
  if (llt.info() == Eigen::Success) return llt;
  // Single retry with trace-scaled jitter; anything beyond that is a real
  // conditioning problem the caller has to handle (rescale or go spectral).
  const double jitter = 1e-10 * gram.trace() / static_cast<double>(gram.rows());
  gram.diagonal().array() += jitter;
  jitter_applied = true;
  llt.compute(gram);
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailed("Cholesky failed after jitter retry (condition too poor)");
  }
  return llt;
}

// Generalized rescale used internally: maps an arbitrary per-order NoiseSpec
// into the rescaled coordinates, cov(D eps D) = sigma^2 (s_v, s_g d^2, s_h d^4).
RescaledSystem rescale_with_noise(const KernelSpec& spec, const ObservationSet& obs,
                                  const NoiseSpec& noise) {
  RescaledSystem r;
  r.delta = spec.delta;
  r.spec = spec;
  r.spec.delta = 1.0;
  r.obs = obs;
  r.obs.X = obs.X / spec.delta;
  if (obs.grad) r.obs.grad = *obs.grad * spec.delta;
  if (obs.hess) r.obs.hess = *obs.hess * (spec.delta * spec.delta);
  const double d2 = spec.delta * spec.delta;
  r.noise = NoiseSpec{noise.base_var,
                      {noise.per_order_scale[0], noise.per_order_scale[1] * d2,
                       noise.per_order_scale[2] * d2 * d2}};
  if (!r.obs.X.allFinite()) {
    throw FactorizationFailed("rescale produced non-finite inputs (delta too small)");
  }
  return r;
}

}  // namespace

void ObservationSet::validate() const {
  if (f.size() != X.rows()) throw DimensionMismatch("ObservationSet: f size != number of points");
  if (grad && (grad->rows() != X.rows() || grad->cols() != X.cols())) {
    throw DimensionMismatch("ObservationSet: grad shape mismatch");
  }
  if (hess && !grad) {
    throw std::invalid_argument("ObservationSet: Hessian observations require gradients");
  }
  if (hess && (hess->rows() != X.rows() || hess->cols() != hess_vec_size(dim()))) {
    throw DimensionMismatch("ObservationSet: hess shape mismatch");
  }
  if (noise_var < 0.0) throw std::invalid_argument("ObservationSet: negative noise variance");
  const bool finite = X.allFinite() && f.allFinite() && (!grad || grad->allFinite()) &&
                      (!hess || hess->allFinite());
  if (!finite) throw std::invalid_argument("ObservationSet: non-finite entries");
}

Vec ObservationSet::stacked() const {
  const BlockLayout layout{n(), dim(), orders()};
  Vec y(layout.rows());
  y.head(n()) = f;
  if (grad) {
    for (int i = 0; i < n(); ++i) {
      y.segment(layout.row(i, DerivOrder::gradient, 0), dim()) = grad->row(i).transpose();
    }
  }
  if (hess) {
    const int q = hess_vec_size(dim());
    for (int i = 0; i < n(); ++i) {
      y.segment(layout.row(i, DerivOrder::hessian, 0), q) = hess->row(i).transpose();
    }
  }
  return y;
}

DualPosterior fit(const KernelSpec& spec, const ObservationSet& obs, const NoiseSpec& noise) {
  spec.validate();
  obs.validate();
  if (obs.dim() != spec.dim) throw DimensionMismatch("fit: observation dim != kernel dim");

  DualPosterior post;
  post.spec = spec;
  post.obs = obs;
  post.noise = noise;
  if (obs.n() == 0) {
    post.gram.resize(0, 0);
    post.y.resize(0);
    post.weights.resize(0);
    return post;
  }
  post.gram = build_joint_gram(spec, obs.X, obs.orders(), noise);
  Mat gram = post.gram;
  post.llt = factor_with_retry(gram, post.jitter_applied);
  post.gram = gram;  // includes jitter if the retry fired
  post.y = obs.stacked();
  post.weights = post.llt.solve(post.y);
  return post;
}

Vec cross_cov_vector(const KernelSpec& spec, const ObservationSet& obs, const Vec& x_star) {
  const BlockLayout layout{obs.n(), obs.dim(), obs.orders()};
  Vec k(layout.rows());
  for (int i = 0; i < obs.n(); ++i) {
    const Vec xi = obs.X.row(i).transpose();
    k[layout.row(i, DerivOrder::value, 0)] = eval_kernel(spec, x_star, xi);
    if (obs.grad) {
      const Mat blk = eval_cross_block(spec, x_star, xi, DerivOrder::value, DerivOrder::gradient);
      k.segment(layout.row(i, DerivOrder::gradient, 0), obs.dim()) = blk.row(0).transpose();
    }
    if (obs.hess) {
      const Mat blk = eval_cross_block(spec, x_star, xi, DerivOrder::value, DerivOrder::hessian);
      k.segment(layout.row(i, DerivOrder::hessian, 0), hess_vec_size(obs.dim())) =
          blk.row(0).transpose();
    }
  }
  return k;
}

std::atomic<std::uint64_t>& negative_variance_clamp_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

void predict(const DualPosterior& post, const Mat& xs, Vec& mean, Vec& var) {
  if (xs.cols() != post.spec.dim) throw DimensionMismatch("predict: point dim != kernel dim");
  const int m = static_cast<int>(xs.rows());
  mean.resize(m);
  var.resize(m);
  for (int i = 0; i < m; ++i) {
    const Vec x = xs.row(i).transpose();
    const double prior = eval_kernel(post.spec, x, x);
    if (post.obs.n() == 0) {
      mean[i] = 0.0;
      var[i] = prior;
      continue;
    }
    const Vec k = cross_cov_vector(post.spec, post.obs, x);
    mean[i] = k.dot(post.weights);
    const Vec half = post.llt.matrixL().solve(k);
    double v = prior - half.squaredNorm();
    if (v < 0.0) {
      negative_variance_clamp_count().fetch_add(1, std::memory_order_relaxed);
      v = 0.0;
    }
    var[i] = v;
  }
}

RescaledSystem rescale(const KernelSpec& spec, const ObservationSet& obs) {
  spec.validate();
  obs.validate();
  RescaledSystem r = rescale_with_noise(spec, obs, NoiseSpec::uniform(obs.noise_var));
  // Uniform noise in the rescaled coordinates; equivalent to per-order scales
  // (1, 1/d^2, 1/d^4) on the unrescaled system.
  r.noise = NoiseSpec::uniform(obs.noise_var);
  return r;
}

double condition_number(const Mat& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("condition_number: matrix must be square");
  if (m.rows() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  const Vec sv = es.eigenvalues().cwiseAbs();
  const double largest = sv.maxCoeff();
  if (largest == 0.0) return 1.0;
  const double eps = std::numeric_limits<double>::epsilon();
  const double smallest = std::max(sv.minCoeff(), eps * largest);
  return largest / smallest;
}

double log_marginal_likelihood(const KernelSpec& spec, const ObservationSet& obs,
                               const NoiseSpec& noise) {
  spec.validate();
  obs.validate();
  if (obs.n() == 0) return 0.0;

  // Evaluate through the rescaled system; same quantity by change of
  // variables, but conditioned well enough to survive small delta.
  const RescaledSystem rs = rescale_with_noise(spec, obs, noise);
  Mat gram = build_joint_gram(rs.spec, rs.obs.X, rs.obs.orders(), rs.noise);
  bool jitter = false;
  Eigen::LLT<Mat> llt = factor_with_retry(gram, jitter);
  const Vec y = rs.obs.stacked();
  const Vec alpha = llt.solve(y);
  double log_det = 0.0;
  const auto& lmat = llt.matrixLLT();
  for (int i = 0; i < lmat.rows(); ++i) log_det += std::log(lmat(i, i));

  double lml = -0.5 * y.dot(alpha) - log_det -
               0.5 * static_cast<double>(y.size()) * std::log(kTwoPi);

  // d ytilde / dy Jacobian: gradient rows scale by delta, Hessian rows by delta^2.
  const double log_delta = std::log(spec.delta);
  if (obs.grad) lml += static_cast<double>(obs.n() * obs.dim()) * log_delta;
  if (obs.hess) lml += 2.0 * static_cast<double>(obs.n() * hess_vec_size(obs.dim())) * log_delta;
  return lml;
}

}  // namespace dgp
