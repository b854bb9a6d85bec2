#pragma once

#include "dgp/common.hpp"
#include "dgp/kernels.hpp"

#include <atomic>
#include <cstdint>
#include <optional>

namespace dgp {

/// Value observations plus optional per-point gradients and vectorized
/// Hessians (hess_vec layout). Observation orders are homogeneous across the
/// set, and Hessians always come with gradients.
struct ObservationSet {
  Mat X;                    // N x d
  Vec f;                    // N
  std::optional<Mat> grad;  // N x d
  std::optional<Mat> hess;  // N x d(d+1)/2
  double noise_var = 0.0;

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
  Orders orders() const { return Orders{grad.has_value(), hess.has_value()}; }
  void validate() const;

  /// Stacked observation vector [f, grad, hess] in BlockLayout order.
  Vec stacked() const;
};

/// Joint Gram over the observation blocks plus its Cholesky factor; immutable
/// after fit, safe to share across threads for prediction.
struct DualPosterior {
  KernelSpec spec;
  ObservationSet obs;
  NoiseSpec noise;
  Mat gram;
  Eigen::LLT<Mat> llt;
  Vec y;        // stacked observations
  Vec weights;  // (K + noise)^{-1} y
  bool jitter_applied = false;
};

DualPosterior fit(const KernelSpec& spec, const ObservationSet& obs, const NoiseSpec& noise);

void predict(const DualPosterior& post, const Mat& xs, Vec& mean, Vec& var);

/// Cross-covariance vector between f(x_star) and all observation blocks.
Vec cross_cov_vector(const KernelSpec& spec, const ObservationSet& obs, const Vec& x_star);

/// Unit-length-scale reparameterization: inputs divided by delta, derivative
/// observations chain-rule scaled, uniform noise. predict(fit(rescaled), x/delta)
/// reproduces the unrescaled posterior with per-order noise (1, 1/d^2, 1/d^4)
/// exactly in exact arithmetic.
struct RescaledSystem {
  KernelSpec spec;
  ObservationSet obs;
  NoiseSpec noise;
  double delta = 1.0;  // original length scale; map points with x / delta

  Vec map_point(const Vec& x) const { return x / delta; }
};

RescaledSystem rescale(const KernelSpec& spec, const ObservationSet& obs);

/// Ratio of extreme singular values, the smallest clamped at machine epsilon
/// times the largest.
double condition_number(const Mat& m);

/// log N(stacked obs; 0, K + noise). Internally evaluated through the
/// rescaled system (plus the change-of-variables term), which keeps the
/// small-delta regime factorizable.
double log_marginal_likelihood(const KernelSpec& spec, const ObservationSet& obs,
                               const NoiseSpec& noise);

/// Diagnostic: number of predictive variances clamped up to zero.
std::atomic<std::uint64_t>& negative_variance_clamp_count();

}  // namespace dgp
