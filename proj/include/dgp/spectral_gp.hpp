#pragma once

#include "dgp/common.hpp"
#include "dgp/kernels.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace dgp {

// Fourier-domain GP over a symmetric tensor-product frequency grid.
//
// The complex basis e^{2 pi i w.x} over the symmetric grid is stored in real
// paired form: one constant feature for w = 0 and a cos/sin pair per positive
// frequency vector. With per-feature prior variances
//   const: s(0) w0^d,   cos/sin pair: 2 s(w) w0^d,
// the marginal covariance sum_j var_j phi_j(x) phi_j(x') reproduces the kernel
// (a Riemann sum of the spectral density; w0^d is the grid volume element).

struct FrequencyGrid {
  int dim = 1;
  double omega0 = 0.0;
  int c = 0;  // highest frequency integer per dimension
  double support = 0.0;
  double boundary_t = 6.0;
  double cond_target = 1e14;
  bool degenerate_cutoff = false;  // cond_target forced c below 1

  Mat freqs;                       // n_features x dim
  std::vector<std::uint8_t> kind;  // 0 constant, 1 cosine, 2 sine

  int n_features() const { return static_cast<int>(freqs.rows()); }
  std::size_t complex_grid_size() const;
};

/// Frequency grid with w0 = 1/(T + t*delta) and the cutoff integer c chosen so
/// the prior-spectrum ratio s(0)/s(c*w0) reaches cond_target for the kernel
/// family (exponent-consistent SE rule; rational-spectrum rule for Matern).
FrequencyGrid build_grid(double support, const KernelSpec& spec, double t = 6.0,
                         double cond_target = 1e14, std::size_t max_grid_size = 200000);

/// Spectral density per feature row. SE: (2 pi delta^2)^(d/2) rho
/// exp(-2 pi^2 delta^2 |w|^2). Factorizable Matern 5/2: product of unit-mass
/// 1D rational spectra times rho.
Vec prior_spectrum(const KernelSpec& spec, const FrequencyGrid& grid);

/// Basis features and their spatial derivatives at x:
/// [n_features x block_size(order)]. Gradient columns carry the 2 pi w factors,
/// Hessian columns the -4 pi^2 w_a w_b factors in hess_vec layout.
Mat basis(const FrequencyGrid& grid, const Vec& x, DerivOrder order);

/// One point's observed quantities for a spectral update.
struct PointObservation {
  Vec x;
  std::optional<double> value;
  std::optional<Vec> grad;
  std::optional<Vec> hess;  // hess_vec layout
};

/// Gaussian posterior over Fourier coefficients, kept in precision form
/// P = Sigma^{-1} + sum_k b_k b_k^T / sigma_k^2 with a refreshed Cholesky per
/// update. Updates return a new immutable model value.
class SpectralModel {
 public:
  SpectralModel(const KernelSpec& spec, FrequencyGrid grid);

  const KernelSpec& spec() const { return spec_; }
  const FrequencyGrid& grid() const { return grid_; }
  const Vec& sigma_diag() const { return sigma_diag_; }
  const Mat& precision() const { return precision_; }
  const Vec& posterior_mean() const { return alpha_; }  // alpha-tilde
  int n_obs() const { return n_obs_; }

  SpectralModel updated(const PointObservation& pobs, const NoiseSpec& noise) const;
  SpectralModel updated_batch(const std::vector<PointObservation>& pobs,
                              const NoiseSpec& noise) const;

  void predict(const Mat& xs, Vec& mean, Vec& var) const;

  /// v^T Sigma-tilde v via the precision Cholesky.
  double posterior_quad(const Vec& v) const;
  /// Sigma-tilde v
  Vec posterior_solve(const Vec& v) const;

 private:
  void refresh();
  void accumulate(const PointObservation& pobs, const NoiseSpec& noise);

  KernelSpec spec_;
  FrequencyGrid grid_;
  Vec sigma_diag_;
  Mat precision_;  // lower triangle maintained
  Vec info_;
  Eigen::LLT<Mat> chol_;
  Vec alpha_;
  int n_obs_ = 0;
};

inline SpectralModel spectral_update(const SpectralModel& model, const PointObservation& pobs,
                                     double noise_var) {
  return model.updated(pobs, NoiseSpec::uniform(noise_var));
}

void spectral_predict(const SpectralModel& model, const Mat& xs, Vec& mean, Vec& var);

/// [B, dB, d2B]^T Sigma [B, dB, d2B] over the points, in BlockLayout order;
/// the validation oracle against build_joint_gram. Streams over the grid, so
/// it works for grids too large to hold a posterior.
Mat reconstruct_kernel(const KernelSpec& spec, const FrequencyGrid& grid, const Mat& x_points,
                       const Orders& orders);

}  // namespace dgp
