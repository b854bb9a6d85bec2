#pragma once

#include "dgp/common.hpp"

#include <array>

namespace dgp {

enum class KernelFamily { squared_exponential, matern52, matern52_factorizable };

/// Stationary covariance: marginal variance rho, length scale delta, input dim.
struct KernelSpec {
  KernelFamily family = KernelFamily::squared_exponential;
  double rho = 1.0;
  double delta = 1.0;
  int dim = 1;

  void validate() const;
};

enum class DerivOrder { value = 0, gradient = 1, hessian = 2 };

/// Rows/columns contributed by one observation at the given derivative order.
int block_size(DerivOrder order, int dim);

// Symmetric-Hessian vectorization: column-stacked lower triangle,
// (0,0),(1,0),...,(d-1,0),(1,1),...,(d-1,d-1). Each unique mixed partial
// appears exactly once, unscaled.
int hess_vec_size(int dim);
int hess_vec_index(int dim, int i, int j);
std::pair<int, int> hess_vec_pair(int dim, int idx);
Vec hess_to_vec(const Mat& h);
Mat vec_to_hess(const Vec& v, int dim);

/// Which derivative blocks participate in a joint Gram matrix. Function values
/// are always present.
struct Orders {
  bool gradient = false;
  bool hessian = false;
};

/// Order-major row layout of the joint Gram matrix: all value rows, then all
/// gradient rows, then all Hessian rows, each grouped by observation index.
struct BlockLayout {
  int n = 0;
  int dim = 1;
  Orders orders;

  int rows() const;
  int offset(DerivOrder order) const;
  int row(int obs, DerivOrder order, int comp) const;
};

/// Observation noise: base variance sigma_n^2 plus per-order multipliers on
/// the value/gradient/Hessian diagonal blocks.
struct NoiseSpec {
  double base_var = 0.0;
  std::array<double, 3> per_order_scale = {1.0, 1.0, 1.0};

  static NoiseSpec uniform(double base) { return NoiseSpec{base, {1.0, 1.0, 1.0}}; }
  // Equivalent, in the unrescaled coordinates, to rescaling inputs by delta
  // and keeping uniform noise.
  static NoiseSpec rescaled_mode(double base, double delta) {
    const double d2 = delta * delta;
    return NoiseSpec{base, {1.0, 1.0 / d2, 1.0 / (d2 * d2)}};
  }
};

/// k(x, x2).
double eval_kernel(const KernelSpec& spec, const Vec& x, const Vec& x2);

/// Cross-covariance block between derivative orders: entry (i, j) is the mixed
/// partial of k(x, x2), row-order derivatives w.r.t. x components, col-order
/// w.r.t. x2 components, Hessian components in hess_vec layout. Closed forms,
/// no numerical differentiation. Matern families reject Hessian blocks.
Mat eval_cross_block(const KernelSpec& spec, const Vec& x, const Vec& x2, DerivOrder row,
                     DerivOrder col);

/// Joint Gram matrix over the requested blocks in BlockLayout order with the
/// noise term added to the diagonal. Symmetric by construction.
Mat build_joint_gram(const KernelSpec& spec, const Mat& x_points, const Orders& orders,
                     const NoiseSpec& noise);

}  // namespace dgp
