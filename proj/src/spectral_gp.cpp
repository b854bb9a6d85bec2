#include "dgp/spectral_gp.hpp"

#include "dgp/simd.hpp"

#include <cmath>

namespace dgp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Unit-marginal 1D Matern 5/2 spectral density in cycles-per-unit frequency.
double matern52_density_1d(double omega, double delta) {
  const double b2 = 5.0 / (delta * delta);
  const double w2 = kTwoPi * omega;  // 2 pi omega
  const double denom = b2 + w2 * w2;
  const double num = 400.0 * std::sqrt(5.0) / (3.0 * std::pow(delta, 5));
  return num / (denom * denom * denom);
}

bool factorizable_spectrum(const KernelSpec& spec) {
  return spec.family == KernelFamily::matern52_factorizable ||
         (spec.family == KernelFamily::matern52 && spec.dim == 1);
}

// Features [j0, j1) of the basis at x written into out (rows j-j0).
void basis_range(const FrequencyGrid& grid, const Vec& x, DerivOrder order, int j0, int j1,
                 Eigen::Ref<Mat> out) {
  const int len = j1 - j0;
  const int d = grid.dim;
  Vec angle = kTwoPi * (grid.freqs.middleRows(j0, len) * x);
  Vec cs(len), sn(len);
  simd::sincos_batch(angle.data(), cs.data(), sn.data(), len);

  for (int r = 0; r < len; ++r) {
    const int j = j0 + r;
    const auto k = grid.kind[j];
    switch (order) {
      case DerivOrder::value:
        out(r, 0) = k == 0 ? 1.0 : (k == 1 ? cs[r] : sn[r]);
        break;
      case DerivOrder::gradient:
        for (int a = 0; a < d; ++a) {
          const double w = kTwoPi * grid.freqs(j, a);
          out(r, a) = k == 0 ? 0.0 : (k == 1 ? -w * sn[r] : w * cs[r]);
        }
        break;
      case DerivOrder::hessian:
        for (int comp = 0; comp < hess_vec_size(d); ++comp) {
          auto [a, b] = hess_vec_pair(d, comp);
          const double wab = -kTwoPi * kTwoPi * grid.freqs(j, a) * grid.freqs(j, b);
          out(r, comp) = k == 0 ? 0.0 : (k == 1 ? wab * cs[r] : wab * sn[r]);
        }
        break;
    }
  }
}

Vec sigma_diag_for(const KernelSpec& spec, const FrequencyGrid& grid) {
  const Vec s = prior_spectrum(spec, grid);
  const double volume = std::pow(grid.omega0, grid.dim);
  Vec sigma(grid.n_features());
  for (int j = 0; j < grid.n_features(); ++j) {
    sigma[j] = s[j] * volume * (grid.kind[j] == 0 ? 1.0 : 2.0);
  }
  return sigma;
}

}  // namespace

std::size_t FrequencyGrid::complex_grid_size() const {
  std::size_t n = 1;
  for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(2 * c + 1);
  return n;
}

FrequencyGrid build_grid(double support, const KernelSpec& spec, double t, double cond_target,
                         std::size_t max_grid_size) {
  spec.validate();
  if (!(support > 0.0)) throw std::invalid_argument("build_grid: support must be > 0");
  if (!(t > 0.0)) throw std::invalid_argument("build_grid: boundary parameter t must be > 0");
  if (!(cond_target > 1.0) && cond_target != 1.0) {
    throw std::invalid_argument("build_grid: cond_target must be >= 1");
  }

  FrequencyGrid grid;
  grid.dim = spec.dim;
  grid.support = support;
  grid.boundary_t = t;
  grid.cond_target = cond_target;
  grid.omega0 = 1.0 / (support + t * spec.delta);

  int c = 0;
  if (spec.family == KernelFamily::squared_exponential) {
    // s(0)/s(c w0) = exp(2 pi^2 delta^2 c^2 w0^2) >= cond_target
    const double arg = std::log(cond_target) /
                       (2.0 * M_PI * M_PI * spec.delta * spec.delta * grid.omega0 * grid.omega0);
    c = static_cast<int>(std::ceil(std::sqrt(std::max(arg, 0.0))));
  } else {
    // rational spectrum: s(0)/s(c w0) = (1 + 4 pi^2 c^2 w0^2 delta^2 / 5)^3
    const double root = std::cbrt(cond_target) - 1.0;
    c = static_cast<int>(
        std::ceil(std::sqrt(5.0 * std::max(root, 0.0)) / (kTwoPi * spec.delta * grid.omega0)));
  }
  if (c < 1) {
    grid.degenerate_cutoff = true;
    c = 1;
  }
  grid.c = c;

  std::size_t total = 1;
  const std::size_t per_dim = static_cast<std::size_t>(2 * c + 1);
  for (int k = 0; k < spec.dim; ++k) {
    if (total > max_grid_size / per_dim + 1) {
      throw GridTooLarge("build_grid: (2c+1)^d = " + std::to_string(per_dim) + "^" +
                         std::to_string(spec.dim) + " exceeds cap " + std::to_string(max_grid_size));
    }
    total *= per_dim;
  }
  if (total > max_grid_size) {
    throw GridTooLarge("build_grid: grid size " + std::to_string(total) + " exceeds cap " +
                       std::to_string(max_grid_size));
  }

  // Half grid: one representative per +/- pair (first nonzero index positive).
  const int d = spec.dim;
  grid.freqs.resize(static_cast<Eigen::Index>(total), d);
  grid.kind.resize(total);
  grid.freqs.row(0).setZero();
  grid.kind[0] = 0;
  Eigen::Index row = 1;
  std::vector<int> m(d, -c);
  while (true) {
    int first_nonzero = 0;
    for (int k = 0; k < d; ++k) {
      if (m[k] != 0) {
        first_nonzero = m[k];
        break;
      }
    }
    if (first_nonzero > 0) {
      for (int k = 0; k < d; ++k) grid.freqs(row, k) = grid.omega0 * m[k];
      grid.kind[row] = 1;
      grid.freqs.row(row + 1) = grid.freqs.row(row);
      grid.kind[row + 1] = 2;
      row += 2;
    }
    int k = d - 1;
    while (k >= 0 && m[k] == c) {
      m[k] = -c;
      --k;
    }
    if (k < 0) break;
    ++m[k];
  }
  grid.freqs.conservativeResize(row, d);
  grid.kind.resize(row);
  return grid;
}

Vec prior_spectrum(const KernelSpec& spec, const FrequencyGrid& grid) {
  spec.validate();
  if (grid.dim != spec.dim) throw DimensionMismatch("prior_spectrum: grid dim != kernel dim");
  const int n = grid.n_features();
  Vec s(n);
  if (spec.family == KernelFamily::squared_exponential) {
    const double scale = std::pow(kTwoPi * spec.delta * spec.delta, 0.5 * spec.dim) * spec.rho;
    Vec args = -2.0 * M_PI * M_PI * spec.delta * spec.delta *
               grid.freqs.rowwise().squaredNorm();
    simd::exp_batch(args.data(), s.data(), n);
    s *= scale;
    return s;
  }
  if (!factorizable_spectrum(spec)) {
    throw std::invalid_argument(
        "prior_spectrum: radial Matern 5/2 has no tensor-product spectrum for d > 1; "
        "use the factorizable variant");
  }
  for (int j = 0; j < n; ++j) {
    double v = spec.rho;
    for (int k = 0; k < spec.dim; ++k) v *= matern52_density_1d(grid.freqs(j, k), spec.delta);
    s[j] = v;
  }
  return s;
}

Mat basis(const FrequencyGrid& grid, const Vec& x, DerivOrder order) {
  if (x.size() != grid.dim) throw DimensionMismatch("basis: point dim != grid dim");
  Mat out(grid.n_features(), block_size(order, grid.dim));
  basis_range(grid, x, order, 0, grid.n_features(), out);
  return out;
}

SpectralModel::SpectralModel(const KernelSpec& spec, FrequencyGrid grid)
    : spec_(spec), grid_(std::move(grid)) {
  sigma_diag_ = sigma_diag_for(spec_, grid_);
  const int p = grid_.n_features();
  precision_ = Mat::Zero(p, p);
  precision_.diagonal() = sigma_diag_.cwiseInverse();
  info_ = Vec::Zero(p);
  refresh();
}

void SpectralModel::refresh() {
  chol_.compute(precision_);
  if (chol_.info() != Eigen::Success) {
    throw FactorizationFailed("spectral precision Cholesky failed");
  }
  alpha_ = chol_.solve(info_);
}

void SpectralModel::accumulate(const PointObservation& pobs, const NoiseSpec& noise) {
  if (!(noise.base_var > 0.0)) {
    throw std::invalid_argument("spectral update requires noise variance > 0 (precision form)");
  }
  auto add_columns = [&](DerivOrder order, const Vec& values) {
    const double nv = noise.base_var * noise.per_order_scale[static_cast<int>(order)];
    if (!(nv > 0.0)) {
      throw std::invalid_argument("spectral update: per-order noise must stay positive");
    }
    const Mat b = basis(grid_, pobs.x, order);
    for (int c = 0; c < b.cols(); ++c) {
      precision_.selfadjointView<Eigen::Lower>().rankUpdate(b.col(c), 1.0 / nv);
      info_ += b.col(c) * (values[c] / nv);
    }
  };
  if (pobs.value) add_columns(DerivOrder::value, Vec::Constant(1, *pobs.value));
  if (pobs.grad) add_columns(DerivOrder::gradient, *pobs.grad);
  if (pobs.hess) add_columns(DerivOrder::hessian, *pobs.hess);
  ++n_obs_;
}

SpectralModel SpectralModel::updated(const PointObservation& pobs, const NoiseSpec& noise) const {
  SpectralModel next = *this;
  next.accumulate(pobs, noise);
  next.refresh();
  return next;
}

SpectralModel SpectralModel::updated_batch(const std::vector<PointObservation>& pobs,
                                           const NoiseSpec& noise) const {
  SpectralModel next = *this;
  for (const auto& p : pobs) next.accumulate(p, noise);
  next.refresh();
  return next;
}

void SpectralModel::predict(const Mat& xs, Vec& mean, Vec& var) const {
  if (xs.cols() != grid_.dim) throw DimensionMismatch("spectral predict: point dim != grid dim");
  const int m = static_cast<int>(xs.rows());
  mean.resize(m);
  var.resize(m);
  for (int i = 0; i < m; ++i) {
    const Mat b = basis(grid_, xs.row(i).transpose(), DerivOrder::value);
    mean[i] = simd::dot(b.data(), alpha_.data(), b.rows());
    const Vec half = chol_.matrixL().solve(b.col(0));
    var[i] = std::max(half.squaredNorm(), 0.0);
  }
}

double SpectralModel::posterior_quad(const Vec& v) const {
  const Vec half = chol_.matrixL().solve(v);
  return half.squaredNorm();
}

Vec SpectralModel::posterior_solve(const Vec& v) const { return chol_.solve(v); }

void spectral_predict(const SpectralModel& model, const Mat& xs, Vec& mean, Vec& var) {
  model.predict(xs, mean, var);
}

Mat reconstruct_kernel(const KernelSpec& spec, const FrequencyGrid& grid, const Mat& x_points,
                       const Orders& orders) {
  if (x_points.cols() != grid.dim) {
    throw DimensionMismatch("reconstruct_kernel: points dim != grid dim");
  }
  const int n = static_cast<int>(x_points.rows());
  const BlockLayout layout{n, grid.dim, orders};
  const int rows = layout.rows();
  const Vec sigma = sigma_diag_for(spec, grid);

  std::vector<DerivOrder> active{DerivOrder::value};
  if (orders.gradient) active.push_back(DerivOrder::gradient);
  if (orders.hessian) active.push_back(DerivOrder::hessian);

  Mat out = Mat::Zero(rows, rows);
  const int chunk = 65536;
  Mat b(std::min(chunk, grid.n_features()), rows);
  for (int j0 = 0; j0 < grid.n_features(); j0 += chunk) {
    const int len = std::min(chunk, grid.n_features() - j0);
    for (int i = 0; i < n; ++i) {
      const Vec xi = x_points.row(i).transpose();
      for (DerivOrder o : active) {
        const int c0 = layout.row(i, o, 0);
        basis_range(grid, xi, o, j0, j0 + len, b.block(0, c0, len, block_size(o, grid.dim)));
      }
    }
    for (int u = 0; u < rows; ++u) {
      for (int v = u; v < rows; ++v) {
        out(u, v) += simd::weighted_dot(b.col(u).data(), sigma.data() + j0, b.col(v).data(), len);
      }
    }
  }
  for (int u = 0; u < rows; ++u) {
    for (int v = 0; v < u; ++v) out(u, v) = out(v, u);
  }
  return out;
}

}  // namespace dgp
