#include "dgp/kernels.hpp"

#include "dgp/simd.hpp"

#include <cmath>
#include <vector>

namespace dgp {

namespace {

void check_point(const KernelSpec& spec, const Vec& x, const char* name) {
  if (x.size() != spec.dim) {
    throw DimensionMismatch(std::string(name) + ": expected dim " + std::to_string(spec.dim) +
                            ", got " + std::to_string(x.size()));
  }
  if (!x.allFinite()) {
    throw std::invalid_argument(std::string(name) + ": non-finite input");
  }
}

// --- squared exponential ----------------------------------------------------
//
// With tau = x - x2, a = 1/delta^2 and E = rho*exp(-|tau|^2 a / 2), the mixed
// partials of E w.r.t. tau components follow the Gaussian product rule:
//   d1:  -a t0 E
//   d2:  ( a^2 t0 t1 - a k01) E
//   d3:  (-a^3 t0 t1 t2 + a^2 (t0 k12 + t1 k02 + t2 k01)) E
//   d4:  ( a^4 t0 t1 t2 t3
//          - a^3 (t0 t1 k23 + t0 t2 k13 + t0 t3 k12 + t1 t2 k03 + t1 t3 k02 + t2 t3 k01)
//          + a^2 (k01 k23 + k02 k13 + k03 k12)) E
// where tk = tau[idx[k]] and kij = [idx_i == idx_j]. A derivative taken w.r.t.
// an x2 component flips sign once, so a block with col order m carries (-1)^m.

double se_tau_partial(double a, const Vec& tau, const int* idx, int m, double base) {
  switch (m) {
    case 0:
      return base;
    case 1:
      return -a * tau[idx[0]] * base;
    case 2: {
      const double t0 = tau[idx[0]], t1 = tau[idx[1]];
      const double k01 = idx[0] == idx[1] ? 1.0 : 0.0;
      return (a * a * t0 * t1 - a * k01) * base;
    }
    case 3: {
      const double t0 = tau[idx[0]], t1 = tau[idx[1]], t2 = tau[idx[2]];
      const double k01 = idx[0] == idx[1] ? 1.0 : 0.0;
      const double k02 = idx[0] == idx[2] ? 1.0 : 0.0;
      const double k12 = idx[1] == idx[2] ? 1.0 : 0.0;
      return (-a * a * a * t0 * t1 * t2 + a * a * (t0 * k12 + t1 * k02 + t2 * k01)) * base;
    }
    default: {
      const double t0 = tau[idx[0]], t1 = tau[idx[1]], t2 = tau[idx[2]], t3 = tau[idx[3]];
      const double k01 = idx[0] == idx[1] ? 1.0 : 0.0;
      const double k02 = idx[0] == idx[2] ? 1.0 : 0.0;
      const double k03 = idx[0] == idx[3] ? 1.0 : 0.0;
      const double k12 = idx[1] == idx[2] ? 1.0 : 0.0;
      const double k13 = idx[1] == idx[3] ? 1.0 : 0.0;
      const double k23 = idx[2] == idx[3] ? 1.0 : 0.0;
      const double a2 = a * a;
      return (a2 * a2 * t0 * t1 * t2 * t3 -
              a2 * a * (t0 * t1 * k23 + t0 * t2 * k13 + t0 * t3 * k12 + t1 * t2 * k03 +
                        t1 * t3 * k02 + t2 * t3 * k01) +
              a2 * (k01 * k23 + k02 * k13 + k03 * k12)) *
             base;
    }
  }
}

int order_indices(DerivOrder order, int dim, int comp, int* out) {
  switch (order) {
    case DerivOrder::value:
      return 0;
    case DerivOrder::gradient:
      out[0] = comp;
      return 1;
    default: {
      auto [i, j] = hess_vec_pair(dim, comp);
      out[0] = i;
      out[1] = j;
      return 2;
    }
  }
}

void se_fill_block(const KernelSpec& spec, const Vec& tau, double base, DerivOrder row,
                   DerivOrder col, Eigen::Ref<Mat> out) {
  const double a = 1.0 / (spec.delta * spec.delta);
  const int d = spec.dim;
  const int nr = block_size(row, d);
  const int nc = block_size(col, d);
  const double sign = (static_cast<int>(col) % 2 == 0) ? 1.0 : -1.0;
  int idx[4];
  for (int i = 0; i < nr; ++i) {
    const int m_row = order_indices(row, d, i, idx);
    for (int j = 0; j < nc; ++j) {
      const int m_col = order_indices(col, d, j, idx + m_row);
      out(i, j) = sign * se_tau_partial(a, tau, idx, m_row + m_col, base);
    }
  }
}

// --- Matern 5/2 (radial) ----------------------------------------------------
//
// k(tau) = rho (1 + b r + b^2 r^2 / 3) e^{-b r},  b = sqrt(5)/delta, r = |tau|.
// dk/dtau     = -(rho b^2/3) (1 + b r) e^{-b r} tau
// d2k/dtau^2  = -(rho b^2/3) e^{-b r} [ (1 + b r) I - b^2 tau tau^T ]
// Valid through gradient-gradient blocks; Hessian blocks are rejected.

void matern_fill_block(const KernelSpec& spec, const Vec& tau, double ebr, DerivOrder row,
                       DerivOrder col, Eigen::Ref<Mat> out) {
  const double b = std::sqrt(5.0) / spec.delta;
  const double r = tau.norm();
  const double br = b * r;
  const double c = spec.rho * (b * b / 3.0) * ebr;
  if (row == DerivOrder::value && col == DerivOrder::value) {
    out(0, 0) = spec.rho * (1.0 + br + br * br / 3.0) * ebr;
    return;
  }
  if (row == DerivOrder::value) {  // (V,G): col derivative flips the sign once
    for (int j = 0; j < spec.dim; ++j) out(0, j) = c * (1.0 + br) * tau[j];
    return;
  }
  if (col == DerivOrder::value) {  // (G,V)
    for (int i = 0; i < spec.dim; ++i) out(i, 0) = -c * (1.0 + br) * tau[i];
    return;
  }
  for (int i = 0; i < spec.dim; ++i) {  // (G,G) = -d2k/dtau^2
    for (int j = 0; j < spec.dim; ++j) {
      out(i, j) = c * ((i == j ? 1.0 + br : 0.0) - b * b * tau[i] * tau[j]);
    }
  }
}

// --- factorizable Matern 5/2 ------------------------------------------------
//
// k(tau) = rho prod_d m(tau_d) with the 1D Matern 5/2 factor
//   m(t)   = (1 + b|t| + b^2 t^2/3) e^{-b|t|}
//   m'(t)  = -(b^2/3) t (1 + b|t|) e^{-b|t|}
//   m''(t) = -(b^2/3) [ (1 + b|t|) - b^2 t^2 ] e^{-b|t|}

struct Factor1d {
  double m, dm, d2m;
};

Factor1d matern1d(double b, double t, double ebt) {
  const double at = std::abs(t);
  const double bt = b * at;
  Factor1d f;
  f.m = (1.0 + bt + bt * bt / 3.0) * ebt;
  f.dm = -(b * b / 3.0) * t * (1.0 + bt) * ebt;
  f.d2m = -(b * b / 3.0) * ((1.0 + bt) - b * b * t * t) * ebt;
  return f;
}

void factorizable_fill_block(const KernelSpec& spec, const Vec& tau, const double* dim_exp,
                             DerivOrder row, DerivOrder col, Eigen::Ref<Mat> out) {
  const double b = std::sqrt(5.0) / spec.delta;
  const int d = spec.dim;
  std::vector<Factor1d> f(d);
  double prod_all = spec.rho;
  for (int k = 0; k < d; ++k) {
    f[k] = matern1d(b, tau[k], dim_exp[k]);
    prod_all *= f[k].m;
  }
  auto prod_except = [&](int skip) {
    double p = spec.rho;
    for (int k = 0; k < d; ++k)
      if (k != skip) p *= f[k].m;
    return p;
  };
  if (row == DerivOrder::value && col == DerivOrder::value) {
    out(0, 0) = prod_all;
    return;
  }
  if (row == DerivOrder::value) {
    for (int j = 0; j < d; ++j) out(0, j) = -f[j].dm * prod_except(j);
    return;
  }
  if (col == DerivOrder::value) {
    for (int i = 0; i < d; ++i) out(i, 0) = f[i].dm * prod_except(i);
    return;
  }
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i == j) {
        out(i, j) = -f[i].d2m * prod_except(i);
      } else {
        double p = spec.rho;
        for (int k = 0; k < d; ++k)
          if (k != i && k != j) p *= f[k].m;
        out(i, j) = -f[i].dm * f[j].dm * p;
      }
    }
  }
}

void check_orders_supported(const KernelSpec& spec, DerivOrder row, DerivOrder col) {
  if (spec.family == KernelFamily::squared_exponential) return;
  if (row == DerivOrder::hessian || col == DerivOrder::hessian) {
    throw UnsupportedDerivativeOrder("Matern 5/2 supports derivative blocks only through "
                                     "gradient-gradient");
  }
}

void fill_block(const KernelSpec& spec, const Vec& tau, double base, const double* dim_exp,
                DerivOrder row, DerivOrder col, Eigen::Ref<Mat> out) {
  switch (spec.family) {
    case KernelFamily::squared_exponential:
      se_fill_block(spec, tau, base, row, col, out);
      break;
    case KernelFamily::matern52:
      matern_fill_block(spec, tau, base, row, col, out);
      break;
    case KernelFamily::matern52_factorizable:
      factorizable_fill_block(spec, tau, dim_exp, row, col, out);
      break;
  }
}

}  // namespace

void KernelSpec::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw std::invalid_argument("KernelSpec: rho must be > 0");
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("KernelSpec: delta must be > 0");
  }
  if (dim < 1) throw std::invalid_argument("KernelSpec: dim must be >= 1");
}

int block_size(DerivOrder order, int dim) {
  switch (order) {
    case DerivOrder::value:
      return 1;
    case DerivOrder::gradient:
      return dim;
    default:
      return dim * (dim + 1) / 2;
  }
}

int hess_vec_size(int dim) { return dim * (dim + 1) / 2; }

int hess_vec_index(int dim, int i, int j) {
  if (i < j) std::swap(i, j);  // lower triangle
  return j * dim - j * (j - 1) / 2 + (i - j);
}

std::pair<int, int> hess_vec_pair(int dim, int idx) {
  int j = 0;
  int col_len = dim;
  while (idx >= col_len) {
    idx -= col_len;
    ++j;
    --col_len;
  }
  return {j + idx, j};
}

Vec hess_to_vec(const Mat& h) {
  const int d = static_cast<int>(h.rows());
  Vec v(hess_vec_size(d));
  for (int idx = 0; idx < v.size(); ++idx) {
    auto [i, j] = hess_vec_pair(d, idx);
    v[idx] = h(i, j);
  }
  return v;
}

Mat vec_to_hess(const Vec& v, int dim) {
  Mat h(dim, dim);
  for (int idx = 0; idx < v.size(); ++idx) {
    auto [i, j] = hess_vec_pair(dim, idx);
    h(i, j) = v[idx];
    h(j, i) = v[idx];
  }
  return h;
}

int BlockLayout::rows() const {
  int r = n;
  if (orders.gradient) r += n * dim;
  if (orders.hessian) r += n * hess_vec_size(dim);
  return r;
}

int BlockLayout::offset(DerivOrder order) const {
  switch (order) {
    case DerivOrder::value:
      return 0;
    case DerivOrder::gradient:
      return n;
    default:
      return n + (orders.gradient ? n * dim : 0);
  }
}

int BlockLayout::row(int obs, DerivOrder order, int comp) const {
  return offset(order) + obs * block_size(order, dim) + comp;
}

double eval_kernel(const KernelSpec& spec, const Vec& x, const Vec& x2) {
  spec.validate();
  check_point(spec, x, "x");
  check_point(spec, x2, "x2");
  const Vec tau = x - x2;
  switch (spec.family) {
    case KernelFamily::squared_exponential:
      return spec.rho * std::exp(-tau.squaredNorm() / (2.0 * spec.delta * spec.delta));
    case KernelFamily::matern52: {
      const double br = std::sqrt(5.0) * tau.norm() / spec.delta;
      return spec.rho * (1.0 + br + br * br / 3.0) * std::exp(-br);
    }
    default: {
      const double b = std::sqrt(5.0) / spec.delta;
      double prod = spec.rho;
      for (int k = 0; k < spec.dim; ++k) {
        const double bt = b * std::abs(tau[k]);
        prod *= (1.0 + bt + bt * bt / 3.0) * std::exp(-bt);
      }
      return prod;
    }
  }
}

Mat eval_cross_block(const KernelSpec& spec, const Vec& x, const Vec& x2, DerivOrder row,
                     DerivOrder col) {
  spec.validate();
  check_point(spec, x, "x");
  check_point(spec, x2, "x2");
  check_orders_supported(spec, row, col);
  const Vec tau = x - x2;
  Mat out(block_size(row, spec.dim), block_size(col, spec.dim));

  double base = 0.0;
  std::vector<double> dim_exp;
  const double b = std::sqrt(5.0) / spec.delta;
  switch (spec.family) {
    case KernelFamily::squared_exponential:
      base = spec.rho * std::exp(-tau.squaredNorm() / (2.0 * spec.delta * spec.delta));
      break;
    case KernelFamily::matern52:
      base = std::exp(-b * tau.norm());
      break;
    case KernelFamily::matern52_factorizable:
      dim_exp.resize(spec.dim);
      for (int k = 0; k < spec.dim; ++k) dim_exp[k] = std::exp(-b * std::abs(tau[k]));
      break;
  }
  fill_block(spec, tau, base, dim_exp.data(), row, col, out);
  return out;
}

Mat build_joint_gram(const KernelSpec& spec, const Mat& x_points, const Orders& orders,
                     const NoiseSpec& noise) {
  spec.validate();
  const int n = static_cast<int>(x_points.rows());
  if (n < 1) throw std::invalid_argument("build_joint_gram: need at least one point");
  if (x_points.cols() != spec.dim) {
    throw DimensionMismatch("build_joint_gram: points have wrong dimension");
  }
  if (!x_points.allFinite()) throw std::invalid_argument("build_joint_gram: non-finite input");
  if (spec.family != KernelFamily::squared_exponential && orders.hessian) {
    throw UnsupportedDerivativeOrder("Matern 5/2 joint Gram cannot include Hessian blocks");
  }

  const BlockLayout layout{n, spec.dim, orders};
  const int total = layout.rows();
  Mat gram = Mat::Zero(total, total);

  // Pair list over the upper triangle (p <= q).
  const int n_pairs = n * (n + 1) / 2;
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(n_pairs);
  for (int p = 0; p < n; ++p)
    for (int q = p; q < n; ++q) pairs.emplace_back(p, q);

  // Batch the exponentials for all pairs through the simd lane.
  std::vector<double> base(n_pairs, 0.0);
  Mat dim_exp;  // n_pairs x dim, factorizable only
  {
    const double b = std::sqrt(5.0) / spec.delta;
    if (spec.family == KernelFamily::matern52_factorizable) {
      Mat args(n_pairs, spec.dim);
      for (int k = 0; k < n_pairs; ++k) {
        const auto [p, q] = pairs[k];
        args.row(k) = -b * (x_points.row(p) - x_points.row(q)).cwiseAbs();
      }
      dim_exp.resize(n_pairs, spec.dim);
      simd::exp_batch(args.data(), dim_exp.data(), args.size());
    } else {
      std::vector<double> args(n_pairs);
      for (int k = 0; k < n_pairs; ++k) {
        const auto [p, q] = pairs[k];
        const double sq = (x_points.row(p) - x_points.row(q)).squaredNorm();
        args[k] = spec.family == KernelFamily::squared_exponential
                      ? -sq / (2.0 * spec.delta * spec.delta)
                      : -b * std::sqrt(sq);
      }
      simd::exp_batch(args.data(), base.data(), args.size());
      if (spec.family == KernelFamily::squared_exponential) {
        for (double& v : base) v *= spec.rho;
      }
    }
  }

  std::vector<DerivOrder> active{DerivOrder::value};
  if (orders.gradient) active.push_back(DerivOrder::gradient);
  if (orders.hessian) active.push_back(DerivOrder::hessian);

  Vec dim_exp_row;
  for (int k = 0; k < n_pairs; ++k) {
    const auto [p, q] = pairs[k];
    const Vec tau = (x_points.row(p) - x_points.row(q)).transpose();
    const double* de = nullptr;
    if (spec.family == KernelFamily::matern52_factorizable) {
      dim_exp_row = dim_exp.row(k);
      de = dim_exp_row.data();
    }
    for (DerivOrder ro : active) {
      for (DerivOrder co : active) {
        const int nr = block_size(ro, spec.dim);
        const int nc = block_size(co, spec.dim);
        const int r0 = layout.row(p, ro, 0);
        const int c0 = layout.row(q, co, 0);
        if (p == q && static_cast<int>(co) < static_cast<int>(ro)) continue;
        Mat blockm(nr, nc);
        fill_block(spec, tau, base[k], de, ro, co, blockm);
        gram.block(r0, c0, nr, nc) = blockm;
        if (p != q || ro != co) {
          gram.block(c0, r0, nc, nr) = blockm.transpose();
        }
      }
    }
  }

  // Per-order noise on the diagonal.
  for (DerivOrder o : active) {
    const double v = noise.base_var * noise.per_order_scale[static_cast<int>(o)];
    if (v == 0.0) continue;
    const int r0 = layout.offset(o);
    const int len = n * block_size(o, spec.dim);
    gram.diagonal().segment(r0, len).array() += v;
  }
  return gram;
}

}  // namespace dgp
