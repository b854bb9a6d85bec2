#pragma once

// Finite-difference oracle for mixed partial derivatives. Kept independent of
// the analytic derivative code it is used to check: everything here works by
// repeated evaluation of a black-box function.

#include <dgp/kernels.hpp>

#include <functional>
#include <utility>
#include <vector>

namespace fd {

enum class Scheme { central2, central4 };

struct Tap {
  double offset;  // in units of h
  double weight;  // includes the 1/h factor
};

inline std::vector<Tap> first_derivative_taps(Scheme scheme, double h) {
  if (scheme == Scheme::central2) {
    return {{1.0, 0.5 / h}, {-1.0, -0.5 / h}};
  }
  return {{2.0, -1.0 / (12.0 * h)},
          {1.0, 8.0 / (12.0 * h)},
          {-1.0, -8.0 / (12.0 * h)},
          {-2.0, 1.0 / (12.0 * h)}};
}

// One derivative direction: which argument (0 = x, 1 = x2) and which component.
struct Direction {
  int arg;
  int comp;
};

// Tensor-product composition of 1D first-derivative stencils, one per
// requested direction. Repeated directions give higher-order partials.
template <class F>
double mixed_partial(F&& f, dgp::Vec x, dgp::Vec x2, const std::vector<Direction>& dirs, double h,
                     Scheme scheme = Scheme::central4) {
  const auto taps = first_derivative_taps(scheme, h);
  std::function<double(std::size_t)> recurse = [&](std::size_t level) -> double {
    if (level == dirs.size()) return f(x, x2);
    const auto& d = dirs[level];
    double& slot = d.arg == 0 ? x[d.comp] : x2[d.comp];
    const double saved = slot;
    double acc = 0.0;
    for (const Tap& t : taps) {
      slot = saved + t.offset * h;
      acc += t.weight * recurse(level + 1);
    }
    slot = saved;
    return acc;
  };
  return recurse(0);
}

inline std::vector<Direction> block_directions(dgp::DerivOrder order, int arg, int dim, int comp) {
  using dgp::DerivOrder;
  switch (order) {
    case DerivOrder::value:
      return {};
    case DerivOrder::gradient:
      return {{arg, comp}};
    default: {
      auto [i, j] = dgp::hess_vec_pair(dim, comp);
      return {{arg, i}, {arg, j}};
    }
  }
}

// FD approximation of a full cross-covariance block from kernel evaluations.
template <class F>
dgp::Mat cross_block(F&& kernel, const dgp::Vec& x, const dgp::Vec& x2, dgp::DerivOrder row,
                     dgp::DerivOrder col, int dim, double h, Scheme scheme = Scheme::central4) {
  dgp::Mat out(dgp::block_size(row, dim), dgp::block_size(col, dim));
  for (int i = 0; i < out.rows(); ++i) {
    for (int j = 0; j < out.cols(); ++j) {
      auto dirs = block_directions(row, 0, dim, i);
      const auto cdirs = block_directions(col, 1, dim, j);
      dirs.insert(dirs.end(), cdirs.begin(), cdirs.end());
      out(i, j) = mixed_partial(kernel, x, x2, dirs, h, scheme);
    }
  }
  return out;
}

// Gradient/Hessian of a single-argument function.
template <class F>
dgp::Vec gradient(F&& f, const dgp::Vec& x, double h, Scheme scheme = Scheme::central4) {
  auto wrap = [&](const dgp::Vec& a, const dgp::Vec&) { return f(a); };
  const dgp::Vec dummy = dgp::Vec::Zero(0);
  dgp::Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    g[i] = mixed_partial(wrap, x, dummy, {{0, i}}, h, scheme);
  }
  return g;
}

template <class F>
dgp::Mat hessian(F&& f, const dgp::Vec& x, double h, Scheme scheme = Scheme::central4) {
  auto wrap = [&](const dgp::Vec& a, const dgp::Vec&) { return f(a); };
  const dgp::Vec dummy = dgp::Vec::Zero(0);
  dgp::Mat out(x.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    for (int j = 0; j <= i; ++j) {
      out(i, j) = mixed_partial(wrap, x, dummy, {{0, i}, {0, j}}, h, scheme);
      out(j, i) = out(i, j);
    }
  }
  return out;
}

}  // namespace fd
