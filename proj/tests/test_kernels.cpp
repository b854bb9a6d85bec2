#include <doctest.h>

#include <dgp/kernels.hpp>

#include "fd_oracle.hpp"

#include <cmath>
#include <random>

using namespace dgp;

namespace {

Vec vec1(double a) { return Vec::Constant(1, a); }

Vec random_point(std::mt19937_64& rng, int d, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = u(rng);
  return x;
}

double fd_step(int total_order, double delta) {
  return total_order <= 2 ? 1e-3 * delta : 1e-2 * delta;
}

double block_rel_error(const Mat& analytic, const Mat& fd) {
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - fd).cwiseAbs().maxCoeff() / scale;
}

const DerivOrder kOrders[3] = {DerivOrder::value, DerivOrder::gradient, DerivOrder::hessian};

}  // namespace

TEST_CASE("hess_vec index round trip") {
  for (int d = 1; d <= 5; ++d) {
    CHECK(hess_vec_size(d) == d * (d + 1) / 2);
    for (int idx = 0; idx < hess_vec_size(d); ++idx) {
      auto [i, j] = hess_vec_pair(d, idx);
      CHECK(i >= j);
      CHECK(hess_vec_index(d, i, j) == idx);
      CHECK(hess_vec_index(d, j, i) == idx);
    }
    // column-stacked lower triangle: (0,0),(1,0),...,(d-1,0),(1,1),...
    CHECK(hess_vec_pair(d, 0) == std::pair<int, int>{0, 0});
    if (d > 1) CHECK(hess_vec_pair(d, 1) == std::pair<int, int>{1, 0});
    std::mt19937_64 rng(7 + d);
    Mat h = Mat::Random(d, d);
    h = ((h + h.transpose()) / 2).eval();
    const Mat back = vec_to_hess(hess_to_vec(h), d);
    CHECK((back - h).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back - back.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("eval_kernel basic values") {
  KernelSpec se{KernelFamily::squared_exponential, 1.0, 1.0, 1};
  CHECK(eval_kernel(se, vec1(0.3), vec1(0.3)) == doctest::Approx(1.0));
  CHECK(eval_kernel(se, vec1(0.0), vec1(1.0)) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  KernelSpec m{KernelFamily::matern52, 2.5, 0.8, 1};
  CHECK(eval_kernel(m, vec1(0.1), vec1(0.1)) == doctest::Approx(2.5));
  // closed form at r = 0.5
  const double br = std::sqrt(5.0) * 0.5 / 0.8;
  CHECK(eval_kernel(m, vec1(0.0), vec1(0.5)) ==
        doctest::Approx(2.5 * (1 + br + br * br / 3) * std::exp(-br)).epsilon(1e-14));

  // factorizable d=2 is the product of 1D Matern values per dimension
  KernelSpec f2{KernelFamily::matern52_factorizable, 1.7, 0.9, 2};
  KernelSpec f1{KernelFamily::matern52, 1.0, 0.9, 1};
  Vec x(2), y(2);
  x << 0.2, -0.4;
  y << -0.3, 0.5;
  const double expected =
      1.7 * eval_kernel(f1, vec1(x[0]), vec1(y[0])) * eval_kernel(f1, vec1(x[1]), vec1(y[1]));
  CHECK(eval_kernel(f2, x, y) == doctest::Approx(expected).epsilon(1e-14));

  // factorizable with d=1 coincides with matern52
  KernelSpec fa{KernelFamily::matern52_factorizable, 1.3, 0.7, 1};
  KernelSpec ma{KernelFamily::matern52, 1.3, 0.7, 1};
  CHECK(eval_kernel(fa, vec1(0.3), vec1(-0.6)) ==
        doctest::Approx(eval_kernel(ma, vec1(0.3), vec1(-0.6))).epsilon(1e-14));
}

TEST_CASE("eval_kernel errors") {
  KernelSpec se{KernelFamily::squared_exponential, 1.0, 1.0, 2};
  CHECK_THROWS_AS(eval_kernel(se, vec1(0.0), Vec::Zero(2)), DimensionMismatch);
  Vec bad(2);
  bad << 0.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(eval_kernel(se, bad, Vec::Zero(2)), std::invalid_argument);
  KernelSpec neg{KernelFamily::squared_exponential, -1.0, 1.0, 1};
  CHECK_THROWS_AS(eval_kernel(neg, vec1(0.0), vec1(0.0)), std::invalid_argument);
}

TEST_CASE("SE cross blocks: pinned values") {
  KernelSpec se{KernelFamily::squared_exponential, 1.0, 1.0, 1};
  // odd derivative of even function at zero separation
  CHECK(eval_cross_block(se, vec1(0.4), vec1(0.4), DerivOrder::value, DerivOrder::gradient)(0, 0) ==
        doctest::Approx(0.0));
  // d/dx' of k at x=0, x'=1: exp(-0.5) * (x - x') / delta^2
  CHECK(eval_cross_block(se, vec1(0.0), vec1(1.0), DerivOrder::value, DerivOrder::gradient)(0, 0) ==
        doctest::Approx(-std::exp(-0.5)).epsilon(1e-12));
  // grad-grad at zero separation: 1/delta^2
  CHECK(eval_cross_block(se, vec1(0.2), vec1(0.2), DerivOrder::gradient,
                         DerivOrder::gradient)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("cross blocks match the finite-difference oracle") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> udelta(0.5, 1.2);
  for (int d = 1; d <= 3; ++d) {
    for (int rep = 0; rep < 6; ++rep) {
      const double delta = udelta(rng);
      const double rho = 0.5 + rep * 0.3;

      KernelSpec se{KernelFamily::squared_exponential, rho, delta, d};
      auto kse = [&](const Vec& a, const Vec& b) { return eval_kernel(se, a, b); };
      const Vec x = random_point(rng, d);
      const Vec x2 = random_point(rng, d);
      for (DerivOrder ro : kOrders) {
        for (DerivOrder co : kOrders) {
          const int total = static_cast<int>(ro) + static_cast<int>(co);
          const Mat analytic = eval_cross_block(se, x, x2, ro, co);
          const Mat approx = fd::cross_block(kse, x, x2, ro, co, d, fd_step(total, delta));
          CHECK(block_rel_error(analytic, approx) <= 1e-5);
        }
      }

      for (KernelFamily fam : {KernelFamily::matern52, KernelFamily::matern52_factorizable}) {
        KernelSpec mk{fam, rho, delta, d};
        auto kmat = [&](const Vec& a, const Vec& b) { return eval_kernel(mk, a, b); };
        for (DerivOrder ro : {DerivOrder::value, DerivOrder::gradient}) {
          for (DerivOrder co : {DerivOrder::value, DerivOrder::gradient}) {
            const int total = static_cast<int>(ro) + static_cast<int>(co);
            const Mat analytic = eval_cross_block(mk, x, x2, ro, co);
            const Mat approx = fd::cross_block(kmat, x, x2, ro, co, d, fd_step(total, delta));
            CHECK(block_rel_error(analytic, approx) <= 1e-5);
          }
        }
      }
    }
  }
}

TEST_CASE("spec h=1e-5 finite-difference check holds through second order") {
  std::mt19937_64 rng(43);
  for (int d = 1; d <= 3; ++d) {
    KernelSpec se{KernelFamily::squared_exponential, 1.0, 0.8, d};
    auto kse = [&](const Vec& a, const Vec& b) { return eval_kernel(se, a, b); };
    for (int rep = 0; rep < 4; ++rep) {
      const Vec x = random_point(rng, d);
      const Vec x2 = random_point(rng, d);
      for (auto [ro, co] : std::vector<std::pair<DerivOrder, DerivOrder>>{
               {DerivOrder::value, DerivOrder::gradient},
               {DerivOrder::gradient, DerivOrder::value},
               {DerivOrder::gradient, DerivOrder::gradient},
               {DerivOrder::value, DerivOrder::hessian}}) {
        const Mat analytic = eval_cross_block(se, x, x2, ro, co);
        const Mat approx = fd::cross_block(kse, x, x2, ro, co, d, 1e-5, fd::Scheme::central2);
        CHECK(block_rel_error(analytic, approx) <= 1e-5);
      }
    }
  }
}

TEST_CASE("cross block transpose symmetry") {
  std::mt19937_64 rng(44);
  for (int d : {1, 2, 3}) {
    const Vec x = random_point(rng, d);
    const Vec x2 = random_point(rng, d);
    KernelSpec se{KernelFamily::squared_exponential, 1.4, 0.9, d};
    for (DerivOrder ro : kOrders) {
      for (DerivOrder co : kOrders) {
        const Mat a = eval_cross_block(se, x, x2, ro, co);
        const Mat b = eval_cross_block(se, x2, x, co, ro);
        CHECK((a - b.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
    for (KernelFamily fam : {KernelFamily::matern52, KernelFamily::matern52_factorizable}) {
      KernelSpec mk{fam, 1.4, 0.9, d};
      for (DerivOrder ro : {DerivOrder::value, DerivOrder::gradient}) {
        for (DerivOrder co : {DerivOrder::value, DerivOrder::gradient}) {
          const Mat a = eval_cross_block(mk, x, x2, ro, co);
          const Mat b = eval_cross_block(mk, x2, x, co, ro);
          CHECK((a - b.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("matern rejects Hessian blocks") {
  KernelSpec mk{KernelFamily::matern52, 1.0, 1.0, 2};
  CHECK_THROWS_AS(eval_cross_block(mk, Vec::Zero(2), Vec::Ones(2), DerivOrder::value,
                                   DerivOrder::hessian),
                  UnsupportedDerivativeOrder);
  CHECK_THROWS_AS(build_joint_gram(mk, Mat::Random(3, 2), Orders{true, true}, NoiseSpec{}),
                  UnsupportedDerivativeOrder);
}

TEST_CASE("build_joint_gram basics") {
  KernelSpec se1{KernelFamily::squared_exponential, 1.0, 1.0, 1};
  const Mat g1 = build_joint_gram(se1, Mat::Zero(1, 1), Orders{}, NoiseSpec{});
  CHECK(g1.rows() == 1);
  CHECK(g1(0, 0) == doctest::Approx(1.0));

  // N=2 values+gradients equals the blockwise assembly from eval_cross_block
  Mat x(2, 1);
  x << 0.0, 0.7;
  const Orders vg{true, false};
  const Mat g = build_joint_gram(se1, x, vg, NoiseSpec{});
  CHECK(g.rows() == 4);
  const BlockLayout layout{2, 1, vg};
  for (int p = 0; p < 2; ++p) {
    for (int q = 0; q < 2; ++q) {
      const Vec xp = x.row(p).transpose(), xq = x.row(q).transpose();
      CHECK(g(layout.row(p, DerivOrder::value, 0), layout.row(q, DerivOrder::value, 0)) ==
            doctest::Approx(eval_kernel(se1, xp, xq)).epsilon(1e-12));
      CHECK(g(layout.row(p, DerivOrder::value, 0), layout.row(q, DerivOrder::gradient, 0)) ==
            doctest::Approx(eval_cross_block(se1, xp, xq, DerivOrder::value,
                                             DerivOrder::gradient)(0, 0))
                .epsilon(1e-12));
      CHECK(g(layout.row(p, DerivOrder::gradient, 0), layout.row(q, DerivOrder::gradient, 0)) ==
            doctest::Approx(eval_cross_block(se1, xp, xq, DerivOrder::gradient,
                                             DerivOrder::gradient)(0, 0))
                .epsilon(1e-12));
    }
  }

  // d=2, N=3, all orders: 18x18 and symmetric
  std::mt19937_64 rng(45);
  KernelSpec se2{KernelFamily::squared_exponential, 1.0, 0.9, 2};
  Mat pts(3, 2);
  for (int i = 0; i < 3; ++i) pts.row(i) = random_point(rng, 2).transpose();
  const Mat big = build_joint_gram(se2, pts, Orders{true, true}, NoiseSpec{});
  CHECK(big.rows() == 18);
  CHECK((big - big.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("joint gram with noise is positive definite") {
  std::mt19937_64 rng(46);
  for (int rep = 0; rep < 5; ++rep) {
    const int d = 1 + rep % 3;
    const int n = 3 + rep;
    KernelSpec se{KernelFamily::squared_exponential, 1.0, 0.6, d};
    Mat pts(n, d);
    for (int i = 0; i < n; ++i) pts.row(i) = random_point(rng, d).transpose();
    const Mat g = build_joint_gram(se, pts, Orders{true, true}, NoiseSpec::uniform(1e-8));
    Eigen::LLT<Mat> llt(g);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("SE block scaling law") {
  // delta -> s delta and x -> s x scales each block by s^-(total derivative order)
  std::mt19937_64 rng(47);
  const int d = 2;
  const double s = 1.7;
  KernelSpec base{KernelFamily::squared_exponential, 1.3, 0.8, d};
  KernelSpec scaled = base;
  scaled.delta = s * base.delta;
  const Vec x = random_point(rng, d), x2 = random_point(rng, d);
  for (DerivOrder ro : kOrders) {
    for (DerivOrder co : kOrders) {
      const int total = static_cast<int>(ro) + static_cast<int>(co);
      const Mat a = eval_cross_block(base, x, x2, ro, co);
      const Mat b = eval_cross_block(scaled, s * x, s * x2, ro, co);
      const Mat rescaled = b * std::pow(s, total);
      CHECK((a - rescaled).cwiseAbs().maxCoeff() <= 1e-10 * a.cwiseAbs().maxCoeff() + 1e-12);
    }
  }
}
