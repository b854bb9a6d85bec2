#include "dgp/objectives.hpp"

#include "dgp/simd.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace dgp {

namespace {

Mat box(std::initializer_list<std::pair<double, double>> lims) {
  Mat b(static_cast<Eigen::Index>(lims.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [lo, hi] : lims) {
    b(i, 0) = lo;
    b(i, 1) = hi;
    ++i;
  }
  return b;
}

void check_dim(const Vec& x, int dim, const char* name) {
  if (x.size() != dim) {
    throw DimensionMismatch(std::string(name) + ": expected dim " + std::to_string(dim));
  }
}

}  // namespace

double Objective::distance_to_optimum(const Vec& x) const {
  if (optima.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < optima.rows(); ++i) {
    best = std::min(best, (optima.row(i).transpose() - x).norm());
  }
  return best;
}

Objective rosenbrock(int dim) {
  if (dim < 2) throw std::invalid_argument("rosenbrock needs dim >= 2");
  Objective obj;
  obj.name = "rosenbrock" + std::to_string(dim);
  obj.dim = dim;
  obj.bounds = Mat(dim, 2);
  obj.bounds.col(0).setConstant(-2.0);
  obj.bounds.col(1).setConstant(2.0);
  obj.minimize = true;
  obj.best_value = 0.0;
  obj.optima = Mat::Ones(1, dim);
  obj.eval = [dim](const Vec& x, Vec* grad, Mat* hess) {
    check_dim(x, dim, "rosenbrock");
    double f = 0.0;
    if (grad) grad->setZero(dim);
    if (hess) hess->setZero(dim, dim);
    for (int i = 0; i + 1 < dim; ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = x[i] - 1.0;
      f += 100.0 * a * a + b * b;
      if (grad) {
        (*grad)[i] += -400.0 * x[i] * a + 2.0 * b;
        (*grad)[i + 1] += 200.0 * a;
      }
      if (hess) {
        (*hess)(i, i) += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
        (*hess)(i + 1, i + 1) += 200.0;
        (*hess)(i, i + 1) += -400.0 * x[i];
        (*hess)(i + 1, i) += -400.0 * x[i];
      }
    }
    return f;
  };
  return obj;
}

Objective branin() {
  Objective obj;
  obj.name = "branin";
  obj.dim = 2;
  obj.bounds = box({{-5.0, 10.0}, {0.0, 15.0}});
  obj.minimize = true;
  obj.best_value = 10.0 / (8.0 * M_PI);
  obj.optima = Mat(3, 2);
  obj.optima << M_PI, 2.25, -M_PI, 12.25, 3.0 * M_PI, 2.25;
  obj.eval = [](const Vec& x, Vec* grad, Mat* hess) {
    check_dim(x, 2, "branin");
    const double b = 5.0 / (4.0 * M_PI * M_PI);
    const double c = 5.0 / M_PI;
    const double t = 1.0 / (8.0 * M_PI);
    const double inner = x[1] - b * x[0] * x[0] + c * x[0] - 6.0;
    const double di = -2.0 * b * x[0] + c;
    const double f = inner * inner + 10.0 * (1.0 - t) * std::cos(x[0]) + 10.0;
    if (grad) {
      grad->resize(2);
      (*grad)[0] = 2.0 * inner * di - 10.0 * (1.0 - t) * std::sin(x[0]);
      (*grad)[1] = 2.0 * inner;
    }
    if (hess) {
      hess->resize(2, 2);
      (*hess)(0, 0) = 2.0 * di * di - 4.0 * b * inner - 10.0 * (1.0 - t) * std::cos(x[0]);
      (*hess)(0, 1) = 2.0 * di;
      (*hess)(1, 0) = 2.0 * di;
      (*hess)(1, 1) = 2.0;
    }
    return f;
  };
  return obj;
}

namespace {

// sum_{i=1..5} i cos((i+1)u + i) and its first two derivatives
void shubert_1d(double u, double& s, double& ds, double& d2s) {
  s = ds = d2s = 0.0;
  for (int i = 1; i <= 5; ++i) {
    const double arg = (i + 1.0) * u + i;
    s += i * std::cos(arg);
    ds += -i * (i + 1.0) * std::sin(arg);
    d2s += -i * (i + 1.0) * (i + 1.0) * std::cos(arg);
  }
}

}  // namespace

Objective shubert() {
  Objective obj;
  obj.name = "shubert";
  obj.dim = 2;
  obj.bounds = box({{-10.0, 10.0}, {-10.0, 10.0}});
  obj.minimize = true;
  obj.best_value = -186.7309;  // dense-grid + refinement estimate
  obj.eval = [](const Vec& x, Vec* grad, Mat* hess) {
    check_dim(x, 2, "shubert");
    double s1, d1, h1, s2, d2, h2;
    shubert_1d(x[0], s1, d1, h1);
    shubert_1d(x[1], s2, d2, h2);
    if (grad) {
      grad->resize(2);
      (*grad)[0] = d1 * s2;
      (*grad)[1] = s1 * d2;
    }
    if (hess) {
      hess->resize(2, 2);
      (*hess)(0, 0) = h1 * s2;
      (*hess)(0, 1) = d1 * d2;
      (*hess)(1, 0) = d1 * d2;
      (*hess)(1, 1) = s1 * h2;
    }
    return s1 * s2;
  };
  return obj;
}

Objective forrester_branin_1d() {
  Objective obj;
  obj.name = "forrester1d";
  obj.dim = 1;
  obj.bounds = box({{-1.0, 1.0}});
  obj.minimize = true;
  obj.eval = [](const Vec& x, Vec* grad, Mat* hess) {
    check_dim(x, 1, "forrester1d");
    // affine map [-1,1]^2 -> Branin box; the slice x2 = -0.5 maps to u2 = 3.75
    const double scale = 7.5;
    const double u1 = scale * x[0] + 2.5;
    const double u2 = 3.75;
    const double b = 5.1 / (4.0 * M_PI * M_PI);
    const double c = 5.0 / M_PI;
    const double t = 1.0 / (8.0 * M_PI);
    const double inner = u2 - b * u1 * u1 + c * u1 - 6.0;
    const double di = -2.0 * b * u1 + c;
    const double f =
        inner * inner + 10.0 * ((1.0 - t) * std::cos(u1) + 1.0) + 5.0 * u1;
    if (grad) {
      grad->resize(1);
      (*grad)[0] = (2.0 * inner * di - 10.0 * (1.0 - t) * std::sin(u1) + 5.0) * scale;
    }
    if (hess) {
      hess->resize(1, 1);
      (*hess)(0, 0) =
          (2.0 * di * di - 4.0 * b * inner - 10.0 * (1.0 - t) * std::cos(u1)) * scale * scale;
    }
    return f;
  };
  // global minimizer from a dense grid + gradient bisection; the slice has
  // one further local minimum near x = 0.886
  obj.optima = Mat(1, 1);
  obj.optima(0, 0) = -0.015186619;
  obj.best_value = obj.eval(obj.optima.row(0).transpose(), nullptr, nullptr);
  return obj;
}

AsdData make_asd_data(int n, int p, double r, double l, double sigma2, std::uint64_t seed) {
  if (n < 1 || p < 1) throw std::invalid_argument("make_asd_data: need n, p >= 1");
  AsdData data;
  data.r_true = r;
  data.l_true = l;
  data.sigma2_true = sigma2;
  data.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  data.design.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) data.design(i, j) = gauss(rng);

  Mat c(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      const double d = static_cast<double>(i - j);
      c(i, j) = std::exp(-r - d * d / (2.0 * l * l));
    }
  c.diagonal().array() += 1e-12;  // sampling jitter
  Eigen::LLT<Mat> llt(c);
  if (llt.info() != Eigen::Success) {
    throw FactorizationFailed("make_asd_data: prior covariance not PD");
  }
  Vec z(p);
  for (int i = 0; i < p; ++i) z[i] = gauss(rng);
  const Vec w = Mat(llt.matrixL()) * z;
  data.y = data.design * w;
  const double sd = std::sqrt(sigma2);
  for (int i = 0; i < n; ++i) data.y[i] += sd * gauss(rng);
  return data;
}

void save_asd_data(const AsdData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_asd_data: cannot open " + path);
  out.precision(17);
  out << "# asd synthetic dataset\n";
  out << data.design.rows() << "," << data.design.cols() << "," << data.seed << ","
      << data.r_true << "," << data.l_true << "," << data.sigma2_true << "\n";
  for (int i = 0; i < data.design.rows(); ++i) {
    out << data.y[i];
    for (int j = 0; j < data.design.cols(); ++j) out << "," << data.design(i, j);
    out << "\n";
  }
}

AsdData load_asd_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_asd_data: cannot open " + path);
  std::string line;
  std::getline(in, line);  // comment
  std::getline(in, line);
  AsdData data;
  int n = 0, p = 0;
  {
    std::istringstream ss(line);
    char comma;
    ss >> n >> comma >> p >> comma >> data.seed >> comma >> data.r_true >> comma >>
        data.l_true >> comma >> data.sigma2_true;
    if (!ss) throw std::runtime_error("load_asd_data: bad header in " + path);
  }
  data.design.resize(n, p);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("load_asd_data: truncated file");
    std::istringstream ss(line);
    char comma;
    ss >> data.y[i];
    for (int j = 0; j < p; ++j) ss >> comma >> data.design(i, j);
    if (!ss) throw std::runtime_error("load_asd_data: bad row in " + path);
  }
  return data;
}

Objective asd_log_evidence(std::shared_ptr<const AsdData> data) {
  if (!data) throw std::invalid_argument("asd_log_evidence: null dataset");
  Objective obj;
  obj.name = "asd_evidence";
  obj.dim = 3;  // theta = (r, l, sigma^2)
  obj.bounds = box({{-2.0, 6.0}, {0.5, 20.0}, {0.01, 10.0}});
  obj.minimize = false;
  obj.eval = [data](const Vec& theta, Vec* grad, Mat* hess) {
    check_dim(theta, 3, "asd_evidence");
    if (hess) throw UnsupportedDerivativeOrder("asd_evidence provides gradients only");
    const double r = theta[0], l = theta[1], s2 = theta[2];
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    if (!(l > 0.0) || !(s2 > 0.0)) return kNegInf;

    const Mat& a = data->design;
    const int n = static_cast<int>(a.rows());
    const int p = static_cast<int>(a.cols());

    // prior covariance over weights and its l-derivative factor
    Mat c(p, p);
    {
      Vec args(p * p);
      int k = 0;
      for (int j = 0; j < p; ++j)
        for (int i = 0; i < p; ++i) {
          const double d = static_cast<double>(i - j);
          args[k++] = -r - d * d / (2.0 * l * l);
        }
      simd::exp_batch(args.data(), c.data(), args.size());
    }
    if (!c.allFinite()) return kNegInf;

    const Mat m = a * c * a.transpose() + s2 * Mat::Identity(n, n);
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) return kNegInf;

    const Vec alpha = llt.solve(data->y);
    double log_det = 0.0;
    const auto& lm = llt.matrixLLT();
    for (int i = 0; i < n; ++i) log_det += std::log(lm(i, i));
    const double value = -0.5 * data->y.dot(alpha) - log_det - 0.5 * n * std::log(2.0 * M_PI);

    if (grad) {
      grad->resize(3);
      const Mat w = llt.solve(a);        // M^{-1} A, n x p
      const Vec v = a.transpose() * alpha;  // p
      // dC/dr = -C
      const double tr_r = -(w * c).cwiseProduct(a).sum();
      (*grad)[0] = 0.5 * (-v.dot(c * v) - tr_r);
      // dC/dl = C .* (d^2 / l^3)
      Mat cl(p, p);
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
          const double d = static_cast<double>(i - j);
          cl(i, j) = c(i, j) * d * d / (l * l * l);
        }
      const double tr_l = (w * cl).cwiseProduct(a).sum();
      (*grad)[1] = 0.5 * (v.dot(cl * v) - tr_l);
      // dM/dsigma2 = I
      const double tr_s = llt.solve(Mat::Identity(n, n)).trace();
      (*grad)[2] = 0.5 * (alpha.squaredNorm() - tr_s);
    }
    return value;
  };
  return obj;
}

Objective asd_log_evidence_log_scales(std::shared_ptr<const AsdData> data) {
  const Objective base = asd_log_evidence(data);
  Objective obj;
  obj.name = "asd_evidence_log";
  obj.dim = 3;  // (r, log l, log sigma^2)
  obj.bounds = base.bounds;
  obj.bounds(1, 0) = std::log(base.bounds(1, 0));
  obj.bounds(1, 1) = std::log(base.bounds(1, 1));
  obj.bounds(2, 0) = std::log(base.bounds(2, 0));
  obj.bounds(2, 1) = std::log(base.bounds(2, 1));
  obj.minimize = false;
  obj.eval = [base](const Vec& u, Vec* grad, Mat* hess) {
    check_dim(u, 3, "asd_evidence_log");
    if (hess) throw UnsupportedDerivativeOrder("asd_evidence_log provides gradients only");
    Vec theta(3);
    theta << u[0], std::exp(u[1]), std::exp(u[2]);
    Vec g;
    const double value = base.eval(theta, grad ? &g : nullptr, nullptr);
    if (grad) {
      grad->resize(3);
      (*grad)[0] = g[0];
      (*grad)[1] = g[1] * theta[1];
      (*grad)[2] = g[2] * theta[2];
    }
    return value;
  };
  return obj;
}

Objective gaussian_bumps_1d(std::vector<GaussianBump> bumps, double lo, double hi) {
  Objective obj;
  obj.name = "gaussian_bumps";
  obj.dim = 1;
  obj.bounds = box({{lo, hi}});
  obj.minimize = false;
  obj.eval = [bumps](const Vec& x, Vec* grad, Mat* hess) {
    check_dim(x, 1, "gaussian_bumps");
    double f = 0.0, df = 0.0, d2f = 0.0;
    for (const auto& b : bumps) {
      const double z = (x[0] - b.center) / b.width;
      const double e = b.amplitude * std::exp(-0.5 * z * z);
      f += e;
      df += -e * z / b.width;
      d2f += e * (z * z - 1.0) / (b.width * b.width);
    }
    if (grad) {
      grad->resize(1);
      (*grad)[0] = df;
    }
    if (hess) {
      hess->resize(1, 1);
      (*hess)(0, 0) = d2f;
    }
    return f;
  };
  return obj;
}

double gaussian_bumps_integral(const std::vector<GaussianBump>& bumps, double mean, double var) {
  double z = 0.0;
  for (const auto& b : bumps) {
    const double w2 = b.width * b.width;
    z += b.amplitude * std::sqrt(w2 / (w2 + var)) *
         std::exp(-(b.center - mean) * (b.center - mean) / (2.0 * (w2 + var)));
  }
  return z;
}

Objective objective_by_name(const std::string& name) {
  if (name == "rosenbrock2") return rosenbrock(2);
  if (name == "rosenbrock3") return rosenbrock(3);
  if (name == "branin") return branin();
  if (name == "shubert") return shubert();
  if (name == "forrester1d") return forrester_branin_1d();
  throw std::invalid_argument("unknown objective: " + name);
}

}  // namespace dgp
