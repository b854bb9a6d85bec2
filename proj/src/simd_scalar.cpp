#include "dgp/simd.hpp"
#include "simd_poly.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

// Scalar reference lane. std::fma mirrors the AVX2 fused operations exactly,
// so exp_batch/sincos_batch agree bitwise with the vector lane.

namespace dgp::simd::detail {

namespace {

inline double ldexp_fast(double x, long long k) {
  // Split the 2^k scaling so the intermediate exponent stays in range.
  // Floor-halving matches the arithmetic shift used by the AVX2 lane.
  const long long k1 = k >> 1;
  const long long k2 = k - k1;
  std::uint64_t b1 = static_cast<std::uint64_t>(k1 + 1023) << 52;
  std::uint64_t b2 = static_cast<std::uint64_t>(k2 + 1023) << 52;
  double s1, s2;
  std::memcpy(&s1, &b1, sizeof(double));
  std::memcpy(&s2, &b2, sizeof(double));
  return (x * s1) * s2;
}

inline double exp_one(double x) {
  if (std::isnan(x)) return x;
  if (x > kExpOverflow) return std::numeric_limits<double>::infinity();
  if (x < kExpUnderflow) return 0.0;

  const double kd = std::nearbyint(x * kLog2E);
  const long long k = static_cast<long long>(kd);
  double r = std::fma(-kd, kLn2Hi, x);
  r = std::fma(-kd, kLn2Lo, r);

  double q = kExpC[11];
  for (int i = 10; i >= 0; --i) q = std::fma(q, r, kExpC[i]);
  // exp(r) = 1 + r + r^2 * q
  const double p = std::fma(q, r * r, r) + 1.0;
  return ldexp_fast(p, k);
}

inline void sincos_one(double x, double* cs, double* sn) {
  if (!std::isfinite(x)) {
    *cs = std::numeric_limits<double>::quiet_NaN();
    *sn = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double kd = std::nearbyint(x * kTwoOverPi);
  double r = std::fma(-kd, kPio2Hi, x);
  r = std::fma(-kd, kPio2Lo, r);
  r = std::fma(-kd, kPio2Tiny, r);
  const double r2 = r * r;

  double sp = kSinC[0];
  for (int i = 1; i < 6; ++i) sp = std::fma(sp, r2, kSinC[i]);
  const double sin_r = std::fma(sp * r2, r, r);

  double cp = kCosC[0];
  for (int i = 1; i < 6; ++i) cp = std::fma(cp, r2, kCosC[i]);
  const double cos_r = std::fma(cp, r2 * r2, std::fma(-0.5, r2, 1.0));

  const long long q = static_cast<long long>(kd) & 3;
  switch (q) {
    case 0: *sn = sin_r;  *cs = cos_r;  break;
    case 1: *sn = cos_r;  *cs = -sin_r; break;
    case 2: *sn = -sin_r; *cs = -cos_r; break;
    default: *sn = -cos_r; *cs = sin_r; break;
  }
}

}  // namespace

void exp_batch_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = exp_one(x[i]);
}

void sincos_batch_scalar(const double* x, double* c, double* s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) sincos_one(x[i], &c[i], &s[i]);
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

double weighted_dot_scalar(const double* a, const double* w, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i] * w[i], b[i], acc);
  return acc;
}

}  // namespace dgp::simd::detail
