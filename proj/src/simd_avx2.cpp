#include "dgp/simd.hpp"
#include "simd_poly.hpp"

#ifdef DGP_HAVE_AVX2
#include <immintrin.h>
#endif

#include <cmath>
#include <limits>

namespace dgp::simd::detail {

bool avx2_available() {
#if defined(DGP_HAVE_AVX2) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

#ifdef DGP_HAVE_AVX2

namespace {

inline __m256d poly_exp(__m256d r) {
  __m256d q = _mm256_set1_pd(kExpC[11]);
  for (int i = 10; i >= 0; --i) q = _mm256_fmadd_pd(q, r, _mm256_set1_pd(kExpC[i]));
  const __m256d r2 = _mm256_mul_pd(r, r);
  return _mm256_add_pd(_mm256_fmadd_pd(q, r2, r), _mm256_set1_pd(1.0));
}

inline __m256d scale_pow2(__m256d p, __m256i k64) {
  // p * 2^k with the exponent split in two halves, matching the scalar lane's
  // floor-halving. AVX2 lacks a 64-bit arithmetic shift, but |k| <= 1075 keeps
  // each epi64 lane a sign extension of its low 32 bits, so a 32-bit shift of
  // both halves produces the correct sign-extended k >> 1.
  const __m256i k1 = _mm256_srai_epi32(k64, 1);
  const __m256i k2 = _mm256_sub_epi64(k64, k1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  const __m256d s1 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(k1, bias), 52));
  const __m256d s2 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(k2, bias), 52));
  return _mm256_mul_pd(_mm256_mul_pd(p, s1), s2);
}

inline __m256d exp4(__m256d x) {
  const __m256d lo = _mm256_set1_pd(kExpUnderflow);
  const __m256d hi = _mm256_set1_pd(kExpOverflow);
  // max(x, lo) yields lo when x is NaN, so the core always sees finite input.
  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d kd = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2E)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fmadd_pd(_mm256_sub_pd(_mm256_setzero_pd(), kd), _mm256_set1_pd(kLn2Hi), xc);
  r = _mm256_fmadd_pd(_mm256_sub_pd(_mm256_setzero_pd(), kd), _mm256_set1_pd(kLn2Lo), r);

  const __m256d p = poly_exp(r);
  const __m128i k32 = _mm256_cvtpd_epi32(kd);
  const __m256i k64 = _mm256_cvtepi32_epi64(k32);
  __m256d result = scale_pow2(p, k64);

  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d of_mask = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  const __m256d uf_mask = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(std::numeric_limits<double>::infinity()), of_mask);
  result = _mm256_blendv_pd(result, _mm256_setzero_pd(), uf_mask);
  result = _mm256_blendv_pd(result, x, nan_mask);
  return result;
}

inline void sincos4(__m256d x, __m256d* cs, __m256d* sn) {
  const __m256d kd = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(kTwoOverPi)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d nkd = _mm256_sub_pd(_mm256_setzero_pd(), kd);
  __m256d r = _mm256_fmadd_pd(nkd, _mm256_set1_pd(kPio2Hi), x);
  r = _mm256_fmadd_pd(nkd, _mm256_set1_pd(kPio2Lo), r);
  r = _mm256_fmadd_pd(nkd, _mm256_set1_pd(kPio2Tiny), r);
  const __m256d r2 = _mm256_mul_pd(r, r);

  __m256d sp = _mm256_set1_pd(kSinC[0]);
  for (int i = 1; i < 6; ++i) sp = _mm256_fmadd_pd(sp, r2, _mm256_set1_pd(kSinC[i]));
  const __m256d sin_r = _mm256_fmadd_pd(_mm256_mul_pd(sp, r2), r, r);

  __m256d cp = _mm256_set1_pd(kCosC[0]);
  for (int i = 1; i < 6; ++i) cp = _mm256_fmadd_pd(cp, r2, _mm256_set1_pd(kCosC[i]));
  const __m256d cos_r = _mm256_fmadd_pd(cp, _mm256_mul_pd(r2, r2),
                                        _mm256_fmadd_pd(_mm256_set1_pd(-0.5), r2, _mm256_set1_pd(1.0)));

  const __m128i k32 = _mm256_cvtpd_epi32(kd);
  const __m256i k64 = _mm256_cvtepi32_epi64(k32);
  const __m256i zero = _mm256_setzero_si256();
  const __m256i bit0 = _mm256_and_si256(k64, _mm256_set1_epi64x(1));
  const __m256i bit1 = _mm256_and_si256(k64, _mm256_set1_epi64x(2));
  const __m256d swap_mask = _mm256_castsi256_pd(
      _mm256_xor_si256(_mm256_cmpeq_epi64(bit0, zero), _mm256_set1_epi64x(-1)));
  const __m256d b1_mask = _mm256_castsi256_pd(
      _mm256_xor_si256(_mm256_cmpeq_epi64(bit1, zero), _mm256_set1_epi64x(-1)));
  const __m256d cos_neg_mask = _mm256_xor_pd(swap_mask, b1_mask);

  __m256d s_out = _mm256_blendv_pd(sin_r, cos_r, swap_mask);
  __m256d c_out = _mm256_blendv_pd(cos_r, sin_r, swap_mask);
  const __m256d signbit = _mm256_set1_pd(-0.0);
  s_out = _mm256_xor_pd(s_out, _mm256_and_pd(signbit, b1_mask));
  c_out = _mm256_xor_pd(c_out, _mm256_and_pd(signbit, cos_neg_mask));

  // Non-finite inputs produce NaN in both outputs, as in the scalar lane.
  const __m256d abs_x = _mm256_andnot_pd(signbit, x);
  const __m256d bad = _mm256_cmp_pd(abs_x, _mm256_set1_pd(std::numeric_limits<double>::infinity()),
                                    _CMP_GE_OQ);
  const __m256d nan_mask = _mm256_or_pd(bad, _mm256_cmp_pd(x, x, _CMP_UNORD_Q));
  const __m256d qnan = _mm256_set1_pd(std::numeric_limits<double>::quiet_NaN());
  *sn = _mm256_blendv_pd(s_out, qnan, nan_mask);
  *cs = _mm256_blendv_pd(c_out, qnan, nan_mask);
}

}  // namespace

void exp_batch_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    double buf_in[4] = {0, 0, 0, 0};
    double buf_out[4];
    for (std::size_t j = i; j < n; ++j) buf_in[j - i] = x[j];
    _mm256_storeu_pd(buf_out, exp4(_mm256_loadu_pd(buf_in)));
    for (std::size_t j = i; j < n; ++j) out[j] = buf_out[j - i];
  }
}

void sincos_batch_avx2(const double* x, double* c, double* s, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d cs, sn;
    sincos4(_mm256_loadu_pd(x + i), &cs, &sn);
    _mm256_storeu_pd(c + i, cs);
    _mm256_storeu_pd(s + i, sn);
  }
  if (i < n) {
    double buf_in[4] = {0, 0, 0, 0};
    double buf_c[4], buf_s[4];
    for (std::size_t j = i; j < n; ++j) buf_in[j - i] = x[j];
    __m256d cs, sn;
    sincos4(_mm256_loadu_pd(buf_in), &cs, &sn);
    _mm256_storeu_pd(buf_c, cs);
    _mm256_storeu_pd(buf_s, sn);
    for (std::size_t j = i; j < n; ++j) {
      c[j] = buf_c[j - i];
      s[j] = buf_s[j - i];
    }
  }
}

namespace {
inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d sum2 = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(sum2, _mm_unpackhi_pd(sum2, sum2)));
}
}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

double weighted_dot_avx2(const double* a, const double* w, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d aw = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(w + i));
    acc0 = _mm256_fmadd_pd(aw, _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(acc0);
  for (; i < n; ++i) acc = std::fma(a[i] * w[i], b[i], acc);
  return acc;
}

#else  // !DGP_HAVE_AVX2

void exp_batch_avx2(const double* x, double* out, std::size_t n) { exp_batch_scalar(x, out, n); }
void sincos_batch_avx2(const double* x, double* c, double* s, std::size_t n) {
  sincos_batch_scalar(x, c, s, n);
}
double dot_avx2(const double* a, const double* b, std::size_t n) { return dot_scalar(a, b, n); }
double weighted_dot_avx2(const double* a, const double* w, const double* b, std::size_t n) {
  return weighted_dot_scalar(a, w, b, n);
}

#endif

}  // namespace dgp::simd::detail
