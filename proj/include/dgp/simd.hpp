#pragma once

#include <cstddef>

// Batched arithmetic kernels for the hot inner loops: elementwise exp over
// squared-distance arrays (SE Gram assembly, prior spectra), paired sin/cos
// over Fourier-basis angles, and (weighted) dot reductions for spectral
// reconstruction and variance forms.
//
// Every operation has a scalar reference kernel and an AVX2 variant. The two
// lanes run the same fma-based algorithm, so the elementwise ops are
// bit-identical across lanes; reductions differ only by accumulation order.
// The active lane is picked once at runtime from CPUID and can be forced with
// the DGP_SIMD environment variable ("scalar" or "avx2").

namespace dgp::simd {

enum class Lane { scalar, avx2 };

Lane active_lane();
void force_lane(Lane lane);  // test hook; avx2 requires CPU support

const char* lane_name(Lane lane);

// out[i] = exp(x[i]); overflow saturates to inf, underflow flushes to 0.
void exp_batch(const double* x, double* out, std::size_t n);

// cos_out[i] = cos(x[i]), sin_out[i] = sin(x[i]); valid for |x| up to ~1e6.
void sincos_batch(const double* x, double* cos_out, double* sin_out, std::size_t n);

// sum a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// sum a[i]*w[i]*b[i]
double weighted_dot(const double* a, const double* w, const double* b, std::size_t n);

namespace detail {
// Per-lane entry points, exposed for the equivalence tests.
void exp_batch_scalar(const double* x, double* out, std::size_t n);
void sincos_batch_scalar(const double* x, double* c, double* s, std::size_t n);
double dot_scalar(const double* a, const double* b, std::size_t n);
double weighted_dot_scalar(const double* a, const double* w, const double* b, std::size_t n);

bool avx2_available();
void exp_batch_avx2(const double* x, double* out, std::size_t n);
void sincos_batch_avx2(const double* x, double* c, double* s, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
double weighted_dot_avx2(const double* a, const double* w, const double* b, std::size_t n);
}  // namespace detail

}  // namespace dgp::simd
