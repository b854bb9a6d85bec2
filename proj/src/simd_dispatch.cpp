#include "dgp/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace dgp::simd {

namespace {

Lane detect_lane() {
  if (const char* env = std::getenv("DGP_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Lane::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!detail::avx2_available()) {
        throw std::runtime_error("DGP_SIMD=avx2 requested but CPU/compiler lacks AVX2+FMA");
      }
      return Lane::avx2;
    }
  }
  return detail::avx2_available() ? Lane::avx2 : Lane::scalar;
}

std::atomic<Lane>& lane_slot() {
  static std::atomic<Lane> lane{detect_lane()};
  return lane;
}

}  // namespace

Lane active_lane() { return lane_slot().load(std::memory_order_relaxed); }

void force_lane(Lane lane) {
  if (lane == Lane::avx2 && !detail::avx2_available()) {
    throw std::runtime_error("AVX2 lane not available on this CPU/build");
  }
  lane_slot().store(lane, std::memory_order_relaxed);
}

const char* lane_name(Lane lane) { return lane == Lane::avx2 ? "avx2" : "scalar"; }

void exp_batch(const double* x, double* out, std::size_t n) {
  if (active_lane() == Lane::avx2) {
    detail::exp_batch_avx2(x, out, n);
  } else {
    detail::exp_batch_scalar(x, out, n);
  }
}

void sincos_batch(const double* x, double* cos_out, double* sin_out, std::size_t n) {
  if (active_lane() == Lane::avx2) {
    detail::sincos_batch_avx2(x, cos_out, sin_out, n);
  } else {
    detail::sincos_batch_scalar(x, cos_out, sin_out, n);
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  return active_lane() == Lane::avx2 ? detail::dot_avx2(a, b, n) : detail::dot_scalar(a, b, n);
}

double weighted_dot(const double* a, const double* w, const double* b, std::size_t n) {
  return active_lane() == Lane::avx2 ? detail::weighted_dot_avx2(a, w, b, n)
                                     : detail::weighted_dot_scalar(a, w, b, n);
}

}  // namespace dgp::simd
