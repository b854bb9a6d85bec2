#pragma once

// Shared constants for the exp/sincos kernels. Both lanes evaluate the same
// polynomials in the same order with fused multiply-adds, which keeps the
// elementwise results bit-identical between the scalar and AVX2 paths.

namespace dgp::simd::detail {

inline constexpr double kLog2E = 1.44269504088896340736;
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;

inline constexpr double kExpOverflow = 709.436;
inline constexpr double kExpUnderflow = -708.396;

// Taylor coefficients 1/2! .. 1/13!; |r| <= ln2/2 keeps the truncation below
// one ulp of exp(r).
inline constexpr double kExpC[12] = {
    5.00000000000000000000e-01,  // 1/2!
    1.66666666666666666667e-01,  // 1/3!
    4.16666666666666666667e-02,  // 1/4!
    8.33333333333333333333e-03,  // 1/5!
    1.38888888888888888889e-03,  // 1/6!
    1.98412698412698412698e-04,  // 1/7!
    2.48015873015873015873e-05,  // 1/8!
    2.75573192239858906526e-06,  // 1/9!
    2.75573192239858906526e-07,  // 1/10!
    2.50521083854417187751e-08,  // 1/11!
    2.08767569878680989792e-09,  // 1/12!
    1.60590438368216145994e-10,  // 1/13!
};

inline constexpr double kTwoOverPi = 6.36619772367581343076e-01;
inline constexpr double kPio2Hi = 1.57079632673412561417e+00;
inline constexpr double kPio2Lo = 6.07710050650619224932e-11;
inline constexpr double kPio2Tiny = 2.02226624879595063154e-21;

// cephes sin/cos minimax coefficients on |r| <= pi/4 (highest degree first).
inline constexpr double kSinC[6] = {
    1.58962301576546568060e-10, -2.50507477628578072866e-08,
    2.75573136213857245213e-06,  -1.98412698295895385996e-04,
    8.33333333332211858878e-03,  -1.66666666666666307295e-01,
};
inline constexpr double kCosC[6] = {
    -1.13585365213876817300e-11, 2.08757008419747316778e-09,
    -2.75573141792967388112e-07, 2.48015872888517179954e-05,
    -1.38888888888730564116e-03, 4.16666666666665929218e-02,
};

}  // namespace dgp::simd::detail
