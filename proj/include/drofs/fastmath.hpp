#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace drofs::fastmath {

// Vector-friendly exp for non-positive arguments. The kernel-weight path
// evaluates exp over whole arrays after max-subtraction (every input ≤ 0),
// and scalar libm exp dominates the profile there. This version is a plain
// branch-free range-reduction + polynomial so the compiler can vectorize the
// loop in exp_array.
//
// Accuracy: degree-12 Taylor on |r| ≤ ln(2)/2 truncates below 2e-16 relative,
// so results match std::exp to a few ulp. Inputs below -708 flush to exactly
// 0 (std::exp would underflow there anyway).

inline double exp_nonpos(double x) {
  constexpr double kLog2E = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;

  const double kd = std::floor(x * kLog2E + 0.5);
  // Cody-Waite two-step reduction keeps r accurate for large |x|.
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;

  // Horner evaluation of sum r^i / i! for i = 0..12.
  double p = 1.0 / 479001600.0;          // 1/12!
  p = p * r + 1.0 / 39916800.0;          // 1/11!
  p = p * r + 1.0 / 3628800.0;           // 1/10!
  p = p * r + 1.0 / 362880.0;            // 1/9!
  p = p * r + 1.0 / 40320.0;             // 1/8!
  p = p * r + 1.0 / 5040.0;              // 1/7!
  p = p * r + 1.0 / 720.0;               // 1/6!
  p = p * r + 1.0 / 120.0;               // 1/5!
  p = p * r + 1.0 / 24.0;                // 1/4!
  p = p * r + 1.0 / 6.0;                 // 1/3!
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;

  // Scale by 2^k through the exponent bits; k ∈ [-1022, 0] for x ≥ -708.
  const std::int64_t ki = static_cast<std::int64_t>(kd);
  const double scale = std::bit_cast<double>(static_cast<std::uint64_t>(ki + 1023) << 52);
  return x < -708.0 ? 0.0 : p * scale;
}

inline void exp_array(const double* x, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = exp_nonpos(x[i]);
}

}  // namespace drofs::fastmath
