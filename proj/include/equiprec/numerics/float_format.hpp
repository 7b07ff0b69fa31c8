#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "equiprec/errors.hpp"

namespace equiprec::numerics {

// Description of a binary floating-point format emulated on FP64 carriers.
// mantissa_bits counts explicit fraction bits (hidden bit excluded).
// Rounding is fixed to round-to-nearest-even for every format.
struct FloatFormat {
  std::string name;
  int exponent_bits = 11;
  int mantissa_bits = 52;
  bool supports_subnormals = true;

  // Derived quantities, filled by make().
  int bias = 1023;
  int emin = -1022;  // smallest normal exponent (value = 1.f * 2^emin)
  int emax = 1023;   // largest normal exponent
  double max_finite = std::numeric_limits<double>::max();
  double min_normal = std::numeric_limits<double>::min();
  double eps = std::ldexp(1.0, -52);
  bool is_fp64 = true;

  static FloatFormat make(std::string name, int exponent_bits, int mantissa_bits,
                          bool supports_subnormals) {
    if (exponent_bits < 5 || exponent_bits > 11)
      throw DomainError("FloatFormat: exponent_bits must be in [5, 11], got " +
                        std::to_string(exponent_bits));
    if (mantissa_bits < 7 || mantissa_bits > 52)
      throw DomainError("FloatFormat: mantissa_bits must be in [7, 52], got " +
                        std::to_string(mantissa_bits));
    FloatFormat f;
    f.name = std::move(name);
    f.exponent_bits = exponent_bits;
    f.mantissa_bits = mantissa_bits;
    f.supports_subnormals = supports_subnormals;
    f.bias = (1 << (exponent_bits - 1)) - 1;
    f.emax = f.bias;
    f.emin = 1 - f.bias;
    f.eps = std::ldexp(1.0, -mantissa_bits);
    f.max_finite = std::ldexp(2.0 - f.eps, f.emax);
    f.min_normal = std::ldexp(1.0, f.emin);
    f.is_fp64 = (exponent_bits == 11 && mantissa_bits == 52);
    return f;
  }

  bool operator==(const FloatFormat& o) const {
    return exponent_bits == o.exponent_bits && mantissa_bits == o.mantissa_bits &&
           supports_subnormals == o.supports_subnormals;
  }
};

// The five supported formats. BF16 and TF32 flush subnormal results to zero
// (documented convention; matches common accelerator behavior).
const FloatFormat& fp64();
const FloatFormat& fp32();
const FloatFormat& tf32();
const FloatFormat& fp16();
const FloatFormat& bf16();

// Lookup by the exact lowercase names used in configs and CLI flags.
const FloatFormat& format_from_name(const std::string& name);

inline double machine_epsilon(const FloatFormat& f) { return f.eps; }

// Round x to the nearest value representable in f, ties to even.
// Overflow saturates to +/-inf; NaN propagates; underflow is gradual for
// subnormal-supporting formats and flushes to signed zero otherwise.
inline double quantize(double x, const FloatFormat& f) {
  if (f.is_fp64) return x;
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  const std::uint64_t sign = bits & 0x8000000000000000ull;
  const int ebits = int((bits >> 52) & 0x7ff);
  if (ebits == 0x7ff) return x;  // NaN / +-inf propagate unchanged
  // FP64 subnormals sit far below every emulated format's underflow point.
  if (ebits == 0) return sign ? -0.0 : 0.0;

  const int E = ebits - 1023;  // |x| = 1.frac * 2^E
  std::uint64_t sig = (bits & 0xfffffffffffffull) | (1ull << 52);
  int shift = 52 - f.mantissa_bits;
  if (E < f.emin) {
    shift += f.emin - E;  // coarser grid through gradual underflow
    if (shift > 63) return sign ? -0.0 : 0.0;
  }
  std::uint64_t q = sig;
  if (shift > 0) {
    const std::uint64_t rem = sig & ((1ull << shift) - 1);
    const std::uint64_t half = 1ull << (shift - 1);
    q = sig >> shift;
    q += (rem > half || (rem == half && (q & 1ull))) ? 1ull : 0ull;
  }
  if (q == 0) return sign ? -0.0 : 0.0;

  // Exact reconstruction |result| = q * 2^(E - 52 + shift).
  const int top = 63 - std::countl_zero(q);
  const int e2 = E - 52 + shift + top;
  if (e2 > f.emax)
    return sign ? -std::numeric_limits<double>::infinity()
                : std::numeric_limits<double>::infinity();
  if (e2 < f.emin && !f.supports_subnormals) return sign ? -0.0 : 0.0;
  const std::uint64_t mant =
      (top >= 52) ? (q >> (top - 52)) : (q << (52 - top));
  const std::uint64_t out =
      sign | (std::uint64_t(e2 + 1023) << 52) | (mant & 0xfffffffffffffull);
  return std::bit_cast<double>(out);
}

// Spacing of representable values in the binade containing x; for exact
// powers of two this is the spacing of the binade starting at |x|
// (ulp(1.0, FP32) = 2^-23, ulp(2.0, FP32) = 2^-22).
// Zero input returns the smallest positive representable value.
inline double ulp(double x, const FloatFormat& f) {
  if (x == 0.0)
    return f.supports_subnormals ? std::ldexp(1.0, f.emin - f.mantissa_bits)
                                 : f.min_normal;
  if (std::isnan(x)) return x;
  int e = 0;
  std::frexp(std::fabs(x), &e);  // |x| = m * 2^e, m in [0.5, 1)
  int binade = e - 1;
  if (binade < f.emin) {
    // below min_normal the spacing plateaus: subnormal grid, or the gap
    // straight to zero for flush-to-zero formats
    if (!f.supports_subnormals) return f.min_normal;
    binade = f.emin;
  }
  if (binade > f.emax) binade = f.emax;
  return std::ldexp(1.0, binade - f.mantissa_bits);
}

}  // namespace equiprec::numerics
