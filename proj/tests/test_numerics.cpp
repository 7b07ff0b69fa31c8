#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "equiprec/numerics/float_format.hpp"
#include "equiprec/numerics/policy.hpp"
#include "equiprec/numerics/reduce.hpp"
#include "equiprec/numerics/rng.hpp"

using namespace equiprec;
using namespace equiprec::numerics;

namespace {

// Independent rounding oracle built on the representable-value grid: inside
// one binade the format's values are k * 2^(E - p), and all grid arithmetic
// below is exact in double (power-of-two scaling, Sterbenz differences).
// This shares no code path with quantize(), which works on raw bits.
double oracle_quantize(double x, const FloatFormat& f) {
  if (f.is_fp64) return x;
  if (std::isnan(x) || std::isinf(x)) return x;
  const double sgn = std::signbit(x) ? -1.0 : 1.0;
  const double ax = std::fabs(x);
  if (ax == 0.0) return sgn * 0.0;

  int e = 0;
  std::frexp(ax, &e);
  int E = e - 1;  // ax in [2^E, 2^(E+1))
  if (E < f.emin) E = f.emin;
  if (E > f.emax) E = f.emax;
  const double step = std::ldexp(1.0, E - f.mantissa_bits);
  const double k = std::floor(ax / step);
  const double lo = k * step;
  const double hi = (k + 1.0) * step;
  const double d_lo = ax - lo;
  const double d_hi = hi - ax;
  double pick;
  if (d_lo < d_hi)
    pick = lo;
  else if (d_hi < d_lo)
    pick = hi;
  else
    pick = (std::fmod(k, 2.0) == 0.0) ? lo : hi;  // tie: even grid index

  if (pick > f.max_finite) return sgn * std::numeric_limits<double>::infinity();
  if (!f.supports_subnormals && pick != 0.0 && pick < f.min_normal) return sgn * 0.0;
  return sgn * pick;
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

// Neumaier compensated sum: reference for accumulate error bounds.
double compensated_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a[i] * b[i];
    const double t = s + p;
    c += (std::fabs(s) >= std::fabs(p)) ? (s - t) + p : (p - t) + s;
    s = t;
  }
  return s + c;
}

std::vector<double> sample_values(const FloatFormat& f, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs;
  xs.reserve(std::size_t(n) + 32);
  // log-uniform magnitudes spanning deep underflow through overflow
  const double lo_e = double(f.emin - f.mantissa_bits - 6);
  const double hi_e = double(f.emax + 3);
  for (int i = 0; i < n; ++i) {
    const double ex = rng.uniform(lo_e, hi_e);
    const double mag = std::exp2(ex) * (1.0 + rng.uniform());
    xs.push_back(rng.uniform() < 0.5 ? -mag : mag);
  }
  // exact boundary and tie cases
  xs.push_back(0.0);
  xs.push_back(-0.0);
  xs.push_back(f.min_normal);
  xs.push_back(-f.min_normal);
  xs.push_back(f.max_finite);
  xs.push_back(-f.max_finite);
  xs.push_back(std::ldexp(1.0, f.emin - f.mantissa_bits));          // min subnormal
  xs.push_back(std::ldexp(1.0, f.emin - f.mantissa_bits - 1));      // tie at half of it
  xs.push_back(std::ldexp(3.0, f.emin - f.mantissa_bits - 1));      // tie between 1st/2nd
  xs.push_back(1.0 + std::ldexp(1.0, -f.mantissa_bits - 1));        // tie above 1.0
  xs.push_back(1.0 + std::ldexp(3.0, -f.mantissa_bits - 1));        // tie, odd low bit
  xs.push_back(f.max_finite + std::ldexp(1.0, f.emax - f.mantissa_bits - 1));  // inf tie
  return xs;
}

}  // namespace

TEST_CASE("format table: derived constants") {
  CHECK(machine_epsilon(fp64()) == std::ldexp(1.0, -52));
  CHECK(machine_epsilon(fp32()) == std::ldexp(1.0, -23));
  CHECK(machine_epsilon(tf32()) == std::ldexp(1.0, -10));
  CHECK(machine_epsilon(fp16()) == std::ldexp(1.0, -10));
  CHECK(machine_epsilon(bf16()) == std::ldexp(1.0, -7));

  CHECK(fp16().bias == 15);
  CHECK(fp16().emin == -14);
  CHECK(fp16().emax == 15);
  CHECK(fp16().max_finite == 65504.0);
  CHECK(fp16().min_normal == std::ldexp(1.0, -14));

  CHECK(bf16().bias == 127);
  CHECK(bf16().emin == -126);
  CHECK(bf16().emax == 127);
  CHECK(bf16().supports_subnormals == false);
  CHECK(tf32().supports_subnormals == false);
  CHECK(fp32().max_finite == double(std::numeric_limits<float>::max()));

  CHECK(format_from_name("bf16") == bf16());
  CHECK_THROWS_AS(format_from_name("fp8"), ParseError);
}

TEST_CASE("quantize agrees with grid oracle on every format") {
  for (const FloatFormat* f : {&fp32(), &tf32(), &fp16(), &bf16()}) {
    const auto xs = sample_values(*f, 20000, 0xC0FFEE + f->mantissa_bits);
    for (double x : xs) {
      const double got = quantize(x, *f);
      const double want = oracle_quantize(x, *f);
      INFO(f->name, " x=", x, " got=", got, " want=", want);
      CHECK(same_bits(got, want));
    }
  }
}

TEST_CASE("quantize fp32 matches native float cast") {
  Rng rng(99);
  for (int i = 0; i < 20000; ++i) {
    const double ex = rng.uniform(-160.0, 132.0);
    double x = std::exp2(ex) * (1.0 + rng.uniform());
    if (rng.uniform() < 0.5) x = -x;
    const double want = double(float(x));
    CHECK(same_bits(quantize(x, fp32()), want));
  }
  CHECK(same_bits(quantize(0.1, fp32()), double(0.1f)));
}

TEST_CASE("quantize special values and documented cases") {
  // fp64 is the identity, bit for bit
  CHECK(same_bits(quantize(0.1, fp64()), 0.1));
  CHECK(same_bits(quantize(-0.0, fp64()), -0.0));

  // tie halfway between 1.0 and 1 + 2^-10 rounds to even (1.0)
  CHECK(quantize(1.0 + std::ldexp(1.0, -11), fp16()) == 1.0);
  // odd-significand tie rounds away
  const double above = 1.0 + std::ldexp(1.0, -10);
  CHECK(quantize(1.0 + std::ldexp(3.0, -11), fp16()) == above + std::ldexp(1.0, -10));

  // overflow saturates to inf in fp16, stays finite in bf16
  CHECK(std::isinf(quantize(70000.0, fp16())));
  CHECK(quantize(70000.0, fp16()) > 0);
  CHECK(quantize(-70000.0, fp16()) < 0);
  CHECK(quantize(70000.0, bf16()) == 70144.0);

  // NaN propagates
  CHECK(std::isnan(quantize(std::numeric_limits<double>::quiet_NaN(), fp16())));

  // signed zero preserved, fp64 subnormal input flushes with sign
  CHECK(std::signbit(quantize(-0.0, fp16())));
  CHECK(std::signbit(quantize(-1e-310, fp32())));
  CHECK(quantize(1e-310, fp32()) == 0.0);

  // bf16/tf32 flush subnormal results to zero; fp16 keeps them
  CHECK(quantize(std::ldexp(1.0, -130), bf16()) == 0.0);
  CHECK(quantize(std::ldexp(1.0, -20), fp16()) == std::ldexp(1.0, -20));
  CHECK(quantize(std::ldexp(1.0, -24), fp16()) == std::ldexp(1.0, -24));  // subnormal
}

TEST_CASE("quantize properties: idempotent, monotone, half-ulp bound") {
  for (const FloatFormat* f : {&fp32(), &tf32(), &fp16(), &bf16()}) {
    auto xs = sample_values(*f, 4000, 0xBEEF + f->exponent_bits);
    for (double x : xs) {
      const double q = quantize(x, *f);
      CHECK(same_bits(quantize(q, *f), q));  // idempotent
      if (std::isfinite(q) && std::isfinite(x)) {
        // In the flush-to-zero region nearest rounding is intentionally
        // violated (round on the subnormal grid, then flush), so the error
        // there is bounded by min_normal rather than half an ulp.
        const bool flush_region =
            !f->supports_subnormals && std::fabs(x) < f->min_normal;
        const double bound =
            flush_region ? f->min_normal : 0.5 * ulp(x, *f) * (1.0 + 1e-15);
        CHECK(std::fabs(q - x) <= bound);
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i)
      CHECK(quantize(xs[i - 1], *f) <= quantize(xs[i], *f));  // monotone
  }
}

TEST_CASE("ulp spacing") {
  CHECK(ulp(1.0, fp32()) == std::ldexp(1.0, -23));
  CHECK(ulp(2.0, fp32()) == std::ldexp(1.0, -22));
  CHECK(ulp(1.5, fp32()) == std::ldexp(1.0, -23));
  CHECK(ulp(3.7, bf16()) == std::ldexp(1.0, -6));  // binade [2,4): 2 * 2^-7
  CHECK(ulp(0.0, fp16()) == std::ldexp(1.0, -24));
  CHECK(ulp(0.0, bf16()) == bf16().min_normal);  // no subnormals
  CHECK(ulp(std::ldexp(1.0, -130), bf16()) == bf16().min_normal);
  CHECK(ulp(-2.0, fp32()) == std::ldexp(1.0, -22));
  // subnormal plateau: spacing stops shrinking below min_normal
  CHECK(ulp(std::ldexp(1.0, -20), fp16()) == std::ldexp(1.0, -24));
}

TEST_CASE("dot_accumulate: fp64 path is native double, bit for bit") {
  Rng rng(4242);
  std::vector<double> a(1000), b(1000);
  for (auto& x : a) x = rng.uniform(-3.0, 3.0);
  for (auto& x : b) x = rng.uniform(-3.0, 3.0);
  double want = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) want += a[i] * b[i];
  CHECK(same_bits(dot_accumulate(a, b, fp64(), fp64()), want));
}

TEST_CASE("dot_accumulate: edge cases and failure modes") {
  std::vector<double> a{1.0, 2.0}, b{3.0};
  CHECK_THROWS_AS(dot_accumulate(a, b, fp32(), fp32()), DimensionError);
  CHECK(dot_accumulate({}, {}, fp16(), fp32()) == 0.0);

  // Half-precision absorption: 1 + 2^-11 rounds to 1.0 in fp16, so the
  // cancellation against -1.0 loses the residual entirely.
  std::vector<double> c{1.0, -1.0}, d{1.0 + std::ldexp(1.0, -11), 1.0};
  CHECK(dot_accumulate(c, d, fp16(), fp16()) == 0.0);
  CHECK(dot_accumulate(c, d, fp64(), fp64()) == std::ldexp(1.0, -11));
}

TEST_CASE("accumulation stalls at the format's integer ceiling") {
  // In fp16 the running sum cannot advance past 2048 by unit increments
  // (ulp at 2048 is 2), so 4096 ones sum to exactly 2048.
  std::vector<double> ones(4096, 1.0);
  CHECK(sum_accumulate(ones, fp16()) == 2048.0);
  CHECK(sum_accumulate(ones, fp32()) == 4096.0);
  CHECK(sum_accumulate(ones, fp64()) == 4096.0);
}

TEST_CASE("dot_accumulate error vs compensated reference stays bounded") {
  Rng rng(7);
  const std::size_t n = 4096;
  std::vector<double> a(n), b(n);
  for (auto& x : a) x = rng.uniform(-1.0, 1.0);
  for (auto& x : b) x = rng.uniform(-1.0, 1.0);
  const double ref = compensated_dot(a, b);
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) abs_sum += std::fabs(a[i] * b[i]);

  const double got32 = dot_accumulate(a, b, fp32(), fp32());
  CHECK(std::fabs(got32 - ref) <= double(n) * machine_epsilon(fp32()) * abs_sum);
  const double got16 = dot_accumulate(a, b, fp16(), fp32());
  CHECK(std::fabs(got16 - ref) <= double(n) * machine_epsilon(fp16()) * abs_sum);
  // wider accumulator cannot be worse than same-width accumulation
  const double got16_16 = dot_accumulate(a, b, fp16(), fp16());
  CHECK(std::fabs(got16 - ref) <= std::fabs(got16_16 - ref) + 1e-6);
}

TEST_CASE("cast_tensor quantizes elementwise") {
  Rng rng(11);
  std::vector<double> v(500);
  for (auto& x : v) x = rng.uniform(-100.0, 100.0);
  const auto w = cast_tensor(v, bf16());
  double max_rel = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(same_bits(w[i], quantize(v[i], bf16())));
    if (v[i] != 0.0) max_rel = std::max(max_rel, std::fabs(w[i] - v[i]) / std::fabs(v[i]));
  }
  CHECK(max_rel <= std::ldexp(1.0, -8));  // half of bf16 epsilon
  auto u = v;
  cast_tensor_inplace(u, fp64());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(same_bits(u[i], v[i]));
}

TEST_CASE("precision policy parsing") {
  const auto p = PrecisionPolicy::parse("default=fp32,linear=bf16,acc=fp32");
  CHECK(p.default_format == fp32());
  CHECK(p.linear_format == bf16());
  CHECK(p.accumulation_format == fp32());
  CHECK(p.cast_at_block_boundaries);
  CHECK(PrecisionPolicy::parse(p.str()) == p);

  const auto q = PrecisionPolicy::parse("fp32");
  CHECK(q.default_format == fp32());
  CHECK(q.linear_format == fp32());
  CHECK(q.accumulation_format == fp32());

  // bare half-width names widen the accumulator to fp32
  const auto h = PrecisionPolicy::parse("fp16");
  CHECK(h.linear_format == fp16());
  CHECK(h.accumulation_format == fp32());

  const auto d = PrecisionPolicy::parse("fp64");
  CHECK(d.all_fp64());
  CHECK_FALSE(h.all_fp64());

  const auto c = PrecisionPolicy::parse("default=fp32,cast=0");
  CHECK_FALSE(c.cast_at_block_boundaries);
  CHECK(c.linear_format == fp32());

  CHECK_THROWS_AS(PrecisionPolicy::parse(""), ParseError);
  CHECK_THROWS_AS(PrecisionPolicy::parse("default=fp9"), ParseError);
  CHECK_THROWS_AS(PrecisionPolicy::parse("mode=fast"), ParseError);
  // accumulator narrower than the linear format is rejected
  CHECK_THROWS_AS(PrecisionPolicy::parse("default=fp32,linear=fp32,acc=fp16"), ParseError);
}

TEST_CASE("rng streams are reproducible and converters sane") {
  Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
  Rng c(123);
  double mean = 0.0, m2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = c.normal();
    mean += x;
    m2 += x * x;
  }
  mean /= n;
  const double var = m2 / n - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}
