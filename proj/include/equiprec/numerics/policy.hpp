#pragma once

#include <string>

#include "equiprec/numerics/float_format.hpp"

namespace equiprec::numerics {

// Per-run precision selection. default_format covers elementwise and tensor
// algebra, linear_format covers dense channel-mixing matmuls (including the
// radial MLP), accumulation_format is the running-sum format for reductions.
struct PrecisionPolicy {
  FloatFormat default_format = fp64();
  FloatFormat linear_format = fp64();
  FloatFormat accumulation_format = fp64();
  bool cast_at_block_boundaries = true;

  // Accepts either a bare format name ("fp32", applied to default and
  // linear, with accumulation widened to at least fp32) or a comma list of
  // key=value pairs: "default=fp32,linear=bf16,acc=fp32". Unset keys fall
  // back as above. An optional "cast=0|1" pair toggles boundary casts.
  static PrecisionPolicy parse(const std::string& text);

  std::string str() const;

  bool all_fp64() const {
    return default_format.is_fp64 && linear_format.is_fp64 &&
           accumulation_format.is_fp64;
  }

  bool operator==(const PrecisionPolicy& o) const {
    return default_format == o.default_format && linear_format == o.linear_format &&
           accumulation_format == o.accumulation_format &&
           cast_at_block_boundaries == o.cast_at_block_boundaries;
  }
};

// Arithmetic helpers bound to one policy. Every product is rounded to the
// chosen compute format and every running sum to the accumulation format;
// the all-fp64 fast path is the identity and keeps native double semantics.
struct QOps {
  FloatFormat def, lin, acc;
  bool fast = true;

  QOps() : def(fp64()), lin(fp64()), acc(fp64()) {}
  explicit QOps(const PrecisionPolicy& p)
      : def(p.default_format), lin(p.linear_format), acc(p.accumulation_format),
        fast(p.all_fp64()) {}

  double q(double x) const { return fast ? x : quantize(x, def); }
  double ql(double x) const { return fast ? x : quantize(x, lin); }
  double qa(double x) const { return fast ? x : quantize(x, acc); }
  // default-format multiply / accumulate step
  double mul(double a, double b) const { return fast ? a * b : quantize(a * b, def); }
  double fma(double s, double a, double b) const {
    return fast ? s + a * b : quantize(s + quantize(a * b, def), acc);
  }
  // linear-format multiply / accumulate step (channel mixes)
  double lmul(double a, double b) const { return fast ? a * b : quantize(a * b, lin); }
  double lfma(double s, double a, double b) const {
    return fast ? s + a * b : quantize(s + quantize(a * b, lin), acc);
  }
  double add(double a, double b) const { return fast ? a + b : quantize(a + b, acc); }
};

}  // namespace equiprec::numerics
