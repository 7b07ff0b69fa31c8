#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "equiprec/numerics/policy.hpp"

namespace equiprec::numerics {

// Fixed chunk length recorded in determinism receipts. Reductions are
// evaluated sequentially left to right; the constant documents the unit a
// parallel build would split on so results stay bit-stable across runs.
inline constexpr std::size_t kReductionChunk = 4096;

// Dot product with emulated rounding: each product is rounded to compute_fmt
// and the running sum is rounded to acc_fmt after every add, left to right.
// With both formats FP64 this is bit-identical to the native double loop.
// Throws DimensionError on length mismatch; empty inputs give 0.0.
double dot_accumulate(std::span<const double> a, std::span<const double> b,
                      const FloatFormat& compute_fmt, const FloatFormat& acc_fmt);

// Elementwise quantization of a buffer.
void cast_tensor_inplace(std::vector<double>& data, const FloatFormat& fmt);
std::vector<double> cast_tensor(std::vector<double> data, const FloatFormat& fmt);

// Sum with the running total rounded to acc_fmt after every add.
double sum_accumulate(std::span<const double> a, const FloatFormat& acc_fmt);

}  // namespace equiprec::numerics
