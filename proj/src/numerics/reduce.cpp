#include "equiprec/numerics/reduce.hpp"

#include "equiprec/errors.hpp"

namespace equiprec::numerics {

double dot_accumulate(std::span<const double> a, std::span<const double> b,
                      const FloatFormat& compute_fmt, const FloatFormat& acc_fmt) {
  if (a.size() != b.size())
    throw DimensionError("dot_accumulate: length mismatch " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  if (compute_fmt.is_fp64 && acc_fmt.is_fp64) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = quantize(a[i] * b[i], compute_fmt);
    s = quantize(s + p, acc_fmt);
  }
  return s;
}

double sum_accumulate(std::span<const double> a, const FloatFormat& acc_fmt) {
  if (acc_fmt.is_fp64) {
    double s = 0.0;
    for (double x : a) s += x;
    return s;
  }
  double s = 0.0;
  for (double x : a) s = quantize(s + x, acc_fmt);
  return s;
}

void cast_tensor_inplace(std::vector<double>& data, const FloatFormat& fmt) {
  if (fmt.is_fp64) return;
  for (double& x : data) x = quantize(x, fmt);
}

std::vector<double> cast_tensor(std::vector<double> data, const FloatFormat& fmt) {
  cast_tensor_inplace(data, fmt);
  return data;
}

}  // namespace equiprec::numerics
