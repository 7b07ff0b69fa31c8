#include "equiprec/numerics/float_format.hpp"

namespace equiprec::numerics {

const FloatFormat& fp64() {
  static const FloatFormat f = FloatFormat::make("fp64", 11, 52, true);
  return f;
}

const FloatFormat& fp32() {
  static const FloatFormat f = FloatFormat::make("fp32", 8, 23, true);
  return f;
}

const FloatFormat& tf32() {
  static const FloatFormat f = FloatFormat::make("tf32", 8, 10, false);
  return f;
}

const FloatFormat& fp16() {
  static const FloatFormat f = FloatFormat::make("fp16", 5, 10, true);
  return f;
}

const FloatFormat& bf16() {
  static const FloatFormat f = FloatFormat::make("bf16", 8, 7, false);
  return f;
}

const FloatFormat& format_from_name(const std::string& name) {
  if (name == "fp64") return fp64();
  if (name == "fp32") return fp32();
  if (name == "tf32") return tf32();
  if (name == "fp16") return fp16();
  if (name == "bf16") return bf16();
  throw ParseError("unknown float format '" + name +
                   "' (expected fp64|fp32|tf32|fp16|bf16)");
}

}  // namespace equiprec::numerics
