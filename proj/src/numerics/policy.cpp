#include "equiprec/numerics/policy.hpp"

#include <sstream>

namespace equiprec::numerics {

namespace {

// Widen half-width accumulators: a bare "fp16" policy should not silently
// accumulate in fp16. The caller may still force acc=fp16 explicitly.
const FloatFormat& default_accumulator(const FloatFormat& def, const FloatFormat& lin) {
  const FloatFormat& wider = (def.mantissa_bits >= lin.mantissa_bits) ? def : lin;
  return (wider.mantissa_bits < fp32().mantissa_bits) ? fp32() : wider;
}

}  // namespace

PrecisionPolicy PrecisionPolicy::parse(const std::string& text) {
  PrecisionPolicy p;
  bool have_default = false, have_linear = false, have_acc = false;

  std::stringstream ss(text);
  std::string token;
  bool any = false;
  while (std::getline(ss, token, ',')) {
    // trim surrounding whitespace
    const auto b = token.find_first_not_of(" \t");
    const auto e = token.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    token = token.substr(b, e - b + 1);
    any = true;

    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      // bare format name applies to default and linear
      if (have_default || have_linear)
        throw ParseError("precision policy: bare format '" + token +
                         "' conflicts with earlier key=value pairs");
      p.default_format = format_from_name(token);
      p.linear_format = p.default_format;
      have_default = have_linear = true;
      continue;
    }
    const std::string key = token.substr(0, eq);
    const std::string val = token.substr(eq + 1);
    if (key == "default") {
      p.default_format = format_from_name(val);
      have_default = true;
    } else if (key == "linear") {
      p.linear_format = format_from_name(val);
      have_linear = true;
    } else if (key == "acc") {
      p.accumulation_format = format_from_name(val);
      have_acc = true;
    } else if (key == "cast") {
      if (val == "0" || val == "false")
        p.cast_at_block_boundaries = false;
      else if (val == "1" || val == "true")
        p.cast_at_block_boundaries = true;
      else
        throw ParseError("precision policy: cast expects 0|1, got '" + val + "'");
    } else {
      throw ParseError("precision policy: unknown key '" + key + "'");
    }
  }
  if (!any) throw ParseError("precision policy: empty specification");

  if (!have_linear) p.linear_format = p.default_format;
  if (!have_default && have_linear) p.default_format = fp32();
  if (!have_acc)
    p.accumulation_format = default_accumulator(p.default_format, p.linear_format);

  if (p.accumulation_format.mantissa_bits < p.linear_format.mantissa_bits)
    throw ParseError("precision policy: accumulation format " +
                     p.accumulation_format.name + " is narrower than linear format " +
                     p.linear_format.name);
  return p;
}

std::string PrecisionPolicy::str() const {
  std::string s = "default=" + default_format.name + ",linear=" + linear_format.name +
                  ",acc=" + accumulation_format.name;
  if (!cast_at_block_boundaries) s += ",cast=0";
  return s;
}

}  // namespace equiprec::numerics
