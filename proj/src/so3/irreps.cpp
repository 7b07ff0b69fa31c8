#include "equiprec/so3/irreps.hpp"

#include <algorithm>
#include <sstream>

namespace equiprec::so3 {

Irreps Irreps::parse(const std::string& text) {
  Irreps out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    const auto b = tok.find_first_not_of(" \t");
    const auto e = tok.find_last_not_of(" \t");
    if (b == std::string::npos) throw ParseError("irreps: empty term in '" + text + "'");
    tok = tok.substr(b, e - b + 1);

    const auto x = tok.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= tok.size())
      throw ParseError("irreps: expected '<mul>x<l><e|o>', got '" + tok + "'");
    Irrep ir;
    try {
      std::size_t used = 0;
      ir.mul = std::stoi(tok.substr(0, x), &used);
      if (used != x) throw ParseError("");
    } catch (...) {
      throw ParseError("irreps: bad multiplicity in '" + tok + "'");
    }
    const char par = tok.back();
    if (par == 'e')
      ir.parity = 1;
    else if (par == 'o')
      ir.parity = -1;
    else
      throw ParseError("irreps: parity must be 'e' or 'o' in '" + tok + "'");
    const std::string ls = tok.substr(x + 1, tok.size() - x - 2);
    try {
      std::size_t used = 0;
      ir.l = std::stoi(ls, &used);
      if (used != ls.size() || ls.empty()) throw ParseError("");
    } catch (...) {
      throw ParseError("irreps: bad degree in '" + tok + "'");
    }
    if (ir.mul < 1 || ir.l < 0)
      throw ParseError("irreps: need mul >= 1 and l >= 0 in '" + tok + "'");
    out.items.push_back(ir);
  }
  if (out.items.empty()) throw ParseError("irreps: empty specification");
  return out;
}

std::string Irreps::str() const {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += '+';
    s += std::to_string(items[i].mul) + 'x' + std::to_string(items[i].l) +
         (items[i].parity > 0 ? 'e' : 'o');
  }
  return s;
}

int Irreps::block_offset(std::size_t i) const {
  if (i >= items.size())
    throw DimensionError("irreps: block index " + std::to_string(i) + " out of range");
  int off = 0;
  for (std::size_t k = 0; k < i; ++k) off += items[k].block_dim();
  return off;
}

std::vector<TPPath> enumerate_paths(const Irreps& in1, const Irreps& in2,
                                    const Irreps& out) {
  std::vector<TPPath> paths;
  for (std::size_t o = 0; o < out.size(); ++o)
    for (std::size_t a = 0; a < in1.size(); ++a)
      for (std::size_t b = 0; b < in2.size(); ++b) {
        const Irrep &ir1 = in1[a], &ir2 = in2[b], &ir3 = out[o];
        if (ir3.l < std::abs(ir1.l - ir2.l) || ir3.l > ir1.l + ir2.l) continue;
        if (ir1.parity * ir2.parity != ir3.parity) continue;
        paths.push_back({int(a), int(b), int(o), ir1.l, ir2.l, ir3.l});
      }
  return paths;
}

}  // namespace equiprec::so3
