#pragma once

#include <string>
#include <vector>

#include "equiprec/errors.hpp"

namespace equiprec::so3 {

// One multiplicity block: mul copies of the degree-l representation with
// the given parity (+1 even "e", -1 odd "o").
struct Irrep {
  int mul = 0;
  int l = 0;
  int parity = 1;

  int ir_dim() const { return 2 * l + 1; }
  int block_dim() const { return mul * ir_dim(); }
  bool operator==(const Irrep& o) const {
    return mul == o.mul && l == o.l && parity == o.parity;
  }
};

// Ordered list of irrep blocks, e.g. "128x0e+128x1o".
struct Irreps {
  std::vector<Irrep> items;

  Irreps() = default;
  Irreps(std::initializer_list<Irrep> list) : items(list) {}

  static Irreps parse(const std::string& text);
  std::string str() const;

  int dim() const {
    int d = 0;
    for (const auto& ir : items) d += ir.block_dim();
    return d;
  }
  int lmax() const {
    int m = 0;
    for (const auto& ir : items) m = std::max(m, ir.l);
    return m;
  }
  std::size_t size() const { return items.size(); }
  const Irrep& operator[](std::size_t i) const { return items[i]; }

  // flat offset of block i within one node's feature vector
  int block_offset(std::size_t i) const;

  bool operator==(const Irreps& o) const { return items == o.items; }
};

// Allowed tensor-product paths (in1 x in2 -> out): triangle inequality on l
// and multiplicative parity. Sorted by (i_out, i_in1, i_in2).
struct TPPath {
  int i_in1 = 0, i_in2 = 0, i_out = 0;
  int l1 = 0, l2 = 0, l3 = 0;
};
std::vector<TPPath> enumerate_paths(const Irreps& in1, const Irreps& in2,
                                    const Irreps& out);

}  // namespace equiprec::so3
