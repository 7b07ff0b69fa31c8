#pragma once

#include <vector>

#include "equiprec/errors.hpp"

namespace equiprec::so3 {

struct CGEntry {
  int m1 = 0, m2 = 0, m3 = 0;
  double v = 0.0;
};

// Real-basis coupling tensor for l1 x l2 -> l3, same convention as the
// real harmonics elsewhere (m = -l..l, no Condon-Shortley). Orthogonality
// holds componentwise: sum_{m1,m2} C[m1,m2,m3] C[m1,m2,m3'] = delta.
struct CGTensor {
  int l1 = 0, l2 = 0, l3 = 0;
  std::vector<double> dense;     // [(2l1+1)][(2l2+1)][(2l3+1)], row-major
  std::vector<CGEntry> sparse;   // nonzeros, lexicographic (m1, m2, m3)

  double at(int m1, int m2, int m3) const {
    return dense[std::size_t(((m1 + l1) * (2 * l2 + 1) + (m2 + l2)) * (2 * l3 + 1) +
                             (m3 + l3))];
  }
};

inline bool triangle_ok(int l1, int l2, int l3) {
  return l3 >= std::abs(l1 - l2) && l3 <= l1 + l2;
}

// Cached; throws DomainError if the triangle inequality fails or any l > 6
// (the factorial arithmetic is exact in double up to there).
const CGTensor& clebsch_gordan(int l1, int l2, int l3);

// Complex-basis coefficient <l1 m1 l2 m2 | l3 m3> (Racah's formula),
// exposed for the unit tests' cross checks.
double clebsch_gordan_complex(int l1, int m1, int l2, int m2, int l3, int m3);

}  // namespace equiprec::so3
