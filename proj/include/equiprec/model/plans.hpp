#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "equiprec/model/config.hpp"
#include "equiprec/so3/cg.hpp"
#include "equiprec/so3/irreps.hpp"

namespace equiprec::model {

// One retained (l1, l2, l3) coupling of the edge tensor product for a layer:
// input block l1, spherical-harmonic degree l2, output block l3 of the A
// features. Parity rule (-1)^(l1+l2) = (-1)^l3 plus the triangle inequality.
struct PathPlan {
  int block_in = 0;   // index into the layer input irreps
  int l1 = 0;
  int l2 = 0;
  int block_out = 0;  // index into the A irreps
  int l3 = 0;
  std::vector<so3::CGEntry> entries;  // nonzeros of the coupling tensor
  long dense_triples = 0;             // (2l1+1)(2l2+1)(2l3+1)
};

// One term of the node-local symmetric contraction targeting degree L:
// a product of `degrees.size()` copies of the mixed A features at the
// listed degrees, contracted with precomputed generalized coefficients.
struct ContractionTerm {
  std::vector<int> degrees;  // ascending, 1..correlation entries
  int inter_l = -1;          // intermediate coupling degree for 3 factors

  struct Entry {
    std::array<std::int8_t, 3> m{0, 0, 0};  // m of factor xi (unused -> 0)
    std::int8_t big_m = 0;                  // output M, -L..L
    double c = 0.0;
  };
  std::vector<Entry> entries;
};

// All contraction terms for one output degree, in canonical order
// (factor count ascending, degree tuple lexicographic, intermediate l
// ascending). Shared by every layer.
struct ContractionPlan {
  int L = 0;
  std::vector<ContractionTerm> terms;
};

struct LayerPlan {
  so3::Irreps in_irreps;
  std::vector<PathPlan> paths;
  long dense_triples_total = 0;  // sum over paths
};

// Everything derivable from the config that the engine precomputes once:
// per-layer path lists, shared contraction plans, irreps bookkeeping.
struct ModelPlan {
  ModelConfig cfg;
  so3::Irreps sh_irreps, a_irreps, hidden_irreps;
  std::vector<LayerPlan> layers;
  std::vector<ContractionPlan> contractions;  // index = L, 0..message_l_max

  int n_paths(int layer) const { return int(layers[std::size_t(layer)].paths.size()); }
  int n_terms(int L) const { return int(contractions[std::size_t(L)].terms.size()); }
  // flat size of one node's contraction output: sum_L n_terms(L) * (2L+1)
  int b_row_dim_per_channel() const;
  // offset of (L, term, M) within that flat row
  int b_offset(int L, int term, int m) const;

  static ModelPlan build(const ModelConfig& cfg);
};

}  // namespace equiprec::model
