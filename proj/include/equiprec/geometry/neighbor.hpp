#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "equiprec/geometry/configuration.hpp"

namespace equiprec::geometry {

// Directed edge src -> dst. vec points from src to the (possibly shifted)
// image of dst: vec = pos[dst] + shift . cell - pos[src], |vec| = dist.
struct Edge {
  std::int32_t src = 0;
  std::int32_t dst = 0;
  std::array<std::int32_t, 3> shift{0, 0, 0};
  Vec3 vec{0, 0, 0};
  double dist = 0.0;
};

// Directed neighbor list in CSR form: edges are sorted by
// (src, dist, vec, dst, shift). The geometric keys make per-node traversal
// order independent of how the other atoms are numbered, which is what lets
// downstream fixed-order reductions stay bitwise stable under relabeling.
// offsets[i]..offsets[i+1] index the edges leaving node i.
struct NeighborList {
  double r_max = 0.0;
  std::vector<Edge> edges;
  std::vector<std::size_t> offsets;  // size N+1

  std::size_t num_edges() const { return edges.size(); }
};

// All directed pairs with distance < r_max (strict). Periodic axes are
// handled by enumerating as many image shifts as the cell's perpendicular
// widths require, so boxes smaller than 2 r_max (including self-image
// pairs i == j with nonzero shift) are exact. Throws DomainError on
// non-positive r_max; validates the configuration.
NeighborList build_neighbor_list(const AtomicConfiguration& config, double r_max);

}  // namespace equiprec::geometry
