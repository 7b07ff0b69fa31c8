#include "equiprec/geometry/neighbor.hpp"

#include <algorithm>
#include <cmath>

namespace equiprec::geometry {

namespace {

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

bool edge_less(const Edge& a, const Edge& b) {
  if (a.src != b.src) return a.src < b.src;
  // Geometric keys next so per-node traversal order survives relabeling of
  // the other atoms; indices only break exact-coincidence ties.
  if (a.dist != b.dist) return a.dist < b.dist;
  if (a.vec != b.vec) return a.vec < b.vec;
  if (a.dst != b.dst) return a.dst < b.dst;
  return a.shift < b.shift;
}

}  // namespace

NeighborList build_neighbor_list(const AtomicConfiguration& config, double r_max) {
  if (!(r_max > 0.0)) throw DomainError("build_neighbor_list: r_max must be positive");
  config.validate();
  const std::size_t n = config.size();

  // Image range per axis: enough shifts that every point within r_max of the
  // home cell is covered. h_d is the cell's perpendicular width along axis d.
  std::array<int, 3> reach{0, 0, 0};
  if (config.periodic()) {
    const double vol = std::fabs(det3(config.cell));
    for (int d = 0; d < 3; ++d) {
      if (!config.pbc[d]) continue;
      const Vec3 area = cross(config.cell[(d + 1) % 3], config.cell[(d + 2) % 3]);
      const double h = vol / norm(area);
      reach[d] = int(std::ceil(r_max / h));
    }
  }

  NeighborList nl;
  nl.r_max = r_max;
  const double r2 = r_max * r_max;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (int sa = -reach[0]; sa <= reach[0]; ++sa)
        for (int sb = -reach[1]; sb <= reach[1]; ++sb)
          for (int sc = -reach[2]; sc <= reach[2]; ++sc) {
            if (i == j && sa == 0 && sb == 0 && sc == 0) continue;
            Vec3 v;
            double d2 = 0.0;
            for (int d = 0; d < 3; ++d) {
              v[d] = config.positions[j][d] - config.positions[i][d] +
                     sa * config.cell[0][d] + sb * config.cell[1][d] +
                     sc * config.cell[2][d];
              d2 += v[d] * v[d];
            }
            if (d2 >= r2) continue;
            Edge e;
            e.src = std::int32_t(i);
            e.dst = std::int32_t(j);
            e.shift = {sa, sb, sc};
            e.vec = v;
            e.dist = std::sqrt(d2);
            nl.edges.push_back(e);
          }
    }
  }
  std::sort(nl.edges.begin(), nl.edges.end(), edge_less);

  nl.offsets.assign(n + 1, 0);
  for (const Edge& e : nl.edges) ++nl.offsets[std::size_t(e.src) + 1];
  for (std::size_t i = 0; i < n; ++i) nl.offsets[i + 1] += nl.offsets[i];
  return nl;
}

}  // namespace equiprec::geometry
