#include "equiprec/geometry/builders.hpp"

#include <cmath>

#include "equiprec/numerics/rng.hpp"

namespace equiprec::geometry {

AtomicConfiguration diamond_supercell(int n) {
  if (n < 1) throw DomainError("diamond_supercell: n must be >= 1");
  constexpr double a = 3.567;  // conventional lattice constant, angstrom
  // FCC sites plus the (1/4,1/4,1/4) basis, fractional coordinates.
  static const double basis[8][3] = {
      {0.00, 0.00, 0.00}, {0.00, 0.50, 0.50}, {0.50, 0.00, 0.50}, {0.50, 0.50, 0.00},
      {0.25, 0.25, 0.25}, {0.25, 0.75, 0.75}, {0.75, 0.25, 0.75}, {0.75, 0.75, 0.25},
  };
  AtomicConfiguration c;
  c.positions.reserve(std::size_t(8) * n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (const auto& b : basis) {
          c.positions.push_back({(i + b[0]) * a, (j + b[1]) * a, (k + b[2]) * a});
          c.atomic_numbers.push_back(6);
        }
  const double L = n * a;
  c.cell = {{{L, 0, 0}, {0, L, 0}, {0, 0, L}}};
  c.pbc = {true, true, true};
  return c;
}

AtomicConfiguration dimer(int z1, int z2, double separation) {
  AtomicConfiguration c;
  c.positions = {{0, 0, 0}, {0, 0, separation}};
  c.atomic_numbers = {z1, z2};
  c.validate();
  return c;
}

AtomicConfiguration perturbed(const AtomicConfiguration& config, double sigma,
                              std::uint64_t seed) {
  AtomicConfiguration c = config;
  if (sigma == 0.0) return c;
  numerics::Rng rng(seed);
  for (auto& p : c.positions)
    for (double& x : p) x += sigma * rng.normal();
  return c;
}

namespace {

// Rotation matrix from a uniformly random unit quaternion.
void random_rotation(numerics::Rng& rng, double R[3][3]) {
  double q[4];
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : q) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  R[0][0] = 1 - 2 * (y * y + z * z);
  R[0][1] = 2 * (x * y - w * z);
  R[0][2] = 2 * (x * z + w * y);
  R[1][0] = 2 * (x * y + w * z);
  R[1][1] = 1 - 2 * (x * x + z * z);
  R[1][2] = 2 * (y * z - w * x);
  R[2][0] = 2 * (x * z - w * y);
  R[2][1] = 2 * (y * z + w * x);
  R[2][2] = 1 - 2 * (x * x + y * y);
}

double min_image_dist(const Vec3& a, const Vec3& b, double L) {
  double s = 0.0;
  for (int d = 0; d < 3; ++d) {
    double dx = b[d] - a[d];
    dx -= L * std::round(dx / L);
    s += dx * dx;
  }
  return std::sqrt(s);
}

}  // namespace

AtomicConfiguration water_box(int n_molecules, double box_length, std::uint64_t seed,
                              double min_oo) {
  if (n_molecules < 1) throw DomainError("water_box: need at least one molecule");
  if (box_length <= 0) throw DomainError("water_box: box_length must be positive");
  numerics::Rng rng(seed);

  // Monomer in its local frame: O at origin, hydrogens in the xz plane.
  constexpr double r_oh = 0.9572;
  constexpr double theta = 104.52 * 3.14159265358979323846 / 180.0;
  const double sh = std::sin(theta / 2), ch = std::cos(theta / 2);
  const double local[3][3] = {
      {0, 0, 0}, {r_oh * sh, 0, r_oh * ch}, {-r_oh * sh, 0, r_oh * ch}};

  AtomicConfiguration c;
  c.cell = {{{box_length, 0, 0}, {0, box_length, 0}, {0, 0, box_length}}};
  c.pbc = {true, true, true};

  std::vector<Vec3> oxygens;
  const int max_attempts = 20000 * n_molecules;
  int attempts = 0;
  while (int(oxygens.size()) < n_molecules) {
    if (++attempts > max_attempts)
      throw ConfigurationError("water_box: cannot place " + std::to_string(n_molecules) +
                               " molecules with O-O >= " + std::to_string(min_oo) +
                               " in box " + std::to_string(box_length));
    Vec3 o{rng.uniform(0, box_length), rng.uniform(0, box_length),
           rng.uniform(0, box_length)};
    bool ok = true;
    for (const auto& prev : oxygens)
      if (min_image_dist(prev, o, box_length) < min_oo) {
        ok = false;
        break;
      }
    if (!ok) continue;
    oxygens.push_back(o);

    double R[3][3];
    random_rotation(rng, R);
    for (int atom = 0; atom < 3; ++atom) {
      Vec3 p;
      for (int d = 0; d < 3; ++d)
        p[d] = o[d] + R[d][0] * local[atom][0] + R[d][1] * local[atom][1] +
               R[d][2] * local[atom][2];
      c.positions.push_back(p);
      c.atomic_numbers.push_back(atom == 0 ? 8 : 1);
    }
  }
  c.validate();
  return c;
}

}  // namespace equiprec::geometry
