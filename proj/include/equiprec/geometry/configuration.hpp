#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "equiprec/errors.hpp"

namespace equiprec::geometry {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // row vectors a, b, c

// One atomic structure: positions in angstrom, species by atomic number,
// optional periodic cell. cell rows are the lattice vectors; a zero cell
// together with all-false pbc denotes an isolated cluster.
struct AtomicConfiguration {
  std::vector<Vec3> positions;
  std::vector<int> atomic_numbers;
  Mat3 cell{{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};
  std::array<bool, 3> pbc{false, false, false};

  std::size_t size() const { return positions.size(); }
  bool periodic() const { return pbc[0] || pbc[1] || pbc[2]; }

  // Throws DimensionError on ragged arrays, ConfigurationError on a
  // singular cell with any periodic axis or on out-of-range species.
  void validate() const;

  double volume() const;  // |det cell|; requires a nonsingular cell
};

// Standard atomic weights in amu for Z = 1..54; out of range throws
// ConfigurationError.
double atomic_mass(int z);
const std::string& element_symbol(int z);
int element_number(const std::string& symbol);

double det3(const Mat3& m);

// Total mass / volume in g/cm^3 (requires a cell).
double mass_density_gcm3(const AtomicConfiguration& config);

inline constexpr double kAmuPerA3ToGcm3 = 1.66053906660;

}  // namespace equiprec::geometry
