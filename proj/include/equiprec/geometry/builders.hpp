#pragma once

#include <cstdint>

#include "equiprec/geometry/configuration.hpp"

namespace equiprec::geometry {

// Carbon diamond conventional cell (a = 3.567 A, 8 atoms) tiled n^3 times;
// cubic periodic cell of edge n*a. Atom order: cells lexicographic in
// (i, j, k), then the 8 basis sites in a fixed order.
AtomicConfiguration diamond_supercell(int n);

// Two atoms on the z axis at the given separation, no cell.
AtomicConfiguration dimer(int z1, int z2, double separation);

// Copy with iid Gaussian displacements (std sigma, angstrom) on every
// coordinate. sigma = 0 returns the input bitwise.
AtomicConfiguration perturbed(const AtomicConfiguration& config, double sigma,
                              std::uint64_t seed);

// n_molecules rigid water monomers (O-H 0.9572 A, H-O-H 104.52 deg) at
// random positions/orientations in a cubic periodic box, rejection-sampled
// so no two oxygens come closer than min_oo. Atom order per molecule: O H H.
AtomicConfiguration water_box(int n_molecules, double box_length, std::uint64_t seed,
                              double min_oo = 2.6);

}  // namespace equiprec::geometry
