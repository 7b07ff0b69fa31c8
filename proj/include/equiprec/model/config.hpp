#pragma once

#include <string>
#include <vector>

#include "equiprec/errors.hpp"
#include "equiprec/so3/irreps.hpp"

namespace equiprec::model {

// Architecture hyperparameters. Defaults are the canonical desk-scale
// configuration: r_max 6 A, 128 channels, edge order 3, message order 1
// (hidden features 128x0e+128x1o), correlation order 3, two layers, 8
// Bessel functions, quintic envelope, 16-wide nonlinear readout.
struct ModelConfig {
  double r_max = 6.0;
  int channels = 128;          // K
  int l_max = 3;               // edge spherical-harmonic order
  int message_l_max = 1;       // L_max of the hidden features
  int correlation = 3;         // nu, body order of the node contraction
  int n_bessel = 8;
  int envelope_p = 5;
  int num_layers = 2;
  int readout_hidden = 16;
  std::vector<int> radial_hidden{64, 64};
  std::vector<int> species;    // atomic numbers, order fixes the species index
  double avg_num_neighbors = 10.0;
  double scale = 1.0;          // energy scale s
  double shift = -500.0;       // per-atom energy offset (eV)
  std::uint64_t seed = 0;

  void validate() const;

  // K x 0e: the embedding output, input of the first layer.
  so3::Irreps input_irreps() const;
  // sum_L K x (L, (-1)^L) for L = 0..message_l_max.
  so3::Irreps hidden_irreps() const;
  // sum_l K x (l, (-1)^l) for l = 0..l_max: the edge-pooled A features.
  so3::Irreps a_irreps() const;
  // Y_0..Y_lmax with parity (-1)^l, multiplicity 1.
  so3::Irreps sh_irreps() const;
  // layer input: embedding output for t = 0, hidden features after.
  so3::Irreps layer_in_irreps(int layer) const;

  int species_index(int atomic_number) const;  // ContractError if absent
  int num_species() const { return int(species.size()); }
};

}  // namespace equiprec::model
