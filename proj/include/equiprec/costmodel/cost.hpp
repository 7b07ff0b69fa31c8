#pragma once

#include <array>
#include <vector>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/model/engine.hpp"

namespace equiprec::costmodel {

// Graph-level inputs of the analytic cost laws: atom count and the mean
// directed-neighbor count d_n = E / N.
struct GraphStats {
  long long n_atoms = 0;
  double avg_neighbors = 0.0;

  static GraphStats of(const geometry::AtomicConfiguration& config, double r_max);
};

// Proportionality constants in front of the asymptotic laws. The defaults
// are the exact counting conventions where the law has no slack (3 MACs per
// spherical-harmonic component); the others are meant to be calibrated.
struct CostConstants {
  double sh = 3.0;       // x d_n N (l_max+1)^2
  double radial = 1.0;   // x d_n N N_rad per layer
  double edge_cg = 1.0;  // x d_n N K^2 sum_paths (2l1+1)(2l2+1)(2l3+1)
  double node_tp = 1.0;  // x N K sum_L n_terms(L) (2L+1) per layer
};

// Predicted or measured cost of one full forward pass. MAC counts are kept
// as doubles (predictions carry calibrated constants); the activation
// element counts are integer-exact and layer-uniform, so they are reported
// per layer.
struct CostEstimate {
  double sh_macs = 0.0;
  double radial_macs = 0.0;
  double edge_cg_macs = 0.0;
  double node_tp_macs = 0.0;

  long long a_elements = 0;  // N * K * (l_max+1)^2
  long long b_elements = 0;  // N * K * sum_L n_terms(L) (2L+1)
  long long m_elements = 0;  // N * K * (message_l_max+1)^2

  std::array<long long, 3> a_shape{0, 0, 0};  // {N, K, (l_max+1)^2}
  std::array<long long, 3> b_shape{0, 0, 0};  // {N, K, contraction row dim}
  std::array<long long, 3> m_shape{0, 0, 0};  // {N, K, (message_l_max+1)^2}
};

// Analytic prediction from the config and graph statistics alone.
CostEstimate estimate_cost(const model::ModelConfig& cfg, const GraphStats& stats,
                           const CostConstants& constants = {});

// Exact counters from an instrumented fused-backend FP64 evaluation.
CostEstimate measure_cost(const model::Model& m,
                          const geometry::AtomicConfiguration& config);

// Repackages counters from an evaluation the caller already ran;
// ContractError when counting was not enabled for that run.
CostEstimate from_counters(const model::Model& m, const model::CostCounters& counters,
                           long long n_atoms);

// Least-squares fit (through the origin, per block) of the constants over a
// channel sweep on one system; every other hyperparameter comes from `base`.
CostConstants calibrate(model::ModelConfig base,
                        const geometry::AtomicConfiguration& system,
                        const std::vector<int>& channel_sweep = {8, 16, 32});

}  // namespace equiprec::costmodel
