#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "equiprec/geometry/neighbor.hpp"
#include "equiprec/model/weights.hpp"
#include "equiprec/numerics/policy.hpp"
#include "equiprec/so3/tensor.hpp"

namespace equiprec::model {

// reference_per_path walks every edge and coupling path naively, recomputing
// the spherical harmonics and the radial MLP for each path. fused_batched
// evaluates them once per edge and runs precompiled sparse index plans. The
// arithmetic sequence feeding each output slot is identical, so the two
// backends agree bitwise under every precision policy.
enum class Backend { reference_per_path, fused_batched };

const char* backend_name(Backend b);
Backend backend_from_name(const std::string& name);

// Multiply-accumulate counts per pipeline stage plus per-layer activation
// element counts. Conventions (the counting model): spherical harmonics cost
// 3 MACs per component per edge; the edge coupling counts K(K+1) per dense
// (m1,m2,m3) triple (K for the channel mix, K for the coupled product); the
// node contraction counts one MAC per factor per sparse entry per channel;
// dense channel mixes count rows x cols.
struct CostCounters {
  bool enabled = false;
  long long sh_macs = 0;
  long long radial_macs = 0;
  long long edge_cg_macs = 0;
  long long node_tp_macs = 0;
  long long linear_macs = 0;
  long long a_elements = 0;  // one layer's A tensor, N*K*(l_max+1)^2
  long long b_elements = 0;  // one layer's B tensor
  long long m_elements = 0;  // one layer's message tensor
};

// First-layer tensors recorded during a forward pass so single blocks can be
// replayed later under a different precision policy with identical shapes.
struct BlockCapture {
  bool filled = false;
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::vector<int> species_idx;          // N
  std::vector<std::int32_t> edge_src;    // E
  std::vector<std::int32_t> edge_dst;    // E
  std::vector<double> edge_vec;          // E*3 (quantized model inputs)
  std::vector<double> edge_r;            // E
  std::vector<double> sh;                // E*(l_max+1)^2
  std::vector<double> bessel;            // E*n_bessel
  std::vector<double> radial;            // E*n_paths*K
  std::vector<double> h_in;              // N*in_dim
  std::vector<double> hu;                // N*in_dim
  std::vector<double> a;                 // N*a_dim, post neighbor normalization
  std::vector<double> a_mixed;           // N*a_dim
  std::vector<double> b;                 // N*K*b_row
  std::vector<double> msg;               // N*hidden_dim
  std::vector<double> h_out;             // N*hidden_dim
  std::vector<double> readout;           // N
};

struct EvalOptions {
  numerics::PrecisionPolicy policy;
  Backend backend = Backend::fused_batched;
  bool forces = false;
  bool weight_grads = false;
  double grad_seed = 1.0;  // seed of dE injected into the backward sweep
  bool count = false;
  bool keep_layer_features = false;
  BlockCapture* capture = nullptr;
  // when set, wall seconds are accumulated per pipeline stage (stage name,
  // seconds); repeated stages across layers accumulate into one entry
  std::vector<std::pair<std::string, double>>* stage_times = nullptr;
};

struct EvalResult {
  double energy = 0.0;
  std::vector<double> per_atom;
  std::vector<geometry::Vec3> forces;        // filled when opts.forces
  std::vector<double> weight_grads;          // dE/dw, weight-layout order
  CostCounters counters;
  std::vector<so3::EquivariantTensor> layer_features;  // h after each layer
};

struct Model {
  ModelConfig cfg;
  ModelPlan plan;
  ModelWeights weights;

  static Model create(const ModelConfig& cfg);

  EvalResult evaluate(const geometry::AtomicConfiguration& config,
                      const EvalOptions& opts) const;
};

// Spec-level convenience wrappers around Model::evaluate.
std::pair<double, std::vector<double>> forward_energy(
    const Model& model, const geometry::AtomicConfiguration& config,
    const numerics::PrecisionPolicy& policy,
    Backend backend = Backend::fused_batched);

std::vector<geometry::Vec3> compute_forces(
    const Model& model, const geometry::AtomicConfiguration& config,
    const numerics::PrecisionPolicy& policy,
    Backend backend = Backend::fused_batched);

// Central differences of forward_energy under native FP64, step h per
// coordinate: the independent oracle for compute_forces.
std::vector<geometry::Vec3> finite_difference_forces(
    const Model& model, const geometry::AtomicConfiguration& config, double h);

// Standalone block entry points used by the oracle tests. The node features
// must be mul_ir with the layer's input irreps; ContractError otherwise.
so3::EquivariantTensor edge_embedding_A(const Model& model,
                                        const geometry::AtomicConfiguration& config,
                                        const so3::EquivariantTensor& h, int layer,
                                        const numerics::PrecisionPolicy& policy,
                                        Backend backend);
std::vector<double> symmetric_contraction_B(const Model& model,
                                            const so3::EquivariantTensor& a_features,
                                            int layer,
                                            const numerics::PrecisionPolicy& policy);
so3::EquivariantTensor message_and_update(const Model& model,
                                          const std::vector<double>& b_features,
                                          const so3::EquivariantTensor& h_prev,
                                          const std::vector<int>& species_idx,
                                          int layer,
                                          const numerics::PrecisionPolicy& policy);

// Block replay for the benchmark harness: recomputes one block from the
// captured inputs under `policy`, with the same kernels as the forward pass.
// Valid ids: spherical_harmonics, radial_mlp, edge_embedding_A,
// symmetric_contraction_B, message_linear, update, readout.
const std::vector<std::string>& replayable_blocks();
std::vector<double> replay_block(const Model& model, const BlockCapture& cap,
                                 const std::string& block_id,
                                 const numerics::PrecisionPolicy& policy);
// Adjoint replay seeded with the surrogate-loss gradient dL/dx = 2x of the
// block's replayed output; returns the adjoint of the block's main input.
std::vector<double> replay_block_backward(const Model& model, const BlockCapture& cap,
                                          const std::string& block_id,
                                          const numerics::PrecisionPolicy& policy);

// Process-wide number of completed evaluations (ordering contract for the
// benchmark harness's determinism receipt).
long evaluation_count();

// Self-describing little-endian checkpoint container (config + named FP64
// weight arrays). Writes are atomic (temp file + rename).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace equiprec::model
