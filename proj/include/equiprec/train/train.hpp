#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/model/engine.hpp"
#include "equiprec/numerics/policy.hpp"

namespace equiprec::train {

// Toy training loop probing weight sensitivity to reduced precision:
// FP32 master weights, compute copies re-quantized under the run policy,
// dynamic loss scaling, and a weighted energy+force loss.

struct TrainConfig {
  double lr = 0.02;
  int epochs = 50;
  int batch_size = 8;
  double w_e = 1.0;    // energy loss weight
  double w_f = 100.0;  // force loss weight (force-dominant)
  numerics::PrecisionPolicy policy;
  bool dynamic_loss_scaling = true;
  double init_scale = 65536.0;  // 2^16
  double scale_backoff = 0.5;   // on overflow
  double scale_growth = 2.0;    // after a clean streak
  int scale_growth_interval = 200;
  double momentum = 0.9;
  // Displacement (Angstrom) of the curvature probe behind the force-loss
  // gradient; see loss_gradient.
  double hvp_step = 0.01;
  std::uint64_t seed = 0;

  void validate() const;  // DomainError on any nonpositive knob
};

// One supervised structure: geometry plus reference energy and forces.
struct LabeledStructure {
  geometry::AtomicConfiguration config;
  double energy = 0.0;
  std::vector<geometry::Vec3> forces;
};

// Lennard-Jones labeling oracle over fixed per-element parameters with
// Lorentz-Berthelot mixing. Returns the total energy and fills forces.
double lj_reference(const geometry::AtomicConfiguration& config,
                    std::vector<geometry::Vec3>& forces);

// Random small clusters (3-12 atoms, 1-2 species) labeled by lj_reference;
// deterministic per seed. The only kind is "lj_clusters";
// ConfigurationError otherwise, DomainError for count < 1.
std::vector<LabeledStructure> synthetic_dataset(const std::string& kind, int count,
                                                std::uint64_t seed);

// w_e * (E_pred - E_ref)^2 / N^2 + w_f * (1/3N) sum |F_pred - F_ref|^2
// for a single structure; DimensionError on force shape mismatch or N = 0.
double structure_loss(double e_pred, std::span<const geometry::Vec3> f_pred,
                      double e_ref, std::span<const geometry::Vec3> f_ref,
                      double w_e, double w_f);

// Optimizer state. Masters live on the FP32 grid except under an all-FP64
// policy, where the run doubles as the exact-arithmetic reference and
// masters stay native double.
struct TrainState {
  std::vector<double> master;
  std::vector<double> velocity;
  double scale = 1.0;
  long long step = 0;
  long long clean_streak = 0;
  long long overflow_events = 0;
  long long growth_events = 0;
};

TrainState init_train_state(const model::Model& m, const TrainConfig& cfg);

// Gradient of the mean batch loss w.r.t. the weights, premultiplied by
// `scale` (the loss-scaling seed rides the backward sweep, so overflow
// happens inside the emulated formats where it belongs). The energy term
// uses the model's reverse-mode weight adjoints directly; the force term
// d/dw (1/3N)|F - F_ref|^2 needs d^2E/dr dw and is formed as a central
// difference of the weight gradient along the force-residual direction
// (step hvp_step). Returns false as soon as any evaluated quantity is
// non-finite; grad is then unusable. loss_out is the unscaled batch loss.
bool loss_gradient(const model::Model& m, std::span<const LabeledStructure> batch,
                   const numerics::PrecisionPolicy& policy, double scale, double w_e,
                   double w_f, double hvp_step, double& loss_out,
                   std::vector<double>& grad);

// What one optimizer step did.
struct StepResult {
  double loss = 0.0;      // unscaled mean batch loss (reported even on skip)
  bool overflow = false;  // non-finite scaled gradient: update skipped
  bool grew = false;      // clean-streak growth fired this step
  double scale_after = 1.0;
};

// One SGD-with-momentum step on the master weights. The model's compute
// weights are re-quantized from the masters before evaluation; gradients
// are unscaled and the update runs on the master grid. Non-finite master
// after the update -> TrainingError.
StepResult train_step(model::Model& m, TrainState& st,
                      std::span<const LabeledStructure> batch, const TrainConfig& cfg);

// One row of the standard error table.
struct RmseRow {
  double rmse_e_mev_atom = 0.0;
  double rmse_f_mev_a = 0.0;
  double rel_f_percent = 0.0;
};

// Dataset RMSE of the model under `policy`; ContractError on empty data.
RmseRow evaluate_rmse(const model::Model& m, std::span<const LabeledStructure> data,
                      const numerics::PrecisionPolicy& policy);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  RmseRow val;
  double best_val_f = 0.0;  // running minimum of val.rmse_f_mev_a
  double scale = 1.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  RmseRow initial_val;  // before the first update
  double best_val_f = 0.0;
  int best_epoch = -1;  // -1 when no epoch improved on the initial weights
  TrainState state;     // final optimizer state
};

// Full loop: shuffled batches per epoch (seeded), one validation row per
// epoch, best-so-far bookkeeping. The model is left holding the final
// master weights.
TrainResult run_training(model::Model& m, const std::vector<LabeledStructure>& train_set,
                         const std::vector<LabeledStructure>& val_set,
                         const TrainConfig& cfg);

}  // namespace equiprec::train
