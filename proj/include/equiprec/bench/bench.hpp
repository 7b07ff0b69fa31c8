#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/model/engine.hpp"

namespace equiprec::bench {

// FNV-1a over raw bytes; used for output fingerprints in reports/manifests.
std::uint64_t fnv1a(const void* data, std::size_t len);

// Process-wide determinism settings, echoed into every report.
struct DeterminismReceipt {
  bool active = false;
  std::uint64_t seed = 0;
  bool fixed_order_reductions = true;  // inherent engine property
  int threads = 1;                     // EQUIPREC_THREADS (recorded, engine is serial)
};

// Records the determinism settings for the process. Must run before the
// first model evaluation; ContractError afterwards.
DeterminismReceipt set_deterministic(std::uint64_t seed);
const DeterminismReceipt& determinism_receipt();

// Canonical test systems shared by the harness and the CLI.
struct SystemSpec {
  std::string kind = "diamond";  // diamond | water | dimer
  int supercell = 1;             // diamond: n^3 conventional cells
  int n_molecules = 8;           // water
  double box_length = 9.0;       // water box edge, angstrom
  double separation = 1.1;       // dimer spacing, angstrom
  double perturb_sigma = 0.0;    // gaussian jitter on every coordinate
  std::uint64_t seed = 0;

  geometry::AtomicConfiguration build() const;  // ConfigurationError on bad kind
  std::string describe() const;                 // stable one-line descriptor
};

struct BenchmarkSpec {
  int warmup_iters = 100;
  int timed_iters = 100;
  std::uint64_t seed = 42;
  model::Backend backend = model::Backend::fused_batched;
  numerics::PrecisionPolicy policy;
  model::ModelConfig cfg;
  SystemSpec system;
  int batch_size = 1;
  bool forces = false;
};

struct Summary {
  double mean_ns = 0, std_ns = 0, median_ns = 0, p95_ns = 0;
};

struct BenchmarkReport {
  int schema_version = 1;
  // spec echo
  std::string system;
  long long n_atoms = 0;
  std::string backend;
  std::string policy;
  std::uint64_t seed = 0;
  int warmup_iters = 0;
  int batch_size = 1;
  bool forces = false;
  // samples: timed window only (warm-up is discarded before statistics)
  std::vector<double> times_ns;
  Summary summary;
  int cov_reruns = 0;  // timed windows discarded by the variance gate
  std::vector<std::pair<std::string, double>> block_seconds;
  // numerical anchors for determinism checks
  double energy = 0.0;
  std::uint64_t output_hash = 0;
  // metadata
  std::string build_info;
  std::string timestamp;
  int threads = 1;
  DeterminismReceipt receipt;
};

// p in [0,1]; linear interpolation between order statistics.
double percentile(std::vector<double> samples, double p);
Summary summarize(const std::vector<double>& times_ns);

// Warm-up then timed forward (plus forces when requested) iterations on the
// spec's system; per-stage times attributed by the engine's scoped timers.
// One extra timed window is taken if the coefficient of variation of the
// first exceeds 20%.
BenchmarkReport run_inference_bench(const BenchmarkSpec& spec);

// Single-block replay benchmark: captures the block inputs on one FP64
// forward pass, replays under the spec policy (timed), and reports the
// discrepancy against the FP64 replay. Backward timing drives the replay
// adjoint under the mean-square dummy loss L(x) = sum(x^2) + 0.1.
struct BlockBenchResult {
  std::string block_id;
  BenchmarkReport forward;
  BenchmarkReport backward;
  double max_abs_err = 0.0;  // vs FP64 replay
  double max_rel_err = 0.0;  // stabilized by 1e-12
};
BlockBenchResult run_block_bench(const BenchmarkSpec& spec, const std::string& block_id);

// Mean-time ratio baseline/variant; ContractError when the two reports do
// not describe the same system and workload shape.
double compute_speedup(const BenchmarkReport& baseline, const BenchmarkReport& variant);

// The Eq. 3.1 surrogate and its gradient.
double dummy_loss(std::span<const double> x);
void dummy_loss_grad(std::span<const double> x, std::span<double> g);

// format: "json" or "csv". JSON mirrors the full report; CSV carries a
// summary block, the per-stage table, and one row per iteration.
void emit_report(const BenchmarkReport& report, const std::string& format,
                 const std::string& path);
BenchmarkReport parse_report_json(const std::string& path);

}  // namespace equiprec::bench
