#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "equiprec/geometry/configuration.hpp"

namespace equiprec::metrics {

// Stabilizer added to every relative-error denominator.
inline constexpr double kEpsStab = 1e-12;

// amu/A^3 -> g/cm^3 (same constant the geometry helpers use).
inline constexpr double kDensityConv = geometry::kAmuPerA3ToGcm3;

// |dE|/N and |dE|/(|E_ref|+eps). N_atoms >= 1 or DomainError.
std::pair<double, double> energy_errors(double e_ref, double e_test, int n_atoms);

// (1/N) sum_a |df_a|_2 and Frobenius-norm ratio with the stabilizer.
// DimensionError on shape mismatch or empty arrays.
std::pair<double, double> force_errors(std::span<const geometry::Vec3> f_ref,
                                       std::span<const geometry::Vec3> f_test);

// One reference/test prediction for a single structure.
struct PredictionPair {
  double energy_ref = 0.0;
  double energy_test = 0.0;
  std::vector<geometry::Vec3> forces_ref;
  std::vector<geometry::Vec3> forces_test;
};

struct SeriesStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;
};

// Per-structure error series plus dataset aggregates.
struct ErrorReport {
  std::vector<double> ae_e, rae_e, ae_f, rae_f;
  SeriesStats ae_e_stats, rae_e_stats, ae_f_stats, rae_f_stats;
  long long n_structures = 0;
  long long n_atoms_total = 0;
};

// ContractError on an empty dataset or a structure without atoms.
ErrorReport error_report(const std::vector<PredictionPair>& pairs);

// Root-mean-square over structures of the per-atom energy error, in meV/atom.
double rmse_energy_per_atom(const std::vector<PredictionPair>& pairs);

struct ForceRmse {
  double mev_per_angstrom = 0.0;
  double rel_percent = 0.0;  // RMSE / RMS of reference components * 100
};
ForceRmse rmse_forces(const std::vector<PredictionPair>& pairs);

// One logged observable row; the CSV column order is fixed.
struct TrajectoryRow {
  long long step = 0;
  double time_fs = 0.0;
  double T_K = 0.0;
  double rho_gcm3 = 0.0;
  double p_bar = 0.0;
  double Epot_eV = 0.0;
  double msd_A2 = 0.0;
  double drift_A = 0.0;
};

struct TrajectoryLog {
  std::vector<TrajectoryRow> rows;
};

// Schema: step, time_fs, T_K, rho_gcm3, p_bar, Epot_eV, msd_A2, drift_A.
void write_trajectory_csv(const TrajectoryLog& log, const std::string& path);
TrajectoryLog read_trajectory_csv(const std::string& path);

struct ObservableTargets {
  double T_K = 0.0;
  double rho_gcm3 = 0.0;
  double p_bar = 0.0;
};

// Means/stds over the log (population convention) plus biases vs targets.
struct ObservableSummary {
  double T_mean = 0, T_std = 0;
  double rho_mean = 0, rho_std = 0;
  double p_mean = 0, p_std = 0;
  double epot_mean = 0, epot_std = 0;
  double dT_vs_target = 0;           // T_mean - T_target
  double dp_vs_target = 0;           // p_mean - p_target
  double rho_abs_dev_p95 = 0;        // P95 of |rho(t) - rho_target|
  long long n_rows = 0;
};
ObservableSummary trajectory_observables(const TrajectoryLog& log,
                                         const ObservableTargets& targets);

// MSD(t) = (1/N) sum_i |r_i(t) - r_i(0)|^2 over unwrapped frames.
// ContractError on fewer than 2 frames or atom-count drift.
std::vector<double> msd(const std::vector<std::vector<geometry::Vec3>>& unwrapped);

// Pair-correlation histogram, ideal-gas normalized, averaged over frames.
struct RdfSpec {
  int z_a = 0;        // central species (atomic number)
  int z_b = 0;        // partner species
  double r_max = 5.0;
  int bins = 50;
};
struct RdfResult {
  std::vector<double> r_centers;
  std::vector<double> g;
  double coordination = 0.0;  // mean partners within r_max per central atom
};
// reference carries species/cell/pbc; frames carry wrapped positions.
// ContractError without a fully periodic cell or with no frames;
// DomainError on bins < 1 or r_max <= 0.
RdfResult rdf(const geometry::AtomicConfiguration& reference,
              const std::vector<std::vector<geometry::Vec3>>& frames,
              const RdfSpec& spec);

// Mass-weighted |R_com(t) - R_com(0)| per frame, in angstrom.
std::vector<double> com_drift(const std::vector<std::vector<geometry::Vec3>>& unwrapped,
                              const std::vector<double>& masses);

}  // namespace equiprec::metrics
