#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/metrics/metrics.hpp"
#include "equiprec/model/engine.hpp"
#include "equiprec/numerics/policy.hpp"
#include "equiprec/numerics/rng.hpp"

namespace equiprec::md {

// Unit system: length A, time fs, mass amu, energy eV, temperature K.
inline constexpr double kBoltzmannEvK = 8.617333262e-5;
// (eV/A)/amu -> A/fs^2; its inverse converts amu*A^2/fs^2 -> eV.
inline constexpr double kForceToAccel = 9.6485332123e-3;
inline constexpr double kEvPerA3ToBar = 1.602176634e6;
inline constexpr double kBulkModulusBar = 2.2e4;  // 2.2 GPa effective

// Potential interface: fills forces (eV/A) and returns E_pot (eV).
using EnergyForceFn = std::function<double(const geometry::AtomicConfiguration&,
                                           std::vector<geometry::Vec3>&)>;

// Adapter over the equivariant model under a fixed policy/backend.
EnergyForceFn model_force_field(const model::Model& m,
                                const numerics::PrecisionPolicy& policy,
                                model::Backend backend);

struct MDState {
  geometry::AtomicConfiguration config;    // wrapped positions
  std::vector<geometry::Vec3> unwrapped;   // integration shadow (for MSD)
  std::vector<geometry::Vec3> velocities;  // A/fs
  std::vector<double> masses;              // amu
  double time_fs = 0.0;
  long long step = 0;
  numerics::Rng rng{0};
  // cached force evaluation (one per integration step)
  std::vector<geometry::Vec3> forces;
  double epot = 0.0;
  bool forces_valid = false;
};

double kinetic_energy_ev(const MDState& state);
double kinetic_temperature_K(const MDState& state);

struct MDSpec {
  std::string ensemble = "nve";  // nve | nvt | npt
  double dt_fs = 1.0;
  double T_target_K = 300.0;
  double friction_per_fs = 0.1;         // nvt/npt
  double p_target_bar = 1.013;          // npt
  double pressure_coupling_fs = 100.0;  // npt
  long long steps = 0;
  long long log_every = 10;
  long long frame_every = 0;  // 0 -> no frame dumps
  std::uint64_t seed = 0;
  std::string out_dir;  // frame dumps land here when frame_every > 0

  // ConfigurationError on unknown ensemble, dt <= 0, friction < 0,
  // log_every < 1, or nonpositive coupling time.
  void validate() const;
};

// Maxwell-Boltzmann velocities at temperature T: per-component variance
// k_B T / m, net linear momentum removed, net angular momentum removed for
// non-periodic systems, then rescaled so the kinetic temperature equals T
// exactly. T = 0 gives zero velocities. DomainError on T < 0.
MDState maxwell_boltzmann_init(const geometry::AtomicConfiguration& config,
                               double T_K, std::uint64_t seed);

// Standard kick-drift-kick step; exactly one new force evaluation.
// IntegrationError on non-finite forces or any |F| component > 1e4 eV/A.
void velocity_verlet_step(MDState& state, const EnergyForceFn& ff, double dt_fs);

// BAOAB Langevin step; friction = 0 delegates to velocity_verlet_step so the
// degenerate limit is bitwise-exact. DomainError on friction < 0.
void langevin_step(MDState& state, const EnergyForceFn& ff, double dt_fs,
                   double T_target_K, double friction_per_fs);

// p = -dE/dV (central difference, relative volume step 1e-4, fixed
// fractional coordinates) + N k_B T_kin / V, in bar. ContractError unless
// the state is periodic along all three axes.
double numerical_pressure(const MDState& state, const EnergyForceFn& ff,
                          double rel_volume_step = 1e-4);

// Berendsen-like isotropic rescale by mu = (1 - (dt/tau)(p_target - p)/B)^(1/3),
// clamped to [0.99, 1.01]. ContractError without full PBC.
void barostat_step(MDState& state, double p_bar, double p_target_bar,
                   double coupling_fs, double dt_fs);

// Extended-XYZ frame writer (one frame per file).
void write_frame_xyz(const geometry::AtomicConfiguration& config,
                     const std::string& path, const std::string& comment);

// Integrates per the spec ensemble from a Maxwell-Boltzmann start and logs
// every log_every steps (step 0 always logged; steps = 0 -> single row).
// IntegrationError surfaces the step number and max |F|; when out_dir is
// set the aborting frame is dumped there first.
metrics::TrajectoryLog run_md(const MDSpec& spec,
                              const geometry::AtomicConfiguration& initial,
                              const EnergyForceFn& ff);

}  // namespace equiprec::md
