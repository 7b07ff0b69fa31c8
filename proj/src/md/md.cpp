#include "equiprec/md/md.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "equiprec/errors.hpp"

namespace equiprec::md {

namespace {

geometry::Vec3 cross(const geometry::Vec3& a, const geometry::Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

bool fully_periodic(const geometry::AtomicConfiguration& c) {
  return c.pbc[0] && c.pbc[1] && c.pbc[2];
}

// Solve A x = b for symmetric 3x3 A by Gaussian elimination with partial
// pivoting; near-zero pivots (degenerate inertia axes, e.g. a linear
// molecule) zero the corresponding solution component.
std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> a,
                             std::array<double, 3> b) {
  double scale = 0.0;
  for (const auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  const double tol = 1e-10 * std::max(scale, 1.0);
  std::array<int, 3> perm{0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[std::size_t(r)][std::size_t(col)]) >
          std::abs(a[std::size_t(piv)][std::size_t(col)]))
        piv = r;
    std::swap(a[std::size_t(col)], a[std::size_t(piv)]);
    std::swap(b[std::size_t(col)], b[std::size_t(piv)]);
    std::swap(perm[std::size_t(col)], perm[std::size_t(piv)]);
    const double p = a[std::size_t(col)][std::size_t(col)];
    if (std::abs(p) < tol) {
      a[std::size_t(col)] = {0, 0, 0};
      b[std::size_t(col)] = 0.0;
      continue;
    }
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[std::size_t(r)][std::size_t(col)] / p;
      for (int c = col; c < 3; ++c)
        a[std::size_t(r)][std::size_t(c)] -= f * a[std::size_t(col)][std::size_t(c)];
      b[std::size_t(r)] -= f * b[std::size_t(col)];
    }
  }
  std::array<double, 3> x{0, 0, 0};
  for (int r = 2; r >= 0; --r) {
    const double p = a[std::size_t(r)][std::size_t(r)];
    if (std::abs(p) < tol) {
      x[std::size_t(r)] = 0.0;
      continue;
    }
    double rhs = b[std::size_t(r)];
    for (int c = r + 1; c < 3; ++c)
      rhs -= a[std::size_t(r)][std::size_t(c)] * x[std::size_t(c)];
    x[std::size_t(r)] = rhs / p;
  }
  return x;
}

// 3x3 inverse of the transposed cell for cartesian -> fractional.
std::array<std::array<double, 3>, 3> cell_t_inverse(const geometry::Mat3& cell) {
  // m = cell^T (columns are lattice vectors)
  std::array<std::array<double, 3>, 3> m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      m[std::size_t(i)][std::size_t(j)] = cell[std::size_t(j)][std::size_t(i)];
  const double det =
      m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
      m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
      m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-14)
    throw ConfigurationError("md: singular cell");
  std::array<std::array<double, 3>, 3> inv;
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

// Wrap positions into the cell along periodic axes. Unwrapped copies are
// untouched, so unwrapped - wrapped stays an integer lattice combination.
void wrap_positions(geometry::AtomicConfiguration& c) {
  if (!c.pbc[0] && !c.pbc[1] && !c.pbc[2]) return;
  const auto inv = cell_t_inverse(c.cell);
  for (auto& r : c.positions) {
    std::array<double, 3> f{};
    for (int i = 0; i < 3; ++i)
      f[std::size_t(i)] = inv[std::size_t(i)][0] * r[0] +
                          inv[std::size_t(i)][1] * r[1] +
                          inv[std::size_t(i)][2] * r[2];
    for (int i = 0; i < 3; ++i)
      if (c.pbc[std::size_t(i)])
        f[std::size_t(i)] -= std::floor(f[std::size_t(i)]);
    for (int k = 0; k < 3; ++k)
      r[std::size_t(k)] = f[0] * c.cell[0][std::size_t(k)] +
                          f[1] * c.cell[1][std::size_t(k)] +
                          f[2] * c.cell[2][std::size_t(k)];
  }
}

// One cached force evaluation; aborts on non-finite or exploding forces.
void refresh_forces(MDState& state, const EnergyForceFn& ff) {
  state.epot = ff(state.config, state.forces);
  double fmax = 0.0;
  bool finite = std::isfinite(state.epot);
  for (const auto& f : state.forces)
    for (double v : f) {
      finite = finite && std::isfinite(v);
      fmax = std::max(fmax, std::abs(v));
    }
  if (!finite || fmax > 1e4)
    throw IntegrationError(
        "md: integration aborted at step " + std::to_string(state.step) +
        ": max |F| = " + (finite ? std::to_string(fmax) : "non-finite") +
        " eV/A");
  state.forces_valid = true;
}

void ensure_forces(MDState& state, const EnergyForceFn& ff) {
  if (!state.forces_valid) refresh_forces(state, ff);
}

geometry::Vec3 com_of(const std::vector<geometry::Vec3>& pos,
                      const std::vector<double>& masses, double total) {
  geometry::Vec3 c{0, 0, 0};
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (int k = 0; k < 3; ++k) c[std::size_t(k)] += masses[i] * pos[i][std::size_t(k)];
  for (int k = 0; k < 3; ++k) c[std::size_t(k)] /= total;
  return c;
}

}  // namespace

EnergyForceFn model_force_field(const model::Model& m,
                                const numerics::PrecisionPolicy& policy,
                                model::Backend backend) {
  return [&m, policy, backend](const geometry::AtomicConfiguration& config,
                               std::vector<geometry::Vec3>& forces) {
    model::EvalOptions opts;
    opts.policy = policy;
    opts.backend = backend;
    opts.forces = true;
    const model::EvalResult r = m.evaluate(config, opts);
    forces = r.forces;
    return r.energy;
  };
}

double kinetic_energy_ev(const MDState& state) {
  double acc = 0.0;
  for (std::size_t i = 0; i < state.velocities.size(); ++i)
    for (double v : state.velocities[i]) acc += state.masses[i] * v * v;
  return 0.5 * acc / kForceToAccel;
}

double kinetic_temperature_K(const MDState& state) {
  const std::size_t n = state.velocities.size();
  if (n == 0) return 0.0;
  return 2.0 * kinetic_energy_ev(state) / (3.0 * double(n) * kBoltzmannEvK);
}

void MDSpec::validate() const {
  if (ensemble != "nve" && ensemble != "nvt" && ensemble != "npt")
    throw ConfigurationError("md: unknown ensemble " + ensemble);
  if (!(dt_fs > 0.0)) throw ConfigurationError("md: dt must be positive");
  if (friction_per_fs < 0.0)
    throw ConfigurationError("md: friction must be nonnegative");
  if (log_every < 1) throw ConfigurationError("md: log_every must be >= 1");
  if (ensemble == "npt" && !(pressure_coupling_fs > 0.0))
    throw ConfigurationError("md: pressure coupling time must be positive");
  if (steps < 0) throw ConfigurationError("md: steps must be nonnegative");
  if (frame_every < 0)
    throw ConfigurationError("md: frame_every must be nonnegative");
}

MDState maxwell_boltzmann_init(const geometry::AtomicConfiguration& config,
                               double T_K, std::uint64_t seed) {
  if (T_K < 0.0) throw DomainError("maxwell_boltzmann_init: negative T");
  config.validate();
  MDState state;
  state.config = config;
  state.unwrapped = config.positions;
  state.rng = numerics::Rng(seed);
  state.masses.reserve(config.size());
  for (int z : config.atomic_numbers)
    state.masses.push_back(geometry::atomic_mass(z));
  state.velocities.assign(config.size(), {0, 0, 0});
  if (T_K == 0.0 || config.size() == 0) return state;

  for (std::size_t i = 0; i < config.size(); ++i) {
    const double sigma =
        std::sqrt(kBoltzmannEvK * T_K * kForceToAccel / state.masses[i]);
    for (int k = 0; k < 3; ++k)
      state.velocities[i][std::size_t(k)] = sigma * state.rng.normal();
  }

  double total_mass = 0.0;
  for (double m : state.masses) total_mass += m;

  // remove net linear momentum
  geometry::Vec3 vcom{0, 0, 0};
  for (std::size_t i = 0; i < config.size(); ++i)
    for (int k = 0; k < 3; ++k)
      vcom[std::size_t(k)] += state.masses[i] * state.velocities[i][std::size_t(k)];
  for (int k = 0; k < 3; ++k) vcom[std::size_t(k)] /= total_mass;
  for (auto& v : state.velocities)
    for (int k = 0; k < 3; ++k) v[std::size_t(k)] -= vcom[std::size_t(k)];

  // remove net angular momentum about the COM for isolated systems
  if (!state.config.periodic() && config.size() > 1) {
    const geometry::Vec3 rcom = com_of(config.positions, state.masses, total_mass);
    geometry::Vec3 L{0, 0, 0};
    std::array<std::array<double, 3>, 3> inertia{};
    for (std::size_t i = 0; i < config.size(); ++i) {
      geometry::Vec3 r;
      for (int k = 0; k < 3; ++k)
        r[std::size_t(k)] = config.positions[i][std::size_t(k)] - rcom[std::size_t(k)];
      const geometry::Vec3 l = cross(r, state.velocities[i]);
      for (int k = 0; k < 3; ++k) L[std::size_t(k)] += state.masses[i] * l[std::size_t(k)];
      const double r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          inertia[std::size_t(a)][std::size_t(b)] +=
              state.masses[i] *
              ((a == b ? r2 : 0.0) - r[std::size_t(a)] * r[std::size_t(b)]);
    }
    const std::array<double, 3> omega = solve3(inertia, {L[0], L[1], L[2]});
    for (std::size_t i = 0; i < config.size(); ++i) {
      geometry::Vec3 r;
      for (int k = 0; k < 3; ++k)
        r[std::size_t(k)] = config.positions[i][std::size_t(k)] - rcom[std::size_t(k)];
      const geometry::Vec3 w = cross({omega[0], omega[1], omega[2]}, r);
      for (int k = 0; k < 3; ++k) state.velocities[i][std::size_t(k)] -= w[std::size_t(k)];
    }
  }

  // exact-temperature rescale after the projections
  const double T_now = kinetic_temperature_K(state);
  if (T_now > 0.0) {
    const double s = std::sqrt(T_K / T_now);
    for (auto& v : state.velocities)
      for (int k = 0; k < 3; ++k) v[std::size_t(k)] *= s;
  }
  return state;
}

void velocity_verlet_step(MDState& state, const EnergyForceFn& ff, double dt_fs) {
  ensure_forces(state, ff);
  for (std::size_t i = 0; i < state.velocities.size(); ++i) {
    const double f = 0.5 * dt_fs * kForceToAccel / state.masses[i];
    for (int k = 0; k < 3; ++k)
      state.velocities[i][std::size_t(k)] += f * state.forces[i][std::size_t(k)];
  }
  for (std::size_t i = 0; i < state.velocities.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double dr = dt_fs * state.velocities[i][std::size_t(k)];
      state.unwrapped[i][std::size_t(k)] += dr;
      state.config.positions[i][std::size_t(k)] += dr;
    }
  wrap_positions(state.config);
  ++state.step;
  state.time_fs += dt_fs;
  refresh_forces(state, ff);
  for (std::size_t i = 0; i < state.velocities.size(); ++i) {
    const double f = 0.5 * dt_fs * kForceToAccel / state.masses[i];
    for (int k = 0; k < 3; ++k)
      state.velocities[i][std::size_t(k)] += f * state.forces[i][std::size_t(k)];
  }
}

void langevin_step(MDState& state, const EnergyForceFn& ff, double dt_fs,
                   double T_target_K, double friction_per_fs) {
  if (friction_per_fs < 0.0) throw DomainError("langevin_step: negative friction");
  if (friction_per_fs == 0.0) {
    velocity_verlet_step(state, ff, dt_fs);
    return;
  }
  ensure_forces(state, ff);
  // B
  for (std::size_t i = 0; i < state.velocities.size(); ++i) {
    const double f = 0.5 * dt_fs * kForceToAccel / state.masses[i];
    for (int k = 0; k < 3; ++k)
      state.velocities[i][std::size_t(k)] += f * state.forces[i][std::size_t(k)];
  }
  // A
  for (std::size_t i = 0; i < state.velocities.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double dr = 0.5 * dt_fs * state.velocities[i][std::size_t(k)];
      state.unwrapped[i][std::size_t(k)] += dr;
      state.config.positions[i][std::size_t(k)] += dr;
    }
  // O
  const double c1 = std::exp(-friction_per_fs * dt_fs);
  for (std::size_t i = 0; i < state.velocities.size(); ++i) {
    const double c2 = std::sqrt((1.0 - c1 * c1) * kBoltzmannEvK * T_target_K *
                                kForceToAccel / state.masses[i]);
    for (int k = 0; k < 3; ++k)
      state.velocities[i][std::size_t(k)] =
          c1 * state.velocities[i][std::size_t(k)] + c2 * state.rng.normal();
  }
  // A
  for (std::size_t i = 0; i < state.velocities.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double dr = 0.5 * dt_fs * state.velocities[i][std::size_t(k)];
      state.unwrapped[i][std::size_t(k)] += dr;
      state.config.positions[i][std::size_t(k)] += dr;
    }
  wrap_positions(state.config);
  ++state.step;
  state.time_fs += dt_fs;
  // B
  refresh_forces(state, ff);
  for (std::size_t i = 0; i < state.velocities.size(); ++i) {
    const double f = 0.5 * dt_fs * kForceToAccel / state.masses[i];
    for (int k = 0; k < 3; ++k)
      state.velocities[i][std::size_t(k)] += f * state.forces[i][std::size_t(k)];
  }
}

double numerical_pressure(const MDState& state, const EnergyForceFn& ff,
                          double rel_volume_step) {
  if (!fully_periodic(state.config))
    throw ContractError("numerical_pressure: requires full PBC");
  if (!(rel_volume_step > 0.0))
    throw DomainError("numerical_pressure: volume step must be positive");
  const double volume = state.config.volume();
  const double eta = rel_volume_step;
  std::vector<geometry::Vec3> scratch;
  auto energy_at = [&](double vol_scale) {
    const double s = std::cbrt(vol_scale);
    geometry::AtomicConfiguration scaled = state.config;
    for (auto& row : scaled.cell)
      for (double& v : row) v *= s;
    for (auto& r : scaled.positions)
      for (double& v : r) v *= s;
    return ff(scaled, scratch);
  };
  const double e_plus = energy_at(1.0 + eta);
  const double e_minus = energy_at(1.0 - eta);
  const double dedv = (e_plus - e_minus) / (2.0 * eta * volume);
  const double n_kT = double(state.config.size()) * kBoltzmannEvK *
                      kinetic_temperature_K(state);
  return (-dedv + n_kT / volume) * kEvPerA3ToBar;
}

void barostat_step(MDState& state, double p_bar, double p_target_bar,
                   double coupling_fs, double dt_fs) {
  if (!fully_periodic(state.config))
    throw ContractError("barostat_step: requires full PBC");
  const double mu3 =
      1.0 - (dt_fs / coupling_fs) * (p_target_bar - p_bar) / kBulkModulusBar;
  double mu = std::cbrt(mu3);
  mu = std::clamp(mu, 0.99, 1.01);
  if (mu == 1.0) return;
  for (auto& row : state.config.cell)
    for (double& v : row) v *= mu;
  for (auto& r : state.config.positions)
    for (double& v : r) v *= mu;
  for (auto& r : state.unwrapped)
    for (double& v : r) v *= mu;
  state.forces_valid = false;  // geometry changed under the cached forces
}

void write_frame_xyz(const geometry::AtomicConfiguration& config,
                     const std::string& path, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw IoError("write_frame_xyz: cannot open " + path);
  out << config.size() << "\n";
  out << std::setprecision(12);
  if (config.periodic()) {
    out << "Lattice=\"";
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        out << config.cell[std::size_t(i)][std::size_t(j)]
            << (i == 2 && j == 2 ? "" : " ");
    out << "\" ";
  }
  out << "Properties=species:S:1:pos:R:3";
  if (!comment.empty()) out << " " << comment;
  out << "\n";
  for (std::size_t i = 0; i < config.size(); ++i)
    out << geometry::element_symbol(config.atomic_numbers[i]) << " "
        << config.positions[i][0] << " " << config.positions[i][1] << " "
        << config.positions[i][2] << "\n";
  if (!out.good()) throw IoError("write_frame_xyz: write failed " + path);
}

metrics::TrajectoryLog run_md(const MDSpec& spec,
                              const geometry::AtomicConfiguration& initial,
                              const EnergyForceFn& ff) {
  spec.validate();
  if (spec.ensemble == "npt" && !fully_periodic(initial))
    throw ContractError("run_md: npt requires full PBC");

  MDState state = maxwell_boltzmann_init(initial, spec.T_target_K, spec.seed);
  const std::vector<geometry::Vec3> r0 = state.unwrapped;
  double total_mass = 0.0;
  for (double m : state.masses) total_mass += m;
  const geometry::Vec3 com0 = com_of(r0, state.masses, total_mass);

  const bool dump_frames = spec.frame_every > 0 && !spec.out_dir.empty();
  if (dump_frames) std::filesystem::create_directories(spec.out_dir);

  metrics::TrajectoryLog log;
  auto log_row = [&] {
    metrics::TrajectoryRow row;
    row.step = state.step;
    row.time_fs = state.time_fs;
    row.T_K = kinetic_temperature_K(state);
    row.rho_gcm3 = fully_periodic(state.config)
                       ? geometry::mass_density_gcm3(state.config)
                       : 0.0;
    row.p_bar =
        fully_periodic(state.config) ? numerical_pressure(state, ff) : 0.0;
    row.Epot_eV = state.epot;
    double acc = 0.0;
    for (std::size_t i = 0; i < r0.size(); ++i)
      for (int k = 0; k < 3; ++k) {
        const double d = state.unwrapped[i][std::size_t(k)] - r0[i][std::size_t(k)];
        acc += d * d;
      }
    row.msd_A2 = r0.empty() ? 0.0 : acc / double(r0.size());
    const geometry::Vec3 com = com_of(state.unwrapped, state.masses, total_mass);
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k)
      d2 += (com[std::size_t(k)] - com0[std::size_t(k)]) *
            (com[std::size_t(k)] - com0[std::size_t(k)]);
    row.drift_A = std::sqrt(d2);
    log.rows.push_back(row);
  };

  try {
    ensure_forces(state, ff);
    log_row();
    for (long long s = 1; s <= spec.steps; ++s) {
      if (spec.ensemble == "nve") {
        velocity_verlet_step(state, ff, spec.dt_fs);
      } else {
        langevin_step(state, ff, spec.dt_fs, spec.T_target_K,
                      spec.friction_per_fs);
        if (spec.ensemble == "npt") {
          const double p = numerical_pressure(state, ff);
          barostat_step(state, p, spec.p_target_bar, spec.pressure_coupling_fs,
                        spec.dt_fs);
          ensure_forces(state, ff);
        }
      }
      if (s % spec.log_every == 0) log_row();
      if (dump_frames && s % spec.frame_every == 0)
        write_frame_xyz(state.config,
                        spec.out_dir + "/frame_" + std::to_string(s) + ".xyz",
                        "step=" + std::to_string(s));
    }
  } catch (const IntegrationError&) {
    if (!spec.out_dir.empty()) {
      std::filesystem::create_directories(spec.out_dir);
      write_frame_xyz(state.config,
                      spec.out_dir + "/abort_step_" +
                          std::to_string(state.step) + ".xyz",
                      "aborted");
    }
    throw;
  }
  return log;
}

}  // namespace equiprec::md
