#include "equiprec/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "equiprec/bench/bench.hpp"
#include "equiprec/errors.hpp"
#include "equiprec/geometry/neighbor.hpp"

namespace equiprec::metrics {

std::pair<double, double> energy_errors(double e_ref, double e_test, int n_atoms) {
  if (n_atoms < 1) throw DomainError("energy_errors: n_atoms must be >= 1");
  const double ae = std::abs(e_test - e_ref) / double(n_atoms);
  const double rae = std::abs(e_test - e_ref) / (std::abs(e_ref) + kEpsStab);
  return {ae, rae};
}

std::pair<double, double> force_errors(std::span<const geometry::Vec3> f_ref,
                                       std::span<const geometry::Vec3> f_test) {
  if (f_ref.size() != f_test.size())
    throw DimensionError("force_errors: shape mismatch");
  if (f_ref.empty()) throw DimensionError("force_errors: empty force arrays");
  double sum_norm = 0.0, diff_sq = 0.0, ref_sq = 0.0;
  for (std::size_t a = 0; a < f_ref.size(); ++a) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = f_test[a][k] - f_ref[a][k];
      d2 += d * d;
      ref_sq += f_ref[a][k] * f_ref[a][k];
    }
    diff_sq += d2;
    sum_norm += std::sqrt(d2);
  }
  const double ae = sum_norm / double(f_ref.size());
  const double rae = std::sqrt(diff_sq) / (std::sqrt(ref_sq) + kEpsStab);
  return {ae, rae};
}

namespace {

SeriesStats stats_of(const std::vector<double>& v) {
  SeriesStats s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / double(v.size());
  s.median = bench::percentile(v, 0.5);
  s.p95 = bench::percentile(v, 0.95);
  return s;
}

}  // namespace

ErrorReport error_report(const std::vector<PredictionPair>& pairs) {
  if (pairs.empty()) throw ContractError("error_report: empty dataset");
  ErrorReport rep;
  for (const PredictionPair& p : pairs) {
    if (p.forces_ref.empty())
      throw ContractError("error_report: structure without atoms");
    const int n = int(p.forces_ref.size());
    const auto [ae_e, rae_e] = energy_errors(p.energy_ref, p.energy_test, n);
    const auto [ae_f, rae_f] = force_errors(p.forces_ref, p.forces_test);
    rep.ae_e.push_back(ae_e);
    rep.rae_e.push_back(rae_e);
    rep.ae_f.push_back(ae_f);
    rep.rae_f.push_back(rae_f);
    rep.n_atoms_total += n;
  }
  rep.n_structures = (long long)pairs.size();
  rep.ae_e_stats = stats_of(rep.ae_e);
  rep.rae_e_stats = stats_of(rep.rae_e);
  rep.ae_f_stats = stats_of(rep.ae_f);
  rep.rae_f_stats = stats_of(rep.rae_f);
  return rep;
}

double rmse_energy_per_atom(const std::vector<PredictionPair>& pairs) {
  if (pairs.empty()) throw ContractError("rmse_energy_per_atom: empty dataset");
  double acc = 0.0;
  for (const PredictionPair& p : pairs) {
    if (p.forces_ref.empty())
      throw ContractError("rmse_energy_per_atom: structure without atoms");
    const double per_atom =
        (p.energy_test - p.energy_ref) / double(p.forces_ref.size());
    acc += per_atom * per_atom;
  }
  return std::sqrt(acc / double(pairs.size())) * 1000.0;  // eV -> meV
}

ForceRmse rmse_forces(const std::vector<PredictionPair>& pairs) {
  if (pairs.empty()) throw ContractError("rmse_forces: empty dataset");
  double diff_sq = 0.0, ref_sq = 0.0;
  long long n_comp = 0;
  for (const PredictionPair& p : pairs) {
    if (p.forces_ref.size() != p.forces_test.size())
      throw DimensionError("rmse_forces: shape mismatch");
    for (std::size_t a = 0; a < p.forces_ref.size(); ++a)
      for (int k = 0; k < 3; ++k) {
        const double d = p.forces_test[a][k] - p.forces_ref[a][k];
        diff_sq += d * d;
        ref_sq += p.forces_ref[a][k] * p.forces_ref[a][k];
        ++n_comp;
      }
  }
  if (n_comp == 0) throw ContractError("rmse_forces: no force components");
  ForceRmse out;
  const double rmse = std::sqrt(diff_sq / double(n_comp));
  const double ref_rms = std::sqrt(ref_sq / double(n_comp));
  out.mev_per_angstrom = rmse * 1000.0;
  out.rel_percent = rmse / (ref_rms + kEpsStab) * 100.0;
  return out;
}

void write_trajectory_csv(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_trajectory_csv: cannot open " + path);
  out << "step, time_fs, T_K, rho_gcm3, p_bar, Epot_eV, msd_A2, drift_A\n";
  out << std::setprecision(17);
  for (const TrajectoryRow& r : log.rows)
    out << r.step << ", " << r.time_fs << ", " << r.T_K << ", " << r.rho_gcm3
        << ", " << r.p_bar << ", " << r.Epot_eV << ", " << r.msd_A2 << ", "
        << r.drift_A << "\n";
  if (!out.good()) throw IoError("write_trajectory_csv: write failed " + path);
}

TrajectoryLog read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_trajectory_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "step, time_fs, T_K, rho_gcm3, p_bar, Epot_eV, msd_A2, drift_A")
    throw ParseError("read_trajectory_csv: bad header in " + path);
  TrajectoryLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    TrajectoryRow r;
    if (!(row >> r.step >> r.time_fs >> r.T_K >> r.rho_gcm3 >> r.p_bar >>
          r.Epot_eV >> r.msd_A2 >> r.drift_A))
      throw ParseError("read_trajectory_csv: bad row: " + line);
    log.rows.push_back(r);
  }
  return log;
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  double sum = 0.0;
  for (double x : v) sum += x;
  mean = sum / double(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  sd = std::sqrt(acc / double(v.size()));
}

}  // namespace

ObservableSummary trajectory_observables(const TrajectoryLog& log,
                                         const ObservableTargets& targets) {
  if (log.rows.empty())
    throw ContractError("trajectory_observables: empty log");
  std::vector<double> T, rho, p, epot, rho_dev;
  for (const TrajectoryRow& r : log.rows) {
    T.push_back(r.T_K);
    rho.push_back(r.rho_gcm3);
    p.push_back(r.p_bar);
    epot.push_back(r.Epot_eV);
    rho_dev.push_back(std::abs(r.rho_gcm3 - targets.rho_gcm3));
  }
  ObservableSummary s;
  mean_std(T, s.T_mean, s.T_std);
  mean_std(rho, s.rho_mean, s.rho_std);
  mean_std(p, s.p_mean, s.p_std);
  mean_std(epot, s.epot_mean, s.epot_std);
  s.dT_vs_target = s.T_mean - targets.T_K;
  s.dp_vs_target = s.p_mean - targets.p_bar;
  s.rho_abs_dev_p95 = bench::percentile(rho_dev, 0.95);
  s.n_rows = (long long)log.rows.size();
  return s;
}

std::vector<double> msd(const std::vector<std::vector<geometry::Vec3>>& unwrapped) {
  if (unwrapped.size() < 2) throw ContractError("msd: need at least 2 frames");
  const std::size_t n = unwrapped.front().size();
  std::vector<double> series;
  series.reserve(unwrapped.size());
  for (const auto& frame : unwrapped) {
    if (frame.size() != n) throw ContractError("msd: atom count drift");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) {
        const double d = frame[i][k] - unwrapped.front()[i][k];
        acc += d * d;
      }
    series.push_back(acc / double(n));
  }
  return series;
}

RdfResult rdf(const geometry::AtomicConfiguration& reference,
              const std::vector<std::vector<geometry::Vec3>>& frames,
              const RdfSpec& spec) {
  if (spec.bins < 1) throw DomainError("rdf: bins must be >= 1");
  if (!(spec.r_max > 0.0)) throw DomainError("rdf: r_max must be positive");
  if (!reference.pbc[0] || !reference.pbc[1] || !reference.pbc[2])
    throw ContractError("rdf: requires a fully periodic cell");
  if (frames.empty()) throw ContractError("rdf: no frames");

  long long n_a = 0, n_b = 0;
  for (int z : reference.atomic_numbers) {
    if (z == spec.z_a) ++n_a;
    if (z == spec.z_b) ++n_b;
  }
  const long long n_b_excl = (spec.z_a == spec.z_b) ? n_b - 1 : n_b;
  if (n_a == 0 || n_b_excl <= 0)
    throw DomainError("rdf: no atom pairs of the requested species");

  const double volume = reference.volume();
  const double dr = spec.r_max / double(spec.bins);

  std::vector<double> counts(std::size_t(spec.bins), 0.0);
  long long total_pairs = 0;
  geometry::AtomicConfiguration snap = reference;
  for (const auto& frame : frames) {
    if (frame.size() != reference.size())
      throw ContractError("rdf: atom count drift");
    snap.positions = frame;
    const geometry::NeighborList nl =
        geometry::build_neighbor_list(snap, spec.r_max);
    for (const geometry::Edge& e : nl.edges) {
      if (reference.atomic_numbers[std::size_t(e.src)] != spec.z_a ||
          reference.atomic_numbers[std::size_t(e.dst)] != spec.z_b)
        continue;
      const int bin = std::min(int(e.dist / dr), spec.bins - 1);
      counts[std::size_t(bin)] += 1.0;
      ++total_pairs;
    }
  }

  RdfResult out;
  out.r_centers.resize(std::size_t(spec.bins));
  out.g.resize(std::size_t(spec.bins));
  const double frames_n = double(frames.size());
  for (int k = 0; k < spec.bins; ++k) {
    const double r_lo = double(k) * dr, r_hi = r_lo + dr;
    const double shell =
        4.0 * std::numbers::pi / 3.0 * (r_hi * r_hi * r_hi - r_lo * r_lo * r_lo);
    const double ideal = double(n_a) * double(n_b_excl) * shell / volume;
    out.r_centers[std::size_t(k)] = 0.5 * (r_lo + r_hi);
    out.g[std::size_t(k)] = counts[std::size_t(k)] / (frames_n * ideal);
  }
  out.coordination = double(total_pairs) / (frames_n * double(n_a));
  return out;
}

std::vector<double> com_drift(const std::vector<std::vector<geometry::Vec3>>& unwrapped,
                              const std::vector<double>& masses) {
  std::vector<double> series;
  if (unwrapped.empty()) return series;
  double total_mass = 0.0;
  for (double m : masses) total_mass += m;
  if (!(total_mass > 0.0)) throw DomainError("com_drift: nonpositive total mass");

  auto com = [&](const std::vector<geometry::Vec3>& frame) {
    if (frame.size() != masses.size())
      throw DimensionError("com_drift: masses/positions mismatch");
    geometry::Vec3 c{0, 0, 0};
    for (std::size_t i = 0; i < frame.size(); ++i)
      for (int k = 0; k < 3; ++k) c[k] += masses[i] * frame[i][k];
    for (int k = 0; k < 3; ++k) c[k] /= total_mass;
    return c;
  };

  const geometry::Vec3 c0 = com(unwrapped.front());
  series.reserve(unwrapped.size());
  for (const auto& frame : unwrapped) {
    const geometry::Vec3 c = com(frame);
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) d2 += (c[k] - c0[k]) * (c[k] - c0[k]);
    series.push_back(std::sqrt(d2));
  }
  return series;
}

}  // namespace equiprec::metrics
