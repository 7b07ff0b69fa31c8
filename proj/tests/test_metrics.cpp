#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "equiprec/errors.hpp"
#include "equiprec/geometry/configuration.hpp"
#include "equiprec/metrics/metrics.hpp"
#include "equiprec/numerics/rng.hpp"

using namespace equiprec;
using doctest::Approx;
using geometry::Vec3;

namespace {

geometry::AtomicConfiguration cubic_box(double L, std::vector<int> numbers,
                                        std::vector<Vec3> positions) {
  geometry::AtomicConfiguration c;
  c.cell = {{{L, 0, 0}, {0, L, 0}, {0, 0, L}}};
  c.pbc = {true, true, true};
  c.atomic_numbers = std::move(numbers);
  c.positions = std::move(positions);
  return c;
}

}  // namespace

TEST_CASE("energy errors: per-atom absolute and stabilized relative") {
  const auto [ae0, rae0] = metrics::energy_errors(-3.25, -3.25, 6);
  CHECK(ae0 == 0.0);
  CHECK(rae0 == 0.0);

  // published bulk-water comparison: |delta| = 78.383 eV = 0.00743%
  const auto [ae, rae] =
      metrics::energy_errors(-1055426.492, -1055504.875, 1);
  CHECK(ae == Approx(78.383).epsilon(1e-10));
  CHECK(rae * 100.0 == Approx(0.00743).epsilon(1e-3));

  const auto [ae5, rae5] = metrics::energy_errors(2.0, 2.6, 5);
  CHECK(ae5 == Approx(0.6 / 5.0).epsilon(1e-15));
  CHECK(rae5 == Approx(0.6 / 2.0).epsilon(1e-9));

  CHECK_THROWS_AS(metrics::energy_errors(1.0, 1.0, 0), DomainError);
}

TEST_CASE("force errors: mean per-atom norm and Frobenius ratio") {
  std::vector<Vec3> f{{1, 2, 3}, {-1, 0, 4}};
  const auto [ae0, rae0] = metrics::force_errors(f, f);
  CHECK(ae0 == 0.0);
  CHECK(rae0 == 0.0);

  // zero reference, unit test vector, one atom
  std::vector<Vec3> zero{{0, 0, 0}};
  std::vector<Vec3> unit{{0, 1, 0}};
  const auto [ae1, rae1] = metrics::force_errors(zero, unit);
  CHECK(ae1 == 1.0);
  CHECK(rae1 == Approx(1e12).epsilon(1e-6));  // stabilizer only in denominator

  // two atoms with displacements (3,4,0) and (0,0,2):
  // AE = (5 + 2)/2; RAE = sqrt(25+4)/(|F_ref|_F + eps)
  std::vector<Vec3> ref{{1, 0, 0}, {0, 2, 0}};
  std::vector<Vec3> test{{4, 4, 0}, {0, 2, 2}};
  const auto [ae, rae] = metrics::force_errors(ref, test);
  CHECK(ae == Approx(3.5).epsilon(1e-15));
  CHECK(rae == Approx(std::sqrt(29.0) / std::sqrt(5.0)).epsilon(1e-9));

  std::vector<Vec3> shorter{{0, 0, 0}};
  CHECK_THROWS_AS(metrics::force_errors(ref, shorter), DimensionError);
  CHECK_THROWS_AS(metrics::force_errors({}, {}), DimensionError);
}

TEST_CASE("error report aggregates per-structure series") {
  std::vector<metrics::PredictionPair> pairs;
  for (int s = 0; s < 5; ++s) {
    metrics::PredictionPair p;
    p.energy_ref = -10.0 * (s + 1);
    p.energy_test = p.energy_ref + 0.01 * (s + 1);
    for (int a = 0; a < 3; ++a) {
      p.forces_ref.push_back({0.1 * s, -0.2, 0.3 * a});
      p.forces_test.push_back({0.1 * s + 0.001 * (s + 1), -0.2, 0.3 * a});
    }
    pairs.push_back(p);
  }
  const metrics::ErrorReport rep = metrics::error_report(pairs);
  CHECK(rep.n_structures == 5);
  CHECK(rep.n_atoms_total == 15);
  REQUIRE(rep.ae_e.size() == 5);

  // spot-check one structure against the scalar entry points
  const auto [ae2, rae2] =
      metrics::energy_errors(pairs[2].energy_ref, pairs[2].energy_test, 3);
  CHECK(rep.ae_e[2] == ae2);
  CHECK(rep.rae_e[2] == rae2);

  for (const auto* series : {&rep.ae_e, &rep.rae_e, &rep.ae_f, &rep.rae_f})
    for (double v : *series) CHECK(v >= 0.0);
  for (const auto* st : {&rep.ae_e_stats, &rep.rae_e_stats, &rep.ae_f_stats,
                         &rep.rae_f_stats}) {
    CHECK(st->p95 >= st->median);
    CHECK(st->mean >= 0.0);
  }

  CHECK_THROWS_AS(metrics::error_report({}), ContractError);
}

TEST_CASE("RMSE reporting in meV units") {
  // perfect predictions
  std::vector<metrics::PredictionPair> perfect(2);
  for (auto& p : perfect) {
    p.energy_ref = p.energy_test = -4.0;
    p.forces_ref = p.forces_test = {{1, 0, 0}, {0, -1, 0}};
  }
  CHECK(metrics::rmse_energy_per_atom(perfect) == 0.0);
  CHECK(metrics::rmse_forces(perfect).mev_per_angstrom == 0.0);
  CHECK(metrics::rmse_forces(perfect).rel_percent == 0.0);

  // single structure, two atoms, 2 meV energy error -> 1 meV/atom
  std::vector<metrics::PredictionPair> one(1);
  one[0].energy_ref = -8.0;
  one[0].energy_test = -8.002;
  one[0].forces_ref = {{0.5, 0, 0}, {-0.5, 0, 0}};
  one[0].forces_test = one[0].forces_ref;
  CHECK(metrics::rmse_energy_per_atom(one) == Approx(1.0).epsilon(1e-12));

  // uniform force component error of 0.1717 eV/A -> 171.7 meV/A
  std::vector<metrics::PredictionPair> f(1);
  f[0].energy_ref = f[0].energy_test = 0.0;
  f[0].forces_ref = {{1, 1, 1}, {1, 1, 1}};
  f[0].forces_test = {{1.1717, 1.1717, 1.1717}, {1.1717, 1.1717, 1.1717}};
  const metrics::ForceRmse fr = metrics::rmse_forces(f);
  CHECK(fr.mev_per_angstrom == Approx(171.7).epsilon(1e-12));
  CHECK(fr.rel_percent == Approx(17.17).epsilon(1e-9));

  CHECK_THROWS_AS(metrics::rmse_energy_per_atom({}), ContractError);
  CHECK_THROWS_AS(metrics::rmse_forces({}), ContractError);
}

TEST_CASE("relative metrics are invariant under global unit rescaling") {
  std::vector<metrics::PredictionPair> a(2), b(2);
  numerics::Rng rng(31);
  for (int s = 0; s < 2; ++s) {
    a[s].energy_ref = rng.uniform(-20, -10);
    a[s].energy_test = a[s].energy_ref + rng.uniform(-0.1, 0.1);
    for (int i = 0; i < 4; ++i) {
      a[s].forces_ref.push_back(
          {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      a[s].forces_test.push_back({a[s].forces_ref[i][0] + rng.uniform(-0.01, 0.01),
                                  a[s].forces_ref[i][1],
                                  a[s].forces_ref[i][2]});
    }
    b[s] = a[s];
    const double scale = 7.5;
    b[s].energy_ref *= scale;
    b[s].energy_test *= scale;
    for (auto& v : b[s].forces_ref)
      for (int k = 0; k < 3; ++k) v[k] *= scale;
    for (auto& v : b[s].forces_test)
      for (int k = 0; k < 3; ++k) v[k] *= scale;
  }
  const metrics::ErrorReport ra = metrics::error_report(a);
  const metrics::ErrorReport rb = metrics::error_report(b);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(rb.rae_e[s] == Approx(ra.rae_e[s]).epsilon(1e-9));
    CHECK(rb.rae_f[s] == Approx(ra.rae_f[s]).epsilon(1e-9));
  }
  CHECK(metrics::rmse_forces(a).rel_percent ==
        Approx(metrics::rmse_forces(b).rel_percent).epsilon(1e-9));
}

TEST_CASE("trajectory CSV round trip and schema enforcement") {
  metrics::TrajectoryLog log;
  for (int i = 0; i < 3; ++i) {
    metrics::TrajectoryRow r;
    r.step = i * 10;
    r.time_fs = i * 5.0;
    r.T_K = 300.0 + 0.123456789012345 * i;
    r.rho_gcm3 = 1.07 - 1e-3 * i;
    r.p_bar = -250.5 + 100.0 * i;
    r.Epot_eV = -812.25 + 0.5 * i;
    r.msd_A2 = 0.01 * i * i;
    r.drift_A = 1e-9 * i;
    log.rows.push_back(r);
  }
  const std::string path = "metrics_traj.csv";
  metrics::write_trajectory_csv(log, path);
  const metrics::TrajectoryLog back = metrics::read_trajectory_csv(path);
  REQUIRE(back.rows.size() == log.rows.size());
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    CHECK(back.rows[i].step == log.rows[i].step);
    CHECK(back.rows[i].time_fs == log.rows[i].time_fs);
    CHECK(back.rows[i].T_K == log.rows[i].T_K);
    CHECK(back.rows[i].rho_gcm3 == log.rows[i].rho_gcm3);
    CHECK(back.rows[i].p_bar == log.rows[i].p_bar);
    CHECK(back.rows[i].Epot_eV == log.rows[i].Epot_eV);
    CHECK(back.rows[i].msd_A2 == log.rows[i].msd_A2);
    CHECK(back.rows[i].drift_A == log.rows[i].drift_A);
  }
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step, time_fs, T_K, rho_gcm3, p_bar, Epot_eV, msd_A2, drift_A");
  }

  CHECK_THROWS_AS(metrics::read_trajectory_csv("no_such.csv"), IoError);
  {
    std::ofstream bad("metrics_badheader.csv");
    bad << "step,temperature\n1,300\n";
  }
  CHECK_THROWS_AS(metrics::read_trajectory_csv("metrics_badheader.csv"), ParseError);
  {
    std::ofstream bad("metrics_badrow.csv");
    bad << "step, time_fs, T_K, rho_gcm3, p_bar, Epot_eV, msd_A2, drift_A\n";
    bad << "1, 2, three, 4, 5, 6, 7, 8\n";
  }
  CHECK_THROWS_AS(metrics::read_trajectory_csv("metrics_badrow.csv"), ParseError);
  std::remove(path.c_str());
  std::remove("metrics_badheader.csv");
  std::remove("metrics_badrow.csv");
}

TEST_CASE("trajectory observables: means, stds, and target biases") {
  // constant series: std 0, mean = value
  metrics::TrajectoryLog flat;
  for (int i = 0; i < 4; ++i) {
    metrics::TrajectoryRow r;
    r.T_K = 310.0;
    r.rho_gcm3 = 1.05;
    r.p_bar = 1.013;
    r.Epot_eV = -77.0;
    flat.rows.push_back(r);
  }
  metrics::ObservableTargets tg;
  tg.T_K = 300.0;
  tg.rho_gcm3 = 1.0;
  tg.p_bar = 1.013;
  const metrics::ObservableSummary s = metrics::trajectory_observables(flat, tg);
  CHECK(s.T_mean == 310.0);
  CHECK(s.T_std == 0.0);
  CHECK(s.rho_mean == 1.05);
  CHECK(s.rho_std == 0.0);
  CHECK(s.p_std == 0.0);
  CHECK(s.epot_mean == -77.0);
  CHECK(s.dT_vs_target == Approx(10.0).epsilon(1e-15));
  CHECK(s.dp_vs_target == 0.0);
  CHECK(s.rho_abs_dev_p95 == Approx(0.05).epsilon(1e-12));
  CHECK(s.n_rows == 4);

  // published mean: a 299.241 K series against a 300 K target is -0.759 K
  metrics::TrajectoryLog two;
  metrics::TrajectoryRow r1, r2;
  r1.T_K = 299.0;
  r2.T_K = 299.482;
  two.rows = {r1, r2};
  metrics::ObservableTargets t300;
  t300.T_K = 300.0;
  const metrics::ObservableSummary s2 = metrics::trajectory_observables(two, t300);
  CHECK(s2.T_mean == Approx(299.241).epsilon(1e-12));
  CHECK(s2.dT_vs_target == Approx(-0.759).epsilon(1e-9));

  CHECK_THROWS_AS(metrics::trajectory_observables({}, tg), ContractError);
}

TEST_CASE("density conversion: one water molecule in a 1000 cubic angstrom box") {
  const geometry::AtomicConfiguration box = cubic_box(
      10.0, {8, 1, 1}, {{{5, 5, 5}, {5.9572, 5, 5}, {4.76, 5.93, 5}}});
  const double rho = geometry::mass_density_gcm3(box);
  CHECK(rho == Approx(0.02992).epsilon(2e-4));
  // direct unit arithmetic: 18.015 amu / 1000 A^3 * conversion
  CHECK(rho == Approx(18.015 / 1000.0 * metrics::kDensityConv).epsilon(1e-6));
}

TEST_CASE("mean squared displacement") {
  std::vector<Vec3> f0{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {4, 4, 4}};

  // static trajectory: identically zero
  const std::vector<double> zero = metrics::msd({f0, f0, f0});
  REQUIRE(zero.size() == 3);
  for (double v : zero) CHECK(v == 0.0);

  // one atom displaced by (3,4,0): MSD = 25/N
  std::vector<Vec3> f1 = f0;
  f1[2] = {f0[2][0] + 3.0, f0[2][1] + 4.0, f0[2][2]};
  const std::vector<double> one = metrics::msd({f0, f1});
  CHECK(one[0] == 0.0);
  CHECK(one[1] == Approx(25.0 / 5.0).epsilon(1e-15));

  // random walk vs direct sum
  numerics::Rng rng(77);
  std::vector<std::vector<Vec3>> frames{f0};
  for (int t = 0; t < 4; ++t) {
    std::vector<Vec3> next = frames.back();
    for (auto& p : next)
      for (int k = 0; k < 3; ++k) p[k] += rng.uniform(-0.5, 0.5);
    frames.push_back(next);
  }
  const std::vector<double> series = metrics::msd(frames);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < f0.size(); ++i)
      for (int k = 0; k < 3; ++k) {
        const double d = frames[t][i][k] - f0[i][k];
        acc += d * d;
      }
    CHECK(series[t] == Approx(acc / 5.0).epsilon(1e-14));
  }

  CHECK_THROWS_AS(metrics::msd({f0}), ContractError);
  std::vector<Vec3> short_frame{{0, 0, 0}};
  CHECK_THROWS_AS(metrics::msd({f0, short_frame}), ContractError);
}

TEST_CASE("rdf: single pair produces a spike in the containing bin") {
  const geometry::AtomicConfiguration box =
      cubic_box(10.0, {6, 6}, {{{1, 1, 1}, {1, 1, 4}}});
  metrics::RdfSpec spec;
  spec.z_a = 6;
  spec.z_b = 6;
  spec.r_max = 5.0;
  spec.bins = 10;
  const metrics::RdfResult r = metrics::rdf(box, {box.positions}, spec);
  REQUIRE(r.g.size() == 10);
  for (int k = 0; k < 10; ++k) {
    if (k == 6)
      CHECK(r.g[std::size_t(k)] > 0.0);  // d = 3.0 lands in [3.0, 3.5)
    else
      CHECK(r.g[std::size_t(k)] == 0.0);
  }
  CHECK(r.r_centers[6] == Approx(3.25).epsilon(1e-15));
  // both ordered pairs counted once: each atom has one partner in range
  CHECK(r.coordination == 1.0);
}

TEST_CASE("rdf: uniform ideal gas is flat within counting noise") {
  const double L = 10.0;
  const long long n = 64;
  numerics::Rng rng(123);
  std::vector<int> numbers(std::size_t(n), 18);
  std::vector<std::vector<Vec3>> frames;
  for (int f = 0; f < 80; ++f) {
    std::vector<Vec3> pos;
    for (long long i = 0; i < n; ++i)
      pos.push_back({rng.uniform(0, L), rng.uniform(0, L), rng.uniform(0, L)});
    frames.push_back(pos);
  }
  const geometry::AtomicConfiguration box = cubic_box(L, numbers, frames[0]);
  metrics::RdfSpec spec;
  spec.z_a = 18;
  spec.z_b = 18;
  spec.r_max = 4.0;
  spec.bins = 8;
  const metrics::RdfResult r = metrics::rdf(box, frames, spec);

  const double volume = L * L * L;
  for (int k = 0; k < spec.bins; ++k) {
    const double dr = spec.r_max / spec.bins;
    const double r_lo = k * dr, r_hi = r_lo + dr;
    const double shell = 4.0 * M_PI / 3.0 * (r_hi * r_hi * r_hi - r_lo * r_lo * r_lo);
    const double mu = double(n) * double(n - 1) * shell / volume;  // per frame
    const double sigma_g = 1.0 / std::sqrt(mu * double(frames.size()));
    CHECK(std::abs(r.g[std::size_t(k)] - 1.0) < 3.0 * sigma_g);
  }
  // mean coordination within r_max matches the ideal-gas integral
  const double sphere = 4.0 * M_PI / 3.0 * std::pow(spec.r_max, 3);
  const double expected = double(n - 1) * sphere / volume;
  const double sigma_c =
      std::sqrt(expected / (double(n) * double(frames.size())));
  CHECK(std::abs(r.coordination - expected) < 4.0 * sigma_c);
}

TEST_CASE("rdf: isolated cluster in a large cell integrates to N-1 exactly") {
  // all pairs within r_max, no periodic images reachable: the coordination
  // integral over the full pair range counts every partner exactly once
  const double L = 20.0;
  numerics::Rng rng(5);
  std::vector<Vec3> pos;
  std::vector<int> numbers;
  for (int i = 0; i < 8; ++i) {
    pos.push_back({10.0 + rng.uniform(-1.5, 1.5), 10.0 + rng.uniform(-1.5, 1.5),
                   10.0 + rng.uniform(-1.5, 1.5)});
    numbers.push_back(6);
  }
  const geometry::AtomicConfiguration box = cubic_box(L, numbers, pos);
  metrics::RdfSpec spec;
  spec.z_a = 6;
  spec.z_b = 6;
  spec.r_max = 7.0;  // > max intra-cluster distance, < L - cluster extent
  spec.bins = 14;
  const metrics::RdfResult r = metrics::rdf(box, {pos, pos}, spec);
  CHECK(r.coordination == 7.0);
}

TEST_CASE("rdf: lattice peaks match a brute-force distance census") {
  const double L = 6.0, a = 2.0;
  std::vector<Vec3> pos;
  std::vector<int> numbers;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        pos.push_back({a * i, a * j, a * k});
        numbers.push_back(6);
      }
  const geometry::AtomicConfiguration box = cubic_box(L, numbers, pos);
  metrics::RdfSpec spec;
  spec.z_a = 6;
  spec.z_b = 6;
  spec.r_max = 2.9;  // below L/2, so minimum-image counting is exact
  spec.bins = 29;
  const metrics::RdfResult got = metrics::rdf(box, {pos}, spec);

  // independent census with explicit minimum-image wrapping
  std::vector<double> counts(29, 0.0);
  long long total = 0;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = 0; j < pos.size(); ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        double d = pos[j][k] - pos[i][k];
        d -= L * std::round(d / L);
        d2 += d * d;
      }
      const double d = std::sqrt(d2);
      if (d < spec.r_max) {
        counts[std::size_t(d / (spec.r_max / spec.bins))] += 1.0;
        ++total;
      }
    }
  const double volume = L * L * L;
  for (int k = 0; k < spec.bins; ++k) {
    const double dr = spec.r_max / spec.bins;
    const double r_lo = k * dr, r_hi = r_lo + dr;
    const double shell = 4.0 * M_PI / 3.0 * (r_hi * r_hi * r_hi - r_lo * r_lo * r_lo);
    const double ideal = 27.0 * 26.0 * shell / volume;
    CHECK(got.g[std::size_t(k)] == Approx(counts[std::size_t(k)] / ideal)
                                       .epsilon(1e-12)
                                       .scale(1.0));
  }
  // simple cubic shells: 6 neighbors at a, 12 at a*sqrt(2); nothing else < 2.9
  CHECK(got.coordination == Approx(double(total) / 27.0).epsilon(1e-15));
  CHECK(got.coordination == 18.0);
}

TEST_CASE("rdf input validation") {
  const geometry::AtomicConfiguration box =
      cubic_box(10.0, {6, 6}, {{{1, 1, 1}, {2, 2, 2}}});
  metrics::RdfSpec spec;
  spec.z_a = 6;
  spec.z_b = 6;
  spec.r_max = 4.0;
  spec.bins = 4;

  geometry::AtomicConfiguration open = box;
  open.pbc = {false, false, false};
  CHECK_THROWS_AS(metrics::rdf(open, {box.positions}, spec), ContractError);

  CHECK_THROWS_AS(metrics::rdf(box, {}, spec), ContractError);

  metrics::RdfSpec bad = spec;
  bad.bins = 0;
  CHECK_THROWS_AS(metrics::rdf(box, {box.positions}, bad), DomainError);
  bad = spec;
  bad.r_max = 0.0;
  CHECK_THROWS_AS(metrics::rdf(box, {box.positions}, bad), DomainError);
  bad = spec;
  bad.z_b = 8;  // absent species
  CHECK_THROWS_AS(metrics::rdf(box, {box.positions}, bad), DomainError);

  std::vector<Vec3> drifted{{1, 1, 1}};
  CHECK_THROWS_AS(metrics::rdf(box, {drifted}, spec), ContractError);
}

TEST_CASE("center-of-mass drift") {
  std::vector<Vec3> f0{{0, 0, 0}, {2, 0, 0}};
  const std::vector<double> masses{1.0, 3.0};

  // single frame: zero by definition
  const std::vector<double> single = metrics::com_drift({f0}, masses);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == 0.0);

  // uniform translation by (1,2,2): drift = |d| = 3
  std::vector<Vec3> shifted = f0;
  for (auto& p : shifted) {
    p[0] += 1.0;
    p[1] += 2.0;
    p[2] += 2.0;
  }
  const std::vector<double> uni = metrics::com_drift({f0, shifted}, masses);
  CHECK(uni[0] == 0.0);
  CHECK(uni[1] == Approx(3.0).epsilon(1e-15));

  // mass weighting: moving only the heavy atom by (4,0,0) drifts 3/4 of it
  std::vector<Vec3> heavy = f0;
  heavy[1][0] += 4.0;
  CHECK(metrics::com_drift({f0, heavy}, masses)[1] == Approx(3.0).epsilon(1e-15));
  std::vector<Vec3> light = f0;
  light[0][0] += 4.0;
  CHECK(metrics::com_drift({f0, light}, masses)[1] == Approx(1.0).epsilon(1e-15));

  CHECK(metrics::com_drift({}, masses).empty());
  CHECK_THROWS_AS(metrics::com_drift({f0}, {1.0}), DimensionError);
  CHECK_THROWS_AS(metrics::com_drift({f0}, {0.0, 0.0}), DomainError);
}
