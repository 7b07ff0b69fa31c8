#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "equiprec/bench/bench.hpp"
#include "equiprec/errors.hpp"
#include "equiprec/geometry/builders.hpp"
#include "equiprec/model/engine.hpp"

using namespace equiprec;
using doctest::Approx;

namespace {

model::ModelConfig bench_config() {
  model::ModelConfig c;
  c.r_max = 3.5;
  c.channels = 2;
  c.l_max = 1;
  c.message_l_max = 1;
  c.correlation = 2;
  c.n_bessel = 3;
  c.envelope_p = 5;
  c.num_layers = 1;
  c.readout_hidden = 4;
  c.radial_hidden = {6};
  c.species = {6};
  c.avg_num_neighbors = 4.0;
  c.scale = 1.0;
  c.shift = 0.0;
  c.seed = 11;
  return c;
}

bench::BenchmarkSpec quick_spec() {
  bench::BenchmarkSpec s;
  s.warmup_iters = 1;
  s.timed_iters = 2;
  s.seed = 42;
  s.cfg = bench_config();
  s.system.kind = "diamond";
  s.system.supercell = 1;
  s.system.perturb_sigma = 0.02;
  s.system.seed = 9;
  return s;
}

double total_seconds(const bench::BenchmarkReport& r) {
  double s = 0.0;
  for (double t : r.times_ns) s += t * 1e-9;
  return s;
}

double block_seconds_sum(const bench::BenchmarkReport& r) {
  double s = 0.0;
  for (const auto& [name, sec] : r.block_seconds) s += sec;
  return s;
}

}  // namespace

// Must stay the first test case: the determinism switch only arms before the
// process has evaluated any model, and doctest runs cases in file order.
TEST_CASE("determinism receipt arms before the first evaluation and locks after") {
  const bench::DeterminismReceipt r = bench::set_deterministic(42);
  CHECK(r.active);
  CHECK(r.seed == 42);
  CHECK(r.fixed_order_reductions);
  CHECK(r.threads >= 1);
  CHECK(bench::determinism_receipt().seed == 42);

  const bench::BenchmarkSpec spec = quick_spec();
  const bench::BenchmarkReport a = bench::run_inference_bench(spec);
  CHECK(a.receipt.active);
  CHECK(a.receipt.seed == 42);

  // same spec, fresh run: bitwise-identical numerical outputs
  const bench::BenchmarkReport b = bench::run_inference_bench(spec);
  CHECK(a.energy == b.energy);
  CHECK(a.output_hash == b.output_hash);
  CHECK(a.n_atoms == 8);
  CHECK(a.system == b.system);

  // evaluations happened above, so re-arming is now a contract violation
  CHECK_THROWS_AS(bench::set_deterministic(7), ContractError);
}

TEST_CASE("percentile interpolates between order statistics") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(double(i));
  CHECK(bench::percentile(v, 0.95) == Approx(95.05).epsilon(1e-12));
  CHECK(bench::percentile(v, 0.5) == Approx(50.5).epsilon(1e-12));
  CHECK(bench::percentile(v, 0.0) == 1.0);
  CHECK(bench::percentile(v, 1.0) == 100.0);

  // order of the input must not matter
  std::vector<double> shuffled{3.0, 1.0, 2.0};
  CHECK(bench::percentile(shuffled, 0.5) == 2.0);

  CHECK(bench::percentile({7.5}, 0.95) == 7.5);
  CHECK_THROWS_AS(bench::percentile({}, 0.5), DomainError);
  CHECK_THROWS_AS(bench::percentile({1.0}, -0.1), DomainError);
  CHECK_THROWS_AS(bench::percentile({1.0}, 1.1), DomainError);
}

TEST_CASE("summary statistics use the population convention") {
  const bench::Summary one = bench::summarize({5.0});
  CHECK(one.mean_ns == 5.0);
  CHECK(one.std_ns == 0.0);
  CHECK(one.median_ns == 5.0);
  CHECK(one.p95_ns == 5.0);

  const bench::Summary s = bench::summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean_ns == Approx(2.5).epsilon(1e-15));
  CHECK(s.std_ns == Approx(std::sqrt(1.25)).epsilon(1e-12));
  CHECK(s.median_ns == Approx(2.5).epsilon(1e-15));
  CHECK(s.p95_ns == Approx(3.85).epsilon(1e-12));

  CHECK_THROWS_AS(bench::summarize({}), DomainError);
}

TEST_CASE("iteration counts are validated") {
  bench::BenchmarkSpec s = quick_spec();
  s.warmup_iters = 0;
  CHECK_THROWS_AS(bench::run_inference_bench(s), ContractError);
  s.warmup_iters = 1;
  s.timed_iters = 0;
  CHECK_THROWS_AS(bench::run_inference_bench(s), ContractError);
}

TEST_CASE("canonical systems build with the advertised shapes") {
  bench::SystemSpec diamond;
  diamond.kind = "diamond";
  diamond.supercell = 2;
  CHECK(diamond.build().size() == 64);

  bench::SystemSpec water;
  water.kind = "water";
  water.n_molecules = 4;
  water.box_length = 9.0;
  const geometry::AtomicConfiguration w = water.build();
  CHECK(w.size() == 12);
  CHECK(w.periodic());

  bench::SystemSpec dimer;
  dimer.kind = "dimer";
  dimer.separation = 1.3;
  const geometry::AtomicConfiguration d = dimer.build();
  CHECK(d.size() == 2);
  double dist2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double dd = d.positions[1][k] - d.positions[0][k];
    dist2 += dd * dd;
  }
  CHECK(std::sqrt(dist2) == Approx(1.3).epsilon(1e-14));

  // jitter is seeded: same seed reproduces coordinates bitwise
  bench::SystemSpec j1 = diamond;
  j1.perturb_sigma = 0.05;
  j1.seed = 3;
  bench::SystemSpec j2 = j1;
  const auto p1 = j1.build();
  const auto p2 = j2.build();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (int k = 0; k < 3; ++k) CHECK(p1.positions[i][k] == p2.positions[i][k]);
  bench::SystemSpec j3 = j1;
  j3.seed = 4;
  CHECK(j3.build().positions[0][0] != p1.positions[0][0]);

  CHECK(j1.describe() == j2.describe());

  bench::SystemSpec bad;
  bad.kind = "gasgiant";
  CHECK_THROWS_AS(bad.build(), ConfigurationError);
}

TEST_CASE("timed window excludes warm-up and records per-stage attribution") {
  bench::BenchmarkSpec spec = quick_spec();
  spec.warmup_iters = 3;
  spec.timed_iters = 4;
  const bench::BenchmarkReport rep = bench::run_inference_bench(spec);

  // statistics come from the timed window only
  CHECK(rep.times_ns.size() == 4);
  CHECK(rep.warmup_iters == 3);
  CHECK(rep.summary.mean_ns == Approx(bench::summarize(rep.times_ns).mean_ns));
  CHECK((rep.cov_reruns == 0 || rep.cov_reruns == 1));

  std::set<std::string> names;
  for (const auto& [name, sec] : rep.block_seconds) {
    CHECK(sec >= 0.0);
    names.insert(name);
  }
  const std::set<std::string> expected{
      "neighbor_list",       "spherical_harmonics",      "linear_up",
      "edge_embedding_A",    "symmetric_contraction_B",  "message_update",
      "readout"};
  CHECK(names == expected);

  // scoped timers live inside the measured region, so their sum is bounded
  // by the wall time of the window they cover
  CHECK(block_seconds_sum(rep) <= total_seconds(rep) * (1.0 + 1e-9));

  bench::BenchmarkSpec fspec = spec;
  fspec.forces = true;
  const bench::BenchmarkReport frep = bench::run_inference_bench(fspec);
  std::set<std::string> fnames;
  for (const auto& [name, sec] : frep.block_seconds) fnames.insert(name);
  CHECK(fnames.count("backward") == 1);
}

TEST_CASE("single-iteration windows have zero spread") {
  bench::BenchmarkSpec spec = quick_spec();
  spec.timed_iters = 1;
  const bench::BenchmarkReport rep = bench::run_inference_bench(spec);
  CHECK(rep.times_ns.size() == 1);
  CHECK(rep.summary.std_ns == 0.0);
  CHECK(rep.summary.mean_ns == rep.times_ns[0]);
  CHECK(rep.summary.median_ns == rep.summary.mean_ns);
  CHECK(rep.summary.p95_ns == rep.summary.mean_ns);
}

TEST_CASE("speedup is a guarded mean-time ratio") {
  bench::BenchmarkReport base;
  base.system = "diamond n=2 sigma=0.000000";
  base.n_atoms = 64;
  base.batch_size = 1;
  base.forces = false;
  base.summary.mean_ns = 366.1e6;

  bench::BenchmarkReport fast = base;
  fast.summary.mean_ns = 122.9e6;
  CHECK(bench::compute_speedup(base, fast) == Approx(2.98).epsilon(1e-3));

  bench::BenchmarkReport ref = base;
  ref.summary.mean_ns = 292.600e6;
  bench::BenchmarkReport fused = base;
  fused.summary.mean_ns = 96.096e6;
  CHECK(bench::compute_speedup(ref, fused) == Approx(3.045).epsilon(1e-3));

  CHECK(bench::compute_speedup(base, base) == 1.0);

  const double ab = bench::compute_speedup(base, fast);
  const double ba = bench::compute_speedup(fast, base);
  CHECK(std::abs(ab * ba - 1.0) < 1e-12);

  bench::BenchmarkReport other = fast;
  other.n_atoms = 8;
  CHECK_THROWS_AS(bench::compute_speedup(base, other), ContractError);
  other = fast;
  other.system = "water n=8 box=9.0";
  CHECK_THROWS_AS(bench::compute_speedup(base, other), ContractError);
  other = fast;
  other.batch_size = 2;
  CHECK_THROWS_AS(bench::compute_speedup(base, other), ContractError);
  other = fast;
  other.forces = true;
  CHECK_THROWS_AS(bench::compute_speedup(base, other), ContractError);

  bench::BenchmarkReport untimed = base;
  untimed.summary.mean_ns = 0.0;
  CHECK_THROWS_AS(bench::compute_speedup(base, untimed), ContractError);
}

TEST_CASE("surrogate loss and gradient") {
  const std::vector<double> zero(5, 0.0);
  CHECK(bench::dummy_loss(zero) == 0.1);

  std::vector<double> g(5, -1.0);
  bench::dummy_loss_grad(zero, g);
  for (double v : g) CHECK(v == 0.0);

  const std::vector<double> x{0.5, -2.0, 1.5};
  CHECK(bench::dummy_loss(x) == Approx(0.25 + 4.0 + 2.25 + 0.1).epsilon(1e-15));
  std::vector<double> gx(3);
  bench::dummy_loss_grad(x, gx);
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == -4.0);
  CHECK(gx[2] == 3.0);

  std::vector<double> wrong(2);
  CHECK_THROWS_AS(bench::dummy_loss_grad(x, wrong), DimensionError);
}

TEST_CASE("block replay benchmark reports discrepancy against double precision") {
  bench::BenchmarkSpec spec = quick_spec();
  spec.timed_iters = 2;

  // replaying under full double precision reproduces the baseline bitwise
  const bench::BlockBenchResult same =
      bench::run_block_bench(spec, "edge_embedding_A");
  CHECK(same.max_abs_err == 0.0);
  CHECK(same.max_rel_err == 0.0);
  CHECK(same.block_id == "edge_embedding_A");
  CHECK(same.forward.system.find("block=edge_embedding_A") != std::string::npos);
  CHECK(same.backward.system.find("backward") != std::string::npos);
  CHECK(same.forward.times_ns.size() == 2);
  CHECK(same.backward.times_ns.size() == 2);
  CHECK(same.forward.energy > 0.0);

  bench::BenchmarkSpec half = spec;
  half.policy = numerics::PrecisionPolicy::parse("bf16");
  const bench::BlockBenchResult lossy =
      bench::run_block_bench(half, "edge_embedding_A");
  CHECK(lossy.max_rel_err >= 1e-4);
  CHECK(lossy.max_rel_err <= 1e-1);
  CHECK(lossy.max_abs_err > 0.0);
  CHECK(lossy.forward.output_hash != same.forward.output_hash);

  CHECK_THROWS_AS(bench::run_block_bench(spec, "flux_capacitor"), ContractError);
}

TEST_CASE("reports round-trip through JSON and emit CSV") {
  bench::BenchmarkSpec spec = quick_spec();
  const bench::BenchmarkReport rep = bench::run_inference_bench(spec);

  const std::string jpath = "bench_report_roundtrip.json";
  bench::emit_report(rep, "json", jpath);
  const bench::BenchmarkReport back = bench::parse_report_json(jpath);

  CHECK(back.schema_version == rep.schema_version);
  CHECK(back.system == rep.system);
  CHECK(back.n_atoms == rep.n_atoms);
  CHECK(back.backend == rep.backend);
  CHECK(back.policy == rep.policy);
  CHECK(back.seed == rep.seed);
  CHECK(back.warmup_iters == rep.warmup_iters);
  CHECK(back.batch_size == rep.batch_size);
  CHECK(back.forces == rep.forces);
  REQUIRE(back.times_ns.size() == rep.times_ns.size());
  for (std::size_t i = 0; i < rep.times_ns.size(); ++i)
    CHECK(back.times_ns[i] == rep.times_ns[i]);
  CHECK(back.summary.mean_ns == rep.summary.mean_ns);
  CHECK(back.summary.std_ns == rep.summary.std_ns);
  CHECK(back.summary.median_ns == rep.summary.median_ns);
  CHECK(back.summary.p95_ns == rep.summary.p95_ns);
  CHECK(back.cov_reruns == rep.cov_reruns);
  REQUIRE(back.block_seconds.size() == rep.block_seconds.size());
  for (std::size_t i = 0; i < rep.block_seconds.size(); ++i) {
    CHECK(back.block_seconds[i].first == rep.block_seconds[i].first);
    CHECK(back.block_seconds[i].second == rep.block_seconds[i].second);
  }
  CHECK(back.energy == rep.energy);
  CHECK(back.output_hash == rep.output_hash);
  CHECK(back.build_info == rep.build_info);
  CHECK(back.timestamp == rep.timestamp);
  CHECK(back.threads == rep.threads);
  CHECK(back.receipt.active == rep.receipt.active);
  CHECK(back.receipt.seed == rep.receipt.seed);

  const std::string cpath = "bench_report.csv";
  bench::emit_report(rep, "csv", cpath);
  std::ifstream csv(cpath);
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "schema_version,1");
  bool saw_blocks = false, saw_iters = false;
  while (std::getline(csv, line)) {
    if (line == "block,seconds") saw_blocks = true;
    if (line == "iter,time_ns") saw_iters = true;
  }
  CHECK(saw_blocks);
  CHECK(saw_iters);

  CHECK_THROWS_AS(bench::emit_report(rep, "yaml", "x.yaml"), ConfigurationError);
  CHECK_THROWS_AS(bench::emit_report(rep, "json", "no_such_dir/x.json"), IoError);
  CHECK_THROWS_AS(bench::parse_report_json("missing.json"), IoError);

  {
    std::ofstream bad("bench_garbage.json");
    bad << "{ not json at all";
  }
  CHECK_THROWS_AS(bench::parse_report_json("bench_garbage.json"), ParseError);

  {
    std::ofstream partial("bench_partial.json");
    partial << "{\"schema_version\": 1}";
  }
  CHECK_THROWS_AS(bench::parse_report_json("bench_partial.json"), ParseError);

  std::remove(jpath.c_str());
  std::remove(cpath.c_str());
  std::remove("bench_garbage.json");
  std::remove("bench_partial.json");
}

TEST_CASE("fnv1a fingerprints distinguish payloads") {
  const double a[2] = {1.0, 2.0};
  const double b[2] = {1.0, 2.0000000000000004};
  CHECK(bench::fnv1a(a, sizeof a) == bench::fnv1a(a, sizeof a));
  CHECK(bench::fnv1a(a, sizeof a) != bench::fnv1a(b, sizeof b));
  // reference vector: FNV-1a of the empty string is the offset basis
  CHECK(bench::fnv1a(a, 0) == 0xcbf29ce484222325ULL);
}
