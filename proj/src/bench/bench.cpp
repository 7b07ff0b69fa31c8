#include "equiprec/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "equiprec/errors.hpp"
#include "equiprec/geometry/builders.hpp"

namespace equiprec::bench {

using json = nlohmann::json;

std::uint64_t fnv1a(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

DeterminismReceipt g_receipt;

int env_threads() {
  const char* s = std::getenv("EQUIPREC_THREADS");
  if (!s) return 1;
  const int n = std::atoi(s);
  return n >= 1 ? n : 1;
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string build_info_string() {
#if defined(__clang__)
  return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  return std::string("gcc ") + __VERSION__;
#else
  return "unknown compiler";
#endif
}

double now_ns() {
  return double(std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::steady_clock::now().time_since_epoch())
                    .count());
}

std::uint64_t hash_result(const model::EvalResult& r) {
  std::uint64_t h = fnv1a(&r.energy, sizeof r.energy);
  if (!r.per_atom.empty()) {
    const std::uint64_t h2 =
        fnv1a(r.per_atom.data(), r.per_atom.size() * sizeof(double));
    h = fnv1a(&h2, sizeof h2) ^ h;
  }
  if (!r.forces.empty()) {
    const std::uint64_t h3 =
        fnv1a(r.forces.data(), r.forces.size() * sizeof(geometry::Vec3));
    h = fnv1a(&h3, sizeof h3) ^ h;
  }
  return h;
}

void fill_metadata(BenchmarkReport& rep, const BenchmarkSpec& spec,
                   long long n_atoms) {
  rep.system = spec.system.describe();
  rep.n_atoms = n_atoms;
  rep.backend = model::backend_name(spec.backend);
  rep.policy = spec.policy.str();
  rep.seed = spec.seed;
  rep.warmup_iters = spec.warmup_iters;
  rep.batch_size = spec.batch_size;
  rep.forces = spec.forces;
  rep.build_info = build_info_string();
  rep.timestamp = now_iso8601();
  rep.threads = env_threads();
  rep.receipt = g_receipt;
}

// runs fn() warmup+timed times and fills the sample vector; re-runs the
// timed window once if the coefficient of variation exceeds 20%. The window
// hook runs before each timed window so per-stage accumulators can be reset
// to cover exactly the reported samples.
template <class F, class H>
void timed_window(const BenchmarkSpec& spec, BenchmarkReport& rep, F&& fn,
                  H&& window_start) {
  if (spec.warmup_iters < 1)
    throw ContractError("benchmark: warmup_iters must be >= 1");
  if (spec.timed_iters < 1)
    throw ContractError("benchmark: timed_iters must be >= 1");
  for (int i = 0; i < spec.warmup_iters; ++i) fn();
  for (int attempt = 0;; ++attempt) {
    window_start();
    rep.times_ns.clear();
    rep.times_ns.reserve(std::size_t(spec.timed_iters));
    for (int i = 0; i < spec.timed_iters; ++i) {
      const double t0 = now_ns();
      fn();
      rep.times_ns.push_back(now_ns() - t0);
    }
    rep.summary = summarize(rep.times_ns);
    const bool noisy = rep.summary.mean_ns > 0.0 &&
                       rep.summary.std_ns / rep.summary.mean_ns > 0.20;
    if (!noisy || attempt >= 1) break;
    ++rep.cov_reruns;
  }
}

template <class F>
void timed_window(const BenchmarkSpec& spec, BenchmarkReport& rep, F&& fn) {
  timed_window(spec, rep, std::forward<F>(fn), [] {});
}

}  // namespace

DeterminismReceipt set_deterministic(std::uint64_t seed) {
  if (model::evaluation_count() != 0)
    throw ContractError(
        "set_deterministic: must run before the first model evaluation");
  g_receipt.active = true;
  g_receipt.seed = seed;
  g_receipt.fixed_order_reductions = true;
  g_receipt.threads = env_threads();
  return g_receipt;
}

const DeterminismReceipt& determinism_receipt() { return g_receipt; }

geometry::AtomicConfiguration SystemSpec::build() const {
  geometry::AtomicConfiguration base;
  if (kind == "diamond") {
    base = geometry::diamond_supercell(supercell);
  } else if (kind == "water") {
    base = geometry::water_box(n_molecules, box_length, seed);
  } else if (kind == "dimer") {
    base = geometry::dimer(6, 6, separation);
  } else {
    throw ConfigurationError("unknown system kind: " + kind);
  }
  if (perturb_sigma > 0.0) base = geometry::perturbed(base, perturb_sigma, seed + 1);
  return base;
}

std::string SystemSpec::describe() const {
  if (kind == "diamond")
    return "diamond n=" + std::to_string(supercell) +
           " sigma=" + std::to_string(perturb_sigma);
  if (kind == "water")
    return "water n=" + std::to_string(n_molecules) +
           " box=" + std::to_string(box_length);
  return kind + " d=" + std::to_string(separation);
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw DomainError("percentile: empty sample set");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("percentile: p outside [0,1]");
  std::sort(samples.begin(), samples.end());
  const double rank = p * double(samples.size() - 1);
  const std::size_t lo = std::size_t(rank);
  if (lo + 1 >= samples.size()) return samples.back();
  const double frac = rank - double(lo);
  return samples[lo] + frac * (samples[lo + 1] - samples[lo]);
}

Summary summarize(const std::vector<double>& times_ns) {
  if (times_ns.empty()) throw DomainError("summarize: no samples");
  Summary s;
  double sum = 0.0;
  for (double t : times_ns) sum += t;
  s.mean_ns = sum / double(times_ns.size());
  double var = 0.0;
  for (double t : times_ns) var += (t - s.mean_ns) * (t - s.mean_ns);
  s.std_ns = std::sqrt(var / double(times_ns.size()));
  s.median_ns = percentile(times_ns, 0.5);
  s.p95_ns = percentile(times_ns, 0.95);
  return s;
}

BenchmarkReport run_inference_bench(const BenchmarkSpec& spec) {
  model::ModelConfig cfg = spec.cfg;
  cfg.seed = spec.seed;
  const model::Model m = model::Model::create(cfg);
  const geometry::AtomicConfiguration at = spec.system.build();

  BenchmarkReport rep;
  fill_metadata(rep, spec, (long long)at.size());

  model::EvalOptions opts;
  opts.policy = spec.policy;
  opts.backend = spec.backend;
  opts.forces = spec.forces;
  opts.stage_times = &rep.block_seconds;

  model::EvalResult last;
  timed_window(
      spec, rep,
      [&] {
        for (int b = 0; b < spec.batch_size; ++b) last = m.evaluate(at, opts);
      },
      // stage attribution covers exactly the reported window, not warmup
      [&] { rep.block_seconds.clear(); });
  rep.energy = last.energy;
  rep.output_hash = hash_result(last);
  return rep;
}

BlockBenchResult run_block_bench(const BenchmarkSpec& spec,
                                 const std::string& block_id) {
  model::ModelConfig cfg = spec.cfg;
  cfg.seed = spec.seed;
  const model::Model m = model::Model::create(cfg);
  const geometry::AtomicConfiguration at = spec.system.build();

  // capture the block inputs on one FP64 forward pass
  model::BlockCapture cap;
  model::EvalOptions copts;
  copts.capture = &cap;
  m.evaluate(at, copts);

  const numerics::PrecisionPolicy fp64{};
  const std::vector<double> base = model::replay_block(m, cap, block_id, fp64);

  BlockBenchResult out;
  out.block_id = block_id;
  fill_metadata(out.forward, spec, (long long)at.size());
  fill_metadata(out.backward, spec, (long long)at.size());
  out.forward.system += " block=" + block_id;
  out.backward.system += " block=" + block_id + " backward";

  std::vector<double> replayed;
  timed_window(spec, out.forward,
               [&] { replayed = model::replay_block(m, cap, block_id, spec.policy); });
  out.forward.energy = dummy_loss(replayed);
  out.forward.output_hash = fnv1a(replayed.data(), replayed.size() * sizeof(double));

  // relative errors are measured against the scale of the whole baseline
  // tensor; a per-element denominator would be unbounded near zeros of the
  // reference output and carry no precision signal
  double scale = 0.0;
  for (double v : base) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double ae = std::abs(replayed[i] - base[i]);
    out.max_abs_err = std::max(out.max_abs_err, ae);
    out.max_rel_err = std::max(out.max_rel_err, ae / (scale + 1e-12));
  }

  std::vector<double> adj;
  timed_window(spec, out.backward, [&] {
    adj = model::replay_block_backward(m, cap, block_id, spec.policy);
  });
  out.backward.energy = dummy_loss(adj);
  out.backward.output_hash = fnv1a(adj.data(), adj.size() * sizeof(double));
  return out;
}

double compute_speedup(const BenchmarkReport& baseline, const BenchmarkReport& variant) {
  if (baseline.system != variant.system || baseline.n_atoms != variant.n_atoms ||
      baseline.batch_size != variant.batch_size || baseline.forces != variant.forces)
    throw ContractError("compute_speedup: reports describe different workloads");
  if (variant.summary.mean_ns <= 0.0)
    throw ContractError("compute_speedup: variant has no timing data");
  return baseline.summary.mean_ns / variant.summary.mean_ns;
}

double dummy_loss(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s + 0.1;
}

void dummy_loss_grad(std::span<const double> x, std::span<double> g) {
  if (x.size() != g.size()) throw DimensionError("dummy_loss_grad: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
}

namespace {

json receipt_to_json(const DeterminismReceipt& r) {
  return json{{"active", r.active},
              {"seed", r.seed},
              {"fixed_order_reductions", r.fixed_order_reductions},
              {"threads", r.threads}};
}

DeterminismReceipt receipt_from_json(const json& j) {
  DeterminismReceipt r;
  r.active = j.at("active").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.fixed_order_reductions = j.at("fixed_order_reductions").get<bool>();
  r.threads = j.at("threads").get<int>();
  return r;
}

json report_to_json(const BenchmarkReport& r) {
  json blocks = json::array();
  for (const auto& [name, sec] : r.block_seconds)
    blocks.push_back(json{{"name", name}, {"seconds", sec}});
  return json{{"schema_version", r.schema_version},
              {"system", r.system},
              {"n_atoms", r.n_atoms},
              {"backend", r.backend},
              {"policy", r.policy},
              {"seed", r.seed},
              {"warmup_iters", r.warmup_iters},
              {"batch_size", r.batch_size},
              {"forces", r.forces},
              {"times_ns", r.times_ns},
              {"mean_ns", r.summary.mean_ns},
              {"std_ns", r.summary.std_ns},
              {"median_ns", r.summary.median_ns},
              {"p95_ns", r.summary.p95_ns},
              {"cov_reruns", r.cov_reruns},
              {"blocks", blocks},
              {"energy", r.energy},
              {"output_hash", r.output_hash},
              {"build_info", r.build_info},
              {"timestamp", r.timestamp},
              {"threads", r.threads},
              {"deterministic", receipt_to_json(r.receipt)}};
}

}  // namespace

void emit_report(const BenchmarkReport& report, const std::string& format,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("emit_report: cannot open " + path);
  if (format == "json") {
    out << report_to_json(report).dump(2) << "\n";
  } else if (format == "csv") {
    out << "schema_version," << report.schema_version << "\n";
    out << "system," << report.system << "\n";
    out << "backend," << report.backend << "\n";
    out << "policy," << report.policy << "\n";
    out << "seed," << report.seed << "\n";
    out << "mean_ns," << report.summary.mean_ns << "\n";
    out << "std_ns," << report.summary.std_ns << "\n";
    out << "median_ns," << report.summary.median_ns << "\n";
    out << "p95_ns," << report.summary.p95_ns << "\n";
    out << "cov_reruns," << report.cov_reruns << "\n";
    out << "energy," << report.energy << "\n";
    out << "block,seconds\n";
    for (const auto& [name, sec] : report.block_seconds)
      out << name << "," << sec << "\n";
    out << "iter,time_ns\n";
    for (std::size_t i = 0; i < report.times_ns.size(); ++i)
      out << i << "," << report.times_ns[i] << "\n";
  } else {
    throw ConfigurationError("emit_report: unknown format " + format);
  }
  if (!out.good()) throw IoError("emit_report: write failed for " + path);
}

BenchmarkReport parse_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("parse_report_json: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("parse_report_json: ") + e.what());
  }
  try {
    BenchmarkReport r;
    r.schema_version = j.at("schema_version").get<int>();
    r.system = j.at("system").get<std::string>();
    r.n_atoms = j.at("n_atoms").get<long long>();
    r.backend = j.at("backend").get<std::string>();
    r.policy = j.at("policy").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.warmup_iters = j.at("warmup_iters").get<int>();
    r.batch_size = j.at("batch_size").get<int>();
    r.forces = j.at("forces").get<bool>();
    r.times_ns = j.at("times_ns").get<std::vector<double>>();
    r.summary.mean_ns = j.at("mean_ns").get<double>();
    r.summary.std_ns = j.at("std_ns").get<double>();
    r.summary.median_ns = j.at("median_ns").get<double>();
    r.summary.p95_ns = j.at("p95_ns").get<double>();
    r.cov_reruns = j.at("cov_reruns").get<int>();
    for (const auto& b : j.at("blocks"))
      r.block_seconds.emplace_back(b.at("name").get<std::string>(),
                                   b.at("seconds").get<double>());
    r.energy = j.at("energy").get<double>();
    r.output_hash = j.at("output_hash").get<std::uint64_t>();
    r.build_info = j.at("build_info").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.threads = j.at("threads").get<int>();
    r.receipt = receipt_from_json(j.at("deterministic"));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("parse_report_json: bad schema: ") + e.what());
  }
}

}  // namespace equiprec::bench
