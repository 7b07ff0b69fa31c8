#include "equiprec/costmodel/cost.hpp"

#include "equiprec/errors.hpp"
#include "equiprec/geometry/neighbor.hpp"

namespace equiprec::costmodel {

namespace {

// sum over layers of sum over retained paths of (2l1+1)(2l2+1)(2l3+1)
long long dense_triples_all_layers(const model::ModelPlan& plan) {
  long long s = 0;
  for (const auto& lp : plan.layers) s += lp.dense_triples_total;
  return s;
}

// sum_L n_terms(L) * (2L+1): the per-channel contraction row dimension
long long contraction_row(const model::ModelPlan& plan) {
  long long s = 0;
  for (const auto& cp : plan.contractions)
    s += (long long)cp.terms.size() * (2 * cp.L + 1);
  return s;
}

}  // namespace

GraphStats GraphStats::of(const geometry::AtomicConfiguration& config, double r_max) {
  const auto nl = geometry::build_neighbor_list(config, r_max);
  GraphStats s;
  s.n_atoms = (long long)config.size();
  s.avg_neighbors = double(nl.num_edges()) / double(config.size());
  return s;
}

CostEstimate estimate_cost(const model::ModelConfig& cfg, const GraphStats& stats,
                           const CostConstants& constants) {
  cfg.validate();
  if (stats.n_atoms < 1) throw DomainError("estimate_cost: n_atoms must be >= 1");
  if (stats.avg_neighbors < 0.0)
    throw DomainError("estimate_cost: avg_neighbors must be >= 0");
  const model::ModelPlan plan = model::ModelPlan::build(cfg);

  const double N = double(stats.n_atoms);
  const double edges = stats.avg_neighbors * N;  // d_n * N
  const double K = double(cfg.channels);
  const long long sh_dim = (long long)(cfg.l_max + 1) * (cfg.l_max + 1);
  const long long msg_dim =
      (long long)(cfg.message_l_max + 1) * (cfg.message_l_max + 1);
  const long long brow = contraction_row(plan);

  CostEstimate e;
  e.sh_macs = constants.sh * edges * double(sh_dim);
  e.radial_macs = constants.radial * edges * double(cfg.n_bessel) * cfg.num_layers;
  e.edge_cg_macs =
      constants.edge_cg * edges * K * K * double(dense_triples_all_layers(plan));
  e.node_tp_macs =
      constants.node_tp * N * K * double(brow) * cfg.num_layers;

  e.a_elements = stats.n_atoms * cfg.channels * sh_dim;
  e.b_elements = stats.n_atoms * cfg.channels * brow;
  e.m_elements = stats.n_atoms * cfg.channels * msg_dim;
  e.a_shape = {stats.n_atoms, (long long)cfg.channels, sh_dim};
  e.b_shape = {stats.n_atoms, (long long)cfg.channels, brow};
  e.m_shape = {stats.n_atoms, (long long)cfg.channels, msg_dim};
  return e;
}

CostEstimate from_counters(const model::Model& m, const model::CostCounters& counters,
                           long long n_atoms) {
  if (!counters.enabled)
    throw ContractError("from_counters: evaluation ran without counting mode");
  CostEstimate e;
  e.sh_macs = double(counters.sh_macs);
  e.radial_macs = double(counters.radial_macs);
  e.edge_cg_macs = double(counters.edge_cg_macs);
  e.node_tp_macs = double(counters.node_tp_macs);
  e.a_elements = counters.a_elements;
  e.b_elements = counters.b_elements;
  e.m_elements = counters.m_elements;
  const long long sh_dim = (long long)(m.cfg.l_max + 1) * (m.cfg.l_max + 1);
  const long long msg_dim =
      (long long)(m.cfg.message_l_max + 1) * (m.cfg.message_l_max + 1);
  e.a_shape = {n_atoms, (long long)m.cfg.channels, sh_dim};
  e.b_shape = {n_atoms, (long long)m.cfg.channels,
               (long long)m.plan.b_row_dim_per_channel()};
  e.m_shape = {n_atoms, (long long)m.cfg.channels, msg_dim};
  return e;
}

CostEstimate measure_cost(const model::Model& m,
                          const geometry::AtomicConfiguration& config) {
  model::EvalOptions opts;
  opts.count = true;
  opts.backend = model::Backend::fused_batched;  // the counting convention
  const auto res = m.evaluate(config, opts);
  return from_counters(m, res.counters, (long long)config.size());
}

CostConstants calibrate(model::ModelConfig base,
                        const geometry::AtomicConfiguration& system,
                        const std::vector<int>& channel_sweep) {
  if (channel_sweep.empty())
    throw DomainError("calibrate: channel sweep must be nonempty");
  const GraphStats stats = GraphStats::of(system, base.r_max);

  // independent through-origin least squares per block:
  // c = sum(pred * meas) / sum(pred^2)
  double num[4] = {0, 0, 0, 0}, den[4] = {0, 0, 0, 0};
  const CostConstants unit{1.0, 1.0, 1.0, 1.0};
  for (int k : channel_sweep) {
    base.channels = k;
    const CostEstimate pred = estimate_cost(base, stats, unit);
    const model::Model m = model::Model::create(base);
    const CostEstimate meas = measure_cost(m, system);
    const double p[4] = {pred.sh_macs, pred.radial_macs, pred.edge_cg_macs,
                         pred.node_tp_macs};
    const double q[4] = {meas.sh_macs, meas.radial_macs, meas.edge_cg_macs,
                         meas.node_tp_macs};
    for (int i = 0; i < 4; ++i) {
      num[i] += p[i] * q[i];
      den[i] += p[i] * p[i];
    }
  }
  CostConstants c;
  c.sh = den[0] > 0 ? num[0] / den[0] : c.sh;
  c.radial = den[1] > 0 ? num[1] / den[1] : c.radial;
  c.edge_cg = den[2] > 0 ? num[2] / den[2] : c.edge_cg;
  c.node_tp = den[3] > 0 ? num[3] / den[3] : c.node_tp;
  return c;
}

}  // namespace equiprec::costmodel
