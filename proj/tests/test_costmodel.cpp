#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "equiprec/costmodel/cost.hpp"
#include "equiprec/geometry/builders.hpp"
#include "equiprec/geometry/neighbor.hpp"

using namespace equiprec;
using costmodel::CostConstants;
using costmodel::CostEstimate;
using costmodel::GraphStats;
using geometry::AtomicConfiguration;
using model::Model;
using model::ModelConfig;

namespace {

ModelConfig toy_config(int channels) {
  ModelConfig c;
  c.r_max = 3.0;
  c.channels = channels;
  c.l_max = 2;
  c.message_l_max = 1;
  c.correlation = 3;
  c.n_bessel = 4;
  c.envelope_p = 5;
  c.num_layers = 2;
  c.readout_hidden = 4;
  c.radial_hidden = {8};
  c.species = {6};
  c.avg_num_neighbors = 12.0;
  c.seed = 3;
  return c;
}

AtomicConfiguration toy_crystal() {
  return geometry::perturbed(geometry::diamond_supercell(1), 0.05, 11);
}

}  // namespace

TEST_CASE("degree-zero model keeps a single unit coupling per layer") {
  ModelConfig c = toy_config(8);
  c.l_max = 0;
  c.message_l_max = 0;
  const auto plan = model::ModelPlan::build(c);
  for (const auto& lp : plan.layers) {
    REQUIRE(lp.paths.size() == 1);
    CHECK(lp.paths[0].l1 == 0);
    CHECK(lp.paths[0].l2 == 0);
    CHECK(lp.paths[0].l3 == 0);
    CHECK(lp.dense_triples_total == 1);
  }
  const GraphStats stats{10, 4.0};
  const CostEstimate e = costmodel::estimate_cost(c, stats, CostConstants{});
  // d_n N K^2 * one unit triple per layer
  CHECK(e.edge_cg_macs == 4.0 * 10 * 64 * c.num_layers);
}

TEST_CASE("edge coupling estimate scales exactly with channel squared") {
  const GraphStats stats{20, 8.0};
  const CostConstants cal{3.0, 1.7, 1.2, 0.9};
  const CostEstimate e1 = costmodel::estimate_cost(toy_config(8), stats, cal);
  const CostEstimate e2 = costmodel::estimate_cost(toy_config(16), stats, cal);
  CHECK(e2.edge_cg_macs == 4.0 * e1.edge_cg_macs);
}

TEST_CASE("predicted activation shapes") {
  ModelConfig c = toy_config(128);
  c.l_max = 1;
  const GraphStats stats{64, 10.0};
  const CostEstimate e = costmodel::estimate_cost(c, stats);
  CHECK(e.a_shape[0] == 64);
  CHECK(e.a_shape[1] == 128);
  CHECK(e.a_shape[2] == 4);
  CHECK(e.a_elements == 64LL * 128 * 4);
  CHECK(e.m_shape[2] == 4);  // (message_l_max+1)^2 with L_max = 1
  CHECK(e.b_elements == e.b_shape[0] * e.b_shape[1] * e.b_shape[2]);
}

TEST_CASE("zero-edge graph measures zero on every edge block") {
  const Model m = Model::create(toy_config(4));
  AtomicConfiguration far;
  far.positions = {{0, 0, 0}, {50, 0, 0}};
  far.atomic_numbers = {6, 6};
  const CostEstimate meas = costmodel::measure_cost(m, far);
  CHECK(meas.sh_macs == 0.0);
  CHECK(meas.radial_macs == 0.0);
  CHECK(meas.edge_cg_macs == 0.0);
  CHECK(meas.node_tp_macs > 0.0);  // node-local work still happens
}

TEST_CASE("measurement is deterministic and needs counting mode") {
  const Model m = Model::create(toy_config(4));
  const AtomicConfiguration at = toy_crystal();
  const CostEstimate a = costmodel::measure_cost(m, at);
  const CostEstimate b = costmodel::measure_cost(m, at);
  CHECK(a.sh_macs == b.sh_macs);
  CHECK(a.radial_macs == b.radial_macs);
  CHECK(a.edge_cg_macs == b.edge_cg_macs);
  CHECK(a.node_tp_macs == b.node_tp_macs);

  model::EvalOptions opts;  // count defaults to off
  const auto res = m.evaluate(at, opts);
  CHECK_THROWS_AS(costmodel::from_counters(m, res.counters, 8), ContractError);
}

TEST_CASE("calibrated estimates track the counters") {
  const AtomicConfiguration at = toy_crystal();
  const ModelConfig base = toy_config(8);
  const CostConstants cal = costmodel::calibrate(base, at, {8, 16, 32});
  const GraphStats stats = GraphStats::of(at, base.r_max);

  // the fused edge kernel does K(K+1) work per dense triple, so the fitted
  // constant must land between 1 + 1/32 and 1 + 1/8
  CHECK(cal.edge_cg > 1.03);
  CHECK(cal.edge_cg < 1.13);

  for (int k : {8, 16, 32}) {
    ModelConfig c = base;
    c.channels = k;
    const CostEstimate pred = costmodel::estimate_cost(c, stats, cal);
    const CostEstimate meas = costmodel::measure_cost(Model::create(c), at);
    CHECK(std::abs(meas.edge_cg_macs - pred.edge_cg_macs) / meas.edge_cg_macs <
          0.10);
    // the node contraction law has no K dependence left after calibration
    CHECK(std::abs(meas.node_tp_macs - pred.node_tp_macs) / meas.node_tp_macs <
          1e-9);
    CHECK(std::abs(meas.sh_macs - pred.sh_macs) / meas.sh_macs < 1e-12);
    // element counts are exact by construction, not fitted
    CHECK(meas.a_elements == pred.a_elements);
    CHECK(meas.b_elements == pred.b_elements);
    CHECK(meas.m_elements == pred.m_elements);
  }
}

TEST_CASE("measured scaling laws") {
  const AtomicConfiguration at = toy_crystal();
  const auto nl = geometry::build_neighbor_list(at, 3.0);
  const double E = double(nl.num_edges());
  REQUIRE(E > 0);

  // spherical harmonics: exactly 3 MACs per component per edge
  double sh[4] = {0, 0, 0, 0};
  for (int lmax = 1; lmax <= 3; ++lmax) {
    ModelConfig c = toy_config(4);
    c.l_max = lmax;
    sh[lmax] = costmodel::measure_cost(Model::create(c), at).sh_macs;
    CHECK(sh[lmax] == E * 3.0 * (lmax + 1) * (lmax + 1));
  }
  for (int lmax = 2; lmax <= 3; ++lmax) {
    const double law = double((lmax + 1) * (lmax + 1)) / ((lmax) * (lmax));
    const double got = sh[lmax] / sh[lmax - 1];
    CHECK(std::abs(got - law) / law < 0.15);
  }

  // edge coupling grows as K^2 within 15% over one doubling
  double cg[3];
  int i = 0;
  for (int k : {8, 16, 32})
    cg[i++] = costmodel::measure_cost(Model::create(toy_config(k)), at).edge_cg_macs;
  CHECK(std::abs(cg[1] / cg[0] - 4.0) / 4.0 < 0.15);
  CHECK(std::abs(cg[2] / cg[1] - 4.0) / 4.0 < 0.15);
}

TEST_CASE("estimate validates its inputs") {
  const GraphStats bad_n{0, 4.0};
  CHECK_THROWS_AS(costmodel::estimate_cost(toy_config(8), bad_n), DomainError);
  const GraphStats bad_d{4, -1.0};
  CHECK_THROWS_AS(costmodel::estimate_cost(toy_config(8), bad_d), DomainError);
  ModelConfig c = toy_config(8);
  c.r_max = -1.0;
  CHECK_THROWS_AS(costmodel::estimate_cost(c, GraphStats{4, 4.0}),
                  ConfigurationError);
}
