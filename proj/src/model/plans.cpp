#include "equiprec/model/plans.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace equiprec::model {

int ModelPlan::b_row_dim_per_channel() const {
  int d = 0;
  for (const auto& cp : contractions) d += int(cp.terms.size()) * (2 * cp.L + 1);
  return d;
}

int ModelPlan::b_offset(int L, int term, int m) const {
  int off = 0;
  for (int l = 0; l < L; ++l)
    off += int(contractions[std::size_t(l)].terms.size()) * (2 * l + 1);
  return off + term * (2 * L + 1) + (m + L);
}

namespace {

std::vector<PathPlan> build_paths(const so3::Irreps& in, const so3::Irreps& sh,
                                  const so3::Irreps& a) {
  std::vector<PathPlan> out;
  for (const so3::TPPath& p : so3::enumerate_paths(in, sh, a)) {
    PathPlan pp;
    pp.block_in = p.i_in1;
    pp.l1 = p.l1;
    pp.l2 = p.l2;
    pp.block_out = p.i_out;
    pp.l3 = p.l3;
    pp.entries = so3::clebsch_gordan(p.l1, p.l2, p.l3).sparse;
    pp.dense_triples =
        long(2 * p.l1 + 1) * long(2 * p.l2 + 1) * long(2 * p.l3 + 1);
    out.push_back(std::move(pp));
  }
  return out;
}

ContractionTerm one_factor_term(int L) {
  ContractionTerm t;
  t.degrees = {L};
  for (int m = -L; m <= L; ++m) {
    ContractionTerm::Entry e;
    e.m[0] = std::int8_t(m);
    e.big_m = std::int8_t(m);
    e.c = 1.0;
    t.entries.push_back(e);
  }
  return t;
}

ContractionTerm two_factor_term(int l1, int l2, int L) {
  ContractionTerm t;
  t.degrees = {l1, l2};
  for (const so3::CGEntry& e : so3::clebsch_gordan(l1, l2, L).sparse) {
    ContractionTerm::Entry out;
    out.m[0] = std::int8_t(e.m1);
    out.m[1] = std::int8_t(e.m2);
    out.big_m = std::int8_t(e.m3);
    out.c = e.v;
    t.entries.push_back(out);
  }
  return t;
}

ContractionTerm three_factor_term(int l1, int l2, int l3, int l12, int L) {
  ContractionTerm t;
  t.degrees = {l1, l2, l3};
  t.inter_l = l12;
  // ((l1 l2) l12, l3) -> L: contract the intermediate m12 away.
  std::map<std::tuple<int, int, int, int>, double> acc;
  const auto& c1 = so3::clebsch_gordan(l1, l2, l12).sparse;
  const auto& c2 = so3::clebsch_gordan(l12, l3, L).sparse;
  for (const so3::CGEntry& a : c1)
    for (const so3::CGEntry& b : c2)
      if (b.m1 == a.m3) acc[{a.m1, a.m2, b.m2, b.m3}] += a.v * b.v;
  for (const auto& [key, v] : acc) {
    if (std::fabs(v) < 1e-14) continue;
    ContractionTerm::Entry out;
    out.m[0] = std::int8_t(std::get<0>(key));
    out.m[1] = std::int8_t(std::get<1>(key));
    out.m[2] = std::int8_t(std::get<2>(key));
    out.big_m = std::int8_t(std::get<3>(key));
    out.c = v;
    t.entries.push_back(out);
  }
  return t;
}

ContractionPlan build_contraction(int L, int l_max, int correlation) {
  ContractionPlan cp;
  cp.L = L;
  // one factor: the identity coupling, only if the degree exists in A
  if (correlation >= 1 && L <= l_max) cp.terms.push_back(one_factor_term(L));
  if (correlation >= 2) {
    for (int l1 = 0; l1 <= l_max; ++l1)
      for (int l2 = l1; l2 <= l_max; ++l2) {
        if ((l1 + l2 + L) % 2 != 0) continue;  // parity of the A factors
        if (!so3::triangle_ok(l1, l2, L)) continue;
        cp.terms.push_back(two_factor_term(l1, l2, L));
      }
  }
  if (correlation >= 3) {
    for (int l1 = 0; l1 <= l_max; ++l1)
      for (int l2 = l1; l2 <= l_max; ++l2)
        for (int l3 = l2; l3 <= l_max; ++l3) {
          if ((l1 + l2 + l3 + L) % 2 != 0) continue;
          const int lo = std::max(std::abs(l1 - l2), std::abs(L - l3));
          const int hi = std::min(l1 + l2, L + l3);
          for (int l12 = lo; l12 <= hi; ++l12) {
            // an antisymmetric coupling of two equal copies vanishes
            if (l1 == l2 && (l1 + l2 + l12) % 2 != 0) continue;
            ContractionTerm t = three_factor_term(l1, l2, l3, l12, L);
            if (!t.entries.empty()) cp.terms.push_back(std::move(t));
          }
        }
  }
  return cp;
}

}  // namespace

ModelPlan ModelPlan::build(const ModelConfig& cfg) {
  cfg.validate();
  ModelPlan plan;
  plan.cfg = cfg;
  plan.sh_irreps = cfg.sh_irreps();
  plan.a_irreps = cfg.a_irreps();
  plan.hidden_irreps = cfg.hidden_irreps();
  for (int t = 0; t < cfg.num_layers; ++t) {
    LayerPlan lp;
    lp.in_irreps = cfg.layer_in_irreps(t);
    lp.paths = build_paths(lp.in_irreps, plan.sh_irreps, plan.a_irreps);
    for (const auto& p : lp.paths) lp.dense_triples_total += p.dense_triples;
    plan.layers.push_back(std::move(lp));
  }
  for (int L = 0; L <= cfg.message_l_max; ++L)
    plan.contractions.push_back(build_contraction(L, cfg.l_max, cfg.correlation));
  return plan;
}

}  // namespace equiprec::model
