#include "equiprec/model/weights.hpp"

#include <cmath>

#include "equiprec/numerics/rng.hpp"

namespace equiprec::model {

const WeightShape& WeightLayout::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw ContractError("unknown weight array: " + name);
}

namespace {

void push(WeightLayout& lay, std::string name, std::vector<long> dims, int fan_in) {
  WeightShape e;
  e.name = std::move(name);
  e.offset = lay.total;
  e.dims = std::move(dims);
  e.fan_in = fan_in;
  lay.total += e.count();
  lay.entries.push_back(std::move(e));
}

}  // namespace

WeightLayout build_weight_layout(const ModelPlan& plan) {
  const ModelConfig& cfg = plan.cfg;
  const long K = cfg.channels;
  const long S = cfg.num_species();
  const long H = cfg.readout_hidden;
  WeightLayout lay;

  push(lay, "embedding", {S, K}, 1);
  for (int t = 0; t < cfg.num_layers; ++t) {
    const std::string base = "layer" + std::to_string(t) + ".";
    const LayerPlan& lp = plan.layers[std::size_t(t)];
    for (const auto& block : lp.in_irreps.items)
      push(lay, base + "linear_up.l" + std::to_string(block.l), {K, K}, int(K));
    long in_dim = cfg.n_bessel;
    int j = 0;
    for (long h : cfg.radial_hidden) {
      push(lay, base + "radial.w" + std::to_string(j++), {h, in_dim}, int(in_dim));
      in_dim = h;
    }
    push(lay, base + "radial.w" + std::to_string(j),
         {long(plan.n_paths(t)) * K, in_dim}, int(in_dim));
    for (int l = 0; l <= cfg.l_max; ++l)
      push(lay, base + "mix.l" + std::to_string(l), {K, K}, int(K));
    for (int L = 0; L <= cfg.message_l_max; ++L)
      push(lay, base + "message.L" + std::to_string(L),
           {S, K, long(plan.n_terms(L))}, plan.n_terms(L));
    for (int L = 0; L <= cfg.message_l_max; ++L)
      push(lay, base + "update.L" + std::to_string(L), {K, K}, int(K));
    for (const auto& block : lp.in_irreps.items)
      push(lay, base + "skip.L" + std::to_string(block.l), {S, K, K}, int(K));
    if (t + 1 < cfg.num_layers) {
      push(lay, base + "readout.w", {K}, int(K));
    } else {
      push(lay, base + "readout.w1", {H, K}, int(K));
      push(lay, base + "readout.w2", {H}, int(H));
    }
  }
  push(lay, "scale", {1}, 0);
  push(lay, "shift", {1}, 0);
  return lay;
}

ModelWeights initialize_weights(const ModelPlan& plan) {
  ModelWeights w;
  w.layout = build_weight_layout(plan);
  w.data.assign(w.layout.total, 0.0);
  numerics::Rng rng(plan.cfg.seed);
  for (const WeightShape& e : w.layout.entries) {
    double* p = w.data.data() + e.offset;
    if (e.fan_in == 0) {
      if (e.name == "scale") p[0] = plan.cfg.scale;
      else if (e.name == "shift") p[0] = plan.cfg.shift;
      continue;
    }
    const double bound = std::sqrt(3.0 / double(e.fan_in));
    for (std::size_t i = 0; i < e.count(); ++i) p[i] = rng.uniform(-bound, bound);
  }
  return w;
}

void audit_shapes(const ModelPlan& plan, const ModelWeights& weights) {
  const WeightLayout ref = build_weight_layout(plan);
  if (weights.data.size() != ref.total)
    throw ContractError("weight vector length " + std::to_string(weights.data.size()) +
                        " does not match the derived total " + std::to_string(ref.total));
  if (weights.layout.entries.size() != ref.entries.size())
    throw ContractError("weight layout has " +
                        std::to_string(weights.layout.entries.size()) +
                        " arrays, derived layout has " +
                        std::to_string(ref.entries.size()));
  for (std::size_t i = 0; i < ref.entries.size(); ++i) {
    const WeightShape& a = weights.layout.entries[i];
    const WeightShape& b = ref.entries[i];
    if (a.name != b.name || a.offset != b.offset || a.dims != b.dims)
      throw ContractError("weight array " + a.name + " does not match the shape " +
                          "derived from the config (expected " + b.name + ")");
  }
}

}  // namespace equiprec::model
