#include "equiprec/model/engine.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>

#include "equiprec/model/radial.hpp"
#include "equiprec/so3/spherical.hpp"

namespace equiprec::model {

const char* backend_name(Backend b) {
  return b == Backend::reference_per_path ? "reference_per_path" : "fused_batched";
}

Backend backend_from_name(const std::string& name) {
  if (name == "reference_per_path" || name == "ref") return Backend::reference_per_path;
  if (name == "fused_batched" || name == "fused") return Backend::fused_batched;
  throw ParseError("unknown backend: " + name);
}

namespace {

std::atomic<long> g_eval_count{0};

using geometry::AtomicConfiguration;
using geometry::NeighborList;
using geometry::Vec3;
using numerics::QOps;
using numerics::quantize;
using so3::EquivariantTensor;
using so3::Irreps;
using so3::Layout;

// Linear-block arithmetic: operands cast to the linear format, the product
// rounded straight into the accumulation format (the mixed-precision GEMM
// convention: narrow inputs, wide accumulator).
inline double lprod(const QOps& ops, double wq, double x) {
  if (ops.fast) return wq * x;
  return quantize(wq * quantize(x, ops.lin), ops.acc);
}
inline double lstep(const QOps& ops, double s, double wq, double x) {
  if (ops.fast) return s + wq * x;
  return quantize(s + lprod(ops, wq, x), ops.acc);
}
// both operands cast (used for weight-gradient products)
inline double lprod2(const QOps& ops, double a, double b) {
  if (ops.fast) return a * b;
  return quantize(quantize(a, ops.lin) * quantize(b, ops.lin), ops.acc);
}

inline double silu(double x, const QOps& ops) {
  const double e = ops.q(std::exp(-x));
  const double d = ops.q(1.0 + e);
  const double s = ops.q(1.0 / d);
  return ops.mul(x, s);
}

// d silu / dx = s (1 + x (1 - s)), s = sigmoid(x)
inline double silu_grad(double x, const QOps& ops) {
  const double e = ops.q(std::exp(-x));
  const double d = ops.q(1.0 + e);
  const double s = ops.q(1.0 / d);
  double g = ops.q(1.0 - s);
  g = ops.mul(x, g);
  g = ops.q(1.0 + g);
  return ops.mul(s, g);
}

// ---------------------------------------------------------------------------
// evaluation context: quantized weights, quantized coupling constants,
// cached pointers per layer

struct LayerW {
  std::vector<const double*> up;       // per input block, K*K
  std::vector<const double*> radial;   // MLP matrices
  std::vector<std::pair<long, long>> radial_dims;  // (out, in)
  std::vector<const double*> mix;      // per l = 0..l_max, K*K
  std::vector<const double*> msg;      // per L, S*K*n_terms
  std::vector<const double*> upd;      // per L, K*K
  std::vector<const double*> skip;     // per input block, S*K*K
  const double* ro_w = nullptr;        // K (linear readout)
  const double* ro_w1 = nullptr;       // H*K
  const double* ro_w2 = nullptr;       // H
};

// mutable variant pointing into a gradient buffer with the same layout
struct LayerG {
  std::vector<double*> up, radial, mix, msg, upd, skip;
  double* ro_w = nullptr;
  double* ro_w1 = nullptr;
  double* ro_w2 = nullptr;
};

struct Ctx {
  const Model& model;
  const ModelConfig& cfg;
  const ModelPlan& plan;
  QOps ops;
  bool cast = true;
  bool count = false;

  std::vector<double> wq;  // quantized copy of the weight vector
  const double* embedding = nullptr;
  double scale_q = 0.0, shift_q = 0.0;
  double inv_norm = 0.0;  // 1/sqrt(avg_num_neighbors), default format
  std::vector<LayerW> lw;

  // quantized coupling constants
  std::vector<std::vector<std::vector<double>>> path_c;   // [layer][path][nz]
  std::vector<std::vector<std::vector<double>>> dense_c;  // [layer][path][dense]
  std::vector<std::vector<std::vector<double>>> contr_c;  // [L][term][nz]

  CostCounters counters;

  Ctx(const Model& m, const numerics::PrecisionPolicy& policy, bool counting)
      : model(m), cfg(m.cfg), plan(m.plan), ops(policy),
        cast(policy.cast_at_block_boundaries), count(counting) {
    wq = m.weights.data;
    if (!ops.fast) {
      for (const WeightShape& e : m.weights.layout.entries) {
        double* p = wq.data() + e.offset;
        const bool linear_class =
            e.name != "embedding" && e.name != "scale" && e.name != "shift";
        for (std::size_t i = 0; i < e.count(); ++i)
          p[i] = linear_class ? ops.ql(p[i]) : ops.q(p[i]);
      }
    }
    const WeightLayout& lay = m.weights.layout;
    embedding = wq.data() + lay.find("embedding").offset;
    scale_q = wq[lay.find("scale").offset];
    shift_q = wq[lay.find("shift").offset];
    inv_norm = ops.q(1.0 / std::sqrt(cfg.avg_num_neighbors));

    lw.resize(std::size_t(cfg.num_layers));
    for (int t = 0; t < cfg.num_layers; ++t) {
      const std::string base = "layer" + std::to_string(t) + ".";
      LayerW& L = lw[std::size_t(t)];
      const LayerPlan& lp = plan.layers[std::size_t(t)];
      for (const auto& block : lp.in_irreps.items)
        L.up.push_back(wq.data() +
                       lay.find(base + "linear_up.l" + std::to_string(block.l)).offset);
      for (int j = 0;; ++j) {
        const std::string nm = base + "radial.w" + std::to_string(j);
        bool found = false;
        for (const auto& e : lay.entries)
          if (e.name == nm) {
            L.radial.push_back(wq.data() + e.offset);
            L.radial_dims.push_back({e.dims[0], e.dims[1]});
            found = true;
            break;
          }
        if (!found) break;
      }
      for (int l = 0; l <= cfg.l_max; ++l)
        L.mix.push_back(wq.data() + lay.find(base + "mix.l" + std::to_string(l)).offset);
      for (int Lm = 0; Lm <= cfg.message_l_max; ++Lm)
        L.msg.push_back(wq.data() +
                        lay.find(base + "message.L" + std::to_string(Lm)).offset);
      for (int Lm = 0; Lm <= cfg.message_l_max; ++Lm)
        L.upd.push_back(wq.data() +
                        lay.find(base + "update.L" + std::to_string(Lm)).offset);
      for (const auto& block : lp.in_irreps.items)
        L.skip.push_back(wq.data() +
                         lay.find(base + "skip.L" + std::to_string(block.l)).offset);
      if (t + 1 < cfg.num_layers) {
        L.ro_w = wq.data() + lay.find(base + "readout.w").offset;
      } else {
        L.ro_w1 = wq.data() + lay.find(base + "readout.w1").offset;
        L.ro_w2 = wq.data() + lay.find(base + "readout.w2").offset;
      }
    }

    path_c.resize(plan.layers.size());
    dense_c.resize(plan.layers.size());
    for (std::size_t t = 0; t < plan.layers.size(); ++t) {
      for (const PathPlan& p : plan.layers[t].paths) {
        std::vector<double> qs;
        qs.reserve(p.entries.size());
        for (const auto& e : p.entries) qs.push_back(ops.q(e.v));
        path_c[t].push_back(std::move(qs));
        std::vector<double> qd(std::size_t(p.dense_triples), 0.0);
        const int d2 = 2 * p.l2 + 1, d3 = 2 * p.l3 + 1;
        for (const auto& e : p.entries)
          qd[std::size_t(((e.m1 + p.l1) * d2 + (e.m2 + p.l2)) * d3 + (e.m3 + p.l3))] =
              ops.q(e.v);
        dense_c[t].push_back(std::move(qd));
      }
    }
    contr_c.resize(plan.contractions.size());
    for (std::size_t L = 0; L < plan.contractions.size(); ++L)
      for (const ContractionTerm& term : plan.contractions[L].terms) {
        std::vector<double> qs;
        qs.reserve(term.entries.size());
        for (const auto& e : term.entries) qs.push_back(ops.q(e.c));
        contr_c[L].push_back(std::move(qs));
      }
  }
};

// gradient pointer table mirroring LayerW, into an external flat buffer
struct GradPtrs {
  double* embedding = nullptr;
  double* scale = nullptr;
  double* shift = nullptr;
  std::vector<LayerG> lg;

  GradPtrs(const Model& m, std::vector<double>& g) {
    const WeightLayout& lay = m.weights.layout;
    g.assign(lay.total, 0.0);
    embedding = g.data() + lay.find("embedding").offset;
    scale = g.data() + lay.find("scale").offset;
    shift = g.data() + lay.find("shift").offset;
    lg.resize(std::size_t(m.cfg.num_layers));
    for (int t = 0; t < m.cfg.num_layers; ++t) {
      const std::string base = "layer" + std::to_string(t) + ".";
      LayerG& L = lg[std::size_t(t)];
      const LayerPlan& lp = m.plan.layers[std::size_t(t)];
      for (const auto& block : lp.in_irreps.items)
        L.up.push_back(g.data() +
                       lay.find(base + "linear_up.l" + std::to_string(block.l)).offset);
      for (int j = 0;; ++j) {
        const std::string nm = base + "radial.w" + std::to_string(j);
        bool found = false;
        for (const auto& e : lay.entries)
          if (e.name == nm) {
            L.radial.push_back(g.data() + e.offset);
            found = true;
            break;
          }
        if (!found) break;
      }
      for (int l = 0; l <= m.cfg.l_max; ++l)
        L.mix.push_back(g.data() + lay.find(base + "mix.l" + std::to_string(l)).offset);
      for (int Lm = 0; Lm <= m.cfg.message_l_max; ++Lm)
        L.msg.push_back(g.data() +
                        lay.find(base + "message.L" + std::to_string(Lm)).offset);
      for (int Lm = 0; Lm <= m.cfg.message_l_max; ++Lm)
        L.upd.push_back(g.data() +
                        lay.find(base + "update.L" + std::to_string(Lm)).offset);
      for (const auto& block : lp.in_irreps.items)
        L.skip.push_back(g.data() +
                         lay.find(base + "skip.L" + std::to_string(block.l)).offset);
      if (t + 1 < m.cfg.num_layers) {
        L.ro_w = g.data() + lay.find(base + "readout.w").offset;
      } else {
        L.ro_w1 = g.data() + lay.find(base + "readout.w1").offset;
        L.ro_w2 = g.data() + lay.find(base + "readout.w2").offset;
      }
    }
  }
};

// quantized edge geometry
struct EdgeGeom {
  double v[3];  // quantized edge vector
  double r;     // quantized length
  double u[3];  // quantized unit vector (for the radial force chain)
};

// per-layer activations kept for the backward sweep
struct LayerAct {
  EquivariantTensor h_in, hu, A, Am, msg, h_out;
  std::vector<double> B;        // N*K*b_row
  std::vector<double> R;        // E*paths*K
  std::vector<double> mlp_pre;  // E*sum_hidden (accumulator-format values)
  std::vector<double> mlp_act;  // E*sum_hidden
  std::vector<double> ro_pre;   // N*H, last layer only
  std::vector<double> ro_act;   // N*H
  std::vector<double> r;        // N per-layer readout values
};

int hidden_sum(const ModelConfig& cfg) {
  int s = 0;
  for (int h : cfg.radial_hidden) s += h;
  return s;
}

// ---------------------------------------------------------------------------
// forward kernels

void kernel_linear_up(Ctx& ctx, int t, const EquivariantTensor& h,
                      EquivariantTensor& hu) {
  const int K = ctx.cfg.channels;
  const Irreps& ir = h.irreps;
  for (std::size_t n = 0; n < h.num_nodes; ++n) {
    const double* hr = h.row(n);
    double* ur = hu.row(n);
    for (std::size_t b = 0; b < ir.size(); ++b) {
      const int base = ir.block_offset(b);
      const int d = ir[b].ir_dim();
      const double* W = ctx.lw[std::size_t(t)].up[b];
      for (int k = 0; k < K; ++k)
        for (int m = 0; m < d; ++m) {
          double s = 0.0;
          for (int kk = 0; kk < K; ++kk)
            s = lstep(ctx.ops, s, W[k * K + kk], hr[base + kk * d + m]);
          ur[base + k * d + m] = ctx.cast ? ctx.ops.q(s) : s;
        }
      if (ctx.count)
        ctx.counters.linear_macs += (long long)(K) * K * d;
    }
  }
}

// one edge's radial MLP; pre/act scratch rows may be null when not recording
void kernel_radial_edge(Ctx& ctx, int t, const double* bess, double* R_row,
                        double* pre_row, double* act_row) {
  const LayerW& L = ctx.lw[std::size_t(t)];
  const std::size_t nmats = L.radial.size();
  thread_local std::vector<double> scratch_in, scratch_out;
  long widest = 0;
  for (const auto& d : L.radial_dims) widest = std::max(widest, d.first);
  if ((long)scratch_in.size() < widest) {
    scratch_in.resize(std::size_t(widest));
    scratch_out.resize(std::size_t(widest));
  }
  const double* x = bess;
  std::size_t pre_off = 0;
  for (std::size_t j = 0; j < nmats; ++j) {
    const auto [out_d, in_d] = L.radial_dims[j];
    const double* W = L.radial[j];
    double* dst = (j + 1 == nmats) ? R_row : scratch_out.data();
    for (long o = 0; o < out_d; ++o) {
      double s = 0.0;
      for (long i = 0; i < in_d; ++i) s = lstep(ctx.ops, s, W[o * in_d + i], x[i]);
      dst[o] = s;
    }
    if (ctx.count) ctx.counters.radial_macs += (long long)out_d * in_d;
    if (j + 1 == nmats) {
      if (ctx.cast)
        for (long o = 0; o < out_d; ++o) R_row[o] = ctx.ops.q(R_row[o]);
    } else {
      for (long o = 0; o < out_d; ++o) {
        const double pre = scratch_out[std::size_t(o)];
        if (pre_row) pre_row[pre_off + std::size_t(o)] = pre;
        const double a = ctx.ops.q(pre);
        const double act = silu(a, ctx.ops);
        if (act_row) act_row[pre_off + std::size_t(o)] = act;
        scratch_in[std::size_t(o)] = act;
      }
      pre_off += std::size_t(out_d);
      x = scratch_in.data();
    }
  }
}

// fused edge embedding: precomputed spherical harmonics and radial weights
void kernel_A_fused(Ctx& ctx, int t, const NeighborList& nl,
                    const std::vector<double>& sh, std::size_t shs,
                    const std::vector<double>& R, const EquivariantTensor& hu,
                    EquivariantTensor& A) {
  const int K = ctx.cfg.channels;
  const LayerPlan& lp = ctx.plan.layers[std::size_t(t)];
  const Irreps& in_ir = lp.in_irreps;
  const Irreps& a_ir = ctx.plan.a_irreps;
  std::fill(A.data.begin(), A.data.end(), 0.0);
  const std::size_t pk = std::size_t(lp.paths.size()) * std::size_t(K);
  for (std::size_t e = 0; e < nl.edges.size(); ++e) {
    const auto& ed = nl.edges[e];
    double* Ar = A.row(std::size_t(ed.src));
    const double* ur = hu.row(std::size_t(ed.dst));
    const double* Yr = sh.data() + e * shs;
    const double* Rr = R.data() + e * pk;
    for (std::size_t p = 0; p < lp.paths.size(); ++p) {
      const PathPlan& pp = lp.paths[p];
      const int d1 = 2 * pp.l1 + 1, d3 = 2 * pp.l3 + 1;
      const int base1 = in_ir.block_offset(std::size_t(pp.block_in));
      const int base3 = a_ir.block_offset(std::size_t(pp.block_out));
      const std::vector<double>& qc = ctx.path_c[std::size_t(t)][p];
      const double* Rp = Rr + p * std::size_t(K);
      for (std::size_t ei = 0; ei < pp.entries.size(); ++ei) {
        const auto& en = pp.entries[ei];
        const double C = qc[ei];
        const double Y = Yr[so3::sh_index(pp.l2, en.m2)];
        const int i1 = base1 + (en.m1 + pp.l1);
        const int i3 = base3 + (en.m3 + pp.l3);
        for (int k = 0; k < K; ++k) {
          const double t1 = ctx.ops.mul(C, Rp[k]);
          const double t2 = ctx.ops.mul(t1, Y);
          const double t3 = ctx.ops.mul(t2, ur[i1 + k * d1]);
          double& slot = Ar[i3 + k * d3];
          slot = ctx.ops.fast ? slot + t3 : quantize(slot + t3, ctx.ops.acc);
        }
      }
    }
    if (ctx.count)
      ctx.counters.edge_cg_macs +=
          (long long)(K) * (K + 1) * lp.dense_triples_total;
  }
  for (double& x : A.data) x = ctx.ops.mul(x, ctx.inv_norm);
}

// reference edge embedding: same arithmetic per output slot, but the
// spherical harmonics and the full radial MLP are recomputed for every
// (edge, path) pair and the coupling tensor is walked densely.
void kernel_A_reference(Ctx& ctx, int t, const NeighborList& nl,
                        const std::vector<EdgeGeom>& geom,
                        const std::vector<double>& bess,
                        const EquivariantTensor& hu, EquivariantTensor& A) {
  const int K = ctx.cfg.channels;
  const int nb = ctx.cfg.n_bessel;
  const LayerPlan& lp = ctx.plan.layers[std::size_t(t)];
  const Irreps& in_ir = lp.in_irreps;
  const Irreps& a_ir = ctx.plan.a_irreps;
  std::fill(A.data.begin(), A.data.end(), 0.0);
  const std::size_t shs = std::size_t(so3::sh_size(ctx.cfg.l_max));
  std::vector<double> y(shs), r_all(std::size_t(lp.paths.size()) * std::size_t(K));
  for (std::size_t e = 0; e < nl.edges.size(); ++e) {
    const auto& ed = nl.edges[e];
    double* Ar = A.row(std::size_t(ed.src));
    const double* ur = hu.row(std::size_t(ed.dst));
    const Vec3 vq{geom[e].v[0], geom[e].v[1], geom[e].v[2]};
    for (std::size_t p = 0; p < lp.paths.size(); ++p) {
      // no caching: every path re-derives its own ingredients
      so3::real_spherical_harmonics(ctx.cfg.l_max, vq, y, ctx.ops);
      kernel_radial_edge(ctx, t, bess.data() + e * std::size_t(nb), r_all.data(),
                         nullptr, nullptr);
      const PathPlan& pp = lp.paths[p];
      const int d1 = 2 * pp.l1 + 1, d2 = 2 * pp.l2 + 1, d3 = 2 * pp.l3 + 1;
      const int base1 = in_ir.block_offset(std::size_t(pp.block_in));
      const int base3 = a_ir.block_offset(std::size_t(pp.block_out));
      const std::vector<double>& qd = ctx.dense_c[std::size_t(t)][p];
      const double* Rp = r_all.data() + p * std::size_t(K);
      for (int i1 = 0; i1 < d1; ++i1)
        for (int i2 = 0; i2 < d2; ++i2)
          for (int i3 = 0; i3 < d3; ++i3) {
            const double C = qd[std::size_t((i1 * d2 + i2) * d3 + i3)];
            if (C == 0.0) continue;
            const double Y = y[std::size_t(pp.l2 * pp.l2 + i2)];
            for (int k = 0; k < K; ++k) {
              const double t1 = ctx.ops.mul(C, Rp[k]);
              const double t2 = ctx.ops.mul(t1, Y);
              const double t3 = ctx.ops.mul(t2, ur[base1 + i1 + k * d1]);
              double& slot = Ar[base3 + i3 + k * d3];
              slot = ctx.ops.fast ? slot + t3 : quantize(slot + t3, ctx.ops.acc);
            }
          }
    }
  }
  for (double& x : A.data) x = ctx.ops.mul(x, ctx.inv_norm);
}

void kernel_mix(Ctx& ctx, int t, const EquivariantTensor& A, EquivariantTensor& Am) {
  const int K = ctx.cfg.channels;
  const Irreps& ir = A.irreps;
  for (std::size_t n = 0; n < A.num_nodes; ++n) {
    const double* ar = A.row(n);
    double* mr = Am.row(n);
    for (std::size_t b = 0; b < ir.size(); ++b) {
      const int base = ir.block_offset(b);
      const int d = ir[b].ir_dim();
      const double* W = ctx.lw[std::size_t(t)].mix[b];
      for (int k = 0; k < K; ++k)
        for (int m = 0; m < d; ++m) {
          double s = 0.0;
          for (int kk = 0; kk < K; ++kk)
            s = lstep(ctx.ops, s, W[k * K + kk], ar[base + kk * d + m]);
          mr[base + k * d + m] = ctx.cast ? ctx.ops.q(s) : s;
        }
      if (ctx.count) ctx.counters.linear_macs += (long long)(K) * K * d;
    }
  }
}

void kernel_B(Ctx& ctx, const EquivariantTensor& Am, std::vector<double>& B) {
  const int K = ctx.cfg.channels;
  const Irreps& air = Am.irreps;
  const int brow = ctx.plan.b_row_dim_per_channel();
  B.assign(Am.num_nodes * std::size_t(K) * std::size_t(brow), 0.0);
  for (std::size_t n = 0; n < Am.num_nodes; ++n) {
    const double* ar = Am.row(n);
    double* br = B.data() + n * std::size_t(K) * std::size_t(brow);
    for (std::size_t Li = 0; Li < ctx.plan.contractions.size(); ++Li) {
      const ContractionPlan& cp = ctx.plan.contractions[Li];
      for (std::size_t ti = 0; ti < cp.terms.size(); ++ti) {
        const ContractionTerm& term = cp.terms[ti];
        const std::vector<double>& qc = ctx.contr_c[Li][ti];
        const int nu = int(term.degrees.size());
        for (int k = 0; k < K; ++k) {
          double* bk = br + std::size_t(k) * std::size_t(brow);
          for (std::size_t ei = 0; ei < term.entries.size(); ++ei) {
            const auto& en = term.entries[ei];
            double prod = qc[ei];
            for (int xi = 0; xi < nu; ++xi) {
              const int l = term.degrees[std::size_t(xi)];
              const int off = air.block_offset(std::size_t(l)) +
                              k * (2 * l + 1) + (en.m[std::size_t(xi)] + l);
              prod = ctx.ops.mul(prod, ar[off]);
            }
            double& slot = bk[ctx.plan.b_offset(cp.L, int(ti), en.big_m)];
            slot = ctx.ops.fast ? slot + prod : quantize(slot + prod, ctx.ops.acc);
          }
          if (ctx.count)
            ctx.counters.node_tp_macs += (long long)term.entries.size() * nu;
        }
      }
    }
    if (ctx.cast)
      for (std::size_t i = 0; i < std::size_t(K) * std::size_t(brow); ++i)
        br[i] = ctx.ops.q(br[i]);
  }
  if (ctx.count) ctx.counters.b_elements = (long long)B.size();
}

void kernel_message(Ctx& ctx, int t, const std::vector<double>& B,
                    const std::vector<int>& z, EquivariantTensor& msg) {
  const int K = ctx.cfg.channels;
  const int brow = ctx.plan.b_row_dim_per_channel();
  const Irreps& hid = ctx.plan.hidden_irreps;
  for (std::size_t n = 0; n < msg.num_nodes; ++n) {
    const double* br = B.data() + n * std::size_t(K) * std::size_t(brow);
    double* mr = msg.row(n);
    for (int L = 0; L <= ctx.cfg.message_l_max; ++L) {
      const int nt = ctx.plan.n_terms(L);
      const int base = hid.block_offset(std::size_t(L));
      const int d = 2 * L + 1;
      const double* W =
          ctx.lw[std::size_t(t)].msg[std::size_t(L)] +
          std::size_t(z[n]) * std::size_t(K) * std::size_t(nt);
      for (int k = 0; k < K; ++k) {
        const double* bk = br + std::size_t(k) * std::size_t(brow);
        const double* Wk = W + std::size_t(k) * std::size_t(nt);
        for (int m = -L; m <= L; ++m) {
          double s = 0.0;
          for (int term = 0; term < nt; ++term)
            s = lstep(ctx.ops, s, Wk[term], bk[ctx.plan.b_offset(L, term, m)]);
          mr[base + k * d + (m + L)] = ctx.cast ? ctx.ops.q(s) : s;
        }
      }
      if (ctx.count) ctx.counters.linear_macs += (long long)(K) * nt * d;
    }
  }
  if (ctx.count) ctx.counters.m_elements = (long long)(msg.data.size());
}

void kernel_update(Ctx& ctx, int t, const EquivariantTensor& h_in,
                   const EquivariantTensor& msg, const std::vector<int>& z,
                   EquivariantTensor& h_out) {
  const int K = ctx.cfg.channels;
  const Irreps& hid = ctx.plan.hidden_irreps;
  const Irreps& in_ir = h_in.irreps;
  for (std::size_t n = 0; n < h_out.num_nodes; ++n) {
    const double* hr = h_in.row(n);
    const double* mr = msg.row(n);
    double* orow = h_out.row(n);
    for (std::size_t b = 0; b < hid.size(); ++b) {
      const int L = hid[b].l;
      const int d = 2 * L + 1;
      const int base = hid.block_offset(b);
      // does the input carry this degree? (first layer has scalars only)
      int in_block = -1;
      for (std::size_t ib = 0; ib < in_ir.size(); ++ib)
        if (in_ir[ib].l == L) in_block = int(ib);
      const double* Wu = ctx.lw[std::size_t(t)].upd[b];
      const double* Ws =
          in_block >= 0
              ? ctx.lw[std::size_t(t)].skip[std::size_t(in_block)] +
                    std::size_t(z[n]) * std::size_t(K) * std::size_t(K)
              : nullptr;
      const int in_base = in_block >= 0 ? in_ir.block_offset(std::size_t(in_block)) : 0;
      for (int k = 0; k < K; ++k)
        for (int m = 0; m < d; ++m) {
          double mix = 0.0;
          for (int kk = 0; kk < K; ++kk)
            mix = lstep(ctx.ops, mix, Wu[k * K + kk], mr[base + kk * d + m]);
          double sk = 0.0;
          if (Ws)
            for (int kk = 0; kk < K; ++kk)
              sk = lstep(ctx.ops, sk, Ws[k * K + kk], hr[in_base + kk * d + m]);
          double val = ctx.ops.add(mix, sk);
          const double pad = in_block >= 0 ? hr[in_base + k * d + m] : 0.0;
          val = ctx.ops.add(pad, val);
          orow[base + k * d + m] = ctx.cast ? ctx.ops.q(val) : val;
        }
      if (ctx.count)
        ctx.counters.linear_macs +=
            (long long)(K) * K * d * (Ws ? 2 : 1);
    }
  }
}

void kernel_readout(Ctx& ctx, int t, const EquivariantTensor& h,
                    std::vector<double>& r, std::vector<double>* pre,
                    std::vector<double>* act) {
  const int K = ctx.cfg.channels;
  const int H = ctx.cfg.readout_hidden;
  const LayerW& L = ctx.lw[std::size_t(t)];
  const bool last = (t + 1 == ctx.cfg.num_layers);
  r.assign(h.num_nodes, 0.0);
  if (last) {
    pre->assign(h.num_nodes * std::size_t(H), 0.0);
    act->assign(h.num_nodes * std::size_t(H), 0.0);
  }
  for (std::size_t n = 0; n < h.num_nodes; ++n) {
    const double* hs = h.row(n);  // scalar block is first, stride 1
    if (!last) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s = lstep(ctx.ops, s, L.ro_w[k], hs[k]);
      r[n] = s;
      if (ctx.count) ctx.counters.linear_macs += K;
    } else {
      double* pr = pre->data() + n * std::size_t(H);
      double* ar = act->data() + n * std::size_t(H);
      for (int a = 0; a < H; ++a) {
        double s = 0.0;
        for (int k = 0; k < K; ++k) s = lstep(ctx.ops, s, L.ro_w1[a * K + k], hs[k]);
        pr[a] = s;
        ar[a] = silu(ctx.ops.q(s), ctx.ops);
      }
      double s = 0.0;
      for (int a = 0; a < H; ++a) s = lstep(ctx.ops, s, L.ro_w2[a], ar[a]);
      r[n] = s;
      if (ctx.count) ctx.counters.linear_macs += (long long)(H) * K + H;
    }
  }
}

// ---------------------------------------------------------------------------
// backward kernels (adjoints mirror the forward rounding discipline)

void bwd_readout(Ctx& ctx, int t, const LayerAct& act, const std::vector<double>& dr,
                 EquivariantTensor& dh, GradPtrs* g) {
  const int K = ctx.cfg.channels;
  const int H = ctx.cfg.readout_hidden;
  const LayerW& L = ctx.lw[std::size_t(t)];
  const bool last = (t + 1 == ctx.cfg.num_layers);
  for (std::size_t n = 0; n < dh.num_nodes; ++n) {
    const double* hs = act.h_out.row(n);
    double* dhs = dh.row(n);
    const double dn = dr[n];
    if (!last) {
      for (int k = 0; k < K; ++k) {
        dhs[k] = ctx.ops.add(dhs[k], lprod(ctx.ops, L.ro_w[k], dn));
        if (g) {
          double* gw = g->lg[std::size_t(t)].ro_w;
          gw[k] = ctx.ops.add(gw[k], lprod2(ctx.ops, hs[k], dn));
        }
      }
    } else {
      const double* pr = act.ro_pre.data() + n * std::size_t(H);
      const double* ar = act.ro_act.data() + n * std::size_t(H);
      for (int a = 0; a < H; ++a) {
        const double dact = lprod(ctx.ops, L.ro_w2[a], dn);
        if (g) {
          double* gw2 = g->lg[std::size_t(t)].ro_w2;
          gw2[a] = ctx.ops.add(gw2[a], lprod2(ctx.ops, ar[a], dn));
        }
        const double dpre = ctx.ops.mul(dact, silu_grad(ctx.ops.q(pr[a]), ctx.ops));
        for (int k = 0; k < K; ++k) {
          dhs[k] = ctx.ops.add(dhs[k], lprod(ctx.ops, L.ro_w1[a * K + k], dpre));
          if (g) {
            double* gw1 = g->lg[std::size_t(t)].ro_w1;
            gw1[a * K + k] = ctx.ops.add(gw1[a * K + k], lprod2(ctx.ops, hs[k], dpre));
          }
        }
      }
    }
  }
}

void bwd_update(Ctx& ctx, int t, const LayerAct& act, const std::vector<int>& z,
                const EquivariantTensor& dh_out, EquivariantTensor& dmsg,
                EquivariantTensor& dh_in, GradPtrs* g) {
  const int K = ctx.cfg.channels;
  const Irreps& hid = ctx.plan.hidden_irreps;
  const Irreps& in_ir = act.h_in.irreps;
  for (std::size_t n = 0; n < dh_out.num_nodes; ++n) {
    const double* dor = dh_out.row(n);
    const double* hr = act.h_in.row(n);
    const double* mr = act.msg.row(n);
    double* dmr = dmsg.row(n);
    double* dhr = dh_in.row(n);
    for (std::size_t b = 0; b < hid.size(); ++b) {
      const int L = hid[b].l;
      const int d = 2 * L + 1;
      const int base = hid.block_offset(b);
      int in_block = -1;
      for (std::size_t ib = 0; ib < in_ir.size(); ++ib)
        if (in_ir[ib].l == L) in_block = int(ib);
      const int in_base = in_block >= 0 ? in_ir.block_offset(std::size_t(in_block)) : 0;
      const double* Wu = ctx.lw[std::size_t(t)].upd[b];
      const double* Ws =
          in_block >= 0
              ? ctx.lw[std::size_t(t)].skip[std::size_t(in_block)] +
                    std::size_t(z[n]) * std::size_t(K) * std::size_t(K)
              : nullptr;
      for (int k = 0; k < K; ++k)
        for (int m = 0; m < d; ++m) {
          const double dv = dor[base + k * d + m];
          if (in_block >= 0)  // residual path
            dhr[in_base + k * d + m] = ctx.ops.add(dhr[in_base + k * d + m], dv);
          for (int kk = 0; kk < K; ++kk) {
            dmr[base + kk * d + m] = ctx.ops.add(
                dmr[base + kk * d + m], lprod(ctx.ops, Wu[k * K + kk], dv));
            if (g) {
              double* gu = g->lg[std::size_t(t)].upd[b];
              gu[k * K + kk] = ctx.ops.add(
                  gu[k * K + kk], lprod2(ctx.ops, mr[base + kk * d + m], dv));
            }
            if (Ws) {
              dhr[in_base + kk * d + m] = ctx.ops.add(
                  dhr[in_base + kk * d + m], lprod(ctx.ops, Ws[k * K + kk], dv));
              if (g) {
                double* gs = g->lg[std::size_t(t)].skip[std::size_t(in_block)] +
                             std::size_t(z[n]) * std::size_t(K) * std::size_t(K);
                gs[k * K + kk] = ctx.ops.add(
                    gs[k * K + kk], lprod2(ctx.ops, hr[in_base + kk * d + m], dv));
              }
            }
          }
        }
    }
  }
}

void bwd_message(Ctx& ctx, int t, const LayerAct& act, const std::vector<int>& z,
                 const EquivariantTensor& dmsg, std::vector<double>& dB,
                 GradPtrs* g) {
  const int K = ctx.cfg.channels;
  const int brow = ctx.plan.b_row_dim_per_channel();
  const Irreps& hid = ctx.plan.hidden_irreps;
  dB.assign(act.B.size(), 0.0);
  for (std::size_t n = 0; n < dmsg.num_nodes; ++n) {
    const double* dmr = dmsg.row(n);
    const double* br = act.B.data() + n * std::size_t(K) * std::size_t(brow);
    double* dbr = dB.data() + n * std::size_t(K) * std::size_t(brow);
    for (int L = 0; L <= ctx.cfg.message_l_max; ++L) {
      const int nt = ctx.plan.n_terms(L);
      const int base = hid.block_offset(std::size_t(L));
      const int d = 2 * L + 1;
      const double* W =
          ctx.lw[std::size_t(t)].msg[std::size_t(L)] +
          std::size_t(z[n]) * std::size_t(K) * std::size_t(nt);
      double* gW = g ? g->lg[std::size_t(t)].msg[std::size_t(L)] +
                           std::size_t(z[n]) * std::size_t(K) * std::size_t(nt)
                     : nullptr;
      for (int k = 0; k < K; ++k) {
        const double* bk = br + std::size_t(k) * std::size_t(brow);
        double* dbk = dbr + std::size_t(k) * std::size_t(brow);
        const double* Wk = W + std::size_t(k) * std::size_t(nt);
        for (int m = -L; m <= L; ++m) {
          const double dv = dmr[base + k * d + (m + L)];
          for (int term = 0; term < nt; ++term) {
            const int off = ctx.plan.b_offset(L, term, m);
            dbk[off] = ctx.ops.add(dbk[off], lprod(ctx.ops, Wk[term], dv));
            if (gW) {
              double* gt = gW + std::size_t(k) * std::size_t(nt) + std::size_t(term);
              *gt = ctx.ops.add(*gt, lprod2(ctx.ops, bk[off], dv));
            }
          }
        }
      }
    }
  }
}

void bwd_B(Ctx& ctx, const LayerAct& act, const std::vector<double>& dB,
           EquivariantTensor& dAm) {
  const int K = ctx.cfg.channels;
  const int brow = ctx.plan.b_row_dim_per_channel();
  const Irreps& air = dAm.irreps;
  std::fill(dAm.data.begin(), dAm.data.end(), 0.0);
  for (std::size_t n = 0; n < dAm.num_nodes; ++n) {
    const double* ar = act.Am.row(n);
    double* dar = dAm.row(n);
    const double* dbr = dB.data() + n * std::size_t(K) * std::size_t(brow);
    for (std::size_t Li = 0; Li < ctx.plan.contractions.size(); ++Li) {
      const ContractionPlan& cp = ctx.plan.contractions[Li];
      for (std::size_t ti = 0; ti < cp.terms.size(); ++ti) {
        const ContractionTerm& term = cp.terms[ti];
        const std::vector<double>& qc = ctx.contr_c[Li][ti];
        const int nu = int(term.degrees.size());
        for (int k = 0; k < K; ++k) {
          const double* dbk = dbr + std::size_t(k) * std::size_t(brow);
          for (std::size_t ei = 0; ei < term.entries.size(); ++ei) {
            const auto& en = term.entries[ei];
            const double dv = dbk[ctx.plan.b_offset(cp.L, int(ti), en.big_m)];
            for (int xi = 0; xi < nu; ++xi) {
              double tmp = ctx.ops.mul(qc[ei], dv);
              for (int zeta = 0; zeta < nu; ++zeta) {
                if (zeta == xi) continue;
                const int l = term.degrees[std::size_t(zeta)];
                const int off = air.block_offset(std::size_t(l)) +
                                k * (2 * l + 1) + (en.m[std::size_t(zeta)] + l);
                tmp = ctx.ops.mul(tmp, ar[off]);
              }
              const int l = term.degrees[std::size_t(xi)];
              const int off = air.block_offset(std::size_t(l)) + k * (2 * l + 1) +
                              (en.m[std::size_t(xi)] + l);
              dar[off] = ctx.ops.add(dar[off], tmp);
            }
          }
        }
      }
    }
  }
}

void bwd_mix(Ctx& ctx, int t, const LayerAct& act, const EquivariantTensor& dAm,
             EquivariantTensor& dA, GradPtrs* g) {
  const int K = ctx.cfg.channels;
  const Irreps& ir = dA.irreps;
  std::fill(dA.data.begin(), dA.data.end(), 0.0);
  for (std::size_t n = 0; n < dA.num_nodes; ++n) {
    const double* dmr = dAm.row(n);
    const double* ar = act.A.row(n);
    double* dar = dA.row(n);
    for (std::size_t b = 0; b < ir.size(); ++b) {
      const int base = ir.block_offset(b);
      const int d = ir[b].ir_dim();
      const double* W = ctx.lw[std::size_t(t)].mix[b];
      double* gW = g ? g->lg[std::size_t(t)].mix[b] : nullptr;
      for (int k = 0; k < K; ++k)
        for (int m = 0; m < d; ++m) {
          const double dv = dmr[base + k * d + m];
          for (int kk = 0; kk < K; ++kk) {
            dar[base + kk * d + m] = ctx.ops.add(dar[base + kk * d + m],
                                                 lprod(ctx.ops, W[k * K + kk], dv));
            if (gW)
              gW[k * K + kk] = ctx.ops.add(gW[k * K + kk],
                                           lprod2(ctx.ops, ar[base + kk * d + m], dv));
          }
        }
    }
  }
}

// adjoint of the fused edge embedding; also used for the reference backend
// (identical arithmetic, the backends differ only in forward caching)
void bwd_A(Ctx& ctx, int t, const NeighborList& nl, const std::vector<double>& sh,
           std::size_t shs, const std::vector<double>& R, const EquivariantTensor& hu,
           const EquivariantTensor& dA_in, EquivariantTensor& dhu,
           std::vector<double>& dY, std::vector<double>& dR) {
  const int K = ctx.cfg.channels;
  const LayerPlan& lp = ctx.plan.layers[std::size_t(t)];
  const Irreps& in_ir = lp.in_irreps;
  const Irreps& a_ir = ctx.plan.a_irreps;
  // fold the neighbor normalization into the adjoint once
  EquivariantTensor dA = dA_in;
  for (double& x : dA.data) x = ctx.ops.mul(x, ctx.inv_norm);
  std::fill(dhu.data.begin(), dhu.data.end(), 0.0);
  dY.assign(nl.edges.size() * shs, 0.0);
  const std::size_t pk = std::size_t(lp.paths.size()) * std::size_t(K);
  dR.assign(nl.edges.size() * pk, 0.0);
  for (std::size_t e = 0; e < nl.edges.size(); ++e) {
    const auto& ed = nl.edges[e];
    const double* dAr = dA.row(std::size_t(ed.src));
    const double* ur = hu.row(std::size_t(ed.dst));
    double* dur = dhu.row(std::size_t(ed.dst));
    const double* Yr = sh.data() + e * shs;
    double* dYr = dY.data() + e * shs;
    const double* Rr = R.data() + e * pk;
    double* dRr = dR.data() + e * pk;
    for (std::size_t p = 0; p < lp.paths.size(); ++p) {
      const PathPlan& pp = lp.paths[p];
      const int d1 = 2 * pp.l1 + 1, d3 = 2 * pp.l3 + 1;
      const int base1 = in_ir.block_offset(std::size_t(pp.block_in));
      const int base3 = a_ir.block_offset(std::size_t(pp.block_out));
      const std::vector<double>& qc = ctx.path_c[std::size_t(t)][p];
      const double* Rp = Rr + p * std::size_t(K);
      double* dRp = dRr + p * std::size_t(K);
      for (std::size_t ei = 0; ei < pp.entries.size(); ++ei) {
        const auto& en = pp.entries[ei];
        const double C = qc[ei];
        const int yidx = so3::sh_index(pp.l2, en.m2);
        const double Y = Yr[yidx];
        const int i1 = base1 + (en.m1 + pp.l1);
        const int i3 = base3 + (en.m3 + pp.l3);
        for (int k = 0; k < K; ++k) {
          const double g3 = dAr[i3 + k * d3];
          const double t1 = ctx.ops.mul(C, Rp[k]);
          const double t2 = ctx.ops.mul(t1, Y);
          const double huv = ur[i1 + k * d1];
          // d hu
          dur[i1 + k * d1] = ctx.ops.add(dur[i1 + k * d1], ctx.ops.mul(t2, g3));
          // d Y and d R share the hu * g3 product
          const double hg = ctx.ops.mul(huv, g3);
          dYr[yidx] = ctx.ops.add(dYr[yidx], ctx.ops.mul(t1, hg));
          dRp[k] = ctx.ops.add(dRp[k], ctx.ops.mul(C, ctx.ops.mul(Y, hg)));
        }
      }
    }
  }
}

void bwd_radial_edge(Ctx& ctx, int t, const double* bess, const double* pre_row,
                     const double* act_row, const double* dR_row, double* dbess,
                     GradPtrs* g) {
  const LayerW& L = ctx.lw[std::size_t(t)];
  const std::size_t nmats = L.radial.size();
  thread_local std::vector<double> dcur, dnext;
  long widest = long(ctx.cfg.n_bessel);
  for (const auto& d : L.radial_dims) widest = std::max(widest, d.first);
  if ((long)dcur.size() < widest) {
    dcur.resize(std::size_t(widest));
    dnext.resize(std::size_t(widest));
  }
  // adjoint of the last matrix output
  {
    const long out_d = L.radial_dims[nmats - 1].first;
    for (long o = 0; o < out_d; ++o) dcur[std::size_t(o)] = dR_row[o];
  }
  for (std::size_t j = nmats; j-- > 0;) {
    const auto [out_d, in_d] = L.radial_dims[j];
    const double* W = L.radial[j];
    // the input of matrix j is the activation of matrix j-1 (or the basis)
    std::size_t off_prev = 0;
    for (std::size_t jj = 0; j > 0 && jj + 1 < j; ++jj)
      off_prev += std::size_t(L.radial_dims[jj].first);
    const double* x = (j == 0) ? bess : act_row + off_prev;
    double* gW = g ? g->lg[std::size_t(t)].radial[j] : nullptr;
    for (long i = 0; i < in_d; ++i) dnext[std::size_t(i)] = 0.0;
    for (long o = 0; o < out_d; ++o) {
      const double dv = dcur[std::size_t(o)];
      for (long i = 0; i < in_d; ++i) {
        dnext[std::size_t(i)] = lstep(ctx.ops, dnext[std::size_t(i)],
                                      W[o * in_d + i], dv);
        if (gW)
          gW[o * in_d + i] =
              ctx.ops.add(gW[o * in_d + i], lprod2(ctx.ops, x[i], dv));
      }
    }
    if (j == 0) {
      for (long i = 0; i < in_d; ++i) dbess[i] = dnext[std::size_t(i)];
    } else {
      // through the silu of the previous matrix's output
      const long prev_out = L.radial_dims[j - 1].first;
      for (long i = 0; i < prev_out; ++i) {
        const double a = ctx.ops.q(pre_row[off_prev + std::size_t(i)]);
        dcur[std::size_t(i)] = ctx.ops.mul(dnext[std::size_t(i)],
                                           silu_grad(a, ctx.ops));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// full forward + optional backward

struct RunBuffers {
  NeighborList nl;
  std::vector<EdgeGeom> geom;
  std::vector<double> sh;    // E*shs
  std::vector<double> bess;  // E*nb
  std::vector<int> z;
  std::vector<LayerAct> acts;
  std::vector<double> sum_r;  // per-atom readout sums
};

// accumulates wall seconds into named stage buckets; a null sink disables it
struct StageClock {
  std::vector<std::pair<std::string, double>>* sink;
  std::chrono::steady_clock::time_point mark;

  explicit StageClock(std::vector<std::pair<std::string, double>>* s) : sink(s) {
    if (sink) mark = std::chrono::steady_clock::now();
  }
  void lap(const char* name) {
    if (!sink) return;
    const auto now = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(now - mark).count();
    mark = now;
    for (auto& [n, t] : *sink)
      if (n == name) {
        t += sec;
        return;
      }
    sink->emplace_back(name, sec);
  }
};

void forward_pass(Ctx& ctx, const AtomicConfiguration& config, RunBuffers& rb,
                  EvalResult& result, const EvalOptions& opts) {
  const ModelConfig& cfg = ctx.cfg;
  const std::size_t N = config.size();
  const int K = cfg.channels;

  StageClock clock(opts.stage_times);
  rb.z.resize(N);
  for (std::size_t i = 0; i < N; ++i)
    rb.z[i] = cfg.species_index(config.atomic_numbers[i]);

  rb.nl = geometry::build_neighbor_list(config, cfg.r_max);
  clock.lap("neighbor_list");
  const std::size_t E = rb.nl.edges.size();
  const std::size_t shs = std::size_t(so3::sh_size(cfg.l_max));
  const int nb = cfg.n_bessel;

  rb.geom.resize(E);
  rb.sh.assign(E * shs, 0.0);
  rb.bess.assign(E * std::size_t(nb), 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    const auto& ed = rb.nl.edges[e];
    EdgeGeom& gq = rb.geom[e];
    for (int c = 0; c < 3; ++c) gq.v[c] = ctx.ops.q(ed.vec[std::size_t(c)]);
    gq.r = ctx.ops.q(ed.dist);
    const double inv_r = ctx.ops.q(1.0 / gq.r);
    for (int c = 0; c < 3; ++c) gq.u[c] = ctx.ops.mul(gq.v[c], inv_r);
    const Vec3 vq{gq.v[0], gq.v[1], gq.v[2]};
    so3::real_spherical_harmonics(cfg.l_max, vq,
                                  {rb.sh.data() + e * shs, shs}, ctx.ops);
    radial_basis(gq.r, cfg.r_max, cfg.envelope_p,
                 {rb.bess.data() + e * std::size_t(nb), std::size_t(nb)}, ctx.ops);
    if (ctx.count) {
      ctx.counters.sh_macs += 3LL * (long long)(shs);
    }
  }
  clock.lap("spherical_harmonics");

  // embedding
  EquivariantTensor h(cfg.input_irreps(), N);
  for (std::size_t i = 0; i < N; ++i) {
    double* hr = h.row(i);
    const double* em = ctx.embedding + std::size_t(rb.z[i]) * std::size_t(K);
    for (int k = 0; k < K; ++k) hr[std::size_t(k)] = em[k];
  }

  const bool backward = opts.forces || opts.weight_grads;
  rb.acts.resize(std::size_t(cfg.num_layers));
  const int hid_sum = hidden_sum(cfg);

  for (int t = 0; t < cfg.num_layers; ++t) {
    LayerAct& act = rb.acts[std::size_t(t)];
    const LayerPlan& lp = ctx.plan.layers[std::size_t(t)];
    act.h_in = h;
    act.hu = EquivariantTensor(lp.in_irreps, N);
    kernel_linear_up(ctx, t, act.h_in, act.hu);
    clock.lap("linear_up");

    // radial weights per edge
    const std::size_t pk = std::size_t(lp.paths.size()) * std::size_t(K);
    act.R.assign(E * pk, 0.0);
    act.mlp_pre.assign(backward ? E * std::size_t(hid_sum) : 0, 0.0);
    act.mlp_act.assign(backward ? E * std::size_t(hid_sum) : 0, 0.0);
    for (std::size_t e = 0; e < E; ++e)
      kernel_radial_edge(ctx, t, rb.bess.data() + e * std::size_t(nb),
                         act.R.data() + e * pk,
                         backward ? act.mlp_pre.data() + e * std::size_t(hid_sum)
                                  : nullptr,
                         backward ? act.mlp_act.data() + e * std::size_t(hid_sum)
                                  : nullptr);

    act.A = EquivariantTensor(ctx.plan.a_irreps, N);
    if (opts.backend == Backend::fused_batched)
      kernel_A_fused(ctx, t, rb.nl, rb.sh, shs, act.R, act.hu, act.A);
    else
      kernel_A_reference(ctx, t, rb.nl, rb.geom, rb.bess, act.hu, act.A);
    if (ctx.count) ctx.counters.a_elements = (long long)act.A.data.size();
    clock.lap("edge_embedding_A");

    act.Am = EquivariantTensor(ctx.plan.a_irreps, N);
    kernel_mix(ctx, t, act.A, act.Am);
    kernel_B(ctx, act.Am, act.B);
    clock.lap("symmetric_contraction_B");
    act.msg = EquivariantTensor(ctx.plan.hidden_irreps, N);
    kernel_message(ctx, t, act.B, rb.z, act.msg);
    act.h_out = EquivariantTensor(ctx.plan.hidden_irreps, N);
    kernel_update(ctx, t, act.h_in, act.msg, rb.z, act.h_out);
    clock.lap("message_update");
    kernel_readout(ctx, t, act.h_out, act.r, &act.ro_pre, &act.ro_act);
    clock.lap("readout");

    if (opts.capture && t == 0) {
      BlockCapture& cap = *opts.capture;
      cap.filled = true;
      cap.num_nodes = N;
      cap.num_edges = E;
      cap.species_idx = rb.z;
      cap.edge_src.resize(E);
      cap.edge_dst.resize(E);
      cap.edge_vec.resize(E * 3);
      cap.edge_r.resize(E);
      for (std::size_t e = 0; e < E; ++e) {
        cap.edge_src[e] = rb.nl.edges[e].src;
        cap.edge_dst[e] = rb.nl.edges[e].dst;
        for (int c = 0; c < 3; ++c) cap.edge_vec[e * 3 + std::size_t(c)] = rb.geom[e].v[c];
        cap.edge_r[e] = rb.geom[e].r;
      }
      cap.sh = rb.sh;
      cap.bessel = rb.bess;
      cap.radial = act.R;
      cap.h_in = act.h_in.data;
      cap.hu = act.hu.data;
      cap.a = act.A.data;
      cap.a_mixed = act.Am.data;
      cap.b = act.B;
      cap.msg = act.msg.data;
      cap.h_out = act.h_out.data;
      cap.readout = act.r;
    }
    if (opts.keep_layer_features) result.layer_features.push_back(act.h_out);
    h = act.h_out;
  }

  // per-atom energies
  rb.sum_r.assign(N, 0.0);
  result.per_atom.assign(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    double s = rb.acts[0].r[i];
    for (int t = 1; t < cfg.num_layers; ++t)
      s = ctx.ops.add(s, rb.acts[std::size_t(t)].r[i]);
    rb.sum_r[i] = s;
    const double scaled = ctx.ops.mul(ctx.scale_q, s);
    result.per_atom[i] = ctx.ops.add(scaled, ctx.shift_q);
  }
  // value-sorted total: the sum of the per-atom multiset does not depend on
  // how the atoms were numbered
  std::vector<double> sorted = result.per_atom;
  bool finite = true;
  for (double v : sorted)
    if (!std::isfinite(v)) finite = false;
  if (finite) std::sort(sorted.begin(), sorted.end());
  double etot = 0.0;
  for (double v : sorted) etot = ctx.ops.add(etot, v);
  result.energy = etot;
}

void backward_pass(Ctx& ctx, RunBuffers& rb, EvalResult& result,
                   const EvalOptions& opts) {
  const ModelConfig& cfg = ctx.cfg;
  const std::size_t N = rb.sum_r.size();
  const std::size_t E = rb.nl.edges.size();
  const std::size_t shs = std::size_t(so3::sh_size(cfg.l_max));
  const int nb = cfg.n_bessel;
  const int hid_sum = hidden_sum(cfg);

  std::optional<GradPtrs> gp;
  GradPtrs* g = nullptr;
  if (opts.weight_grads) {
    gp.emplace(ctx.model, result.weight_grads);
    g = &*gp;
  }

  // seed: d E / d eps_i = grad_seed; eps = scale * sum_r + shift
  std::vector<double> dsum(N, 0.0);
  const double seed = opts.grad_seed;
  for (std::size_t i = 0; i < N; ++i) {
    dsum[i] = ctx.ops.mul(ctx.scale_q, seed);
    if (g) {
      *g->scale = ctx.ops.add(*g->scale, ctx.ops.mul(rb.sum_r[i], seed));
      *g->shift = ctx.ops.add(*g->shift, seed);
    }
  }

  std::vector<geometry::Vec3> dpos(N, geometry::Vec3{0, 0, 0});
  EquivariantTensor dh(ctx.plan.hidden_irreps, N);  // adjoint of h_out[T-1]

  std::vector<double> dB;
  std::vector<double> dY, dR;
  std::vector<double> sh_vals(shs);
  std::vector<std::array<double, 3>> sh_grads(shs);
  std::vector<double> bess_vals(static_cast<std::size_t>(nb));
  std::vector<double> bess_grads(static_cast<std::size_t>(nb));
  std::vector<double> dbess(static_cast<std::size_t>(nb));

  for (int t = cfg.num_layers - 1; t >= 0; --t) {
    LayerAct& act = rb.acts[std::size_t(t)];
    // every layer's readout receives the same d(sum of readouts)
    bwd_readout(ctx, t, act, dsum, dh, g);

    EquivariantTensor dmsg(ctx.plan.hidden_irreps, N);
    EquivariantTensor dh_in(act.h_in.irreps, N);
    bwd_update(ctx, t, act, rb.z, dh, dmsg, dh_in, g);
    bwd_message(ctx, t, act, rb.z, dmsg, dB, g);
    EquivariantTensor dAm(ctx.plan.a_irreps, N);
    bwd_B(ctx, act, dB, dAm);
    EquivariantTensor dA(ctx.plan.a_irreps, N);
    bwd_mix(ctx, t, act, dAm, dA, g);
    EquivariantTensor dhu(act.hu.irreps, N);
    bwd_A(ctx, t, rb.nl, rb.sh, shs, act.R, act.hu, dA, dhu, dY, dR);

    // per-edge radial and geometric chains
    const LayerPlan& lp = ctx.plan.layers[std::size_t(t)];
    const std::size_t pk = std::size_t(lp.paths.size()) * std::size_t(cfg.channels);
    for (std::size_t e = 0; e < E; ++e) {
      bwd_radial_edge(ctx, t, rb.bess.data() + e * std::size_t(nb),
                      act.mlp_pre.data() + e * std::size_t(hid_sum),
                      act.mlp_act.data() + e * std::size_t(hid_sum),
                      dR.data() + e * pk, dbess.data(), g);
      const EdgeGeom& gq = rb.geom[e];
      // d r through the basis values
      radial_basis_with_grad(gq.r, cfg.r_max, cfg.envelope_p,
                             {bess_vals.data(), std::size_t(nb)},
                             {bess_grads.data(), std::size_t(nb)}, ctx.ops);
      double dr = 0.0;
      for (int n = 0; n < nb; ++n)
        dr = ctx.ops.add(dr, ctx.ops.mul(dbess[std::size_t(n)],
                                         bess_grads[std::size_t(n)]));
      // d vec through the spherical harmonics
      const Vec3 vq{gq.v[0], gq.v[1], gq.v[2]};
      so3::real_spherical_harmonics_with_grad(cfg.l_max, vq,
                                              {sh_vals.data(), shs},
                                              {sh_grads.data(), shs}, ctx.ops);
      geometry::Vec3 dvec{0, 0, 0};
      const double* dYe = dY.data() + e * shs;
      for (std::size_t c = 0; c < shs; ++c) {
        if (dYe[c] == 0.0) continue;
        for (int d = 0; d < 3; ++d)
          dvec[std::size_t(d)] = ctx.ops.add(
              dvec[std::size_t(d)],
              ctx.ops.mul(dYe[c], sh_grads[c][std::size_t(d)]));
      }
      for (int d = 0; d < 3; ++d)
        dvec[std::size_t(d)] = ctx.ops.add(dvec[std::size_t(d)],
                                           ctx.ops.mul(dr, gq.u[d]));
      const auto& ed = rb.nl.edges[e];
      for (int d = 0; d < 3; ++d) {
        dpos[std::size_t(ed.dst)][std::size_t(d)] = ctx.ops.add(
            dpos[std::size_t(ed.dst)][std::size_t(d)], dvec[std::size_t(d)]);
        dpos[std::size_t(ed.src)][std::size_t(d)] = ctx.ops.add(
            dpos[std::size_t(ed.src)][std::size_t(d)], -dvec[std::size_t(d)]);
      }
    }

    // node-feature chain through the channel mix
    {
      const int K = cfg.channels;
      const Irreps& ir = act.h_in.irreps;
      for (std::size_t n = 0; n < N; ++n) {
        const double* dur = dhu.row(n);
        const double* hr = act.h_in.row(n);
        double* dhr = dh_in.row(n);
        for (std::size_t b = 0; b < ir.size(); ++b) {
          const int base = ir.block_offset(b);
          const int d = ir[b].ir_dim();
          const double* W = ctx.lw[std::size_t(t)].up[b];
          double* gW = g ? g->lg[std::size_t(t)].up[b] : nullptr;
          for (int k = 0; k < K; ++k)
            for (int m = 0; m < d; ++m) {
              const double dv = dur[base + k * d + m];
              if (dv == 0.0) continue;
              for (int kk = 0; kk < K; ++kk) {
                dhr[base + kk * d + m] = ctx.ops.add(
                    dhr[base + kk * d + m], lprod(ctx.ops, W[k * K + kk], dv));
                if (gW)
                  gW[k * K + kk] = ctx.ops.add(
                      gW[k * K + kk], lprod2(ctx.ops, hr[base + kk * d + m], dv));
              }
            }
        }
      }
    }
    dh = dh_in;
  }

  // embedding gradient
  if (g) {
    const int K = cfg.channels;
    for (std::size_t i = 0; i < N; ++i) {
      double* ge = g->embedding + std::size_t(rb.z[i]) * std::size_t(K);
      const double* dhr = dh.row(i);
      for (int k = 0; k < K; ++k)
        ge[k] = ctx.ops.add(ge[k], dhr[std::size_t(k)]);
    }
  }

  if (opts.forces) {
    result.forces.assign(N, geometry::Vec3{0, 0, 0});
    for (std::size_t i = 0; i < N; ++i)
      for (int d = 0; d < 3; ++d)
        result.forces[i][std::size_t(d)] = -dpos[i][std::size_t(d)];
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Model Model::create(const ModelConfig& cfg) {
  Model m;
  m.cfg = cfg;
  m.plan = ModelPlan::build(cfg);
  m.weights = initialize_weights(m.plan);
  return m;
}

EvalResult Model::evaluate(const AtomicConfiguration& config,
                           const EvalOptions& opts) const {
  g_eval_count.fetch_add(1, std::memory_order_relaxed);
  audit_shapes(plan, weights);
  Ctx ctx(*this, opts.policy, opts.count);
  EvalResult result;
  RunBuffers rb;
  forward_pass(ctx, config, rb, result, opts);
  if (opts.forces || opts.weight_grads) {
    StageClock clock(opts.stage_times);
    backward_pass(ctx, rb, result, opts);
    clock.lap("backward");
  }
  ctx.counters.enabled = opts.count;
  result.counters = ctx.counters;
  return result;
}

long evaluation_count() { return g_eval_count.load(std::memory_order_relaxed); }

std::pair<double, std::vector<double>> forward_energy(
    const Model& model, const AtomicConfiguration& config,
    const numerics::PrecisionPolicy& policy, Backend backend) {
  EvalOptions opts;
  opts.policy = policy;
  opts.backend = backend;
  EvalResult r = model.evaluate(config, opts);
  return {r.energy, std::move(r.per_atom)};
}

std::vector<geometry::Vec3> compute_forces(const Model& model,
                                           const AtomicConfiguration& config,
                                           const numerics::PrecisionPolicy& policy,
                                           Backend backend) {
  EvalOptions opts;
  opts.policy = policy;
  opts.backend = backend;
  opts.forces = true;
  return model.evaluate(config, opts).forces;
}

std::vector<geometry::Vec3> finite_difference_forces(
    const Model& model, const AtomicConfiguration& config, double h) {
  if (!(h > 0.0)) throw DomainError("finite_difference_forces: h must be positive");
  const numerics::PrecisionPolicy fp64;
  std::vector<geometry::Vec3> F(config.size(), geometry::Vec3{0, 0, 0});
  AtomicConfiguration work = config;
  for (std::size_t i = 0; i < config.size(); ++i)
    for (int d = 0; d < 3; ++d) {
      const double orig = work.positions[i][std::size_t(d)];
      work.positions[i][std::size_t(d)] = orig + h;
      const double ep = forward_energy(model, work, fp64).first;
      work.positions[i][std::size_t(d)] = orig - h;
      const double em = forward_energy(model, work, fp64).first;
      work.positions[i][std::size_t(d)] = orig;
      F[i][std::size_t(d)] = -(ep - em) / (2.0 * h);
    }
  return F;
}

// ---------------------------------------------------------------------------
// standalone block entry points

so3::EquivariantTensor edge_embedding_A(const Model& model,
                                        const AtomicConfiguration& config,
                                        const EquivariantTensor& h, int layer,
                                        const numerics::PrecisionPolicy& policy,
                                        Backend backend) {
  const Irreps expect = model.cfg.layer_in_irreps(layer);
  if (!(h.irreps == expect))
    throw ContractError("edge_embedding_A: node features carry irreps " +
                        h.irreps.str() + ", the layer expects " + expect.str());
  if (h.layout != Layout::mul_ir)
    throw ContractError("edge_embedding_A: node features must be mul_ir; "
                        "convert layouts explicitly instead of reinterpreting");
  if (h.num_nodes != config.size())
    throw DimensionError("edge_embedding_A: node count mismatch");
  Ctx ctx(model, policy, false);
  const std::size_t N = config.size();
  const std::size_t shs = std::size_t(so3::sh_size(model.cfg.l_max));
  const int nb = model.cfg.n_bessel;
  NeighborList nl = geometry::build_neighbor_list(config, model.cfg.r_max);
  const std::size_t E = nl.edges.size();
  std::vector<EdgeGeom> geom(E);
  std::vector<double> sh(E * shs), bess(E * std::size_t(nb));
  for (std::size_t e = 0; e < E; ++e) {
    const auto& ed = nl.edges[e];
    for (int c = 0; c < 3; ++c) geom[e].v[c] = ctx.ops.q(ed.vec[std::size_t(c)]);
    geom[e].r = ctx.ops.q(ed.dist);
    const Vec3 vq{geom[e].v[0], geom[e].v[1], geom[e].v[2]};
    so3::real_spherical_harmonics(model.cfg.l_max, vq, {sh.data() + e * shs, shs},
                                  ctx.ops);
    radial_basis(geom[e].r, model.cfg.r_max, model.cfg.envelope_p,
                 {bess.data() + e * std::size_t(nb), std::size_t(nb)}, ctx.ops);
  }
  EquivariantTensor hu(expect, N);
  kernel_linear_up(ctx, layer, h, hu);
  EquivariantTensor A(model.plan.a_irreps, N);
  if (backend == Backend::fused_batched) {
    const LayerPlan& lp = model.plan.layers[std::size_t(layer)];
    const std::size_t pk = std::size_t(lp.paths.size()) *
                           std::size_t(model.cfg.channels);
    std::vector<double> R(E * pk, 0.0);
    for (std::size_t e = 0; e < E; ++e)
      kernel_radial_edge(ctx, layer, bess.data() + e * std::size_t(nb),
                         R.data() + e * pk, nullptr, nullptr);
    kernel_A_fused(ctx, layer, nl, sh, shs, R, hu, A);
  } else {
    kernel_A_reference(ctx, layer, nl, geom, bess, hu, A);
  }
  return A;
}

std::vector<double> symmetric_contraction_B(const Model& model,
                                            const EquivariantTensor& a_features,
                                            int layer,
                                            const numerics::PrecisionPolicy& policy) {
  if (!(a_features.irreps == model.plan.a_irreps))
    throw ContractError("symmetric_contraction_B: input does not carry the "
                        "edge-pooled irreps " + model.plan.a_irreps.str());
  if (a_features.layout != Layout::mul_ir)
    throw ContractError("symmetric_contraction_B: features must be mul_ir");
  Ctx ctx(model, policy, false);
  EquivariantTensor Am(model.plan.a_irreps, a_features.num_nodes);
  kernel_mix(ctx, layer, a_features, Am);
  std::vector<double> B;
  kernel_B(ctx, Am, B);
  return B;
}

so3::EquivariantTensor message_and_update(const Model& model,
                                          const std::vector<double>& b_features,
                                          const EquivariantTensor& h_prev,
                                          const std::vector<int>& species_idx,
                                          int layer,
                                          const numerics::PrecisionPolicy& policy) {
  const Irreps expect = model.cfg.layer_in_irreps(layer);
  if (!(h_prev.irreps == expect))
    throw ContractError("message_and_update: node features carry irreps " +
                        h_prev.irreps.str() + ", the layer expects " + expect.str());
  const std::size_t N = h_prev.num_nodes;
  for (int z : species_idx)
    if (z < 0 || z >= model.cfg.num_species())
      throw ContractError("message_and_update: species index out of range");
  if (species_idx.size() != N)
    throw DimensionError("message_and_update: species index count mismatch");
  const std::size_t brow = std::size_t(model.plan.b_row_dim_per_channel());
  if (b_features.size() != N * std::size_t(model.cfg.channels) * brow)
    throw DimensionError("message_and_update: contraction feature size mismatch");
  Ctx ctx(model, policy, false);
  EquivariantTensor msg(model.plan.hidden_irreps, N);
  kernel_message(ctx, layer, b_features, species_idx, msg);
  EquivariantTensor h_out(model.plan.hidden_irreps, N);
  kernel_update(ctx, layer, h_prev, msg, species_idx, h_out);
  return h_out;
}

// ---------------------------------------------------------------------------
// block replay

const std::vector<std::string>& replayable_blocks() {
  static const std::vector<std::string> ids = {
      "spherical_harmonics", "radial_mlp",     "edge_embedding_A",
      "symmetric_contraction_B", "message_linear", "update", "readout"};
  return ids;
}

namespace {

void check_capture(const Model& model, const BlockCapture& cap) {
  if (!cap.filled) throw ContractError("block replay: capture is empty");
  const std::size_t shs = std::size_t(so3::sh_size(model.cfg.l_max));
  const std::size_t pk0 = std::size_t(model.plan.n_paths(0)) *
                          std::size_t(model.cfg.channels);
  const std::size_t in_dim = std::size_t(model.cfg.layer_in_irreps(0).dim());
  const std::size_t a_dim = std::size_t(model.plan.a_irreps.dim());
  const std::size_t hid_dim = std::size_t(model.plan.hidden_irreps.dim());
  const std::size_t brow = std::size_t(model.plan.b_row_dim_per_channel()) *
                           std::size_t(model.cfg.channels);
  if (cap.sh.size() != cap.num_edges * shs ||
      cap.bessel.size() != cap.num_edges * std::size_t(model.cfg.n_bessel) ||
      cap.radial.size() != cap.num_edges * pk0 ||
      cap.edge_src.size() != cap.num_edges ||
      cap.edge_dst.size() != cap.num_edges ||
      cap.edge_vec.size() != cap.num_edges * 3 ||
      cap.species_idx.size() != cap.num_nodes ||
      cap.h_in.size() != cap.num_nodes * in_dim ||
      cap.hu.size() != cap.num_nodes * in_dim ||
      cap.a.size() != cap.num_nodes * a_dim ||
      cap.a_mixed.size() != cap.num_nodes * a_dim ||
      cap.b.size() != cap.num_nodes * brow ||
      cap.msg.size() != cap.num_nodes * hid_dim ||
      cap.h_out.size() != cap.num_nodes * hid_dim)
    throw ContractError("block replay: captured shapes do not match the model");
}

NeighborList graph_from_capture(const BlockCapture& cap) {
  NeighborList nl;
  nl.edges.resize(cap.num_edges);
  for (std::size_t e = 0; e < cap.num_edges; ++e) {
    nl.edges[e].src = cap.edge_src[e];
    nl.edges[e].dst = cap.edge_dst[e];
    for (int c = 0; c < 3; ++c)
      nl.edges[e].vec[std::size_t(c)] = cap.edge_vec[e * 3 + std::size_t(c)];
    nl.edges[e].dist = cap.edge_r[e];
  }
  nl.offsets.assign(cap.num_nodes + 1, 0);
  for (const auto& e : nl.edges) ++nl.offsets[std::size_t(e.src) + 1];
  for (std::size_t i = 0; i < cap.num_nodes; ++i) nl.offsets[i + 1] += nl.offsets[i];
  return nl;
}

}  // namespace

std::vector<double> replay_block(const Model& model, const BlockCapture& cap,
                                 const std::string& block_id,
                                 const numerics::PrecisionPolicy& policy) {
  check_capture(model, cap);
  Ctx ctx(model, policy, false);
  const ModelConfig& cfg = model.cfg;
  const std::size_t E = cap.num_edges;
  const std::size_t N = cap.num_nodes;
  const std::size_t shs = std::size_t(so3::sh_size(cfg.l_max));
  const int nb = cfg.n_bessel;
  if (block_id == "spherical_harmonics") {
    std::vector<double> out(E * shs, 0.0);
    for (std::size_t e = 0; e < E; ++e) {
      const Vec3 v{ctx.ops.q(cap.edge_vec[e * 3]), ctx.ops.q(cap.edge_vec[e * 3 + 1]),
                   ctx.ops.q(cap.edge_vec[e * 3 + 2])};
      so3::real_spherical_harmonics(cfg.l_max, v, {out.data() + e * shs, shs},
                                    ctx.ops);
    }
    return out;
  }
  if (block_id == "radial_mlp") {
    const std::size_t pk = std::size_t(model.plan.n_paths(0)) *
                           std::size_t(cfg.channels);
    std::vector<double> out(E * pk, 0.0);
    std::vector<double> bq(static_cast<std::size_t>(nb));
    for (std::size_t e = 0; e < E; ++e) {
      for (int n = 0; n < nb; ++n)
        bq[std::size_t(n)] = ctx.ops.q(cap.bessel[e * std::size_t(nb) + std::size_t(n)]);
      kernel_radial_edge(ctx, 0, bq.data(), out.data() + e * pk, nullptr, nullptr);
    }
    return out;
  }
  if (block_id == "edge_embedding_A") {
    NeighborList nl = graph_from_capture(cap);
    EquivariantTensor hu(cfg.layer_in_irreps(0), N);
    hu.data = cap.hu;
    if (!ctx.ops.fast)
      for (double& x : hu.data) x = ctx.ops.q(x);
    std::vector<double> R = cap.radial;
    if (!ctx.ops.fast)
      for (double& x : R) x = ctx.ops.q(x);
    std::vector<double> sh = cap.sh;
    if (!ctx.ops.fast)
      for (double& x : sh) x = ctx.ops.q(x);
    EquivariantTensor A(model.plan.a_irreps, N);
    kernel_A_fused(ctx, 0, nl, sh, shs, R, hu, A);
    return A.data;
  }
  if (block_id == "symmetric_contraction_B") {
    EquivariantTensor Am(model.plan.a_irreps, N);
    Am.data = cap.a_mixed;
    if (!ctx.ops.fast)
      for (double& x : Am.data) x = ctx.ops.q(x);
    std::vector<double> B;
    kernel_B(ctx, Am, B);
    return B;
  }
  if (block_id == "message_linear") {
    std::vector<double> b = cap.b;
    if (!ctx.ops.fast)
      for (double& x : b) x = ctx.ops.q(x);
    EquivariantTensor msg(model.plan.hidden_irreps, N);
    kernel_message(ctx, 0, b, cap.species_idx, msg);
    return msg.data;
  }
  if (block_id == "update") {
    EquivariantTensor h_in(cfg.layer_in_irreps(0), N);
    h_in.data = cap.h_in;
    EquivariantTensor msg(model.plan.hidden_irreps, N);
    msg.data = cap.msg;
    if (!ctx.ops.fast) {
      for (double& x : h_in.data) x = ctx.ops.q(x);
      for (double& x : msg.data) x = ctx.ops.q(x);
    }
    EquivariantTensor h_out(model.plan.hidden_irreps, N);
    kernel_update(ctx, 0, h_in, msg, cap.species_idx, h_out);
    return h_out.data;
  }
  if (block_id == "readout") {
    EquivariantTensor h(model.plan.hidden_irreps, N);
    h.data = cap.h_out;
    if (!ctx.ops.fast)
      for (double& x : h.data) x = ctx.ops.q(x);
    std::vector<double> r, pre, act;
    kernel_readout(ctx, 0, h, r, &pre, &act);
    return r;
  }
  throw ContractError("unknown replay block id: " + block_id);
}

std::vector<double> replay_block_backward(const Model& model, const BlockCapture& cap,
                                          const std::string& block_id,
                                          const numerics::PrecisionPolicy& policy) {
  check_capture(model, cap);
  Ctx ctx(model, policy, false);
  const ModelConfig& cfg = model.cfg;
  const std::size_t E = cap.num_edges;
  const std::size_t N = cap.num_nodes;
  const std::size_t shs = std::size_t(so3::sh_size(cfg.l_max));
  const int nb = cfg.n_bessel;
  // surrogate-loss seed on the block's replayed output: dL/dx = 2x
  std::vector<double> out = replay_block(model, cap, block_id, policy);
  std::vector<double> dout(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) dout[i] = ctx.ops.mul(2.0, out[i]);

  if (block_id == "spherical_harmonics") {
    std::vector<double> dvec(E * 3, 0.0);
    std::vector<double> vals(shs);
    std::vector<std::array<double, 3>> grads(shs);
    for (std::size_t e = 0; e < E; ++e) {
      const Vec3 v{ctx.ops.q(cap.edge_vec[e * 3]), ctx.ops.q(cap.edge_vec[e * 3 + 1]),
                   ctx.ops.q(cap.edge_vec[e * 3 + 2])};
      so3::real_spherical_harmonics_with_grad(cfg.l_max, v, {vals.data(), shs},
                                              {grads.data(), shs}, ctx.ops);
      for (std::size_t c = 0; c < shs; ++c)
        for (int d = 0; d < 3; ++d)
          dvec[e * 3 + std::size_t(d)] =
              ctx.ops.add(dvec[e * 3 + std::size_t(d)],
                          ctx.ops.mul(dout[e * shs + c], grads[c][std::size_t(d)]));
    }
    return dvec;
  }
  if (block_id == "radial_mlp") {
    // rerun the forward to fill the activation scratch, then walk back
    const std::size_t pk = std::size_t(model.plan.n_paths(0)) *
                           std::size_t(cfg.channels);
    const int hsum = hidden_sum(cfg);
    std::vector<double> R(pk);
    std::vector<double> pre(static_cast<std::size_t>(hsum));
    std::vector<double> act(static_cast<std::size_t>(hsum));
    std::vector<double> bq(static_cast<std::size_t>(nb));
    std::vector<double> dbess(E * std::size_t(nb), 0.0);
    for (std::size_t e = 0; e < E; ++e) {
      for (int n = 0; n < nb; ++n)
        bq[std::size_t(n)] = ctx.ops.q(cap.bessel[e * std::size_t(nb) + std::size_t(n)]);
      kernel_radial_edge(ctx, 0, bq.data(), R.data(), pre.data(), act.data());
      bwd_radial_edge(ctx, 0, bq.data(), pre.data(), act.data(),
                      dout.data() + e * pk, dbess.data() + e * std::size_t(nb),
                      nullptr);
    }
    return dbess;
  }
  if (block_id == "edge_embedding_A") {
    NeighborList nl = graph_from_capture(cap);
    EquivariantTensor hu(cfg.layer_in_irreps(0), N);
    hu.data = cap.hu;
    std::vector<double> R = cap.radial, sh = cap.sh;
    if (!ctx.ops.fast) {
      for (double& x : hu.data) x = ctx.ops.q(x);
      for (double& x : R) x = ctx.ops.q(x);
      for (double& x : sh) x = ctx.ops.q(x);
    }
    EquivariantTensor dA(model.plan.a_irreps, N);
    dA.data = dout;
    EquivariantTensor dhu(cfg.layer_in_irreps(0), N);
    std::vector<double> dY, dR;
    bwd_A(ctx, 0, nl, sh, shs, R, hu, dA, dhu, dY, dR);
    return dhu.data;
  }
  if (block_id == "symmetric_contraction_B") {
    EquivariantTensor Am(model.plan.a_irreps, N);
    Am.data = cap.a_mixed;
    if (!ctx.ops.fast)
      for (double& x : Am.data) x = ctx.ops.q(x);
    LayerAct act;
    act.Am = Am;
    EquivariantTensor dAm(model.plan.a_irreps, N);
    bwd_B(ctx, act, dout, dAm);
    return dAm.data;
  }
  if (block_id == "message_linear") {
    std::vector<double> b = cap.b;
    if (!ctx.ops.fast)
      for (double& x : b) x = ctx.ops.q(x);
    LayerAct act;
    act.B = b;
    EquivariantTensor dmsg(model.plan.hidden_irreps, N);
    dmsg.data = dout;
    std::vector<double> dB;
    bwd_message(ctx, 0, act, cap.species_idx, dmsg, dB, nullptr);
    return dB;
  }
  if (block_id == "update") {
    LayerAct act;
    act.h_in = EquivariantTensor(cfg.layer_in_irreps(0), N);
    act.h_in.data = cap.h_in;
    act.msg = EquivariantTensor(model.plan.hidden_irreps, N);
    act.msg.data = cap.msg;
    if (!ctx.ops.fast) {
      for (double& x : act.h_in.data) x = ctx.ops.q(x);
      for (double& x : act.msg.data) x = ctx.ops.q(x);
    }
    EquivariantTensor dh_out(model.plan.hidden_irreps, N);
    dh_out.data = dout;
    EquivariantTensor dmsg(model.plan.hidden_irreps, N);
    EquivariantTensor dh_in(cfg.layer_in_irreps(0), N);
    bwd_update(ctx, 0, act, cap.species_idx, dh_out, dmsg, dh_in, nullptr);
    return dmsg.data;
  }
  if (block_id == "readout") {
    LayerAct act;
    act.h_out = EquivariantTensor(model.plan.hidden_irreps, N);
    act.h_out.data = cap.h_out;
    if (!ctx.ops.fast)
      for (double& x : act.h_out.data) x = ctx.ops.q(x);
    kernel_readout(ctx, 0, act.h_out, act.r, &act.ro_pre, &act.ro_act);
    EquivariantTensor dh(model.plan.hidden_irreps, N);
    bwd_readout(ctx, 0, act, dout, dh, nullptr);
    return dh.data;
  }
  throw ContractError("unknown replay block id: " + block_id);
}

// ---------------------------------------------------------------------------
// checkpoint container

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

constexpr char kMagic[8] = {'E', 'Q', 'P', 'C', 'K', 'P', 'T', '1'};

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
  f.write(static_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void write_pod(std::ofstream& f, T v) {
  write_bytes(f, &v, sizeof(T));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n) {
  f.read(static_cast<char*>(p), std::streamsize(n));
  if (!f) throw IoError("checkpoint: truncated file");
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  read_bytes(f, &v, sizeof(T));
  return v;
}

std::string config_text(const ModelConfig& c) {
  std::string s;
  auto add = [&s](const std::string& k, const std::string& v) {
    s += k + "=" + v + "\n";
  };
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  add("r_max", num(c.r_max));
  add("channels", std::to_string(c.channels));
  add("l_max", std::to_string(c.l_max));
  add("message_l_max", std::to_string(c.message_l_max));
  add("correlation", std::to_string(c.correlation));
  add("n_bessel", std::to_string(c.n_bessel));
  add("envelope_p", std::to_string(c.envelope_p));
  add("num_layers", std::to_string(c.num_layers));
  add("readout_hidden", std::to_string(c.readout_hidden));
  std::string rh;
  for (int h : c.radial_hidden) rh += (rh.empty() ? "" : ",") + std::to_string(h);
  add("radial_hidden", rh);
  std::string sp;
  for (int z : c.species) sp += (sp.empty() ? "" : ",") + std::to_string(z);
  add("species", sp);
  add("avg_num_neighbors", num(c.avg_num_neighbors));
  add("scale", num(c.scale));
  add("shift", num(c.shift));
  add("seed", std::to_string(c.seed));
  return s;
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < v.size()) {
    std::size_t comma = v.find(',', pos);
    if (comma == std::string::npos) comma = v.size();
    out.push_back(std::stoi(v.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig c;
  c.radial_hidden.clear();
  c.species.clear();
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("checkpoint: bad config line");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "r_max") c.r_max = std::stod(v);
    else if (k == "channels") c.channels = std::stoi(v);
    else if (k == "l_max") c.l_max = std::stoi(v);
    else if (k == "message_l_max") c.message_l_max = std::stoi(v);
    else if (k == "correlation") c.correlation = std::stoi(v);
    else if (k == "n_bessel") c.n_bessel = std::stoi(v);
    else if (k == "envelope_p") c.envelope_p = std::stoi(v);
    else if (k == "num_layers") c.num_layers = std::stoi(v);
    else if (k == "readout_hidden") c.readout_hidden = std::stoi(v);
    else if (k == "radial_hidden") c.radial_hidden = parse_int_list(v);
    else if (k == "species") c.species = parse_int_list(v);
    else if (k == "avg_num_neighbors") c.avg_num_neighbors = std::stod(v);
    else if (k == "scale") c.scale = std::stod(v);
    else if (k == "shift") c.shift = std::stod(v);
    else if (k == "seed") c.seed = std::stoull(v);
    else throw ParseError("checkpoint: unknown config key " + k);
  }
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    write_bytes(f, kMagic, 8);
    write_pod<std::uint32_t>(f, 1);  // version
    const std::string cfg = config_text(model.cfg);
    write_pod<std::uint64_t>(f, cfg.size());
    write_bytes(f, cfg.data(), cfg.size());
    write_pod<std::uint32_t>(f, std::uint32_t(model.weights.layout.entries.size()));
    for (const WeightShape& e : model.weights.layout.entries) {
      write_pod<std::uint32_t>(f, std::uint32_t(e.name.size()));
      write_bytes(f, e.name.data(), e.name.size());
      write_pod<std::uint32_t>(f, std::uint32_t(e.dims.size()));
      for (long d : e.dims) write_pod<std::int64_t>(f, d);
      write_bytes(f, model.weights.data.data() + e.offset, e.count() * sizeof(double));
    }
    if (!f) throw IoError("write failure on " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " to " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[8];
  read_bytes(f, magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(f);
  if (version != 1)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto cfg_len = read_pod<std::uint64_t>(f);
  std::string cfg_text(cfg_len, '\0');
  read_bytes(f, cfg_text.data(), cfg_len);
  Model model = Model::create(config_from_text(cfg_text));
  const auto n_arrays = read_pod<std::uint32_t>(f);
  if (n_arrays != model.weights.layout.entries.size())
    throw ParseError("checkpoint: array count mismatch");
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    const auto name_len = read_pod<std::uint32_t>(f);
    std::string name(name_len, '\0');
    read_bytes(f, name.data(), name_len);
    const WeightShape& e = model.weights.layout.find(name);
    const auto ndims = read_pod<std::uint32_t>(f);
    if (ndims != e.dims.size())
      throw ParseError("checkpoint: rank mismatch for " + name);
    for (std::uint32_t d = 0; d < ndims; ++d)
      if (read_pod<std::int64_t>(f) != e.dims[d])
        throw ParseError("checkpoint: shape mismatch for " + name);
    read_bytes(f, model.weights.data.data() + e.offset, e.count() * sizeof(double));
  }
  return model;
}

}  // namespace equiprec::model
