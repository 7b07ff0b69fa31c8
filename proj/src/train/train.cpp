#include "equiprec/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "equiprec/errors.hpp"
#include "equiprec/metrics/metrics.hpp"
#include "equiprec/numerics/float_format.hpp"
#include "equiprec/numerics/rng.hpp"

namespace equiprec::train {

namespace {

using geometry::AtomicConfiguration;
using geometry::Vec3;

bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_finite(std::span<const Vec3> xs) {
  for (const Vec3& v : xs)
    for (double x : v)
      if (!std::isfinite(x)) return false;
  return true;
}

struct LjParams {
  double eps;    // well depth, eV
  double sigma;  // zero crossing, Angstrom
};

LjParams lj_element(int z) {
  switch (z) {
    case 1: return {0.030, 1.8};
    case 6: return {0.080, 2.4};
    case 8: return {0.060, 2.2};
    default:
      throw ConfigurationError("lj_reference: no parameters for element " +
                               std::to_string(z));
  }
}

// Lorentz-Berthelot mixing: geometric eps, arithmetic sigma.
LjParams lj_pair(int z1, int z2) {
  const LjParams a = lj_element(z1), b = lj_element(z2);
  return {std::sqrt(a.eps * b.eps), 0.5 * (a.sigma + b.sigma)};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("train: lr must be > 0");
  if (epochs < 0) throw DomainError("train: epochs must be >= 0");
  if (batch_size < 1) throw DomainError("train: batch_size must be >= 1");
  if (w_e < 0.0 || w_f < 0.0) throw DomainError("train: loss weights must be >= 0");
  if (!(init_scale > 0.0)) throw DomainError("train: init_scale must be > 0");
  if (!(scale_backoff > 0.0 && scale_backoff < 1.0))
    throw DomainError("train: scale_backoff must be in (0, 1)");
  if (!(scale_growth > 1.0)) throw DomainError("train: scale_growth must be > 1");
  if (scale_growth_interval < 1)
    throw DomainError("train: scale_growth_interval must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0)
    throw DomainError("train: momentum must be in [0, 1)");
  if (!(hvp_step > 0.0)) throw DomainError("train: hvp_step must be > 0");
}

double lj_reference(const AtomicConfiguration& config, std::vector<Vec3>& forces) {
  config.validate();
  if (config.periodic())
    throw ContractError("lj_reference: open-boundary oracle, got a periodic cell");
  const std::size_t n = config.size();
  forces.assign(n, Vec3{0.0, 0.0, 0.0});
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const LjParams p = lj_pair(config.atomic_numbers[i], config.atomic_numbers[j]);
      Vec3 d;
      double r2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        d[k] = config.positions[i][k] - config.positions[j][k];
        r2 += d[k] * d[k];
      }
      if (r2 <= 0.0) throw DomainError("lj_reference: coincident atoms");
      const double r = std::sqrt(r2);
      const double s6 = std::pow(p.sigma / r, 6.0);
      energy += 4.0 * p.eps * (s6 * s6 - s6);
      // dE/dr = 4 eps (-12 s^12 + 6 s^6) / r; force on i points along +d
      // when the pair repels.
      const double f_over_r = 4.0 * p.eps * (12.0 * s6 * s6 - 6.0 * s6) / r2;
      for (int k = 0; k < 3; ++k) {
        forces[i][k] += f_over_r * d[k];
        forces[j][k] -= f_over_r * d[k];
      }
    }
  }
  return energy;
}

std::vector<LabeledStructure> synthetic_dataset(const std::string& kind, int count,
                                                std::uint64_t seed) {
  if (kind != "lj_clusters")
    throw ConfigurationError("synthetic_dataset: unknown kind '" + kind + "'");
  if (count < 1) throw DomainError("synthetic_dataset: count must be >= 1");

  numerics::Rng rng(seed);
  const int elements[2] = {1, 6};

  std::vector<LabeledStructure> out;
  out.reserve(std::size_t(count));
  for (int c = 0; c < count; ++c) {
    const int n = 3 + int(rng.index(10));        // 3..12 atoms
    const int n_kinds = 1 + int(rng.index(2));   // 1 or 2 species
    const int first = int(rng.index(2));
    const int kinds[2] = {elements[first], elements[1 - first]};

    LabeledStructure ls;
    AtomicConfiguration& cfg = ls.config;
    double box = 3.0 * std::cbrt(double(n)) + 2.0;
    cfg.pbc = {false, false, false};

    for (int i = 0; i < n; ++i) {
      const int z = (n_kinds == 2) ? kinds[rng.index(2)] : kinds[0];
      // Rejection-sample a position that keeps every pair outside the steep
      // repulsive wall, so labels stay in a learnable range. The sampling
      // cube grows if a draw sequence gets stuck (deterministic either way).
      int attempts = 0;
      for (;;) {
        Vec3 p{rng.uniform(0.0, box), rng.uniform(0.0, box), rng.uniform(0.0, box)};
        bool ok = true;
        for (std::size_t j = 0; j < cfg.positions.size() && ok; ++j) {
          const double dmin = 0.95 * lj_pair(z, cfg.atomic_numbers[j]).sigma;
          double r2 = 0.0;
          for (int k = 0; k < 3; ++k) {
            const double d = p[k] - cfg.positions[j][k];
            r2 += d * d;
          }
          ok = r2 >= dmin * dmin;
        }
        if (ok) {
          cfg.positions.push_back(p);
          cfg.atomic_numbers.push_back(z);
          break;
        }
        if (++attempts % 600 == 0) box *= 1.15;
      }
    }
    cfg.cell = {{{box, 0.0, 0.0}, {0.0, box, 0.0}, {0.0, 0.0, box}}};
    ls.energy = lj_reference(cfg, ls.forces);
    out.push_back(std::move(ls));
  }
  return out;
}

double structure_loss(double e_pred, std::span<const Vec3> f_pred, double e_ref,
                      std::span<const Vec3> f_ref, double w_e, double w_f) {
  if (f_ref.empty()) throw DimensionError("structure_loss: empty structure");
  if (f_pred.size() != f_ref.size())
    throw DimensionError("structure_loss: force shape mismatch");
  const double n = double(f_ref.size());
  const double de = e_pred - e_ref;
  double ssf = 0.0;
  for (std::size_t i = 0; i < f_ref.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      const double d = f_pred[i][k] - f_ref[i][k];
      ssf += d * d;
    }
  return w_e * de * de / (n * n) + w_f * ssf / (3.0 * n);
}

TrainState init_train_state(const model::Model& m, const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.master = m.weights.data;
  if (!cfg.policy.all_fp64())
    for (double& w : st.master) w = numerics::quantize(w, numerics::fp32());
  st.velocity.assign(st.master.size(), 0.0);
  st.scale = cfg.dynamic_loss_scaling ? cfg.init_scale : 1.0;
  return st;
}

bool loss_gradient(const model::Model& m, std::span<const LabeledStructure> batch,
                   const numerics::PrecisionPolicy& policy, double scale, double w_e,
                   double w_f, double hvp_step, double& loss_out,
                   std::vector<double>& grad) {
  if (batch.empty()) throw ContractError("loss_gradient: empty batch");
  if (!(scale > 0.0)) throw DomainError("loss_gradient: scale must be > 0");
  if (!(hvp_step > 0.0)) throw DomainError("loss_gradient: hvp_step must be > 0");

  const std::size_t nw = m.weights.layout.total;
  grad.assign(nw, 0.0);
  loss_out = 0.0;
  bool finite = true;

  model::EvalOptions opts;
  opts.policy = policy;
  opts.forces = true;
  opts.weight_grads = true;
  opts.grad_seed = scale;

  for (const LabeledStructure& ls : batch) {
    const std::size_t n = ls.config.size();
    if (n == 0 || ls.forces.size() != n)
      throw DimensionError("loss_gradient: malformed labeled structure");

    const model::EvalResult r = m.evaluate(ls.config, opts);
    if (!std::isfinite(r.energy) || !all_finite(r.forces) ||
        !all_finite(r.weight_grads)) {
      finite = false;
      loss_out = std::numeric_limits<double>::quiet_NaN();
      continue;
    }

    // The backward seed carries the loss scale, so forces and weight
    // gradients both come back premultiplied by it.
    std::vector<Vec3> f_pred(n);
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) f_pred[i][k] = r.forces[i][k] / scale;

    loss_out += structure_loss(r.energy, f_pred, ls.energy, ls.forces, w_e, w_f);

    // Energy term: dL/dE * dE/dw, with dE/dw already scaled.
    const double dl_de = 2.0 * w_e * (r.energy - ls.energy) / (double(n) * double(n));
    for (std::size_t k = 0; k < nw; ++k) grad[k] += dl_de * r.weight_grads[k];

    // Force term: dL/dw = -sum_ia u_ia d2E/dw dr_ia with
    // u = (2 w_f / 3N) (F_pred - F_ref). The mixed second derivative is a
    // central difference of the weight gradient along u.
    std::vector<Vec3> u(n);
    double unorm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) {
        u[i][k] = (2.0 * w_f / (3.0 * double(n))) * (f_pred[i][k] - ls.forces[i][k]);
        unorm2 += u[i][k] * u[i][k];
      }
    const double unorm = std::sqrt(unorm2);
    if (unorm == 0.0) continue;

    model::EvalOptions gopts = opts;
    gopts.forces = false;
    AtomicConfiguration shifted = ls.config;
    const double h = hvp_step;
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k)
        shifted.positions[i][k] = ls.config.positions[i][k] + h * u[i][k] / unorm;
    const model::EvalResult rp = m.evaluate(shifted, gopts);
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k)
        shifted.positions[i][k] = ls.config.positions[i][k] - h * u[i][k] / unorm;
    const model::EvalResult rm = m.evaluate(shifted, gopts);
    if (!all_finite(rp.weight_grads) || !all_finite(rm.weight_grads)) {
      finite = false;
      loss_out = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double coeff = unorm / (2.0 * h);
    for (std::size_t k = 0; k < nw; ++k)
      grad[k] -= coeff * (rp.weight_grads[k] - rm.weight_grads[k]);
  }

  const double b = double(batch.size());
  loss_out /= b;
  for (double& g : grad) g /= b;
  return finite && all_finite(grad);
}

StepResult train_step(model::Model& m, TrainState& st,
                      std::span<const LabeledStructure> batch, const TrainConfig& cfg) {
  cfg.validate();
  if (st.master.size() != m.weights.data.size())
    throw ContractError("train_step: state does not match the model's weight count");

  // Compute copy: the engine re-quantizes these per the policy at evaluate
  // time, so writing the masters is all "re-quantized from masters" needs.
  m.weights.data = st.master;

  const double scale = cfg.dynamic_loss_scaling ? st.scale : 1.0;
  StepResult res;
  std::vector<double> grad;
  const bool ok = loss_gradient(m, batch, cfg.policy, scale, cfg.w_e, cfg.w_f,
                                cfg.hvp_step, res.loss, grad);
  st.step += 1;

  if (!ok) {
    res.overflow = true;
    st.clean_streak = 0;
    st.overflow_events += 1;
    if (cfg.dynamic_loss_scaling) st.scale *= cfg.scale_backoff;
    res.scale_after = st.scale;
    return res;
  }

  // Unscale and update on the master grid (FP32 storage emulation, native
  // double when the whole policy is FP64).
  const bool exact = cfg.policy.all_fp64();
  auto grid = [&](double x) {
    return exact ? x : numerics::quantize(x, numerics::fp32());
  };
  for (std::size_t k = 0; k < st.master.size(); ++k) {
    const double g = grid(grad[k] / scale);
    st.velocity[k] = grid(grid(cfg.momentum * st.velocity[k]) + g);
    st.master[k] = grid(st.master[k] - grid(cfg.lr * st.velocity[k]));
    if (!std::isfinite(st.master[k]))
      throw TrainingError("train: non-finite master weight after update at step " +
                          std::to_string(st.step));
  }
  m.weights.data = st.master;

  st.clean_streak += 1;
  if (cfg.dynamic_loss_scaling && st.clean_streak >= cfg.scale_growth_interval) {
    st.scale *= cfg.scale_growth;
    st.growth_events += 1;
    st.clean_streak = 0;
    res.grew = true;
  }
  res.scale_after = st.scale;
  return res;
}

RmseRow evaluate_rmse(const model::Model& m, std::span<const LabeledStructure> data,
                      const numerics::PrecisionPolicy& policy) {
  if (data.empty()) throw ContractError("evaluate_rmse: empty dataset");
  model::EvalOptions opts;
  opts.policy = policy;
  opts.forces = true;
  std::vector<metrics::PredictionPair> pairs;
  pairs.reserve(data.size());
  for (const LabeledStructure& ls : data) {
    const model::EvalResult r = m.evaluate(ls.config, opts);
    metrics::PredictionPair p;
    p.energy_ref = ls.energy;
    p.energy_test = r.energy;
    p.forces_ref = ls.forces;
    p.forces_test = r.forces;
    pairs.push_back(std::move(p));
  }
  RmseRow row;
  row.rmse_e_mev_atom = metrics::rmse_energy_per_atom(pairs);
  const metrics::ForceRmse f = metrics::rmse_forces(pairs);
  row.rmse_f_mev_a = f.mev_per_angstrom;
  row.rel_f_percent = f.rel_percent;
  return row;
}

TrainResult run_training(model::Model& m, const std::vector<LabeledStructure>& train_set,
                         const std::vector<LabeledStructure>& val_set,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("run_training: empty training set");
  if (val_set.empty()) throw ContractError("run_training: empty validation set");

  TrainResult result;
  result.state = init_train_state(m, cfg);
  TrainState& st = result.state;
  m.weights.data = st.master;

  result.initial_val = evaluate_rmse(m, val_set, cfg.policy);
  result.best_val_f = result.initial_val.rmse_f_mev_a;
  result.best_epoch = -1;

  numerics::Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<LabeledStructure> batch;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.index(i)]);

    double loss_sum = 0.0;
    long long loss_n = 0;
    for (std::size_t at = 0; at < order.size(); at += std::size_t(cfg.batch_size)) {
      batch.clear();
      const std::size_t end =
          std::min(order.size(), at + std::size_t(cfg.batch_size));
      for (std::size_t i = at; i < end; ++i) batch.push_back(train_set[order[i]]);
      const StepResult sr = train_step(m, st, batch, cfg);
      if (std::isfinite(sr.loss)) {
        loss_sum += sr.loss;
        loss_n += 1;
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.mean_loss =
        loss_n > 0 ? loss_sum / double(loss_n) : std::numeric_limits<double>::quiet_NaN();
    log.val = evaluate_rmse(m, val_set, cfg.policy);
    if (log.val.rmse_f_mev_a < result.best_val_f) {
      result.best_val_f = log.val.rmse_f_mev_a;
      result.best_epoch = epoch;
    }
    log.best_val_f = result.best_val_f;
    log.scale = st.scale;
    result.epochs.push_back(log);
  }
  return result;
}

}  // namespace equiprec::train
