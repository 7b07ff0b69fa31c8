#include "equiprec/model/radial.hpp"

#include <cmath>

#include "equiprec/errors.hpp"

namespace equiprec::model {

namespace {

// (1-u)^q by repeated rounded multiplication.
double powq(double base, int q, const numerics::QOps& ops) {
  double f = base;
  for (int i = 1; i < q; ++i) f = ops.mul(f, base);
  return q == 0 ? 1.0 : f;
}

}  // namespace

double cutoff_envelope(double r, double r_max, int p, const numerics::QOps& ops) {
  if (r < 0.0) throw DomainError("cutoff_envelope: r must be nonnegative");
  if (r >= r_max) return 0.0;
  const double u = ops.q(r / r_max);
  const double b = ops.q(1.0 - u);
  return powq(b, p, ops);
}

double cutoff_envelope_grad(double r, double r_max, int p, const numerics::QOps& ops) {
  if (r < 0.0) throw DomainError("cutoff_envelope: r must be nonnegative");
  if (r >= r_max) return 0.0;
  const double u = ops.q(r / r_max);
  const double b = ops.q(1.0 - u);
  const double f = powq(b, p - 1, ops);
  return ops.mul(ops.q(-double(p) / r_max), f);
}

void radial_basis(double r, double r_max, int p, std::span<double> values,
                  const numerics::QOps& ops) {
  if (!(r > 0.0)) throw DomainError("radial_basis: r must be positive");
  const double env = cutoff_envelope(r, r_max, p, ops);
  const double c = ops.q(std::sqrt(2.0 / r_max));
  const double kpi = M_PI / r_max;
  for (std::size_t n = 1; n <= values.size(); ++n) {
    const double arg = ops.mul(ops.q(double(n) * kpi), r);
    const double s = ops.q(std::sin(arg));
    double v = ops.mul(c, s);
    v = ops.q(v / r);
    values[n - 1] = ops.mul(v, env);
  }
}

void radial_basis_with_grad(double r, double r_max, int p, std::span<double> values,
                            std::span<double> grads, const numerics::QOps& ops) {
  // values go through the plain entry point, which guarantees they agree
  // bitwise with a forward-only evaluation (the compiler may fuse the
  // sin/cos pair below into sincos, whose sine can differ by one ulp)
  radial_basis(r, r_max, p, values, ops);
  const double env = cutoff_envelope(r, r_max, p, ops);
  const double denv = cutoff_envelope_grad(r, r_max, p, ops);
  const double c = ops.q(std::sqrt(2.0 / r_max));
  const double kpi = M_PI / r_max;
  for (std::size_t n = 1; n <= grads.size(); ++n) {
    const double k = ops.q(double(n) * kpi);
    const double arg = ops.mul(k, r);
    const double s = ops.q(std::sin(arg));
    const double cs = ops.q(std::cos(arg));
    const double b = ops.q(ops.mul(c, s) / r);
    double db = ops.q(ops.mul(ops.mul(c, k), cs) / r);
    db = ops.q(db - ops.q(b / r));
    grads[n - 1] = ops.q(ops.mul(db, env) + ops.mul(b, denv));
  }
}

}  // namespace equiprec::model
