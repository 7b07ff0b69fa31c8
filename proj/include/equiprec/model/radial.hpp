#pragma once

#include <span>

#include "equiprec/numerics/policy.hpp"

namespace equiprec::model {

// Smooth cutoff f(u), u = r/r_max: the unique degree-p polynomial with
// f(0) = 1 and a zero of multiplicity p at u = 1, i.e. f(u) = (1-u)^p.
// Exactly zero for r >= r_max; DomainError for r < 0.
double cutoff_envelope(double r, double r_max, int p, const numerics::QOps& ops);

// df/dr = -p (1-u)^(p-1) / r_max (zero for r >= r_max).
double cutoff_envelope_grad(double r, double r_max, int p, const numerics::QOps& ops);

// e_n(r) = sqrt(2/r_max) sin(n pi r / r_max) / r * envelope(r) for
// n = 1..values.size(). DomainError for r <= 0; zero beyond the cutoff.
void radial_basis(double r, double r_max, int p, std::span<double> values,
                  const numerics::QOps& ops);

// Basis values plus d e_n / d r.
void radial_basis_with_grad(double r, double r_max, int p, std::span<double> values,
                            std::span<double> grads, const numerics::QOps& ops);

}  // namespace equiprec::model
