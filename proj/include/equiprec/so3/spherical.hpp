#pragma once

#include <array>
#include <span>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/numerics/policy.hpp"

namespace equiprec::so3 {

// Real spherical harmonics, component normalization: Y_00 = 1 and
// sum_m Y_lm(n)^2 = 2l+1 on the unit sphere. Ordering is l-major with
// m = -l..l inside each l; degree 1 evaluates to sqrt(3) * (y, z, x).
// No Condon-Shortley phase anywhere.
inline int sh_size(int l_max) { return (l_max + 1) * (l_max + 1); }
inline int sh_index(int l, int m) { return l * l + l + m; }

// r must be nonzero (DomainError otherwise); it is normalized internally.
// Every arithmetic step is rounded per ops' default format.
void real_spherical_harmonics(int l_max, const geometry::Vec3& r,
                              std::span<double> values, const numerics::QOps& ops);

// values plus d values / d r for the raw (unnormalized) input vector,
// chain rule through the normalization included. grads[k] is the gradient
// of values[k]. Computed analytically from the recurrences.
void real_spherical_harmonics_with_grad(int l_max, const geometry::Vec3& r,
                                        std::span<double> values,
                                        std::span<std::array<double, 3>> grads,
                                        const numerics::QOps& ops);

}  // namespace equiprec::so3
