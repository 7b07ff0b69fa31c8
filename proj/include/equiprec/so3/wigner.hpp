#pragma once

#include <vector>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/numerics/rng.hpp"

namespace equiprec::so3 {

// Rotation matrix for the real-harmonic basis of degree l, row-major
// (2l+1)^2, entry (m, m') at (m+l)*(2l+1) + (m'+l). Defining property:
// Y_l(R v) = D_l(R) Y_l(v).
using WignerMat = std::vector<double>;

bool is_rotation(const geometry::Mat3& R, double tol = 1e-10);

// D_l for l = 0..l_max via the Ivanic-Ruedenberg recursion seeded by the
// permuted rotation matrix (degree-1 real harmonics order y, z, x).
// Throws DomainError if R is not a proper rotation.
std::vector<WignerMat> wigner_D_all(int l_max, const geometry::Mat3& R);

geometry::Mat3 rotation_from_axis_angle(const geometry::Vec3& axis, double angle);
geometry::Mat3 random_rotation(numerics::Rng& rng);
geometry::Vec3 apply_rotation(const geometry::Mat3& R, const geometry::Vec3& v);
geometry::Mat3 matmul3(const geometry::Mat3& A, const geometry::Mat3& B);

}  // namespace equiprec::so3
