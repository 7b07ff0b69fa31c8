#include "equiprec/so3/wigner.hpp"

#include <cmath>

#include "equiprec/errors.hpp"

namespace equiprec::so3 {

using geometry::Mat3;
using geometry::Vec3;

bool is_rotation(const Mat3& R, double tol) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += R[std::size_t(k)][std::size_t(i)] * R[std::size_t(k)][std::size_t(j)];
      if (std::fabs(dot - (i == j ? 1.0 : 0.0)) > tol) return false;
    }
  return std::fabs(geometry::det3(R) - 1.0) <= tol;
}

Vec3 apply_rotation(const Mat3& R, const Vec3& v) {
  Vec3 out{};
  for (int i = 0; i < 3; ++i)
    out[std::size_t(i)] = R[std::size_t(i)][0] * v[0] + R[std::size_t(i)][1] * v[1] +
                          R[std::size_t(i)][2] * v[2];
  return out;
}

Mat3 matmul3(const Mat3& A, const Mat3& B) {
  Mat3 C{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k)
        s += A[std::size_t(i)][std::size_t(k)] * B[std::size_t(k)][std::size_t(j)];
      C[std::size_t(i)][std::size_t(j)] = s;
    }
  return C;
}

Mat3 rotation_from_axis_angle(const Vec3& axis, double angle) {
  const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  if (n < 1e-14) throw DomainError("rotation_from_axis_angle: zero axis");
  const double ux = axis[0] / n, uy = axis[1] / n, uz = axis[2] / n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  return {{{c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s},
           {uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s},
           {uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t}}};
}

Mat3 random_rotation(numerics::Rng& rng) {
  double q[4];
  double norm;
  do {
    norm = 0.0;
    for (double& v : q) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

namespace {

// Ivanic-Ruedenberg recursion (real harmonics, corrected coefficient
// tables). d1 is the degree-1 matrix, dl the degree-(l-1) matrix.
struct Recursion {
  const WignerMat& d1;
  const WignerMat& dl;
  int l;  // degree being built

  double D1(int i, int j) const { return d1[std::size_t((i + 1) * 3 + (j + 1))]; }
  double Dl(int a, int b) const {
    const int w = 2 * (l - 1) + 1;
    return dl[std::size_t((a + l - 1) * w + (b + l - 1))];
  }

  double P(int i, int a, int b) const {
    if (std::abs(b) < l) return D1(i, 0) * Dl(a, b);
    if (b == l) return D1(i, 1) * Dl(a, l - 1) - D1(i, -1) * Dl(a, -(l - 1));
    return D1(i, 1) * Dl(a, -(l - 1)) + D1(i, -1) * Dl(a, l - 1);  // b == -l
  }

  double U(int m, int n) const { return P(0, m, n); }

  double V(int m, int n) const {
    if (m == 0) return P(1, 1, n) + P(-1, -1, n);
    if (m > 0) {
      const double s1 = (m == 1) ? std::sqrt(2.0) : 1.0;
      const double s2 = (m == 1) ? 0.0 : 1.0;
      return P(1, m - 1, n) * s1 - P(-1, -(m - 1), n) * s2;
    }
    const double s1 = (m == -1) ? 0.0 : 1.0;
    const double s2 = (m == -1) ? std::sqrt(2.0) : 1.0;
    return P(1, m + 1, n) * s1 + P(-1, -(m + 1), n) * s2;
  }

  double W(int m, int n) const {
    if (m == 0) return 0.0;
    if (m > 0) return P(1, m + 1, n) + P(-1, -(m + 1), n);
    return P(1, m - 1, n) - P(-1, -(m - 1), n);
  }

  double entry(int m, int n) const {
    const double denom = (std::abs(n) < l) ? double((l + n) * (l - n))
                                           : double(2 * l * (2 * l - 1));
    const double uu = std::sqrt(double((l + m) * (l - m)) / denom);
    const double am = std::abs(m);
    // (1 + delta_{m0}) under the root, sign flip (1 - 2 delta_{m0}) outside
    const double vv = 0.5 *
                      std::sqrt((1.0 + (m == 0 ? 1.0 : 0.0)) * (l + am - 1.0) *
                                (l + am) / denom) *
                      (m == 0 ? -1.0 : 1.0);
    const double ww = -0.5 * std::sqrt((l - am - 1.0) * (l - am) / denom) *
                      (m == 0 ? 0.0 : 1.0);
    double out = 0.0;
    if (uu != 0.0) out += uu * U(m, n);
    if (vv != 0.0) out += vv * V(m, n);
    if (ww != 0.0) out += ww * W(m, n);
    return out;
  }
};

}  // namespace

std::vector<WignerMat> wigner_D_all(int l_max, const Mat3& R) {
  if (l_max < 0) throw DomainError("wigner_D_all: l_max must be >= 0");
  if (!is_rotation(R, 1e-10))
    throw DomainError("wigner_D_all: matrix is not a proper rotation");

  std::vector<WignerMat> D;
  D.reserve(std::size_t(l_max) + 1);
  D.push_back({1.0});
  if (l_max == 0) return D;

  // degree 1: permute cartesian axes to the (y, z, x) harmonic order
  const int P[3] = {1, 2, 0};
  WignerMat d1(9);
  for (int m = 0; m < 3; ++m)
    for (int n = 0; n < 3; ++n)
      d1[std::size_t(m * 3 + n)] = R[std::size_t(P[m])][std::size_t(P[n])];
  D.push_back(d1);

  for (int l = 2; l <= l_max; ++l) {
    const int w = 2 * l + 1;
    WignerMat dl(std::size_t(w) * std::size_t(w));
    Recursion rec{D[1], D[std::size_t(l - 1)], l};
    for (int m = -l; m <= l; ++m)
      for (int n = -l; n <= l; ++n)
        dl[std::size_t((m + l) * w + (n + l))] = rec.entry(m, n);
    D.push_back(std::move(dl));
  }
  return D;
}

}  // namespace equiprec::so3
