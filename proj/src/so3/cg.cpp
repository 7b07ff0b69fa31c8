#include "equiprec/so3/cg.hpp"

#include <cmath>
#include <complex>
#include <map>
#include <tuple>

namespace equiprec::so3 {

namespace {

double factorial(int n) {
  // exact in double through 18!; callers are capped well below that
  static const double table[] = {
      1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0, 362880.0,
      3628800.0, 39916800.0, 479001600.0, 6227020800.0, 87178291200.0,
      1307674368000.0, 20922789888000.0, 355687428096000.0, 6402373705728000.0};
  if (n < 0 || n > 18) throw DomainError("factorial argument out of range");
  return table[n];
}

// Unitary map from complex to real harmonics: Y^R_mu = sum_m U[mu][m] Y^C_m
// with the complex harmonics carrying the Condon-Shortley phase.
std::complex<double> u_entry(int mu, int m) {
  using namespace std::complex_literals;
  const double s = 1.0 / std::sqrt(2.0);
  const double csign = (mu % 2 == 0) ? 1.0 : -1.0;  // (-1)^|mu|
  if (mu == 0) return (m == 0) ? 1.0 : 0.0;
  if (mu > 0) {
    if (m == mu) return csign * s;
    if (m == -mu) return s;
    return 0.0;
  }
  // mu < 0 (sine branch)
  if (m == -mu) return -1i * csign * s;
  if (m == mu) return 1i * s;
  return 0.0;
}

}  // namespace

double clebsch_gordan_complex(int l1, int m1, int l2, int m2, int l3, int m3) {
  if (m1 + m2 != m3) return 0.0;
  if (!triangle_ok(l1, l2, l3)) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m3) > l3) return 0.0;

  const double delta = factorial(l1 + l2 - l3) * factorial(l1 - l2 + l3) *
                       factorial(-l1 + l2 + l3) / factorial(l1 + l2 + l3 + 1);
  const double pre =
      std::sqrt(double(2 * l3 + 1) * delta * factorial(l3 + m3) * factorial(l3 - m3) *
                factorial(l1 - m1) * factorial(l1 + m1) * factorial(l2 - m2) *
                factorial(l2 + m2));

  const int k_lo = std::max({0, l2 - l3 - m1, l1 + m2 - l3});
  const int k_hi = std::min({l1 + l2 - l3, l1 - m1, l2 + m2});
  double s = 0.0;
  for (int k = k_lo; k <= k_hi; ++k) {
    const double term = factorial(k) * factorial(l1 + l2 - l3 - k) *
                        factorial(l1 - m1 - k) * factorial(l2 + m2 - k) *
                        factorial(l3 - l2 + m1 + k) * factorial(l3 - l1 - m2 + k);
    s += ((k % 2 == 0) ? 1.0 : -1.0) / term;
  }
  return pre * s;
}

const CGTensor& clebsch_gordan(int l1, int l2, int l3) {
  if (l1 < 0 || l2 < 0 || l3 < 0 || l1 > 6 || l2 > 6 || l3 > 6)
    throw DomainError("clebsch_gordan: degrees must be in [0, 6]");
  if (!triangle_ok(l1, l2, l3))
    throw DomainError("clebsch_gordan: (" + std::to_string(l1) + "," +
                      std::to_string(l2) + "," + std::to_string(l3) +
                      ") violates the triangle inequality");

  static std::map<std::tuple<int, int, int>, CGTensor> cache;
  const auto key = std::make_tuple(l1, l2, l3);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const int n1 = 2 * l1 + 1, n2 = 2 * l2 + 1, n3 = 2 * l3 + 1;
  std::vector<std::complex<double>> cplx(std::size_t(n1) * n2 * n3, 0.0);

  for (int mu1 = -l1; mu1 <= l1; ++mu1)
    for (int mu2 = -l2; mu2 <= l2; ++mu2)
      for (int mu3 = -l3; mu3 <= l3; ++mu3) {
        std::complex<double> acc = 0.0;
        for (int m1 = -l1; m1 <= l1; ++m1) {
          const auto u1 = u_entry(mu1, m1);
          if (u1 == 0.0) continue;
          for (int m2 = -l2; m2 <= l2; ++m2) {
            const auto u2 = u_entry(mu2, m2);
            if (u2 == 0.0) continue;
            const int m3 = m1 + m2;
            if (std::abs(m3) > l3) continue;
            const auto u3 = u_entry(mu3, m3);
            if (u3 == 0.0) continue;
            acc += std::conj(u1) * std::conj(u2) * u3 *
                   clebsch_gordan_complex(l1, m1, l2, m2, l3, m3);
          }
        }
        cplx[std::size_t(((mu1 + l1) * n2 + (mu2 + l2)) * n3 + (mu3 + l3))] = acc;
      }

  // The transformed tensor is real or purely imaginary depending on parity;
  // fold the constant phase away and insist the residual vanishes.
  double re2 = 0.0, im2 = 0.0;
  for (const auto& c : cplx) {
    re2 += c.real() * c.real();
    im2 += c.imag() * c.imag();
  }
  const bool use_real = re2 >= im2;
  const double residual = std::sqrt(use_real ? im2 : re2);
  if (residual > 1e-12)
    throw DomainError("clebsch_gordan: real change of basis left residual " +
                      std::to_string(residual));

  CGTensor t;
  t.l1 = l1;
  t.l2 = l2;
  t.l3 = l3;
  t.dense.resize(cplx.size());
  for (std::size_t i = 0; i < cplx.size(); ++i)
    t.dense[i] = use_real ? cplx[i].real() : cplx[i].imag();
  for (int m1 = -l1; m1 <= l1; ++m1)
    for (int m2 = -l2; m2 <= l2; ++m2)
      for (int m3 = -l3; m3 <= l3; ++m3) {
        const double v = t.at(m1, m2, m3);
        if (std::fabs(v) > 1e-14) t.sparse.push_back({m1, m2, m3, v});
      }
  return cache.emplace(key, std::move(t)).first->second;
}

}  // namespace equiprec::so3
