#include "equiprec/so3/spherical.hpp"

#include <cmath>
#include <vector>

namespace equiprec::so3 {

namespace {

// N_{l0} = sqrt(2l+1); N_{lm} = sqrt(2 (2l+1) (l-m)!/(l+m)!) for m >= 1.
// Combined with the z-scaled Legendre functions Q and the in-plane powers
// rc/rs this gives component-normalized real harmonics.
double norm_const(int l, int m) {
  double ratio = 1.0;  // (l-m)! / (l+m)!
  for (int k = l - m + 1; k <= l + m; ++k) ratio /= k;
  const double base = double(2 * l + 1) * ratio;
  return std::sqrt(m == 0 ? base : 2.0 * base);
}

struct Workspace {
  int l_max;
  // q[idx(l,m)] = P_l^m(z) / sin^m(theta)  (polynomial in z, no CS phase)
  // qp = dq/dz
  std::vector<double> q, qp;
  std::vector<double> rc, rs;  // Re/Im of (x + iy)^m

  int idx(int l, int m) const { return l * (l + 1) / 2 + m; }

  Workspace(int lm, double x, double y, double z, bool want_grad,
            const numerics::QOps& ops)
      : l_max(lm) {
    const int n = (lm + 1) * (lm + 2) / 2;
    q.assign(std::size_t(n), 0.0);
    if (want_grad) qp.assign(std::size_t(n), 0.0);
    rc.assign(std::size_t(lm) + 1, 0.0);
    rs.assign(std::size_t(lm) + 1, 0.0);

    rc[0] = 1.0;
    rs[0] = 0.0;
    for (int m = 1; m <= lm; ++m) {
      rc[std::size_t(m)] =
          ops.q(ops.mul(x, rc[std::size_t(m - 1)]) - ops.mul(y, rs[std::size_t(m - 1)]));
      rs[std::size_t(m)] =
          ops.q(ops.mul(x, rs[std::size_t(m - 1)]) + ops.mul(y, rc[std::size_t(m - 1)]));
    }

    for (int m = 0; m <= lm; ++m) {
      // Q_m^m = (2m-1)!!
      double dfact = 1.0;
      for (int k = 3; k <= 2 * m - 1; k += 2) dfact *= k;
      q[std::size_t(idx(m, m))] = ops.q(dfact);
      if (want_grad) qp[std::size_t(idx(m, m))] = 0.0;
      if (m + 1 <= lm) {
        q[std::size_t(idx(m + 1, m))] =
            ops.mul(double(2 * m + 1), ops.mul(z, q[std::size_t(idx(m, m))]));
        if (want_grad)
          qp[std::size_t(idx(m + 1, m))] =
              ops.mul(double(2 * m + 1), q[std::size_t(idx(m, m))]);
      }
      for (int l = m + 2; l <= lm; ++l) {
        const double a = double(2 * l - 1) / double(l - m);
        const double b = double(l - 1 + m) / double(l - m);
        const double q1 = q[std::size_t(idx(l - 1, m))];
        const double q2 = q[std::size_t(idx(l - 2, m))];
        q[std::size_t(idx(l, m))] =
            ops.q(ops.mul(ops.q(a), ops.mul(z, q1)) - ops.mul(ops.q(b), q2));
        if (want_grad) {
          const double p1 = qp[std::size_t(idx(l - 1, m))];
          const double p2 = qp[std::size_t(idx(l - 2, m))];
          qp[std::size_t(idx(l, m))] =
              ops.q(ops.mul(ops.q(a), ops.q(q1 + ops.mul(z, p1))) -
                    ops.mul(ops.q(b), p2));
        }
      }
    }
  }
};

void check_args(int l_max, std::size_t have, const char* what) {
  if (l_max < 0 || l_max > 11)
    throw DomainError("spherical harmonics: l_max must be in [0, 11]");
  if (have != std::size_t(sh_size(l_max)))
    throw DimensionError(std::string(what) + ": need " + std::to_string(sh_size(l_max)) +
                         " slots, got " + std::to_string(have));
}

}  // namespace

void real_spherical_harmonics(int l_max, const geometry::Vec3& r,
                              std::span<double> values, const numerics::QOps& ops) {
  check_args(l_max, values.size(), "spherical harmonics values");
  const double r2raw = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  if (r2raw < 1e-24) throw DomainError("spherical harmonics: zero direction vector");
  const double rx = ops.q(r[0]), ry = ops.q(r[1]), rz = ops.q(r[2]);
  const double r2 = ops.q(ops.q(ops.mul(rx, rx) + ops.mul(ry, ry)) + ops.mul(rz, rz));
  const double rinv = ops.q(1.0 / ops.q(std::sqrt(r2)));
  const double x = ops.mul(rx, rinv), y = ops.mul(ry, rinv), z = ops.mul(rz, rinv);

  Workspace ws(l_max, x, y, z, false, ops);
  for (int l = 0; l <= l_max; ++l) {
    values[std::size_t(sh_index(l, 0))] =
        ops.mul(ops.q(norm_const(l, 0)), ws.q[std::size_t(ws.idx(l, 0))]);
    for (int m = 1; m <= l; ++m) {
      const double nq = ops.mul(ops.q(norm_const(l, m)), ws.q[std::size_t(ws.idx(l, m))]);
      values[std::size_t(sh_index(l, m))] = ops.mul(nq, ws.rc[std::size_t(m)]);
      values[std::size_t(sh_index(l, -m))] = ops.mul(nq, ws.rs[std::size_t(m)]);
    }
  }
}

void real_spherical_harmonics_with_grad(int l_max, const geometry::Vec3& r,
                                        std::span<double> values,
                                        std::span<std::array<double, 3>> grads,
                                        const numerics::QOps& ops) {
  check_args(l_max, values.size(), "spherical harmonics values");
  check_args(l_max, grads.size(), "spherical harmonics grads");
  const double r2raw = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  if (r2raw < 1e-24) throw DomainError("spherical harmonics: zero direction vector");
  const double rx = ops.q(r[0]), ry = ops.q(r[1]), rz = ops.q(r[2]);
  const double r2 = ops.q(ops.q(ops.mul(rx, rx) + ops.mul(ry, ry)) + ops.mul(rz, rz));
  const double rinv = ops.q(1.0 / ops.q(std::sqrt(r2)));
  const double x = ops.mul(rx, rinv), y = ops.mul(ry, rinv), z = ops.mul(rz, rinv);
  const double n[3] = {x, y, z};

  Workspace ws(l_max, x, y, z, true, ops);
  for (int l = 0; l <= l_max; ++l) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      const double N = ops.q(norm_const(l, am));
      const double Q = ws.q[std::size_t(ws.idx(l, am))];
      const double Qp = ws.qp[std::size_t(ws.idx(l, am))];
      const double azim = (m >= 0) ? ws.rc[std::size_t(am)] : ws.rs[std::size_t(am)];
      values[std::size_t(sh_index(l, m))] = ops.mul(ops.mul(N, Q), azim);

      // gradient with respect to the unit vector
      double gx = 0.0, gy = 0.0;
      if (am > 0) {
        const double rc1 = ws.rc[std::size_t(am - 1)], rs1 = ws.rs[std::size_t(am - 1)];
        const double NQm = ops.mul(ops.mul(N, Q), double(am));
        if (m > 0) {
          gx = ops.mul(NQm, rc1);
          gy = ops.q(-ops.mul(NQm, rs1));
        } else {
          gx = ops.mul(NQm, rs1);
          gy = ops.mul(NQm, rc1);
        }
      }
      const double gz = ops.mul(ops.mul(N, Qp), azim);

      // chain through normalization: (I - n n^T) / |r|
      const double gn[3] = {gx, gy, gz};
      const double dot =
          ops.q(ops.q(ops.mul(gn[0], n[0]) + ops.mul(gn[1], n[1])) + ops.mul(gn[2], n[2]));
      auto& g = grads[std::size_t(sh_index(l, m))];
      for (int d = 0; d < 3; ++d)
        g[std::size_t(d)] = ops.mul(ops.q(gn[d] - ops.mul(dot, n[d])), rinv);
    }
  }
}

}  // namespace equiprec::so3
