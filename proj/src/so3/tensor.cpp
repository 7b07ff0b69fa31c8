#include "equiprec/so3/tensor.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "equiprec/so3/wigner.hpp"

namespace equiprec::so3 {

const char* layout_name(Layout layout) {
  return layout == Layout::mul_ir ? "mul_ir" : "ir_mul";
}

Layout layout_from_name(const std::string& name) {
  if (name == "mul_ir") return Layout::mul_ir;
  if (name == "ir_mul") return Layout::ir_mul;
  throw ParseError("unknown layout '" + name + "' (expected mul_ir|ir_mul)");
}

std::size_t EquivariantTensor::offset(std::size_t block, int channel, int m) const {
  const Irrep& ir = irreps[block];
  const int base = irreps.block_offset(block);
  const int comp = m + ir.l;
  const int inner = (layout == Layout::mul_ir) ? channel * ir.ir_dim() + comp
                                               : comp * ir.mul + channel;
  return std::size_t(base + inner);
}

void EquivariantTensor::check_consistent() const {
  if (data.size() != num_nodes * row_dim())
    throw DimensionError("equivariant tensor: buffer holds " +
                         std::to_string(data.size()) + " values, expected " +
                         std::to_string(num_nodes * row_dim()));
}

EquivariantTensor layout_convert(const EquivariantTensor& t, Layout target) {
  t.check_consistent();
  if (t.layout == target) return t;
  EquivariantTensor out(t.irreps, t.num_nodes, target);
  for (std::size_t node = 0; node < t.num_nodes; ++node) {
    const double* src = t.row(node);
    double* dst = out.row(node);
    for (std::size_t b = 0; b < t.irreps.size(); ++b) {
      const Irrep& ir = t.irreps[b];
      for (int c = 0; c < ir.mul; ++c)
        for (int m = -ir.l; m <= ir.l; ++m)
          dst[out.offset(b, c, m)] = src[t.offset(b, c, m)];
    }
  }
  return out;
}

EquivariantTensor rotate_features(const EquivariantTensor& t, const geometry::Mat3& R) {
  t.check_consistent();
  const auto D = wigner_D_all(t.irreps.lmax(), R);
  EquivariantTensor out(t.irreps, t.num_nodes, t.layout);
  for (std::size_t node = 0; node < t.num_nodes; ++node) {
    const double* src = t.row(node);
    double* dst = out.row(node);
    for (std::size_t b = 0; b < t.irreps.size(); ++b) {
      const Irrep& ir = t.irreps[b];
      const auto& d = D[std::size_t(ir.l)];
      const int w = ir.ir_dim();
      for (int c = 0; c < ir.mul; ++c)
        for (int m = -ir.l; m <= ir.l; ++m) {
          double s = 0.0;
          for (int mp = -ir.l; mp <= ir.l; ++mp)
            s += d[std::size_t((m + ir.l) * w + (mp + ir.l))] * src[t.offset(b, c, mp)];
          dst[out.offset(b, c, m)] = s;
        }
    }
  }
  return out;
}

double rel_l2(const EquivariantTensor& a, const EquivariantTensor& b) {
  if (!(a.irreps == b.irreps) || a.num_nodes != b.num_nodes || a.layout != b.layout)
    throw DimensionError("rel_l2: tensors differ in irreps, nodes, or layout");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    num += d * d;
    den += b.data[i] * b.data[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

}  // namespace equiprec::so3
