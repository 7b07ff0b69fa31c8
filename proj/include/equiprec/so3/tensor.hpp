#pragma once

#include <vector>

#include "equiprec/geometry/configuration.hpp"
#include "equiprec/so3/irreps.hpp"

namespace equiprec::so3 {

// Memory order of one irrep block within a node's feature row.
// mul_ir: channel-major, [mul][2l+1] (channel c owns a contiguous m run).
// ir_mul: component-major, [2l+1][mul] (component m owns a channel run).
enum class Layout { mul_ir, ir_mul };

const char* layout_name(Layout layout);
Layout layout_from_name(const std::string& name);

// Batched equivariant features: data is [num_nodes][irreps.dim()] flat,
// blocks ordered as in irreps, each block laid out per `layout`.
struct EquivariantTensor {
  Irreps irreps;
  Layout layout = Layout::mul_ir;
  std::size_t num_nodes = 0;
  std::vector<double> data;

  EquivariantTensor() = default;
  EquivariantTensor(Irreps ir, std::size_t nodes, Layout lay = Layout::mul_ir)
      : irreps(std::move(ir)), layout(lay), num_nodes(nodes),
        data(nodes * std::size_t(irreps.dim()), 0.0) {}

  std::size_t row_dim() const { return std::size_t(irreps.dim()); }
  double* row(std::size_t node) { return data.data() + node * row_dim(); }
  const double* row(std::size_t node) const { return data.data() + node * row_dim(); }

  // offset within a row of (block, channel, m); layout-aware
  std::size_t offset(std::size_t block, int channel, int m) const;

  void check_consistent() const;  // DimensionError on size mismatch
};

// Reorders every block between the two layouts; identity when the target
// matches. The inverse of itself applied twice.
EquivariantTensor layout_convert(const EquivariantTensor& t, Layout target);

// Applies the block-diagonal degree-wise rotation (Wigner D of R) to every
// node and channel. Used by the equivariance checks; plain double math.
EquivariantTensor rotate_features(const EquivariantTensor& t, const geometry::Mat3& R);

// || a - b ||_2 / || b ||_2 over the full buffer; DimensionError on
// mismatched metadata. Layouts must match (convert first).
double rel_l2(const EquivariantTensor& a, const EquivariantTensor& b);

}  // namespace equiprec::so3
