#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "equiprec/model/plans.hpp"

namespace equiprec::model {

// One named parameter array inside the flat weight vector.
struct WeightShape {
  std::string name;
  std::size_t offset = 0;
  std::vector<long> dims;
  int fan_in = 0;  // 0 means "initialized from config, not random"

  std::size_t count() const {
    std::size_t n = 1;
    for (long d : dims) n *= std::size_t(d);
    return n;
  }
};

// Deterministic enumeration of every parameter array, derived from the
// plan alone. The order is also the initialization order.
struct WeightLayout {
  std::vector<WeightShape> entries;
  std::size_t total = 0;

  const WeightShape& find(const std::string& name) const;  // ContractError
};

WeightLayout build_weight_layout(const ModelPlan& plan);

// Flat FP64 master parameters plus their layout.
struct ModelWeights {
  WeightLayout layout;
  std::vector<double> data;

  std::span<double> span(const std::string& name) {
    const WeightShape& e = layout.find(name);
    return {data.data() + e.offset, e.count()};
  }
  std::span<const double> span(const std::string& name) const {
    const WeightShape& e = layout.find(name);
    return {data.data() + e.offset, e.count()};
  }
  const double* at(const WeightShape& e) const { return data.data() + e.offset; }
};

// Fan-in scaled uniform init, U(+-sqrt(3/fan_in)), streamed from the config
// seed in layout order; scale/shift entries copy the config values.
ModelWeights initialize_weights(const ModelPlan& plan);

// Rebuilds the layout from the plan and verifies names, shapes, offsets and
// the total length; ContractError with the first mismatch.
void audit_shapes(const ModelPlan& plan, const ModelWeights& weights);

}  // namespace equiprec::model
