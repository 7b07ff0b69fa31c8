#include "equiprec/model/config.hpp"

#include <algorithm>
#include <set>

namespace equiprec::model {

void ModelConfig::validate() const {
  if (!(r_max > 0.0)) throw ConfigurationError("ModelConfig: r_max must be positive");
  if (channels < 1) throw ConfigurationError("ModelConfig: channels must be >= 1");
  if (l_max < 0 || l_max > 3)
    throw ConfigurationError("ModelConfig: l_max must be in [0, 3]");
  if (message_l_max < 0 || message_l_max > l_max)
    throw ConfigurationError("ModelConfig: message_l_max must be in [0, l_max]");
  if (correlation < 1 || correlation > 3)
    throw ConfigurationError("ModelConfig: correlation must be in [1, 3]");
  if (n_bessel < 1) throw ConfigurationError("ModelConfig: n_bessel must be >= 1");
  if (envelope_p < 2) throw ConfigurationError("ModelConfig: envelope_p must be >= 2");
  if (num_layers < 1) throw ConfigurationError("ModelConfig: num_layers must be >= 1");
  if (readout_hidden < 1)
    throw ConfigurationError("ModelConfig: readout_hidden must be >= 1");
  for (int h : radial_hidden)
    if (h < 1) throw ConfigurationError("ModelConfig: radial_hidden widths must be >= 1");
  if (species.empty()) throw ConfigurationError("ModelConfig: species list is empty");
  std::set<int> uniq(species.begin(), species.end());
  if (uniq.size() != species.size())
    throw ConfigurationError("ModelConfig: species list has duplicates");
  for (int z : species)
    if (z < 1) throw ConfigurationError("ModelConfig: invalid atomic number");
  if (!(avg_num_neighbors > 0.0))
    throw ConfigurationError("ModelConfig: avg_num_neighbors must be positive");
}

so3::Irreps ModelConfig::input_irreps() const {
  return so3::Irreps{{channels, 0, +1}};
}

so3::Irreps ModelConfig::hidden_irreps() const {
  so3::Irreps out;
  for (int L = 0; L <= message_l_max; ++L)
    out.items.push_back({channels, L, (L % 2 == 0) ? +1 : -1});
  return out;
}

so3::Irreps ModelConfig::a_irreps() const {
  so3::Irreps out;
  for (int l = 0; l <= l_max; ++l)
    out.items.push_back({channels, l, (l % 2 == 0) ? +1 : -1});
  return out;
}

so3::Irreps ModelConfig::sh_irreps() const {
  so3::Irreps out;
  for (int l = 0; l <= l_max; ++l)
    out.items.push_back({1, l, (l % 2 == 0) ? +1 : -1});
  return out;
}

so3::Irreps ModelConfig::layer_in_irreps(int layer) const {
  return layer == 0 ? input_irreps() : hidden_irreps();
}

int ModelConfig::species_index(int atomic_number) const {
  auto it = std::find(species.begin(), species.end(), atomic_number);
  if (it == species.end())
    throw ContractError("species " + std::to_string(atomic_number) +
                        " is not in the model species list");
  return int(it - species.begin());
}

}  // namespace equiprec::model
