#include "equiprec/geometry/configuration.hpp"

#include <cmath>

namespace equiprec::geometry {

namespace {

struct ElementRow {
  const char* symbol;
  double mass;
};

// Standard atomic weights, Z = 1..54.
const ElementRow kElements[] = {
    {"H", 1.008},       {"He", 4.002602},  {"Li", 6.94},      {"Be", 9.0121831},
    {"B", 10.81},       {"C", 12.011},     {"N", 14.007},     {"O", 15.999},
    {"F", 18.998403163},{"Ne", 20.1797},   {"Na", 22.98976928},{"Mg", 24.305},
    {"Al", 26.9815385}, {"Si", 28.085},    {"P", 30.973761998},{"S", 32.06},
    {"Cl", 35.45},      {"Ar", 39.948},    {"K", 39.0983},    {"Ca", 40.078},
    {"Sc", 44.955908},  {"Ti", 47.867},    {"V", 50.9415},    {"Cr", 51.9961},
    {"Mn", 54.938044},  {"Fe", 55.845},    {"Co", 58.933194}, {"Ni", 58.6934},
    {"Cu", 63.546},     {"Zn", 65.38},     {"Ga", 69.723},    {"Ge", 72.630},
    {"As", 74.921595},  {"Se", 78.971},    {"Br", 79.904},    {"Kr", 83.798},
    {"Rb", 85.4678},    {"Sr", 87.62},     {"Y", 88.90584},   {"Zr", 91.224},
    {"Nb", 92.90637},   {"Mo", 95.95},     {"Tc", 98.0},      {"Ru", 101.07},
    {"Rh", 102.90550},  {"Pd", 106.42},    {"Ag", 107.8682},  {"Cd", 112.414},
    {"In", 114.818},    {"Sn", 118.710},   {"Sb", 121.760},   {"Te", 127.60},
    {"I", 126.90447},   {"Xe", 131.293},
};
constexpr int kMaxZ = int(sizeof(kElements) / sizeof(kElements[0]));

int check_z(int z) {
  if (z < 1 || z > kMaxZ)
    throw ConfigurationError("atomic number " + std::to_string(z) +
                             " outside supported range [1, " + std::to_string(kMaxZ) + "]");
  return z;
}

}  // namespace

double atomic_mass(int z) { return kElements[check_z(z) - 1].mass; }

const std::string& element_symbol(int z) {
  static std::string cache[kMaxZ];
  check_z(z);
  if (cache[z - 1].empty()) cache[z - 1] = kElements[z - 1].symbol;
  return cache[z - 1];
}

int element_number(const std::string& symbol) {
  for (int i = 0; i < kMaxZ; ++i)
    if (symbol == kElements[i].symbol) return i + 1;
  throw ConfigurationError("unknown element symbol '" + symbol + "'");
}

double det3(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

void AtomicConfiguration::validate() const {
  if (positions.size() != atomic_numbers.size())
    throw DimensionError("configuration: " + std::to_string(positions.size()) +
                         " positions vs " + std::to_string(atomic_numbers.size()) +
                         " atomic numbers");
  for (int z : atomic_numbers) check_z(z);
  if (periodic() && std::fabs(det3(cell)) < 1e-12)
    throw ConfigurationError("periodic configuration with singular cell");
}

double AtomicConfiguration::volume() const {
  const double v = std::fabs(det3(cell));
  if (v < 1e-12) throw ConfigurationError("volume requested for singular cell");
  return v;
}

double mass_density_gcm3(const AtomicConfiguration& config) {
  double m = 0.0;
  for (int z : config.atomic_numbers) m += atomic_mass(z);
  return m / config.volume() * kAmuPerA3ToGcm3;
}

}  // namespace equiprec::geometry
