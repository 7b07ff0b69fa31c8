#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "equiprec/geometry/builders.hpp"
#include "equiprec/geometry/configuration.hpp"
#include "equiprec/geometry/neighbor.hpp"
#include "equiprec/geometry/xyz.hpp"
#include "equiprec/numerics/rng.hpp"

using namespace equiprec;
using namespace equiprec::geometry;

namespace {

using EdgeKey = std::tuple<int, int, int, int, int>;  // src, dst, shift

// Independent oracle: replicate the periodic cell explicitly and brute-force
// all pair distances. Shares no logic with build_neighbor_list (which works
// per-axis on perpendicular widths).
std::set<EdgeKey> oracle_edges(const AtomicConfiguration& c, double r_max, int rep) {
  std::set<EdgeKey> out;
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (int sa = -rep; sa <= rep; ++sa)
        for (int sb = -rep; sb <= rep; ++sb)
          for (int sc = -rep; sc <= rep; ++sc) {
            if (!c.pbc[0] && sa != 0) continue;
            if (!c.pbc[1] && sb != 0) continue;
            if (!c.pbc[2] && sc != 0) continue;
            if (i == j && sa == 0 && sb == 0 && sc == 0) continue;
            double d2 = 0.0;
            for (int d = 0; d < 3; ++d) {
              const double v = c.positions[j][d] - c.positions[i][d] +
                               sa * c.cell[0][d] + sb * c.cell[1][d] +
                               sc * c.cell[2][d];
              d2 += v * v;
            }
            if (std::sqrt(d2) < r_max)
              out.insert({int(i), int(j), sa, sb, sc});
          }
  return out;
}

std::set<EdgeKey> as_keys(const NeighborList& nl) {
  std::set<EdgeKey> out;
  for (const auto& e : nl.edges)
    out.insert({e.src, e.dst, e.shift[0], e.shift[1], e.shift[2]});
  return out;
}

}  // namespace

TEST_CASE("element data") {
  CHECK(atomic_mass(1) == 1.008);
  CHECK(atomic_mass(6) == 12.011);
  CHECK(atomic_mass(8) == 15.999);
  CHECK(atomic_mass(54) == 131.293);
  CHECK(element_symbol(6) == "C");
  CHECK(element_number("O") == 8);
  CHECK(element_number(element_symbol(29)) == 29);
  CHECK_THROWS_AS(atomic_mass(0), ConfigurationError);
  CHECK_THROWS_AS(atomic_mass(55), ConfigurationError);
  CHECK_THROWS_AS(element_number("Xq"), ConfigurationError);
}

TEST_CASE("diamond supercell geometry") {
  const auto c1 = diamond_supercell(1);
  CHECK(c1.size() == 8);
  CHECK(c1.cell[0][0] == 3.567);
  CHECK(c1.pbc == std::array<bool, 3>{true, true, true});
  for (int z : c1.atomic_numbers) CHECK(z == 6);

  const auto c3 = diamond_supercell(3);
  CHECK(c3.size() == 216);  // 8 n^3
  CHECK(c3.volume() == doctest::Approx(std::pow(3 * 3.567, 3)));

  // textbook diamond density ~3.51 g/cm^3
  CHECK(mass_density_gcm3(c3) == doctest::Approx(3.515).epsilon(0.01));

  // tetrahedral first shell at a*sqrt(3)/4
  const double d1 = 3.567 * std::sqrt(3.0) / 4.0;
  const auto nl = build_neighbor_list(diamond_supercell(2), 1.8);
  for (std::size_t i = 0; i < 64; ++i)
    CHECK(nl.offsets[i + 1] - nl.offsets[i] == 4);
  for (const auto& e : nl.edges) CHECK(e.dist == doctest::Approx(d1).epsilon(1e-12));

  // second shell (12 fcc-like neighbors at a/sqrt(2)) included at 2.7
  const auto nl2 = build_neighbor_list(diamond_supercell(2), 2.7);
  for (std::size_t i = 0; i < 64; ++i)
    CHECK(nl2.offsets[i + 1] - nl2.offsets[i] == 16);
}

TEST_CASE("configuration validation") {
  AtomicConfiguration c;
  c.positions = {{0, 0, 0}};
  c.atomic_numbers = {6, 6};
  CHECK_THROWS_AS(c.validate(), DimensionError);

  c.atomic_numbers = {99};
  CHECK_THROWS_AS(c.validate(), ConfigurationError);

  c.atomic_numbers = {6};
  c.pbc = {true, true, true};  // cell still zero
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  CHECK_THROWS_AS(build_neighbor_list(c, 3.0), ConfigurationError);

  c.pbc = {false, false, false};
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(c.volume(), ConfigurationError);
  CHECK_THROWS_AS(build_neighbor_list(c, -1.0), DomainError);
}

TEST_CASE("neighbor list matches replica oracle on random triclinic cells") {
  numerics::Rng rng(314);
  for (int trial = 0; trial < 6; ++trial) {
    AtomicConfiguration c;
    // random mildly skewed cell, edges 4..7 A
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col)
        c.cell[r][col] = (r == col) ? rng.uniform(4.0, 7.0) : rng.uniform(-1.0, 1.0);
    c.pbc = {true, true, true};
    const int n = 6 + int(rng.index(6));
    for (int i = 0; i < n; ++i) {
      Vec3 p;
      for (int d = 0; d < 3; ++d)
        p[d] = rng.uniform(0.0, 1.0) * c.cell[0][d] + rng.uniform(0.0, 1.0) * c.cell[1][d] +
               rng.uniform(0.0, 1.0) * c.cell[2][d];
      c.positions.push_back(p);
      c.atomic_numbers.push_back(6);
    }
    const double r_max = rng.uniform(2.0, 6.5);  // sometimes exceeds box/2
    const auto nl = build_neighbor_list(c, r_max);
    CHECK(as_keys(nl) == oracle_edges(c, r_max, 3));

    // stored vectors are consistent with positions and shifts
    for (const auto& e : nl.edges) {
      double d2 = 0.0;
      for (int d = 0; d < 3; ++d) {
        const double v = c.positions[std::size_t(e.dst)][d] -
                         c.positions[std::size_t(e.src)][d] + e.shift[0] * c.cell[0][d] +
                         e.shift[1] * c.cell[1][d] + e.shift[2] * c.cell[2][d];
        CHECK(v == e.vec[d]);
        d2 += v * v;
      }
      CHECK(e.dist == doctest::Approx(std::sqrt(d2)).epsilon(1e-15));
      CHECK(e.dist < r_max);
    }

    // reversal symmetry: (i, j, S) implies (j, i, -S)
    const auto keys = as_keys(nl);
    for (const auto& [i, j, sa, sb, sc] : keys)
      CHECK(keys.count({j, i, -sa, -sb, -sc}) == 1);
  }
}

TEST_CASE("self-image pairs appear when the box is smaller than 2 r_max") {
  AtomicConfiguration c;
  c.positions = {{0.5, 0.5, 0.5}};
  c.atomic_numbers = {6};
  c.cell = {{{3, 0, 0}, {0, 3, 0}, {0, 0, 3}}};
  c.pbc = {true, true, true};
  const auto nl = build_neighbor_list(c, 3.2);
  // single atom: six face images at 3.0 plus nothing else below 3.2
  CHECK(nl.num_edges() == 6);
  for (const auto& e : nl.edges) {
    CHECK(e.src == 0);
    CHECK(e.dst == 0);
    CHECK(e.dist == doctest::Approx(3.0));
  }
  // partial pbc: only the periodic axis contributes images
  c.pbc = {false, false, true};
  const auto nlz = build_neighbor_list(c, 3.2);
  CHECK(nlz.num_edges() == 2);
  for (const auto& e : nlz.edges) CHECK(e.shift[2] != 0);
}

TEST_CASE("isolated cluster neighbor list") {
  const auto d = dimer(6, 8, 1.3);
  const auto nl = build_neighbor_list(d, 2.0);
  CHECK(nl.num_edges() == 2);
  CHECK(nl.edges[0].src == 0);
  CHECK(nl.edges[0].dst == 1);
  CHECK(nl.edges[0].vec == Vec3{0, 0, 1.3});
  CHECK(nl.edges[1].vec == Vec3{0, 0, -1.3});
  const auto none = build_neighbor_list(d, 1.2);
  CHECK(none.num_edges() == 0);
  CHECK(none.offsets == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("perturbed copies") {
  const auto base = diamond_supercell(1);
  const auto same = perturbed(base, 0.0, 9);
  for (std::size_t i = 0; i < base.size(); ++i)
    CHECK(same.positions[i] == base.positions[i]);

  const auto a = perturbed(base, 0.02, 7);
  const auto b = perturbed(base, 0.02, 7);
  const auto c = perturbed(base, 0.02, 8);
  bool differs = false;
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(a.positions[i] == b.positions[i]);  // same seed reproduces
    for (int d = 0; d < 3; ++d) {
      CHECK(std::fabs(a.positions[i][d] - base.positions[i][d]) < 0.2);
      if (a.positions[i][d] != c.positions[i][d]) differs = true;
    }
  }
  CHECK(differs);
}

TEST_CASE("water box construction") {
  const auto w = water_box(8, 7.0, 42);
  CHECK(w.size() == 24);
  for (int m = 0; m < 8; ++m) {
    CHECK(w.atomic_numbers[std::size_t(3 * m)] == 8);
    CHECK(w.atomic_numbers[std::size_t(3 * m + 1)] == 1);
    CHECK(w.atomic_numbers[std::size_t(3 * m + 2)] == 1);
    const auto &o = w.positions[std::size_t(3 * m)], &h1 = w.positions[std::size_t(3 * m + 1)],
               &h2 = w.positions[std::size_t(3 * m + 2)];
    auto dist = [](const Vec3& a, const Vec3& b) {
      return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                       (a[2] - b[2]) * (a[2] - b[2]));
    };
    CHECK(dist(o, h1) == doctest::Approx(0.9572).epsilon(1e-12));
    CHECK(dist(o, h2) == doctest::Approx(0.9572).epsilon(1e-12));
    const double hh = dist(h1, h2);
    const double angle =
        2.0 * std::asin(hh / 2.0 / 0.9572) * 180.0 / 3.14159265358979323846;
    CHECK(angle == doctest::Approx(104.52).epsilon(1e-9));
  }
  // oxygens respect the minimum separation under minimum image
  for (int m = 0; m < 8; ++m)
    for (int k = m + 1; k < 8; ++k) {
      double d2 = 0.0;
      for (int d = 0; d < 3; ++d) {
        double dx = w.positions[std::size_t(3 * k)][d] - w.positions[std::size_t(3 * m)][d];
        dx -= 7.0 * std::round(dx / 7.0);
        d2 += dx * dx;
      }
      CHECK(std::sqrt(d2) >= 2.6);
    }
  // impossible packing is rejected rather than looping forever
  CHECK_THROWS_AS(water_box(100, 4.0, 1), ConfigurationError);
}

TEST_CASE("xyz round trip is exact") {
  auto c = perturbed(diamond_supercell(1), 0.05, 21);
  c.atomic_numbers[3] = 14;  // mix species
  std::ostringstream out;
  write_xyz(out, c, {{"note", "unit-test"}});
  std::istringstream in(out.str());
  std::map<std::string, std::string> extra;
  const auto back = parse_xyz(in, &extra);
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(back.atomic_numbers[i] == c.atomic_numbers[i]);
    for (int d = 0; d < 3; ++d) CHECK(back.positions[i][d] == c.positions[i][d]);
  }
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) CHECK(back.cell[r][col] == c.cell[r][col]);
  CHECK(back.pbc == c.pbc);
  CHECK(extra.at("note") == "unit-test");

  // cluster without a cell round trips too
  const auto d = dimer(1, 8, 0.96);
  std::ostringstream out2;
  write_xyz(out2, d);
  std::istringstream in2(out2.str());
  const auto back2 = parse_xyz(in2);
  CHECK_FALSE(back2.periodic());
  CHECK(back2.positions[1][2] == 0.96);
}

TEST_CASE("xyz parse errors carry line numbers") {
  auto expect_line = [](const std::string& text, long line) {
    std::istringstream in(text);
    try {
      parse_xyz(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == line);
    }
  };
  expect_line("nope\ncomment\n", 1);
  expect_line("2 extra\ncomment\n", 1);
  expect_line("1\nLattice=\"1 0 0 0 1 0 0 0\"\nC 0 0 0\n", 2);      // 8 numbers
  expect_line("1\npbc=\"T T\"\nC 0 0 0\n", 2);
  expect_line("1\nLattice=\"unclosed\nC 0 0 0\n", 2);
  expect_line("2\n\nC 0 0 0\nC 0 0 bad\n", 4);
  expect_line("2\n\nC 0 0 0\n", 3);          // truncated atom block
  expect_line("1\n\nQq 0 0 0\n", 3);         // unknown element
  expect_line("1\n\nC 0 0\n", 3);            // missing coordinate

  std::istringstream empty("");
  CHECK_THROWS_AS(parse_xyz(empty), ParseError);
  CHECK_THROWS_AS(parse_xyz_file("/nonexistent/path.xyz"), IoError);
}
