#include "equiprec/geometry/xyz.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace equiprec::geometry {

namespace {

// key=value tokens; a value starting with '"' runs to the closing quote.
std::map<std::string, std::string> parse_comment_fields(const std::string& line,
                                                        long line_no) {
  std::map<std::string, std::string> fields;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    const std::size_t key_start = i;
    while (i < n && line[i] != '=' && !std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    if (i >= n || line[i] != '=') {
      // bare token without '=': tolerated, ignored
      continue;
    }
    const std::string key = line.substr(key_start, i - key_start);
    ++i;  // skip '='
    std::string value;
    if (i < n && line[i] == '"') {
      ++i;
      const std::size_t val_start = i;
      while (i < n && line[i] != '"') ++i;
      if (i >= n) throw ParseError("unterminated quote in comment line", line_no);
      value = line.substr(val_start, i - val_start);
      ++i;
    } else {
      const std::size_t val_start = i;
      while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      value = line.substr(val_start, i - val_start);
    }
    fields[key] = value;
  }
  return fields;
}

double parse_double(const std::string& tok, long line_no, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size())
      throw ParseError(std::string("trailing characters in ") + what + " '" + tok + "'",
                       line_no);
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError(std::string("cannot parse ") + what + " '" + tok + "'", line_no);
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

AtomicConfiguration parse_xyz(std::istream& in,
                              std::map<std::string, std::string>* extra_fields) {
  std::string line;
  long line_no = 0;

  if (!std::getline(in, line)) throw ParseError("empty input, expected atom count", 1);
  ++line_no;
  long n_atoms = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> n_atoms) || n_atoms < 0)
      throw ParseError("expected non-negative atom count, got '" + line + "'", line_no);
    std::string rest;
    if (ss >> rest)
      throw ParseError("unexpected token '" + rest + "' after atom count", line_no);
  }

  if (!std::getline(in, line)) throw ParseError("missing comment line", 2);
  ++line_no;
  auto fields = parse_comment_fields(line, line_no);

  AtomicConfiguration config;
  if (auto it = fields.find("Lattice"); it != fields.end()) {
    std::istringstream ss(it->second);
    std::vector<double> v;
    std::string tok;
    while (ss >> tok) v.push_back(parse_double(tok, line_no, "Lattice entry"));
    if (v.size() != 9)
      throw ParseError("Lattice needs 9 numbers, got " + std::to_string(v.size()),
                       line_no);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) config.cell[r][c] = v[std::size_t(3 * r + c)];
    config.pbc = {true, true, true};  // default when a lattice is present
    fields.erase(it);
  }
  if (auto it = fields.find("pbc"); it != fields.end()) {
    std::istringstream ss(it->second);
    std::string tok;
    int d = 0;
    while (ss >> tok && d < 3) {
      if (tok == "T" || tok == "True" || tok == "true")
        config.pbc[std::size_t(d)] = true;
      else if (tok == "F" || tok == "False" || tok == "false")
        config.pbc[std::size_t(d)] = false;
      else
        throw ParseError("pbc entries must be T or F, got '" + tok + "'", line_no);
      ++d;
    }
    if (d != 3) throw ParseError("pbc needs 3 flags", line_no);
    fields.erase(it);
  }
  fields.erase("Properties");
  if (extra_fields) *extra_fields = fields;

  config.positions.reserve(std::size_t(n_atoms));
  config.atomic_numbers.reserve(std::size_t(n_atoms));
  for (long a = 0; a < n_atoms; ++a) {
    if (!std::getline(in, line))
      throw ParseError("expected " + std::to_string(n_atoms) + " atom lines, file ends after " +
                           std::to_string(a),
                       line_no);
    ++line_no;
    std::istringstream ss(line);
    std::string sym, xs, ys, zs;
    if (!(ss >> sym >> xs >> ys >> zs))
      throw ParseError("atom line needs 'Symbol x y z', got '" + line + "'", line_no);
    int z = 0;
    try {
      z = element_number(sym);
    } catch (const ConfigurationError& e) {
      throw ParseError(e.what(), line_no);
    }
    config.atomic_numbers.push_back(z);
    config.positions.push_back({parse_double(xs, line_no, "x coordinate"),
                                parse_double(ys, line_no, "y coordinate"),
                                parse_double(zs, line_no, "z coordinate")});
  }
  config.validate();
  return config;
}

AtomicConfiguration parse_xyz_file(const std::string& path,
                                   std::map<std::string, std::string>* extra_fields) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_xyz(in, extra_fields);
}

void write_xyz(std::ostream& out, const AtomicConfiguration& config,
               const std::map<std::string, std::string>& extra_fields) {
  config.validate();
  out << config.size() << "\n";
  if (config.periodic() || det3(config.cell) != 0.0) {
    out << "Lattice=\"";
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out << fmt17(config.cell[r][c]) << ((r == 2 && c == 2) ? "" : " ");
    out << "\" ";
  }
  out << "Properties=species:S:1:pos:R:3 pbc=\"" << (config.pbc[0] ? 'T' : 'F') << ' '
      << (config.pbc[1] ? 'T' : 'F') << ' ' << (config.pbc[2] ? 'T' : 'F') << '"';
  for (const auto& [k, v] : extra_fields) out << ' ' << k << "=\"" << v << '"';
  out << "\n";
  for (std::size_t i = 0; i < config.size(); ++i) {
    out << element_symbol(config.atomic_numbers[i]) << ' '
        << fmt17(config.positions[i][0]) << ' ' << fmt17(config.positions[i][1]) << ' '
        << fmt17(config.positions[i][2]) << "\n";
  }
  if (!out) throw IoError("write failure while emitting xyz");
}

void write_xyz_file(const std::string& path, const AtomicConfiguration& config,
                    const std::map<std::string, std::string>& extra_fields) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_xyz(out, config, extra_fields);
}

}  // namespace equiprec::geometry
