#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "equiprec/geometry/configuration.hpp"

namespace equiprec::geometry {

// Extended XYZ: count line, comment line with key=value pairs (quoted
// values allowed; Lattice is nine numbers, row major; pbc is "T T T"),
// then one "Symbol x y z" line per atom. Malformed input raises ParseError
// carrying the 1-based line number. Extra comment keys are preserved in
// *extra_fields when requested.
AtomicConfiguration parse_xyz(std::istream& in,
                              std::map<std::string, std::string>* extra_fields = nullptr);
AtomicConfiguration parse_xyz_file(const std::string& path,
                                   std::map<std::string, std::string>* extra_fields = nullptr);

// Positions and lattice are written with 17 significant digits so a
// write/parse round trip reproduces every double exactly.
void write_xyz(std::ostream& out, const AtomicConfiguration& config,
               const std::map<std::string, std::string>& extra_fields = {});
void write_xyz_file(const std::string& path, const AtomicConfiguration& config,
                    const std::map<std::string, std::string>& extra_fields = {});

}  // namespace equiprec::geometry
