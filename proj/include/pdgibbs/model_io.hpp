#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "pdgibbs/duality.hpp"
#include "pdgibbs/model.hpp"

namespace pdgibbs {

/// Malformed model text. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Text format, one record per line, `#` starts a comment:
//
//   vars N
//   unary v a0 a1 ...          log-potentials; the count sets v's cardinality
//   factor id u v t00 t01 ...  table row-major, cardinality(u) x cardinality(v)
//
// Variables without a unary line are binary with zero log-potentials. Factor
// ids must be strictly increasing. Numbers are written in shortest
// round-trip form, so write-then-read reproduces every value exactly.

void write_model(std::ostream& out, const Model& model);
std::string model_to_string(const Model& model);

Model read_model(std::istream& in);
Model model_from_string(const std::string& text);
Model load_model(const std::string& path);
void save_model(const std::string& path, const Model& model);

// A dual model adds a section after the model records:
//
//   dual SCHEME [ALPHA]                 factorized | swendsen-wang | higdon
//   dshift id u|v s0 s1 ...             shift absorbed into the u or v field
//   dcomp id product LOGW l0 .. r0 ..   log weight, log left, log right
//   dcomp id equality LOGW d0 d1 ..     log weight, log diagonal
//   dparams id a1 a2 q b1 b2            binary factorization parameters
//
// Reading checks that every dual reconstructs its factor table.

void write_dual_model(std::ostream& out, const DualModel& dm);
std::string dual_model_to_string(const DualModel& dm);
/// Without a dual section the model is dualized with default options.
DualModel read_dual_model(std::istream& in);
DualModel dual_model_from_string(const std::string& text);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace pdgibbs
