#ifndef PARLIFT_PARSER_HPP
#define PARLIFT_PARSER_HPP

#include <string>

#include "parlift/model.hpp"

namespace parlift::parser {

struct ParseError : std::runtime_error {
  int line;
  int column;
  ParseError(int line, int column, const std::string& what)
      : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                           std::to_string(column) + ": " + what),
        line(line),
        column(column) {}
};

// A parsed model file: the temporal model plus the declared per-step query
// terms and the evidence schedule.
struct ModelFile {
  model::Pdm pdm;
  std::vector<model::GroundTerm> queries;  // issued at every time step
  model::Evidence evidence;
};

// Parses the textual model format.  Line-oriented; `#` starts a comment.
// Throws ParseError with position information.
ModelFile parse_model(const std::string& text);

// Reads the file and parses it.
ModelFile parse_model_file(const std::string& path);

// Canonical printer; parse(print(m)) is structurally identical to m.
std::string print_model(const ModelFile& m);

// Replaces the domain of `logvar` with `size` generated constants (lowercase
// logvar name + index).  Rebuilds the vocabulary; potentials are unchanged.
ModelFile override_domain(const ModelFile& m, const std::string& logvar, int size);

}  // namespace parlift::parser

#endif  // PARLIFT_PARSER_HPP
