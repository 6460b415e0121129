#include "parlift/parser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace parlift::parser {

using namespace parlift::model;

namespace {

struct Tok {
  enum Kind { ident, number, punct, end } kind;
  std::string text;
  double num = 0;
  int col = 0;
};

class LineLexer {
 public:
  LineLexer(const std::string& line, int line_no) : line_(line), line_no_(line_no) { advance(); }

  const Tok& peek() const { return tok_; }
  Tok next() {
    Tok t = tok_;
    advance();
    return t;
  }
  bool at_end() const { return tok_.kind == Tok::end; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(line_no_, tok_.col + 1, msg);
  }

  std::string expect_ident(const std::string& what) {
    if (tok_.kind != Tok::ident) fail("expected " + what);
    return next().text;
  }

  void expect_punct(const std::string& p) {
    if (tok_.kind != Tok::punct || tok_.text != p) fail("expected '" + p + "'");
    next();
  }

  bool accept_punct(const std::string& p) {
    if (tok_.kind == Tok::punct && tok_.text == p) {
      next();
      return true;
    }
    return false;
  }

  double expect_number() {
    if (tok_.kind != Tok::number) fail("expected a number");
    return next().num;
  }

  int line_no() const { return line_no_; }

 private:
  void advance() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    tok_.col = static_cast<int>(pos_);
    if (pos_ >= line_.size() || line_[pos_] == '#') {
      tok_ = Tok{Tok::end, "", 0, static_cast<int>(pos_)};
      return;
    }
    char c = line_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < line_.size() &&
             (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_' ||
              line_[pos_] == '-' || line_[pos_] == '@'))
        ++pos_;
      // '@' and '-' belong to identifiers only in slice suffixes like Hot@1;
      // the lexer is permissive, the grammar validates.
      tok_ = Tok{Tok::ident, line_.substr(start, pos_ - start), 0, static_cast<int>(start)};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < line_.size() &&
         std::isdigit(static_cast<unsigned char>(line_[pos_ + 1])))) {
      std::size_t start = pos_;
      while (pos_ < line_.size() &&
             (std::isdigit(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '.' ||
              line_[pos_] == 'e' || line_[pos_] == 'E' ||
              ((line_[pos_] == '+' || line_[pos_] == '-') && pos_ > start &&
               (line_[pos_ - 1] == 'e' || line_[pos_ - 1] == 'E'))))
        ++pos_;
      std::string text = line_.substr(start, pos_ - start);
      try {
        tok_ = Tok{Tok::number, text, std::stod(text), static_cast<int>(start)};
      } catch (const std::exception&) {
        throw ParseError(line_no_, static_cast<int>(start) + 1, "malformed number '" + text + "'");
      }
      return;
    }
    tok_ = Tok{Tok::punct, std::string(1, c), 0, static_cast<int>(pos_)};
    ++pos_;
  }

  const std::string& line_;
  int line_no_;
  std::size_t pos_ = 0;
  Tok tok_;
};

// Identifier with an optional trailing @0/@1 slice marker (split off).
std::pair<std::string, std::optional<int>> split_slice_marker(const std::string& ident) {
  auto at = ident.rfind('@');
  if (at == std::string::npos) return {ident, std::nullopt};
  std::string suffix = ident.substr(at + 1);
  if (suffix == "0") return {ident.substr(0, at), 0};
  if (suffix == "1") return {ident.substr(0, at), 1};
  return {ident, std::nullopt};
}

struct PendingParfactor {
  std::string name;
  bool inter_slice;
  int line;
  std::vector<std::pair<std::string, std::optional<int>>> atom_names;  // name, slice marker
  std::vector<std::vector<std::string>> atom_params;
  std::vector<std::pair<std::string, double>> rows;
};

struct Builder {
  std::shared_ptr<Vocabulary> voc = std::make_shared<Vocabulary>();
  std::vector<PendingParfactor> parfactors;
  std::vector<std::pair<int, std::vector<std::pair<std::string, std::vector<std::string>>>>>
      query_lines;  // line, terms (name, consts)
  struct EvLine {
    int line;
    int step;
    std::vector<std::tuple<std::string, std::vector<std::string>, std::string>> obs;
  };
  std::vector<EvLine> evidence_lines;
  std::set<std::string> parfactor_names;
};

void parse_domain(LineLexer& lx, Builder& b) {
  std::string name = lx.expect_ident("logvar name");
  lx.expect_punct("=");
  lx.expect_punct("{");
  std::vector<std::string> constants;
  while (!lx.accept_punct("}")) {
    constants.push_back(lx.expect_ident("constant"));
    if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == "}"))
      lx.fail("expected ',' or '}'");
  }
  if (!lx.at_end()) lx.fail("trailing input after domain declaration");
  try {
    b.voc->add_logvar(name, constants);
  } catch (const ModelError& e) {
    throw ParseError(lx.line_no(), 1, e.what());
  }
}

void parse_prv(LineLexer& lx, Builder& b) {
  std::string name = lx.expect_ident("PRV name");
  std::vector<LogvarId> params;
  if (lx.accept_punct("(")) {
    while (!lx.accept_punct(")")) {
      std::string lvname = lx.expect_ident("logvar");
      auto id = b.voc->find_logvar(lvname);
      if (!id) lx.fail("unknown logvar '" + lvname + "'");
      params.push_back(*id);
      if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == ")"))
        lx.fail("expected ',' or ')'");
    }
  }
  std::vector<std::string> range = {"false", "true"};
  if (lx.peek().kind == Tok::ident && lx.peek().text == "range") {
    lx.next();
    lx.expect_punct("{");
    range.clear();
    while (!lx.accept_punct("}")) {
      range.push_back(lx.expect_ident("range value"));
      if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == "}"))
        lx.fail("expected ',' or '}'");
    }
  }
  if (!lx.at_end()) lx.fail("trailing input after prv declaration");
  try {
    b.voc->add_prv(name, params, range);
  } catch (const ModelError& e) {
    throw ParseError(lx.line_no(), 1, e.what());
  }
}

void parse_parfactor(LineLexer& lx, Builder& b, bool inter_slice) {
  PendingParfactor pf;
  pf.inter_slice = inter_slice;
  pf.line = lx.line_no();
  pf.name = lx.expect_ident("parfactor name");
  if (!b.parfactor_names.insert(pf.name).second)
    lx.fail("parfactor '" + pf.name + "' redeclared");
  lx.expect_punct("[");
  while (!lx.accept_punct("]")) {
    std::string raw = lx.expect_ident("PRV");
    auto [name, marker] = split_slice_marker(raw);
    std::vector<std::string> params;
    if (lx.accept_punct("(")) {
      while (!lx.accept_punct(")")) {
        params.push_back(lx.expect_ident("logvar"));
        if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == ")"))
          lx.fail("expected ',' or ')'");
      }
      // the slice marker may follow the parameter list: Pub(X,P)@0
      if (lx.accept_punct("@")) {
        double m2 = lx.expect_number();
        if (m2 != 0 && m2 != 1) lx.fail("slice marker must be @0 or @1");
        marker = static_cast<int>(m2);
      }
    }
    if (inter_slice && !marker) lx.fail("slice parfactor atoms need an @0/@1 marker");
    if (!inter_slice && marker) lx.fail("slice markers are only allowed in slice parfactors");
    pf.atom_names.emplace_back(name, marker);
    pf.atom_params.push_back(params);
    if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == "]"))
      lx.fail("expected ',' or ']'");
  }
  if (lx.peek().kind != Tok::ident || lx.peek().text != "table") lx.fail("expected 'table'");
  lx.next();
  lx.expect_punct("{");
  while (!lx.accept_punct("}")) {
    std::string key = lx.expect_ident("table key");
    lx.expect_punct(":");
    double value = lx.expect_number();
    if (value < 0 || !std::isfinite(value)) lx.fail("potentials must be finite and >= 0");
    pf.rows.emplace_back(key, value);
    if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == "}"))
      lx.fail("expected ',' or '}'");
  }
  if (!lx.at_end()) lx.fail("trailing input after parfactor");
  b.parfactors.push_back(std::move(pf));
}

void parse_query(LineLexer& lx, Builder& b) {
  std::vector<std::pair<std::string, std::vector<std::string>>> terms;
  for (;;) {
    std::string name = lx.expect_ident("query term");
    std::vector<std::string> consts;
    if (lx.accept_punct("(")) {
      while (!lx.accept_punct(")")) {
        consts.push_back(lx.expect_ident("constant"));
        if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == ")"))
          lx.fail("expected ',' or ')'");
      }
    }
    terms.emplace_back(name, consts);
    if (lx.at_end()) break;
    lx.expect_punct(";");
  }
  b.query_lines.emplace_back(lx.line_no(), std::move(terms));
}

void parse_evidence(LineLexer& lx, Builder& b) {
  if (lx.peek().kind != Tok::ident || lx.peek().text != "t") lx.fail("expected 't=<step>'");
  lx.next();
  lx.expect_punct("=");
  double step = lx.expect_number();
  if (step < 0 || step != std::floor(step)) lx.fail("evidence step must be a non-negative integer");
  Builder::EvLine ev;
  ev.line = lx.line_no();
  ev.step = static_cast<int>(step);
  lx.expect_punct("{");
  while (!lx.accept_punct("}")) {
    std::string name = lx.expect_ident("observed term");
    std::vector<std::string> consts;
    if (lx.accept_punct("(")) {
      while (!lx.accept_punct(")")) {
        consts.push_back(lx.expect_ident("constant"));
        if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == ")"))
          lx.fail("expected ',' or ')'");
      }
    }
    lx.expect_punct("=");
    std::string value = lx.expect_ident("range value");
    ev.obs.emplace_back(name, consts, value);
    if (!lx.accept_punct(",") && !(lx.peek().kind == Tok::punct && lx.peek().text == "}"))
      lx.fail("expected ',' or '}'");
  }
  if (!lx.at_end()) lx.fail("trailing input after evidence");
  b.evidence_lines.push_back(std::move(ev));
}

GroundTerm resolve_ground_term(const Vocabulary& voc, const std::string& name,
                               const std::vector<std::string>& consts, int line) {
  auto prv = voc.find_prv(name);
  if (!prv) throw ParseError(line, 1, "unknown PRV '" + name + "'");
  const Prv& p = voc.prv(*prv);
  if (consts.size() != p.params.size())
    throw ParseError(line, 1, "arity mismatch for '" + name + "'");
  GroundTerm t;
  t.prv = *prv;
  for (std::size_t i = 0; i < consts.size(); ++i) {
    auto c = voc.find_constant(p.params[i], consts[i]);
    if (!c)
      throw ParseError(line, 1,
                       "constant '" + consts[i] + "' not in the domain of " +
                           voc.logvar(p.params[i]).name);
    t.consts.push_back(*c);
  }
  return t;
}

Parfactor build_parfactor(const Vocabulary& voc, const PendingParfactor& pf) {
  Parfactor g;
  g.name = pf.name;
  std::set<Atom> seen;
  for (std::size_t i = 0; i < pf.atom_names.size(); ++i) {
    const auto& [name, marker] = pf.atom_names[i];
    auto prv = voc.find_prv(name);
    if (!prv) throw ParseError(pf.line, 1, "unknown PRV '" + name + "' in parfactor " + pf.name);
    const Prv& p = voc.prv(*prv);
    const auto& params = pf.atom_params[i];
    if (params.size() != p.params.size())
      throw ParseError(pf.line, 1, "arity mismatch for '" + name + "' in parfactor " + pf.name);
    Atom a;
    a.prv = *prv;
    a.slice = (marker && *marker == 0) ? Slice::prev : Slice::cur;
    for (std::size_t j = 0; j < params.size(); ++j) {
      auto lv = voc.find_logvar(params[j]);
      if (!lv || *lv != p.params[j])
        throw ParseError(pf.line, 1,
                         "parfactor " + pf.name + ": '" + name +
                             "' must use its declared logvars verbatim");
      a.terms.push_back(Term::var(*lv));
    }
    if (!seen.insert(a).second)
      throw ParseError(pf.line, 1, "parfactor " + pf.name + " repeats an atom");
    g.args.push_back(Arg{a, std::nullopt});
  }
  if (pf.inter_slice) {
    bool prev = false, cur = false;
    for (const Arg& a : g.args) {
      prev |= a.atom.slice == Slice::prev;
      cur |= a.atom.slice == Slice::cur;
    }
    if (!prev || !cur)
      throw ParseError(pf.line, 1, "slice parfactor " + pf.name + " must mention both slices");
  }
  g.constraint = Constraint::top(g.free_logvars());

  std::vector<int> dims;
  for (const Arg& a : g.args) dims.push_back(arg_range_size(voc, a));
  g.table.dims = dims;
  std::size_t want = LogTable::flat_size(dims);
  g.table.v.assign(want, LogTable::neg_inf());
  std::vector<bool> filled(want, false);
  for (const auto& [key, value] : pf.rows) {
    if (key.size() != g.args.size())
      throw ParseError(pf.line, 1, "parfactor " + pf.name + ": table key '" + key +
                                       "' must have one initial per argument");
    std::vector<int> idx(g.args.size());
    for (std::size_t i = 0; i < key.size(); ++i) {
      const auto& range = voc.prv(g.args[i].atom.prv).range;
      int found = -1;
      for (std::size_t r = 0; r < range.size(); ++r)
        if (range[r][0] == key[i]) found = static_cast<int>(r);
      if (found < 0)
        throw ParseError(pf.line, 1, "parfactor " + pf.name + ": key '" + key +
                                         "' does not match any range value initial");
      idx[i] = found;
    }
    std::size_t flat = g.table.index(idx);
    if (filled[flat])
      throw ParseError(pf.line, 1, "parfactor " + pf.name + ": duplicate table key '" + key + "'");
    filled[flat] = true;
    g.table.v[flat] = value > 0 ? std::log(value) : LogTable::neg_inf();
  }
  if (static_cast<std::size_t>(std::count(filled.begin(), filled.end(), true)) != want)
    throw ParseError(pf.line, 1, "parfactor " + pf.name + ": incomplete specification (" +
                                     std::to_string(pf.rows.size()) + " of " +
                                     std::to_string(want) + " rows)");
  return g;
}

}  // namespace

ModelFile parse_model(const std::string& text) {
  Builder b;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    LineLexer lx(line, line_no);
    if (lx.at_end()) continue;
    std::string head = lx.expect_ident("declaration");
    if (head == "domain") {
      parse_domain(lx, b);
    } else if (head == "prv") {
      parse_prv(lx, b);
    } else if (head == "parfactor") {
      parse_parfactor(lx, b, false);
    } else if (head == "slice") {
      if (lx.peek().kind != Tok::ident || lx.peek().text != "parfactor")
        lx.fail("expected 'parfactor' after 'slice'");
      lx.next();
      parse_parfactor(lx, b, true);
    } else if (head == "query") {
      parse_query(lx, b);
    } else if (head == "evidence") {
      parse_evidence(lx, b);
    } else {
      throw ParseError(line_no, 1, "unknown key '" + head + "'");
    }
  }

  ModelFile out;
  out.pdm.voc = b.voc;
  bool any_within = false;
  for (const auto& pf : b.parfactors) {
    Parfactor g = build_parfactor(*b.voc, pf);
    try {
      check_parfactor(*b.voc, g);
    } catch (const ModelError& e) {
      throw ParseError(pf.line, 1, e.what());
    }
    if (pf.inter_slice) {
      out.pdm.g_arrow.parfactors.push_back(g);
    } else {
      any_within = true;
      out.pdm.g0.parfactors.push_back(g);
      out.pdm.g_arrow.parfactors.push_back(g);
    }
  }
  if (!any_within) throw ParseError(line_no, 1, "model has no parfactors");
  if (out.pdm.inter_slice_parfactors().empty())
    throw ParseError(line_no, 1, "model has no inter-slice parfactor");
  out.pdm.g0.voc = b.voc;
  out.pdm.g_arrow.voc = b.voc;

  for (const auto& [line2, terms] : b.query_lines)
    for (const auto& [name, consts] : terms)
      out.queries.push_back(resolve_ground_term(*b.voc, name, consts, line2));

  for (const auto& ev : b.evidence_lines) {
    for (const auto& [name, consts, value] : ev.obs) {
      GroundTerm t = resolve_ground_term(*b.voc, name, consts, ev.line);
      auto v = b.voc->find_range_value(t.prv, value);
      if (!v)
        throw ParseError(ev.line, 1,
                         "'" + value + "' is not a range value of " + b.voc->prv(t.prv).name);
      for (const Observation& prev : out.evidence[ev.step])
        if (prev.term == t && prev.value != *v)
          throw ParseError(ev.line, 1,
                           "conflicting observations for " + render_ground_term(*b.voc, t) +
                               " at t=" + std::to_string(ev.step));
      Observation o{t, *v};
      auto& vec = out.evidence[ev.step];
      if (std::find(vec.begin(), vec.end(), o) == vec.end()) vec.push_back(o);
    }
  }
  return out;
}

ModelFile parse_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, 0, "cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

namespace {

std::string format_number(double linear) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", linear);
  return buf;
}

void print_parfactor(std::ostream& os, const Vocabulary& voc, const Parfactor& g,
                     bool inter_slice) {
  os << (inter_slice ? "slice parfactor " : "parfactor ") << g.name << " [ ";
  for (std::size_t i = 0; i < g.args.size(); ++i) {
    if (i) os << ", ";
    const Atom& a = g.args[i].atom;
    const Prv& p = voc.prv(a.prv);
    os << p.name;
    if (!a.terms.empty()) {
      os << "(";
      for (std::size_t j = 0; j < a.terms.size(); ++j) {
        if (j) os << ",";
        os << voc.logvar(a.terms[j].lv).name;
      }
      os << ")";
    }
    if (inter_slice) os << (a.slice == Slice::prev ? "@0" : "@1");
  }
  os << " ] table { ";
  std::vector<int> idx;
  for (std::size_t flat = 0; flat < g.table.size(); ++flat) {
    g.table.decode(flat, idx);
    if (flat) os << ", ";
    for (std::size_t i = 0; i < idx.size(); ++i)
      os << voc.prv(g.args[i].atom.prv).range[idx[i]][0];
    os << ": " << format_number(std::exp(g.table.v[flat]));
  }
  os << " }\n";
}

}  // namespace

std::string print_model(const ModelFile& m) {
  const Vocabulary& voc = *m.pdm.voc;
  std::ostringstream os;
  for (int i = 0; i < voc.num_logvars(); ++i) {
    const Logvar& lv = voc.logvar(i);
    os << "domain " << lv.name << " = { ";
    for (std::size_t j = 0; j < lv.constants.size(); ++j)
      os << (j ? ", " : "") << lv.constants[j];
    os << " }\n";
  }
  for (int i = 0; i < voc.num_prvs(); ++i) {
    const Prv& p = voc.prv(i);
    os << "prv " << p.name;
    if (!p.params.empty()) {
      os << "(";
      for (std::size_t j = 0; j < p.params.size(); ++j)
        os << (j ? "," : "") << voc.logvar(p.params[j]).name;
      os << ")";
    }
    if (p.range != std::vector<std::string>{"false", "true"}) {
      os << " range { ";
      for (std::size_t j = 0; j < p.range.size(); ++j) os << (j ? ", " : "") << p.range[j];
      os << " }";
    }
    os << "\n";
  }
  for (const Parfactor& g : m.pdm.g0.parfactors) print_parfactor(os, voc, g, false);
  for (const Parfactor& g : m.pdm.g_arrow.parfactors)
    if (g.inter_slice()) print_parfactor(os, voc, g, true);
  if (!m.queries.empty()) {
    os << "query ";
    for (std::size_t i = 0; i < m.queries.size(); ++i)
      os << (i ? " ; " : "") << render_ground_term(voc, m.queries[i]);
    os << "\n";
  }
  for (const auto& [step, obs] : m.evidence) {
    os << "evidence t=" << step << " { ";
    for (std::size_t i = 0; i < obs.size(); ++i) {
      os << (i ? ", " : "") << render_ground_term(voc, obs[i].term) << "="
         << voc.prv(obs[i].term.prv).range[obs[i].value];
    }
    os << " }\n";
  }
  return os.str();
}

ModelFile override_domain(const ModelFile& m, const std::string& logvar, int size) {
  if (size < 1) throw ModelError("domain override must be >= 1");
  const Vocabulary& voc = *m.pdm.voc;
  auto id = voc.find_logvar(logvar);
  if (!id) throw ModelError("unknown logvar '" + logvar + "'");
  std::string prefix = logvar;
  std::transform(prefix.begin(), prefix.end(), prefix.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  std::ostringstream os;
  os << print_model(m);
  // rebuild via the printer, swapping the one domain line
  std::string text = os.str();
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("domain " + logvar + " ", 0) == 0) {
      out << "domain " << logvar << " = { ";
      for (int i = 1; i <= size; ++i) out << (i > 1 ? ", " : "") << prefix << i;
      out << " }\n";
    } else {
      out << line << "\n";
    }
  }
  return parse_model(out.str());
}

}  // namespace parlift::parser
