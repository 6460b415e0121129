#include "parlift/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace parlift::model {

// --- Vocabulary --------------------------------------------------------------

LogvarId Vocabulary::add_logvar(const std::string& name, std::vector<std::string> constants) {
  if (logvar_ids_.count(name)) throw ModelError("logvar redeclared: " + name);
  if (constants.empty()) throw ModelError("logvar " + name + " has an empty domain");
  std::set<std::string> uniq(constants.begin(), constants.end());
  if (uniq.size() != constants.size())
    throw ModelError("logvar " + name + " has duplicate constants");
  LogvarId id = static_cast<LogvarId>(logvars_.size());
  logvars_.push_back(Logvar{name, std::move(constants)});
  logvar_ids_[name] = id;
  return id;
}

PrvId Vocabulary::add_prv(const std::string& name, std::vector<LogvarId> params,
                          std::vector<std::string> range) {
  if (prv_ids_.count(name)) throw ModelError("PRV redeclared: " + name);
  if (range.size() < 2) throw ModelError("PRV " + name + " needs a range of at least 2 values");
  std::set<std::string> uniq(range.begin(), range.end());
  if (uniq.size() != range.size()) throw ModelError("PRV " + name + " has duplicate range values");
  std::set<char> initials;
  for (const auto& r : range) {
    if (r.empty()) throw ModelError("PRV " + name + " has an empty range value");
    if (!initials.insert(r[0]).second)
      throw ModelError("PRV " + name + ": range value initials must be unique");
  }
  for (LogvarId lv : params)
    if (lv < 0 || lv >= num_logvars()) throw ModelError("PRV " + name + ": unknown logvar");
  PrvId id = static_cast<PrvId>(prvs_.size());
  prvs_.push_back(Prv{name, std::move(params), std::move(range)});
  prv_ids_[name] = id;
  return id;
}

std::optional<LogvarId> Vocabulary::find_logvar(const std::string& name) const {
  auto it = logvar_ids_.find(name);
  if (it == logvar_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<PrvId> Vocabulary::find_prv(const std::string& name) const {
  auto it = prv_ids_.find(name);
  if (it == prv_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<ConstId> Vocabulary::find_constant(LogvarId lv, const std::string& name) const {
  const auto& cs = logvars_.at(lv).constants;
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (cs[i] == name) return static_cast<ConstId>(i);
  return std::nullopt;
}

std::optional<int> Vocabulary::find_range_value(PrvId prv, const std::string& name) const {
  const auto& r = prvs_.at(prv).range;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

// --- Atoms and args ----------------------------------------------------------

std::vector<LogvarId> Atom::free_logvars() const {
  std::vector<LogvarId> out;
  for (const Term& t : terms)
    if (!t.is_const()) out.push_back(t.lv);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool Atom::is_ground() const {
  return std::all_of(terms.begin(), terms.end(), [](const Term& t) { return t.is_const(); });
}

Atom canonical_atom(const Vocabulary& voc, PrvId prv, Slice slice) {
  Atom a;
  a.prv = prv;
  a.slice = slice;
  for (LogvarId lv : voc.prv(prv).params) a.terms.push_back(Term::var(lv));
  return a;
}

std::vector<LogvarId> Arg::free_logvars() const {
  std::vector<LogvarId> out = atom.free_logvars();
  if (counted) std::erase(out, counted->lv);
  return out;
}

std::vector<std::vector<int>> enumerate_histograms(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> h(k, 0);
  // first coordinate descending, recursively
  auto rec = [&](auto&& self, int pos, int left) -> void {
    if (pos == k - 1) {
      h[pos] = left;
      out.push_back(h);
      return;
    }
    for (int c = left; c >= 0; --c) {
      h[pos] = c;
      self(self, pos + 1, left - c);
    }
  };
  if (k <= 0) throw ModelError("histogram over empty range");
  rec(rec, 0, n);
  return out;
}

int histogram_index(const std::vector<std::vector<int>>& hists, const std::vector<int>& h) {
  for (std::size_t i = 0; i < hists.size(); ++i)
    if (hists[i] == h) return static_cast<int>(i);
  throw ModelError("histogram not in range");
}

int arg_range_size(const Vocabulary& voc, const Arg& arg) {
  int k = static_cast<int>(voc.prv(arg.atom.prv).range.size());
  if (!arg.counted) return k;
  int n = static_cast<int>(arg.counted->values.size());
  return static_cast<int>(enumerate_histograms(n, k).size());
}

// --- Constraint ---------------------------------------------------------------

Constraint Constraint::top(std::vector<LogvarId> logvars) {
  std::sort(logvars.begin(), logvars.end());
  logvars.erase(std::unique(logvars.begin(), logvars.end()), logvars.end());
  Constraint c;
  c.logvars_ = std::move(logvars);
  return c;
}

Constraint Constraint::extensional(std::vector<LogvarId> logvars,
                                   std::vector<std::vector<ConstId>> tuples) {
  Constraint c;
  // keep column order sorted by logvar id
  std::vector<std::size_t> perm(logvars.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(),
            [&](std::size_t a, std::size_t b) { return logvars[a] < logvars[b]; });
  c.logvars_.reserve(logvars.size());
  for (std::size_t p : perm) c.logvars_.push_back(logvars[p]);
  for (std::size_t i = 1; i < c.logvars_.size(); ++i)
    if (c.logvars_[i] == c.logvars_[i - 1]) throw ModelError("duplicate logvar in constraint");
  std::vector<std::vector<ConstId>> rows;
  rows.reserve(tuples.size());
  for (const auto& t : tuples) {
    if (t.size() != logvars.size()) throw ModelError("constraint tuple arity mismatch");
    std::vector<ConstId> row(t.size());
    for (std::size_t i = 0; i < perm.size(); ++i) row[i] = t[perm[i]];
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  c.tuples_ = std::move(rows);
  return c;
}

bool Constraint::has_logvar(LogvarId lv) const {
  return std::find(logvars_.begin(), logvars_.end(), lv) != logvars_.end();
}

int Constraint::position_of(LogvarId lv) const {
  auto it = std::find(logvars_.begin(), logvars_.end(), lv);
  if (it == logvars_.end()) throw ModelError("logvar not in constraint");
  return static_cast<int>(it - logvars_.begin());
}

long long Constraint::count(const Vocabulary& voc) const {
  if (tuples_) return static_cast<long long>(tuples_->size());
  long long n = 1;
  for (LogvarId lv : logvars_) n *= voc.domain_size(lv);
  return n;
}

std::vector<std::vector<ConstId>> Constraint::rows(const Vocabulary& voc) const {
  if (tuples_) return *tuples_;
  std::vector<std::vector<ConstId>> out;
  std::vector<ConstId> row(logvars_.size(), 0);
  long long total = count(voc);
  out.reserve(static_cast<std::size_t>(total));
  auto rec = [&](auto&& self, std::size_t pos) -> void {
    if (pos == logvars_.size()) {
      out.push_back(row);
      return;
    }
    for (int c = 0; c < voc.domain_size(logvars_[pos]); ++c) {
      row[pos] = c;
      self(self, pos + 1);
    }
  };
  rec(rec, 0);
  return out;
}

Constraint Constraint::join(const Constraint& a, const Constraint& b, const Vocabulary& voc) {
  std::vector<LogvarId> all = a.logvars_;
  all.insert(all.end(), b.logvars_.begin(), b.logvars_.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  if (a.is_top() && b.is_top()) return Constraint::top(all);

  // materialize: index positions of each side in the joined row
  std::vector<int> pa, pb;
  for (LogvarId lv : a.logvars_) pa.push_back(static_cast<int>(std::lower_bound(all.begin(), all.end(), lv) - all.begin()));
  for (LogvarId lv : b.logvars_) pb.push_back(static_cast<int>(std::lower_bound(all.begin(), all.end(), lv) - all.begin()));

  std::set<std::vector<ConstId>> a_rows_set, b_rows_set;
  auto a_rows = a.rows(voc);
  auto b_rows = b.rows(voc);
  for (auto& r : a_rows) a_rows_set.insert(r);
  for (auto& r : b_rows) b_rows_set.insert(r);

  std::vector<std::vector<ConstId>> out;
  std::vector<ConstId> row(all.size(), 0);
  auto rec = [&](auto&& self, std::size_t pos) -> void {
    if (pos == all.size()) {
      std::vector<ConstId> ra(pa.size()), rb(pb.size());
      for (std::size_t i = 0; i < pa.size(); ++i) ra[i] = row[pa[i]];
      for (std::size_t i = 0; i < pb.size(); ++i) rb[i] = row[pb[i]];
      if (a_rows_set.count(ra) && b_rows_set.count(rb)) out.push_back(row);
      return;
    }
    for (int c = 0; c < voc.domain_size(all[pos]); ++c) {
      row[pos] = c;
      self(self, pos + 1);
    }
  };
  rec(rec, 0);
  Constraint j;
  j.logvars_ = all;
  j.tuples_ = std::move(out);
  return j;
}

Constraint Constraint::project(const std::vector<LogvarId>& keep, const Vocabulary& voc,
                               long long* multiplicity) const {
  std::vector<LogvarId> kept;
  for (LogvarId lv : logvars_)
    if (std::find(keep.begin(), keep.end(), lv) != keep.end()) kept.push_back(lv);
  if (is_top()) {
    long long m = 1;
    for (LogvarId lv : logvars_)
      if (std::find(kept.begin(), kept.end(), lv) == kept.end()) m *= voc.domain_size(lv);
    if (multiplicity) *multiplicity = m;
    return Constraint::top(kept);
  }
  std::vector<int> pos;
  for (LogvarId lv : kept) pos.push_back(position_of(lv));
  std::map<std::vector<ConstId>, long long> counts;
  for (const auto& row : *tuples_) {
    std::vector<ConstId> p(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) p[i] = row[pos[i]];
    counts[p]++;
  }
  if (counts.empty()) throw ModelError("projection of an empty constraint");
  long long m = counts.begin()->second;
  for (const auto& [k, c] : counts)
    if (c != m) throw ModelError("non-uniform constraint projection");
  if (multiplicity) *multiplicity = m;
  std::vector<std::vector<ConstId>> rows;
  rows.reserve(counts.size());
  for (const auto& [k, c] : counts) rows.push_back(k);
  Constraint out;
  out.logvars_ = kept;
  out.tuples_ = std::move(rows);
  return out;
}

std::pair<Constraint, Constraint> Constraint::split_by_membership(
    const std::vector<LogvarId>& on, const std::set<std::vector<ConstId>>& match,
    const Vocabulary& voc) const {
  std::vector<int> pos;
  for (LogvarId lv : on) pos.push_back(position_of(lv));
  std::vector<std::vector<ConstId>> in_rows, out_rows;
  for (const auto& row : rows(voc)) {
    std::vector<ConstId> p(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) p[i] = row[pos[i]];
    (match.count(p) ? in_rows : out_rows).push_back(row);
  }
  Constraint cin, cout;
  cin.logvars_ = logvars_;
  cin.tuples_ = std::move(in_rows);
  cout.logvars_ = logvars_;
  cout.tuples_ = std::move(out_rows);
  return {cin, cout};
}

std::optional<std::pair<std::vector<ConstId>, Constraint>> Constraint::factor_out(
    LogvarId lv, const Vocabulary& voc) const {
  if (!has_logvar(lv)) return std::nullopt;
  std::vector<LogvarId> rest_lvs;
  for (LogvarId l : logvars_)
    if (l != lv) rest_lvs.push_back(l);
  if (is_top()) {
    std::vector<ConstId> vals(voc.domain_size(lv));
    std::iota(vals.begin(), vals.end(), 0);
    return std::make_pair(vals, Constraint::top(rest_lvs));
  }
  int p = position_of(lv);
  std::set<ConstId> vals;
  std::set<std::vector<ConstId>> rest;
  for (const auto& row : *tuples_) {
    vals.insert(row[p]);
    std::vector<ConstId> r;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (static_cast<int>(i) != p) r.push_back(row[i]);
    rest.insert(r);
  }
  if (vals.size() * rest.size() != tuples_->size()) return std::nullopt;
  Constraint rc;
  rc.logvars_ = rest_lvs;
  rc.tuples_ = std::vector<std::vector<ConstId>>(rest.begin(), rest.end());
  return std::make_pair(std::vector<ConstId>(vals.begin(), vals.end()), rc);
}

std::vector<std::pair<ConstId, Constraint>> Constraint::group_by(LogvarId lv,
                                                                 const Vocabulary& voc) const {
  int p = position_of(lv);
  std::vector<LogvarId> rest_lvs;
  for (LogvarId l : logvars_)
    if (l != lv) rest_lvs.push_back(l);
  std::map<ConstId, std::vector<std::vector<ConstId>>> groups;
  for (const auto& row : rows(voc)) {
    std::vector<ConstId> r;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (static_cast<int>(i) != p) r.push_back(row[i]);
    groups[row[p]].push_back(std::move(r));
  }
  std::vector<std::pair<ConstId, Constraint>> out;
  for (auto& [v, rows2] : groups) {
    Constraint c;
    c.logvars_ = rest_lvs;
    std::sort(rows2.begin(), rows2.end());
    c.tuples_ = std::move(rows2);
    out.emplace_back(v, std::move(c));
  }
  return out;
}

// --- LogTable ------------------------------------------------------------------

std::size_t LogTable::flat_size(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::size_t LogTable::index(const std::vector<int>& idx) const {
  std::size_t flat = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) flat = flat * dims[i] + idx[i];
  return flat;
}

void LogTable::decode(std::size_t flat, std::vector<int>& idx) const {
  idx.resize(dims.size());
  for (std::size_t i = dims.size(); i-- > 0;) {
    idx[i] = static_cast<int>(flat % dims[i]);
    flat /= dims[i];
  }
}

// --- Parfactor -------------------------------------------------------------------

std::vector<LogvarId> Parfactor::free_logvars() const {
  std::vector<LogvarId> out;
  for (const Arg& a : args) {
    auto f = a.free_logvars();
    out.insert(out.end(), f.begin(), f.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool Parfactor::mentions(AtomKey key) const {
  for (const Arg& a : args)
    if (key_of(a.atom) == key) return true;
  return false;
}

bool Parfactor::inter_slice() const {
  bool prev = false, cur = false;
  for (const Arg& a : args) {
    if (a.atom.slice == Slice::prev) prev = true;
    if (a.atom.slice == Slice::cur) cur = true;
  }
  return prev && cur;
}

void check_parfactor(const Vocabulary& voc, const Parfactor& g) {
  auto fl = g.free_logvars();
  if (fl != g.constraint.logvars())
    throw ModelError("parfactor " + g.name + ": constraint logvars must equal free logvars");
  std::vector<int> dims;
  for (const Arg& a : g.args) {
    const Prv& p = voc.prv(a.atom.prv);
    if (a.atom.terms.size() != p.params.size())
      throw ModelError("parfactor " + g.name + ": atom arity mismatch");
    for (std::size_t i = 0; i < a.atom.terms.size(); ++i) {
      const Term& t = a.atom.terms[i];
      if (t.is_const()) {
        if (t.cst >= voc.domain_size(p.params[i]))
          throw ModelError("parfactor " + g.name + ": constant out of domain");
      }
    }
    if (a.counted) {
      bool found = false;
      for (const Term& t : a.atom.terms)
        if (!t.is_const() && t.lv == a.counted->lv) found = true;
      if (!found) throw ModelError("parfactor " + g.name + ": counted logvar not in atom");
      if (a.counted->values.empty())
        throw ModelError("parfactor " + g.name + ": counted logvar with no values");
    }
    dims.push_back(arg_range_size(voc, a));
  }
  if (g.table.dims != dims || g.table.v.size() != LogTable::flat_size(dims))
    throw ModelError("parfactor " + g.name + ": incomplete specification");
  for (double x : g.table.v)
    if (std::isnan(x) || x > 1e300)
      throw ModelError("parfactor " + g.name + ": invalid potential");
}

std::vector<const Parfactor*> Pdm::inter_slice_parfactors() const {
  std::vector<const Parfactor*> out;
  for (const auto& g : g_arrow.parfactors)
    if (g.inter_slice()) out.push_back(&g);
  return out;
}

std::vector<const Parfactor*> Pdm::within_slice_parfactors() const {
  std::vector<const Parfactor*> out;
  for (const auto& g : g_arrow.parfactors)
    if (!g.inter_slice()) out.push_back(&g);
  return out;
}

// --- rendering -------------------------------------------------------------------

std::string render_atom(const Vocabulary& voc, const Atom& atom, bool temporal) {
  const Prv& p = voc.prv(atom.prv);
  std::string s = p.name;
  if (temporal) s += atom.slice == Slice::prev ? "@t-1" : "@t";
  if (!atom.terms.empty()) {
    s += "(";
    for (std::size_t i = 0; i < atom.terms.size(); ++i) {
      if (i) s += ",";
      const Term& t = atom.terms[i];
      if (t.is_const())
        s += voc.logvar(p.params[i]).constants.at(t.cst);
      else
        s += voc.logvar(t.lv).name;
    }
    s += ")";
  }
  return s;
}

std::string render_arg(const Vocabulary& voc, const Arg& arg, bool temporal) {
  std::string inner = render_atom(voc, arg.atom, temporal);
  if (!arg.counted) return inner;
  std::string s = "#" + voc.logvar(arg.counted->lv).name;
  if (static_cast<int>(arg.counted->values.size()) != voc.domain_size(arg.counted->lv)) {
    s += "{";
    for (std::size_t i = 0; i < arg.counted->values.size(); ++i) {
      if (i) s += ",";
      s += voc.logvar(arg.counted->lv).constants.at(arg.counted->values[i]);
    }
    s += "}";
  }
  return s + "[" + inner + "]";
}

std::string render_ground_term(const Vocabulary& voc, const GroundTerm& t) {
  const Prv& p = voc.prv(t.prv);
  std::string s = p.name;
  if (!t.consts.empty()) {
    s += "(";
    for (std::size_t i = 0; i < t.consts.size(); ++i) {
      if (i) s += ",";
      s += voc.logvar(p.params[i]).constants.at(t.consts[i]);
    }
    s += ")";
  }
  return s;
}

std::string ground_var_name(const Vocabulary& voc, const GroundTerm& t, int step) {
  std::string s = render_ground_term(voc, t);
  if (step >= 0) s += "@" + std::to_string(step);
  return s;
}

// --- grounding --------------------------------------------------------------------

std::vector<GroundTerm> gr_atom(const Vocabulary& voc, const Atom& atom,
                                const Constraint& constraint) {
  auto free = atom.free_logvars();
  for (LogvarId lv : free)
    if (!constraint.has_logvar(lv))
      throw ModelError("gr: logvar " + voc.logvar(lv).name + " not covered by the constraint");
  long long m = 0;
  (void)m;
  Constraint proj = constraint.project(free, voc, nullptr);
  std::set<GroundTerm> out;
  for (const auto& row : proj.rows(voc)) {
    GroundTerm t;
    t.prv = atom.prv;
    for (std::size_t i = 0; i < atom.terms.size(); ++i) {
      const Term& tm = atom.terms[i];
      if (tm.is_const()) {
        t.consts.push_back(tm.cst);
      } else {
        t.consts.push_back(row[proj.position_of(tm.lv)]);
      }
    }
    out.insert(t);
  }
  return {out.begin(), out.end()};
}

namespace {

std::string slice_suffix(Slice s, int step) {
  if (step >= 0) return "@" + std::to_string(s == Slice::prev ? step - 1 : step);
  return s == Slice::prev ? "@t-1" : "";
}

}  // namespace

std::vector<GroundFactorData> gr(const Vocabulary& voc, const Parfactor& g, int step) {
  std::vector<GroundFactorData> out;
  for (const auto& row : g.constraint.rows(voc)) {
    auto value_of = [&](LogvarId lv) { return row[g.constraint.position_of(lv)]; };
    GroundFactorData f;
    // per argument: list of ground variables it spans, contiguous in scope
    struct ArgSpan {
      int first_var;
      int count;  // 1 for a PRV, |counted values| for a CRV
      int base_range;
      std::vector<std::vector<int>> hists;  // CRV only
    };
    std::vector<ArgSpan> spans;
    for (const Arg& a : g.args) {
      const Prv& p = voc.prv(a.atom.prv);
      ArgSpan span;
      span.first_var = static_cast<int>(f.var_names.size());
      span.base_range = static_cast<int>(p.range.size());
      auto instantiate = [&](std::optional<ConstId> counted_value) {
        GroundTerm t;
        t.prv = a.atom.prv;
        for (std::size_t i = 0; i < a.atom.terms.size(); ++i) {
          const Term& tm = a.atom.terms[i];
          if (tm.is_const())
            t.consts.push_back(tm.cst);
          else if (a.counted && tm.lv == a.counted->lv)
            t.consts.push_back(*counted_value);
          else
            t.consts.push_back(value_of(tm.lv));
        }
        std::string name = render_ground_term(voc, t) + slice_suffix(a.atom.slice, step);
        f.var_names.push_back(name);
        f.var_ranges.push_back(span.base_range);
      };
      if (a.counted) {
        span.count = static_cast<int>(a.counted->values.size());
        for (ConstId v : a.counted->values) instantiate(v);
        span.hists = enumerate_histograms(span.count, span.base_range);
      } else {
        span.count = 1;
        instantiate(std::nullopt);
      }
      spans.push_back(std::move(span));
    }
    std::size_t total = 1;
    for (int r : f.var_ranges) total *= static_cast<std::size_t>(r);
    f.table.resize(total);
    std::vector<int> scope_idx(f.var_ranges.size(), 0);
    std::vector<int> arg_idx(g.args.size(), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      for (std::size_t i = f.var_ranges.size(); i-- > 0;) {
        scope_idx[i] = static_cast<int>(rem % f.var_ranges[i]);
        rem /= f.var_ranges[i];
      }
      for (std::size_t ai = 0; ai < g.args.size(); ++ai) {
        const ArgSpan& span = spans[ai];
        if (!g.args[ai].counted) {
          arg_idx[ai] = scope_idx[span.first_var];
        } else {
          std::vector<int> h(span.base_range, 0);
          for (int i = 0; i < span.count; ++i) h[scope_idx[span.first_var + i]]++;
          arg_idx[ai] = histogram_index(span.hists, h);
        }
      }
      f.table[flat] = std::exp(g.table.v[g.table.index(arg_idx)]);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<LogvarId> lv(const Atom& atom) { return atom.free_logvars(); }
std::vector<LogvarId> lv(const Arg& arg) { return arg.free_logvars(); }
std::vector<LogvarId> lv(const Parfactor& g) { return g.free_logvars(); }

// --- temporal helpers -----------------------------------------------------------------

Parfactor retag(const Parfactor& g, Slice from, Slice to) {
  Parfactor out = g;
  for (Arg& a : out.args)
    if (a.atom.slice == from) a.atom.slice = to;
  return out;
}

UnrolledPm unroll_lifted(const Pdm& pdm, int max_t) {
  if (max_t < 0) throw ModelError("unroll: negative horizon");
  const Vocabulary& voc = *pdm.voc;
  auto uvoc = std::make_shared<Vocabulary>();
  UnrolledPm out;
  for (int i = 0; i < voc.num_logvars(); ++i)
    uvoc->add_logvar(voc.logvar(i).name, voc.logvar(i).constants);
  for (int t = 0; t <= max_t; ++t) {
    for (int p = 0; p < voc.num_prvs(); ++p) {
      const Prv& prv = voc.prv(p);
      PrvId id = uvoc->add_prv(prv.name + "@" + std::to_string(t), prv.params, prv.range);
      out.prv_at_step[{p, t}] = id;
    }
  }

  auto map_pf = [&](const Parfactor& g, int t, const std::string& stamp) {
    Parfactor m = g;
    m.name = g.name + "@" + stamp;
    for (Arg& a : m.args) {
      int step = a.atom.slice == Slice::prev ? t - 1 : t;
      a.atom.prv = out.prv_at_step.at({a.atom.prv, step});
      a.atom.slice = Slice::cur;
    }
    return m;
  };

  Pm pm;
  pm.voc = uvoc;
  for (const auto& g : pdm.g0.parfactors) pm.parfactors.push_back(map_pf(g, 0, "0"));
  for (int t = 1; t <= max_t; ++t)
    for (const auto& g : pdm.g_arrow.parfactors)
      pm.parfactors.push_back(map_pf(g, t, std::to_string(t)));
  out.pm = std::move(pm);
  return out;
}

}  // namespace parlift::model
