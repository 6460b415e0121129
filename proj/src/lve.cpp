#include "parlift/lve.hpp"

#include <algorithm>
#include <cmath>

namespace parlift::lve {

using model::arg_range_size;
using model::enumerate_histograms;
using model::histogram_index;
using model::LogTable;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const std::vector<double>& xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

std::string combine_names(const std::string& a, const std::string& b) {
  std::string s = a + "*" + b;
  if (s.size() > 48) s = s.substr(0, 47) + "~";
  return s;
}

std::vector<int> dims_of(const Vocabulary& voc, const std::vector<Arg>& args) {
  std::vector<int> dims;
  dims.reserve(args.size());
  for (const Arg& a : args) dims.push_back(arg_range_size(voc, a));
  return dims;
}

}  // namespace

double log_multinomial(const std::vector<int>& h) {
  int n = 0;
  for (int c : h) n += c;
  double r = std::lgamma(n + 1.0);
  for (int c : h) r -= std::lgamma(c + 1.0);
  return r;
}

Parfactor scalar_parfactor(const std::string& name, double log_value) {
  Parfactor g;
  g.name = name;
  g.constraint = Constraint::top({});
  g.table.dims = {};
  g.table.v = {log_value};
  return g;
}

std::set<std::vector<ConstId>> instance_tuples(const Vocabulary& voc, const Parfactor& g,
                                               std::size_t arg) {
  const Arg& a = g.args.at(arg);
  auto free = a.atom.free_logvars();
  if (a.counted) std::erase(free, a.counted->lv);
  long long m = 0;
  (void)m;
  Constraint proj = g.constraint.project(free, voc, nullptr);
  std::set<std::vector<ConstId>> out;
  for (const auto& row : proj.rows(voc)) {
    auto emit = [&](std::optional<ConstId> counted_value) {
      std::vector<ConstId> t;
      t.reserve(a.atom.terms.size());
      for (const model::Term& tm : a.atom.terms) {
        if (tm.is_const())
          t.push_back(tm.cst);
        else if (a.counted && tm.lv == a.counted->lv)
          t.push_back(*counted_value);
        else
          t.push_back(row[proj.position_of(tm.lv)]);
      }
      out.insert(std::move(t));
    };
    if (a.counted)
      for (ConstId v : a.counted->values) emit(v);
    else
      emit(std::nullopt);
  }
  return out;
}

Parfactor lifted_multiply(const Vocabulary& voc, const Parfactor& g1, const Parfactor& g2) {
  // map each g2 argument onto an equal g1 argument where possible
  std::vector<int> shared(g2.args.size(), -1);
  for (std::size_t j = 0; j < g2.args.size(); ++j)
    for (std::size_t i = 0; i < g1.args.size(); ++i)
      if (g1.args[i] == g2.args[j]) shared[j] = static_cast<int>(i);

  // shared atoms must cover identical ground instances
  for (std::size_t j = 0; j < g2.args.size(); ++j)
    if (shared[j] >= 0 &&
        instance_tuples(voc, g1, shared[j]) != instance_tuples(voc, g2, j))
      throw OperatorError("lifted_multiply: misaligned instances of a shared argument");
  // unshared argument pairs over the same PRV must cover disjoint instances
  for (std::size_t j = 0; j < g2.args.size(); ++j) {
    if (shared[j] >= 0) continue;
    for (std::size_t i = 0; i < g1.args.size(); ++i) {
      if (model::key_of(g1.args[i].atom) != model::key_of(g2.args[j].atom)) continue;
      auto s1 = instance_tuples(voc, g1, i);
      auto s2 = instance_tuples(voc, g2, j);
      std::vector<std::vector<ConstId>> inter;
      std::set_intersection(s1.begin(), s1.end(), s2.begin(), s2.end(),
                            std::back_inserter(inter));
      if (!inter.empty())
        throw OperatorError("lifted_multiply: shared PRV in incompatible forms");
    }
  }

  Parfactor r;
  r.name = combine_names(g1.name, g2.name);
  r.args = g1.args;
  std::vector<int> pos2(g2.args.size());
  for (std::size_t j = 0; j < g2.args.size(); ++j) {
    if (shared[j] >= 0) {
      pos2[j] = shared[j];
    } else {
      pos2[j] = static_cast<int>(r.args.size());
      r.args.push_back(g2.args[j]);
    }
  }
  r.constraint = Constraint::join(g1.constraint, g2.constraint, voc);

  long long m1 = 1, m2 = 1;
  Constraint p1 = r.constraint.project(g1.constraint.logvars(), voc, &m1);
  Constraint p2 = r.constraint.project(g2.constraint.logvars(), voc, &m2);
  if (p1.count(voc) != g1.constraint.count(voc) || p2.count(voc) != g2.constraint.count(voc))
    throw OperatorError("lifted_multiply: constraints do not join losslessly");
  double w1 = 1.0 / static_cast<double>(m1);
  double w2 = 1.0 / static_cast<double>(m2);

  r.table.dims = dims_of(voc, r.args);
  r.table.v.assign(LogTable::flat_size(r.table.dims), 0.0);
  std::vector<int> idx, idx1(g1.args.size()), idx2(g2.args.size());
  for (std::size_t flat = 0; flat < r.table.v.size(); ++flat) {
    r.table.decode(flat, idx);
    for (std::size_t i = 0; i < g1.args.size(); ++i) idx1[i] = idx[i];
    for (std::size_t j = 0; j < g2.args.size(); ++j) idx2[j] = idx[pos2[j]];
    double a = g1.table.v[g1.table.index(idx1)];
    double b = g2.table.v[g2.table.index(idx2)];
    double va = a == kNegInf ? kNegInf : w1 * a;
    double vb = b == kNegInf ? kNegInf : w2 * b;
    r.table.v[flat] = (va == kNegInf || vb == kNegInf) ? kNegInf : va + vb;
  }
  return r;
}

Parfactor lift_sum_out(const Vocabulary& voc, const Parfactor& g, std::size_t target) {
  const Arg& t = g.args.at(target);
  auto fr = t.free_logvars();
  auto all = g.constraint.logvars();
  std::set<LogvarId> fs(fr.begin(), fr.end()), as(all.begin(), all.end());
  if (fs != as)
    throw OperatorError("lift_sum_out: argument does not cover all logvars of the parfactor");

  std::vector<Arg> rest;
  std::vector<std::size_t> rest_pos;
  for (std::size_t i = 0; i < g.args.size(); ++i)
    if (i != target) {
      rest.push_back(g.args[i]);
      rest_pos.push_back(i);
    }
  std::vector<LogvarId> rest_lvs;
  for (const Arg& a : rest) {
    auto f = a.free_logvars();
    rest_lvs.insert(rest_lvs.end(), f.begin(), f.end());
  }
  long long r_exp = 1;
  Constraint pc = g.constraint.project(rest_lvs, voc, &r_exp);

  int tdim = arg_range_size(voc, t);
  std::vector<double> weights(tdim, 0.0);
  if (t.counted) {
    int k = static_cast<int>(voc.prv(t.atom.prv).range.size());
    auto hists = enumerate_histograms(static_cast<int>(t.counted->values.size()), k);
    for (int i = 0; i < tdim; ++i) weights[i] = log_multinomial(hists[i]);
  }

  Parfactor out;
  out.name = g.name;
  out.args = rest;
  out.constraint = pc;
  out.table.dims = dims_of(voc, rest);
  out.table.v.assign(LogTable::flat_size(out.table.dims), 0.0);
  std::vector<int> ridx, idx(g.args.size());
  std::vector<double> terms(tdim);
  for (std::size_t flat = 0; flat < out.table.v.size(); ++flat) {
    out.table.decode(flat, ridx);
    for (std::size_t i = 0; i < rest_pos.size(); ++i) idx[rest_pos[i]] = ridx[i];
    for (int v = 0; v < tdim; ++v) {
      idx[target] = v;
      double x = g.table.v[g.table.index(idx)];
      terms[v] = x == kNegInf ? kNegInf : x + weights[v];
    }
    double s = logsumexp(terms);
    out.table.v[flat] = s == kNegInf ? kNegInf : static_cast<double>(r_exp) * s;
  }
  return out;
}

Parfactor count_convert(const Vocabulary& voc, const Parfactor& g, LogvarId x) {
  int where = -1;
  for (std::size_t i = 0; i < g.args.size(); ++i) {
    auto f = g.args[i].free_logvars();
    if (std::find(f.begin(), f.end(), x) != f.end()) {
      if (where >= 0)
        throw OperatorError("count_convert: logvar occurs in more than one argument");
      where = static_cast<int>(i);
    }
  }
  if (where < 0) throw OperatorError("count_convert: logvar not free in the parfactor");
  if (g.args[where].counted)
    throw OperatorError("count_convert: argument is already counted");

  auto factored = g.constraint.factor_out(x, voc);
  if (!factored)
    throw OperatorError("count_convert: constraint does not factor on the logvar");
  auto& [values, rest] = *factored;

  Parfactor out;
  out.name = g.name;
  out.args = g.args;
  out.args[where].counted = model::CountedLogvar{x, values};
  out.constraint = rest;

  int k = static_cast<int>(voc.prv(g.args[where].atom.prv).range.size());
  auto hists = enumerate_histograms(static_cast<int>(values.size()), k);

  out.table.dims = dims_of(voc, out.args);
  out.table.v.assign(LogTable::flat_size(out.table.dims), 0.0);
  std::vector<int> idx, gidx;
  for (std::size_t flat = 0; flat < out.table.v.size(); ++flat) {
    out.table.decode(flat, idx);
    gidx = idx;
    const std::vector<int>& h = hists[idx[where]];
    double acc = 0;
    for (int v = 0; v < k && acc != kNegInf; ++v) {
      if (h[v] == 0) continue;
      gidx[where] = v;
      double x2 = g.table.v[g.table.index(gidx)];
      acc = x2 == kNegInf ? kNegInf : acc + h[v] * x2;
    }
    out.table.v[flat] = acc;
  }
  return out;
}

std::pair<std::optional<Parfactor>, std::optional<Parfactor>> split_arg_by_instances(
    const Vocabulary& voc, const Parfactor& g, std::size_t target,
    const std::set<std::vector<ConstId>>& instances) {
  const Arg& a = g.args.at(target);
  if (a.counted) throw OperatorError("split_arg_by_instances: counted argument");
  // classify each constraint row by the atom instance it induces
  auto rows = g.constraint.rows(voc);
  std::vector<std::vector<ConstId>> in_rows, out_rows;
  for (const auto& row : rows) {
    std::vector<ConstId> t;
    for (const model::Term& tm : a.atom.terms)
      t.push_back(tm.is_const() ? tm.cst : row[g.constraint.position_of(tm.lv)]);
    (instances.count(t) ? in_rows : out_rows).push_back(row);
  }
  auto make = [&](std::vector<std::vector<ConstId>> rs,
                  const char* suffix) -> std::optional<Parfactor> {
    if (rs.empty()) return std::nullopt;
    Parfactor p = g;
    p.name = g.name + suffix;
    p.constraint = Constraint::extensional(g.constraint.logvars(), std::move(rs));
    return p;
  };
  return {make(std::move(in_rows), "|in"), make(std::move(out_rows), "|out")};
}

std::vector<Parfactor> absorb_evidence(const Vocabulary& voc, const Parfactor& g,
                                       const EvidenceGroup& obs) {
  int where = -1;
  for (std::size_t i = 0; i < g.args.size(); ++i) {
    if (model::key_of(g.args[i].atom) == AtomKey{obs.prv, obs.slice}) {
      if (g.args[i].counted)
        throw OperatorError("absorb_evidence: observation of a counted argument");
      if (where >= 0) throw OperatorError("absorb_evidence: PRV occurs twice");
      where = static_cast<int>(i);
    }
  }
  if (where < 0) return {g};

  auto [covered, rest] = split_arg_by_instances(voc, g, where, obs.instances);
  std::vector<Parfactor> out;
  if (covered) {
    const Parfactor& c = *covered;
    Parfactor absorbed;
    absorbed.name = g.name + "|ev";
    std::vector<std::size_t> rest_pos;
    std::vector<LogvarId> rest_lvs;
    for (std::size_t i = 0; i < c.args.size(); ++i)
      if (i != static_cast<std::size_t>(where)) {
        absorbed.args.push_back(c.args[i]);
        rest_pos.push_back(i);
        auto f = c.args[i].free_logvars();
        rest_lvs.insert(rest_lvs.end(), f.begin(), f.end());
      }
    long long m = 1;
    absorbed.constraint = c.constraint.project(rest_lvs, voc, &m);
    absorbed.table.dims = dims_of(voc, absorbed.args);
    absorbed.table.v.assign(LogTable::flat_size(absorbed.table.dims), 0.0);
    std::vector<int> ridx, idx(c.args.size());
    for (std::size_t flat = 0; flat < absorbed.table.v.size(); ++flat) {
      absorbed.table.decode(flat, ridx);
      for (std::size_t i = 0; i < rest_pos.size(); ++i) idx[rest_pos[i]] = ridx[i];
      idx[where] = obs.value;
      double x = c.table.v[c.table.index(idx)];
      absorbed.table.v[flat] = x == kNegInf ? kNegInf : static_cast<double>(m) * x;
    }
    out.push_back(std::move(absorbed));
  }
  if (rest) out.push_back(std::move(*rest));
  return out;
}

std::vector<Parfactor> ground_logvar(const Vocabulary& voc, const Parfactor& g, LogvarId x,
                                     InferenceStats* stats) {
  if (!g.constraint.has_logvar(x))
    throw OperatorError("ground_logvar: logvar not free in the parfactor");
  if (stats)
    stats->record(Event::Kind::ground, g.name, voc.logvar(x).name);
  std::vector<Parfactor> out;
  for (const auto& [value, rest] : g.constraint.group_by(x, voc)) {
    Parfactor p = g;
    p.name = g.name + "[" + voc.logvar(x).name + "=" + voc.logvar(x).constants.at(value) + "]";
    for (Arg& a : p.args)
      for (model::Term& t : a.atom.terms)
        if (!t.is_const() && t.lv == x) t = model::Term::constant(value);
    p.constraint = rest;
    out.push_back(std::move(p));
  }
  return out;
}

Parfactor expand_crv(const Vocabulary& voc, const Parfactor& g, std::size_t target) {
  const Arg& a = g.args.at(target);
  if (!a.counted) throw OperatorError("expand_crv: argument is not counted");
  const auto& values = a.counted->values;
  int n = static_cast<int>(values.size());
  int k = static_cast<int>(voc.prv(a.atom.prv).range.size());
  auto hists = enumerate_histograms(n, k);

  Parfactor out;
  out.name = g.name + "!";
  out.constraint = g.constraint;
  for (std::size_t i = 0; i < g.args.size(); ++i) {
    if (i != target) {
      out.args.push_back(g.args[i]);
      continue;
    }
    for (ConstId v : values) {
      Arg e;
      e.atom = a.atom;
      for (model::Term& t : e.atom.terms)
        if (!t.is_const() && t.lv == a.counted->lv) t = model::Term::constant(v);
      out.args.push_back(std::move(e));
    }
  }
  out.table.dims = dims_of(voc, out.args);
  out.table.v.assign(LogTable::flat_size(out.table.dims), 0.0);
  std::vector<int> idx, gidx(g.args.size());
  for (std::size_t flat = 0; flat < out.table.v.size(); ++flat) {
    out.table.decode(flat, idx);
    std::vector<int> h(k, 0);
    for (int i = 0; i < n; ++i) h[idx[target + i]]++;
    for (std::size_t i = 0; i < g.args.size(); ++i) {
      if (i < target)
        gidx[i] = idx[i];
      else if (i == target)
        gidx[i] = histogram_index(hists, h);
      else
        gidx[i] = idx[i + n - 1];
    }
    out.table.v[flat] = g.table.v[g.table.index(gidx)];
  }
  return out;
}

Parfactor crv_split_constant(const Vocabulary& voc, const Parfactor& g, std::size_t target,
                             ConstId constant) {
  const Arg& a = g.args.at(target);
  if (!a.counted) throw OperatorError("crv_split_constant: argument is not counted");
  const auto& values = a.counted->values;
  if (std::find(values.begin(), values.end(), constant) == values.end())
    throw OperatorError("crv_split_constant: constant not covered");
  int k = static_cast<int>(voc.prv(a.atom.prv).range.size());
  int n = static_cast<int>(values.size());
  auto hists = enumerate_histograms(n, k);
  std::vector<ConstId> rest_values;
  for (ConstId v : values)
    if (v != constant) rest_values.push_back(v);
  auto rest_hists = enumerate_histograms(n - 1, k);

  Parfactor out;
  out.name = g.name + "/";
  out.constraint = g.constraint;
  for (std::size_t i = 0; i < g.args.size(); ++i) {
    if (i != target) {
      out.args.push_back(g.args[i]);
      continue;
    }
    Arg ground;
    ground.atom = a.atom;
    for (model::Term& t : ground.atom.terms)
      if (!t.is_const() && t.lv == a.counted->lv) t = model::Term::constant(constant);
    out.args.push_back(std::move(ground));
    if (!rest_values.empty()) {
      Arg rest = a;
      rest.counted->values = rest_values;
      out.args.push_back(std::move(rest));
    }
  }
  bool has_rest = !rest_values.empty();
  out.table.dims = dims_of(voc, out.args);
  out.table.v.assign(LogTable::flat_size(out.table.dims), 0.0);
  std::vector<int> idx, gidx(g.args.size());
  for (std::size_t flat = 0; flat < out.table.v.size(); ++flat) {
    out.table.decode(flat, idx);
    std::vector<int> h(k, 0);
    h[idx[target]] = 1;
    if (has_rest) {
      const std::vector<int>& hr = rest_hists[idx[target + 1]];
      for (int v = 0; v < k; ++v) h[v] += hr[v];
    }
    for (std::size_t i = 0; i < g.args.size(); ++i) {
      if (i < target)
        gidx[i] = idx[i];
      else if (i == target)
        gidx[i] = histogram_index(hists, h);
      else
        gidx[i] = idx[i + (has_rest ? 1 : 0)];
    }
    out.table.v[flat] = g.table.v[g.table.index(gidx)];
  }
  return out;
}

}  // namespace parlift::lve
