#include "parlift/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace parlift::oracle {

int GroundFactorGraph::add_var(const std::string& name, int range) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    if (ranges_[it->second] != range) throw OracleError("variable " + name + " redeclared");
    return it->second;
  }
  int id = static_cast<int>(names_.size());
  names_.push_back(name);
  ranges_.push_back(range);
  index_[name] = id;
  return id;
}

int GroundFactorGraph::var_index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw OracleError("unknown ground variable '" + name + "'");
  return it->second;
}

void GroundFactorGraph::add_factor(Factor f) {
  std::size_t want = 1;
  for (int v : f.vars) want *= static_cast<std::size_t>(ranges_.at(v));
  if (f.table.size() != want) throw OracleError("factor table size mismatch");
  factors_.push_back(std::move(f));
}

void GroundFactorGraph::add_ground_factor(const model::GroundFactorData& data) {
  Factor f;
  for (std::size_t i = 0; i < data.var_names.size(); ++i)
    f.vars.push_back(add_var(data.var_names[i], data.var_ranges[i]));
  f.table = data.table;
  add_factor(std::move(f));
}

GroundFactorGraph unroll(const model::Pdm& pdm, int max_t) {
  if (max_t < 0) throw OracleError("unroll: negative horizon");
  GroundFactorGraph g;
  const model::Vocabulary& voc = *pdm.voc;
  // declare every randvar of every step, even if some factor misses it
  for (int t = 0; t <= max_t; ++t) {
    for (int p = 0; p < voc.num_prvs(); ++p) {
      model::Atom a = model::canonical_atom(voc, p, model::Slice::cur);
      auto top = model::Constraint::top(a.free_logvars());
      for (const auto& term : model::gr_atom(voc, a, top))
        g.add_var(model::ground_var_name(voc, term, t),
                  static_cast<int>(voc.prv(p).range.size()));
    }
  }
  for (const auto& pf : pdm.g0.parfactors)
    for (const auto& data : model::gr(voc, pf, 0)) g.add_ground_factor(data);
  for (int t = 1; t <= max_t; ++t)
    for (const auto& pf : pdm.g_arrow.parfactors)
      for (const auto& data : model::gr(voc, pf, t)) g.add_ground_factor(data);
  return g;
}

namespace {

struct Work {
  std::vector<int> vars;
  std::vector<double> table;
};

std::size_t table_size(const GroundFactorGraph& g, const std::vector<int>& vars) {
  std::size_t n = 1;
  for (int v : vars) n *= static_cast<std::size_t>(g.range(v));
  return n;
}

// evidence slicing: fix observed variables, drop them from the scope
Work slice_evidence(const GroundFactorGraph& g, const Factor& f,
                    const std::map<int, int>& observed) {
  Work w;
  std::vector<int> keep_pos;
  for (std::size_t i = 0; i < f.vars.size(); ++i)
    if (!observed.count(f.vars[i])) {
      keep_pos.push_back(static_cast<int>(i));
      w.vars.push_back(f.vars[i]);
    }
  w.table.assign(table_size(g, w.vars), 0.0);
  std::vector<int> idx(f.vars.size(), 0);
  std::size_t total = 1;
  for (int v : f.vars) total *= static_cast<std::size_t>(g.range(v));
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = f.vars.size(); i-- > 0;) {
      idx[i] = static_cast<int>(rem % g.range(f.vars[i]));
      rem /= g.range(f.vars[i]);
    }
    bool match = true;
    for (std::size_t i = 0; i < f.vars.size(); ++i) {
      auto it = observed.find(f.vars[i]);
      if (it != observed.end() && idx[i] != it->second) match = false;
    }
    if (!match) continue;
    std::size_t out = 0;
    for (int p : keep_pos) out = out * g.range(f.vars[p]) + idx[p];
    w.table[out] += 0;  // ensure slot exists (no-op, keeps intent clear)
    w.table[out] = f.table[flat];
  }
  return w;
}

Work multiply(const GroundFactorGraph& g, const Work& a, const Work& b) {
  Work r;
  r.vars = a.vars;
  for (int v : b.vars)
    if (std::find(r.vars.begin(), r.vars.end(), v) == r.vars.end()) r.vars.push_back(v);
  std::sort(r.vars.begin(), r.vars.end());
  r.table.assign(table_size(g, r.vars), 0.0);
  std::vector<int> pos_a, pos_b;
  for (int v : a.vars)
    pos_a.push_back(static_cast<int>(std::find(r.vars.begin(), r.vars.end(), v) - r.vars.begin()));
  for (int v : b.vars)
    pos_b.push_back(static_cast<int>(std::find(r.vars.begin(), r.vars.end(), v) - r.vars.begin()));
  std::vector<int> idx(r.vars.size(), 0);
  for (std::size_t flat = 0; flat < r.table.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = r.vars.size(); i-- > 0;) {
      idx[i] = static_cast<int>(rem % g.range(r.vars[i]));
      rem /= g.range(r.vars[i]);
    }
    std::size_t fa = 0, fb = 0;
    for (std::size_t i = 0; i < pos_a.size(); ++i) fa = fa * g.range(a.vars[i]) + idx[pos_a[i]];
    for (std::size_t i = 0; i < pos_b.size(); ++i) fb = fb * g.range(b.vars[i]) + idx[pos_b[i]];
    r.table[flat] = a.table[fa] * b.table[fb];
  }
  return r;
}

Work sum_out(const GroundFactorGraph& g, const Work& a, int var) {
  Work r;
  int drop = -1;
  for (std::size_t i = 0; i < a.vars.size(); ++i)
    if (a.vars[i] == var) drop = static_cast<int>(i);
  if (drop < 0) return a;
  for (int v : a.vars)
    if (v != var) r.vars.push_back(v);
  r.table.assign(table_size(g, r.vars), 0.0);
  std::vector<int> idx(a.vars.size(), 0);
  for (std::size_t flat = 0; flat < a.table.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = a.vars.size(); i-- > 0;) {
      idx[i] = static_cast<int>(rem % g.range(a.vars[i]));
      rem /= g.range(a.vars[i]);
    }
    std::size_t out = 0;
    for (std::size_t i = 0; i < a.vars.size(); ++i)
      if (static_cast<int>(i) != drop) out = out * g.range(a.vars[i]) + idx[i];
    r.table[out] += a.table[flat];
  }
  return r;
}

void rescale(Work& w) {
  double mx = 0;
  for (double x : w.table) mx = std::max(mx, x);
  if (mx > 0 && (mx > 1e100 || mx < 1e-100))
    for (double& x : w.table) x /= mx;
}

std::map<int, int> resolve_evidence(const GroundFactorGraph& g, const GroundEvidence& evidence) {
  std::map<int, int> observed;
  for (const auto& [name, value] : evidence) {
    int v = g.var_index(name);
    if (value < 0 || value >= g.range(v))
      throw OracleError("evidence value out of range for " + name);
    observed[v] = value;
  }
  return observed;
}

}  // namespace

std::vector<double> ground_ve(const GroundFactorGraph& g, const std::string& var,
                              const GroundEvidence& evidence, double cost_cap) {
  int query = g.var_index(var);
  auto observed = resolve_evidence(g, evidence);
  if (observed.count(query)) throw OracleError("query variable is observed");

  std::vector<Work> work;
  for (const Factor& f : g.factors()) work.push_back(slice_evidence(g, f, observed));

  // variables to eliminate (everything unobserved except the query), plus
  // isolated unobserved variables that appear in no factor: those marginalise
  // to a constant and can be ignored entirely.
  std::set<int> present;
  for (const Work& w : work) present.insert(w.vars.begin(), w.vars.end());

  // adjacency for min-degree
  std::map<int, std::set<int>> adj;
  for (const Work& w : work)
    for (int a : w.vars)
      for (int b : w.vars)
        if (a != b) adj[a].insert(b);

  std::set<int> to_eliminate(present.begin(), present.end());
  to_eliminate.erase(query);

  double cost = 0;
  while (!to_eliminate.empty()) {
    int best = -1;
    std::size_t best_deg = 0;
    for (int v : to_eliminate) {
      std::size_t d = adj[v].size();
      if (best < 0 || d < best_deg) {
        best = v;
        best_deg = d;
      }
    }
    // gather factors mentioning best
    Work acc;
    acc.table = {1.0};
    bool any = false;
    std::vector<Work> rest;
    for (Work& w : work) {
      if (std::find(w.vars.begin(), w.vars.end(), best) != w.vars.end()) {
        acc = any ? multiply(g, acc, w) : std::move(w);
        any = true;
        cost += static_cast<double>(acc.table.size());
        if (cost > cost_cap) throw OracleError("elimination cost cap exceeded");
      } else {
        rest.push_back(std::move(w));
      }
    }
    if (any) {
      Work summed = sum_out(g, acc, best);
      rescale(summed);
      rest.push_back(std::move(summed));
    }
    work = std::move(rest);
    // update adjacency: neighbours of best become a clique
    auto nbrs = adj[best];
    nbrs.erase(best);
    for (int a : nbrs) {
      adj[a].erase(best);
      for (int b : nbrs)
        if (a != b) adj[a].insert(b);
    }
    adj.erase(best);
    to_eliminate.erase(best);
  }

  std::vector<double> dist(g.range(query), 1.0);
  for (const Work& w : work) {
    if (w.vars.empty()) continue;  // scalar, cancels in normalisation
    if (w.vars.size() != 1 || w.vars[0] != query)
      throw OracleError("internal: leftover factor after elimination");
    for (int i = 0; i < g.range(query); ++i) dist[i] *= w.table[i];
  }
  double z = 0;
  for (double x : dist) z += x;
  if (z <= 0) throw OracleError("query has zero probability mass");
  for (double& x : dist) x /= z;
  return dist;
}

std::vector<double> enumerate_marginal(const GroundFactorGraph& g, const std::string& var,
                                       const GroundEvidence& evidence) {
  int query = g.var_index(var);
  auto observed = resolve_evidence(g, evidence);
  std::vector<int> vars;
  std::set<int> present;
  for (const Factor& f : g.factors()) present.insert(f.vars.begin(), f.vars.end());
  present.insert(query);
  for (int v : present)
    if (!observed.count(v)) vars.push_back(v);
  std::size_t total = 1;
  for (int v : vars) {
    total *= static_cast<std::size_t>(g.range(v));
    if (total > (1u << 26)) throw OracleError("enumeration too large");
  }
  std::vector<double> dist(g.range(query), 0.0);
  std::vector<int> assign(g.num_vars(), -1);
  for (const auto& [v, val] : observed) assign[v] = val;
  std::vector<int> idx(vars.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = vars.size(); i-- > 0;) {
      idx[i] = static_cast<int>(rem % g.range(vars[i]));
      rem /= g.range(vars[i]);
    }
    for (std::size_t i = 0; i < vars.size(); ++i) assign[vars[i]] = idx[i];
    double p = 1.0;
    for (const Factor& f : g.factors()) {
      std::size_t fi = 0;
      for (int v : f.vars) fi = fi * g.range(v) + assign[v];
      p *= f.table[fi];
    }
    dist[assign[query]] += p;
  }
  double z = 0;
  for (double x : dist) z += x;
  if (z <= 0) throw OracleError("query has zero probability mass");
  for (double& x : dist) x /= z;
  return dist;
}

std::vector<double> joint_table(const GroundFactorGraph& g, const std::vector<std::string>& vars) {
  std::vector<int> keep;
  for (const auto& name : vars) keep.push_back(g.var_index(name));
  std::set<int> present(keep.begin(), keep.end());
  for (const Factor& f : g.factors()) present.insert(f.vars.begin(), f.vars.end());
  std::vector<int> all(present.begin(), present.end());
  std::size_t total = 1;
  for (int v : all) {
    total *= static_cast<std::size_t>(g.range(v));
    if (total > (1u << 26)) throw OracleError("joint table too large");
  }
  std::size_t out_size = 1;
  for (int v : keep) out_size *= static_cast<std::size_t>(g.range(v));
  std::vector<double> out(out_size, 0.0);
  std::vector<int> assign(g.num_vars(), 0);
  std::vector<int> idx(all.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = all.size(); i-- > 0;) {
      idx[i] = static_cast<int>(rem % g.range(all[i]));
      rem /= g.range(all[i]);
    }
    for (std::size_t i = 0; i < all.size(); ++i) assign[all[i]] = idx[i];
    double p = 1.0;
    for (const Factor& f : g.factors()) {
      std::size_t fi = 0;
      for (int v : f.vars) fi = fi * g.range(v) + assign[v];
      p *= f.table[fi];
    }
    std::size_t oi = 0;
    for (int v : keep) oi = oi * g.range(v) + assign[v];
    out[oi] += p;
  }
  return out;
}

}  // namespace parlift::oracle
