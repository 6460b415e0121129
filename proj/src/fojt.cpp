#include "parlift/fojt.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace parlift::fojt {

using lve::Event;
using lve::InferenceStats;
using model::Arg;
using model::ConstId;
using model::Constraint;
using model::LogvarId;
using model::Slice;

namespace {

// Substitutes constraint logvars that admit a single value into the atoms
// and drops them from the constraint.  Keeps split pieces and ground pieces
// in one canonical form so they can be matched as shared arguments.
Parfactor normalize(const Vocabulary& voc, Parfactor g) {
  for (;;) {
    LogvarId single = -1;
    ConstId value = -1;
    for (LogvarId lv : g.constraint.logvars()) {
      auto f = g.constraint.factor_out(lv, voc);
      if (f && f->first.size() == 1) {
        single = lv;
        value = f->first[0];
        break;
      }
    }
    if (single < 0) return g;
    auto f = g.constraint.factor_out(single, voc);
    for (Arg& a : g.args)
      for (model::Term& t : a.atom.terms)
        if (!t.is_const() && t.lv == single) t = model::Term::constant(value);
    g.constraint = f->second;
  }
}

std::string atom_sort_key(const Vocabulary& voc, const Atom& a) {
  return model::render_atom(voc, a, true);
}

std::string pf_signature(const Vocabulary& voc, const Parfactor& g) {
  std::ostringstream os;
  for (const Arg& a : g.args) os << model::render_arg(voc, a, true) << ";";
  os << "|" << g.constraint.count(voc) << "|" << g.constraint.logvars().size();
  for (LogvarId lv : g.constraint.logvars()) os << "," << lv;
  return os.str();
}

bool overlapping_unequal(const std::set<std::vector<ConstId>>& a,
                         const std::set<std::vector<ConstId>>& b) {
  if (a == b) return false;
  for (const auto& t : a)
    if (b.count(t)) return true;
  return false;
}

struct Member {
  std::size_t pf;
  std::size_t arg;
};

std::vector<Member> members_of(const std::vector<Parfactor>& work, AtomKey key) {
  std::vector<Member> out;
  for (std::size_t i = 0; i < work.size(); ++i)
    for (std::size_t j = 0; j < work[i].args.size(); ++j)
      if (model::key_of(work[i].args[j].atom) == key) out.push_back({i, j});
  return out;
}

// Refines the working set so that any two arguments over `key` cover equal
// or disjoint instance sets.  Returns true if a split was committed.
bool align_instances(std::vector<Parfactor>& work, AtomKey key, const Vocabulary& voc,
                     InferenceStats* stats) {
  auto members = members_of(work, key);
  std::vector<std::set<std::vector<ConstId>>> sets;
  sets.reserve(members.size());
  for (const Member& m : members) sets.push_back(lve::instance_tuples(voc, work[m.pf], m.arg));
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = 0; j < members.size(); ++j) {
      if (i == j || !overlapping_unequal(sets[i], sets[j])) continue;
      std::size_t victim;
      if (!work[members[i].pf].args[members[i].arg].is_crv())
        victim = i;
      else if (!work[members[j].pf].args[members[j].arg].is_crv())
        victim = j;
      else
        continue;  // two counted forms; grounding fallback handles it
      std::set<std::vector<ConstId>> inter;
      std::set_intersection(sets[i].begin(), sets[i].end(), sets[j].begin(), sets[j].end(),
                            std::inserter(inter, inter.begin()));
      const Member& m = members[victim];
      auto [in_part, out_part] =
          lve::split_arg_by_instances(voc, work[m.pf], m.arg, inter);
      if (stats)
        stats->record(Event::Kind::split, work[m.pf].name,
                      model::render_atom(voc, work[m.pf].args[m.arg].atom, true));
      std::vector<Parfactor> pieces;
      if (in_part) pieces.push_back(normalize(voc, std::move(*in_part)));
      if (out_part) pieces.push_back(normalize(voc, std::move(*out_part)));
      work.erase(work.begin() + static_cast<long>(m.pf));
      for (auto& p : pieces) work.push_back(std::move(p));
      return true;
    }
  }
  return false;
}

struct GroupPlan {
  std::vector<std::size_t> pf_indexes;       // parfactors to multiply
  std::map<std::size_t, LogvarId> conversions;  // pf index -> logvar to count-convert first
  Arg target_form;                            // the argument to sum out after the product
  std::vector<LogvarId> excess;               // logvars to count-convert in the product
  int total_conversions = 0;
};

// Plans the elimination of one instance-group of `key` without touching any
// table.  Returns nullopt when the group cannot be eliminated by lifted
// summing out plus count conversion.
std::optional<GroupPlan> plan_group(const std::vector<Parfactor>& work, AtomKey key,
                                    const Vocabulary& voc) {
  auto members = members_of(work, key);
  if (members.empty()) return std::nullopt;
  std::vector<std::set<std::vector<ConstId>>> sets;
  for (const Member& m : members) sets.push_back(lve::instance_tuples(voc, work[m.pf], m.arg));
  // pick the group of the first member
  std::vector<std::size_t> group;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (sets[i] == sets[0])
      group.push_back(i);
    else if (overlapping_unequal(sets[i], sets[0]))
      return std::nullopt;  // needs alignment first
  }

  GroupPlan plan;
  // counted form wins; all counted members must agree on the spec
  std::optional<model::CountedLogvar> spec;
  for (std::size_t gi : group) {
    const Arg& a = work[members[gi].pf].args[members[gi].arg];
    if (!a.is_crv()) continue;
    if (!spec)
      spec = a.counted;
    else if (!(*spec == *a.counted))
      return std::nullopt;
  }
  for (std::size_t gi : group) {
    const Member& m = members[gi];
    const Parfactor& g = work[m.pf];
    const Arg& a = g.args[m.arg];
    if (plan.pf_indexes.empty() ||
        std::find(plan.pf_indexes.begin(), plan.pf_indexes.end(), m.pf) == plan.pf_indexes.end())
      plan.pf_indexes.push_back(m.pf);
    if (!spec || a.is_crv()) continue;
    // this PRV form needs conversion to the counted spec
    int pos = -1;
    const auto& params = voc.prv(a.atom.prv).params;
    for (std::size_t p = 0; p < params.size(); ++p)
      if (params[p] == spec->lv) pos = static_cast<int>(p);
    if (pos < 0) return std::nullopt;
    const model::Term& t = a.atom.terms[pos];
    if (t.is_const() || t.lv != spec->lv) return std::nullopt;
    int occurrences = 0;
    for (const Arg& other : g.args) {
      auto f = other.free_logvars();
      if (std::find(f.begin(), f.end(), spec->lv) != f.end()) ++occurrences;
    }
    if (occurrences != 1) return std::nullopt;
    auto factored = g.constraint.factor_out(spec->lv, voc);
    if (!factored || factored->first != spec->values) return std::nullopt;
    if (plan.conversions.count(m.pf)) return std::nullopt;
    plan.conversions[m.pf] = spec->lv;
    ++plan.total_conversions;
  }

  // the target argument once every member shares one form
  {
    const Member& m0 = members[group[0]];
    plan.target_form = work[m0.pf].args[m0.arg];
    if (spec) plan.target_form.counted = spec;
  }

  // symbolic union of arguments and free logvars after the conversions
  std::vector<Arg> union_args;
  std::set<LogvarId> union_lvs;
  for (std::size_t pf : plan.pf_indexes) {
    for (std::size_t ai = 0; ai < work[pf].args.size(); ++ai) {
      Arg a = work[pf].args[ai];
      auto conv = plan.conversions.find(pf);
      if (conv != plan.conversions.end()) {
        auto f = a.free_logvars();
        if (std::find(f.begin(), f.end(), conv->second) != f.end()) {
          auto factored = work[pf].constraint.factor_out(conv->second, voc);
          a.counted = model::CountedLogvar{conv->second, factored->first};
        }
      }
      if (std::find(union_args.begin(), union_args.end(), a) == union_args.end())
        union_args.push_back(a);
    }
    for (LogvarId lv : work[pf].constraint.logvars())
      if (!plan.conversions.count(pf) || plan.conversions.at(pf) != lv) union_lvs.insert(lv);
  }

  auto target_free = plan.target_form.free_logvars();
  std::set<LogvarId> covered(target_free.begin(), target_free.end());
  for (LogvarId lv : union_lvs) {
    if (covered.count(lv)) continue;
    // count-convert lv in the product: it must sit in exactly one argument
    int occurrences = 0;
    bool counted_arg = false;
    for (const Arg& a : union_args) {
      auto f = a.free_logvars();
      if (std::find(f.begin(), f.end(), lv) != f.end()) {
        ++occurrences;
        counted_arg = a.is_crv();
      }
    }
    if (occurrences != 1 || counted_arg) return std::nullopt;
    plan.excess.push_back(lv);
    ++plan.total_conversions;
  }
  std::sort(plan.excess.begin(), plan.excess.end());
  return plan;
}

}  // namespace

Parfactor multiply_all(std::vector<Parfactor> work, const Vocabulary& voc,
                       InferenceStats* stats) {
  if (work.empty()) throw FojtError("multiply_all: empty set");
  for (;;) {
    // align every shared key before multiplying
    std::set<AtomKey> keys;
    for (const Parfactor& g : work)
      for (const Arg& a : g.args) keys.insert(model::key_of(a.atom));
    bool split = false;
    for (AtomKey key : keys)
      if (align_instances(work, key, voc, stats)) {
        split = true;
        break;
      }
    if (!split) break;
  }
  Parfactor acc = work[0];
  for (std::size_t i = 1; i < work.size(); ++i) acc = lve::lifted_multiply(voc, acc, work[i]);
  return acc;
}

std::vector<Parfactor> consolidate(std::vector<Parfactor> work, const Vocabulary& voc) {
  std::map<std::string, std::size_t> seen;
  std::vector<Parfactor> out;
  for (Parfactor& g : work) {
    std::string sig = pf_signature(voc, g);
    auto it = seen.find(sig);
    if (it == seen.end()) {
      seen[sig] = out.size();
      out.push_back(std::move(g));
      continue;
    }
    Parfactor& dst = out[it->second];
    if (dst.args == g.args && dst.constraint == g.constraint) {
      for (std::size_t i = 0; i < dst.table.v.size(); ++i) dst.table.v[i] += g.table.v[i];
    } else {
      out.push_back(std::move(g));
    }
  }
  std::stable_sort(out.begin(), out.end(), [&](const Parfactor& a, const Parfactor& b) {
    return pf_signature(voc, a) < pf_signature(voc, b);
  });
  return out;
}

std::vector<Parfactor> eliminate_atoms(std::vector<Parfactor> work, const KeepPredicate& keep,
                                       const Vocabulary& voc, InferenceStats* stats) {
  auto target_keys = [&]() {
    std::map<std::string, AtomKey> keys;  // sorted by rendered name for determinism
    for (const Parfactor& g : work)
      for (const Arg& a : g.args)
        if (!keep(a)) keys.emplace(atom_sort_key(voc, a.atom), model::key_of(a.atom));
    return keys;
  };

  auto execute = [&](AtomKey key, const GroupPlan& plan) {
    std::vector<lve::Event> pending;
    auto note = [&](Event::Kind kind, const std::string& pf, const std::string& detail) {
      if (stats) pending.push_back(Event{kind, pf, detail, stats->context});
    };
    std::vector<Parfactor> pool;
    for (std::size_t pf : plan.pf_indexes) {
      auto conv = plan.conversions.find(pf);
      if (conv == plan.conversions.end()) {
        pool.push_back(work[pf]);
      } else {
        pool.push_back(lve::count_convert(voc, work[pf], conv->second));
        note(Event::Kind::count_convert, work[pf].name, voc.logvar(conv->second).name);
      }
    }
    Parfactor product = pool[0];
    for (std::size_t i = 1; i < pool.size(); ++i)
      product = lve::lifted_multiply(voc, product, pool[i]);
    for (LogvarId lv : plan.excess) {
      product = lve::count_convert(voc, product, lv);
      note(Event::Kind::count_convert, product.name, voc.logvar(lv).name);
    }
    std::size_t target = product.args.size();
    for (std::size_t i = 0; i < product.args.size(); ++i)
      if (product.args[i].atom == plan.target_form.atom &&
          product.args[i].counted == plan.target_form.counted)
        target = i;
    if (target == product.args.size()) {
      // conversions may have re-counted the target form
      for (std::size_t i = 0; i < product.args.size(); ++i)
        if (model::key_of(product.args[i].atom) == key) target = i;
    }
    if (target == product.args.size()) throw FojtError("eliminate: lost the target argument");
    Parfactor result = lve::lift_sum_out(voc, product, target);
    note(Event::Kind::sum_out, product.name,
         model::render_arg(voc, product.args[target], true));
    // commit: drop consumed parfactors, keep the result
    std::vector<Parfactor> next;
    for (std::size_t i = 0; i < work.size(); ++i)
      if (std::find(plan.pf_indexes.begin(), plan.pf_indexes.end(), i) == plan.pf_indexes.end())
        next.push_back(std::move(work[i]));
    next.push_back(normalize(voc, std::move(result)));
    work = std::move(next);
    if (stats)
      stats->events.insert(stats->events.end(), pending.begin(), pending.end());
  };

  for (;;) {
    auto targets = target_keys();
    if (targets.empty()) break;

    bool progressed = false;
    // alignment splits first so instance groups are well defined
    for (const auto& [name, key] : targets) {
      if (align_instances(work, key, voc, stats)) {
        progressed = true;
        break;
      }
    }
    if (progressed) continue;

    // lifted summing out without conversions, then with
    for (int phase = 1; phase <= 2 && !progressed; ++phase) {
      for (const auto& [name, key] : targets) {
        auto plan = plan_group(work, key, voc);
        if (!plan) continue;
        if (phase == 1 && plan->total_conversions > 0) continue;
        try {
          execute(key, *plan);
          progressed = true;
          break;
        } catch (const lve::OperatorError&) {
          // plan was too optimistic (constraint did not factor); next option
        }
      }
    }
    if (progressed) continue;

    // grounding fallback: the free logvar occurring in the fewest parfactors
    std::set<std::size_t> involved;
    for (const auto& [name, key] : targets)
      for (const Member& m : members_of(work, key)) involved.insert(m.pf);
    std::map<std::string, std::pair<LogvarId, int>> candidates;  // name -> (lv, #parfactors)
    for (std::size_t pf : involved) {
      for (LogvarId lv : work[pf].constraint.logvars()) {
        int count = 0;
        for (const Parfactor& g : work) count += g.constraint.has_logvar(lv) ? 1 : 0;
        candidates.emplace(voc.logvar(lv).name, std::make_pair(lv, count));
      }
    }
    if (!candidates.empty()) {
      LogvarId chosen = -1;
      int best = 0;
      for (const auto& [name, lc] : candidates)
        if (chosen < 0 || lc.second < best) {
          chosen = lc.first;
          best = lc.second;
        }
      std::vector<Parfactor> next;
      for (Parfactor& g : work) {
        if (g.constraint.has_logvar(chosen)) {
          for (Parfactor& piece : lve::ground_logvar(voc, g, chosen, stats))
            next.push_back(normalize(voc, std::move(piece)));
        } else {
          next.push_back(std::move(g));
        }
      }
      work = std::move(next);
      continue;
    }
    // no free logvar left: expand a counted argument of some target key
    bool expanded = false;
    for (const auto& [name, key] : targets) {
      for (const Member& m : members_of(work, key)) {
        if (!work[m.pf].args[m.arg].is_crv()) continue;
        Parfactor e = lve::expand_crv(voc, work[m.pf], m.arg);
        if (stats)
          stats->record(Event::Kind::expand_crv, work[m.pf].name,
                        model::render_arg(voc, work[m.pf].args[m.arg], true));
        work[m.pf] = std::move(e);
        expanded = true;
        break;
      }
      if (expanded) break;
    }
    if (!expanded) throw FojtError("eliminate: no applicable operator");
  }
  return consolidate(std::move(work), voc);
}

// --- Parcluster / FoJtree ----------------------------------------------------

bool Parcluster::contains(AtomKey key) const {
  for (const Atom& a : prvs)
    if (model::key_of(a) == key) return true;
  return false;
}

std::set<AtomKey> Parcluster::keys() const {
  std::set<AtomKey> out;
  for (const Atom& a : prvs) out.insert(model::key_of(a));
  return out;
}

std::vector<int> FoJtree::neighbors(int i) const {
  std::vector<int> out;
  for (const auto& [a, b] : edges) {
    if (a == i) out.push_back(b);
    if (b == i) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::set<Atom> FoJtree::separator(int i, int j) const {
  std::set<Atom> out;
  for (const Atom& a : nodes.at(i).prvs)
    if (nodes.at(j).prvs.count(a)) out.insert(a);
  return out;
}

bool FoJtree::adjacent(int i, int j) const {
  std::pair<int, int> e{std::min(i, j), std::max(i, j)};
  return std::find(edges.begin(), edges.end(), e) != edges.end();
}

FoJtree build_fojt(const model::Pm& pm) {
  const Vocabulary& voc = *pm.voc;
  FoJtree t;
  t.voc = pm.voc;
  if (pm.parfactors.empty()) throw FojtError("model has no parfactors");

  // interaction graph over canonical atoms
  std::map<AtomKey, Atom> atoms;
  for (const Parfactor& g : pm.parfactors) {
    for (const Arg& a : g.args) {
      AtomKey k = model::key_of(a.atom);
      atoms.emplace(k, model::canonical_atom(voc, k.first, k.second));
      t.temporal |= a.atom.slice == Slice::prev;
    }
  }
  std::vector<AtomKey> keys;
  for (const auto& [k, a] : atoms) keys.push_back(k);
  auto name_of = [&](AtomKey k) { return atom_sort_key(voc, atoms.at(k)); };

  std::map<AtomKey, std::set<AtomKey>> adj;
  for (const Parfactor& g : pm.parfactors)
    for (const Arg& a : g.args)
      for (const Arg& b : g.args)
        if (!(a.atom == b.atom)) adj[model::key_of(a.atom)].insert(model::key_of(b.atom));
  for (AtomKey k : keys) adj[k];

  // min-fill elimination, recomputed each round; lexicographic tie-break
  std::set<AtomKey> remaining(keys.begin(), keys.end());
  std::vector<std::set<AtomKey>> clusters;
  while (!remaining.empty()) {
    AtomKey best{-1, Slice::cur};
    long best_fill = -1;
    std::string best_name;
    for (AtomKey v : remaining) {
      long fill = 0;
      std::vector<AtomKey> nb(adj[v].begin(), adj[v].end());
      for (std::size_t i = 0; i < nb.size(); ++i)
        for (std::size_t j = i + 1; j < nb.size(); ++j)
          if (!adj[nb[i]].count(nb[j])) ++fill;
      std::string nm = name_of(v);
      if (best_fill < 0 || fill < best_fill || (fill == best_fill && nm < best_name)) {
        best = v;
        best_fill = fill;
        best_name = nm;
      }
    }
    std::set<AtomKey> cluster = adj[best];
    cluster.insert(best);
    clusters.push_back(cluster);
    std::vector<AtomKey> nb(adj[best].begin(), adj[best].end());
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j) {
        adj[nb[i]].insert(nb[j]);
        adj[nb[j]].insert(nb[i]);
      }
    for (AtomKey n : nb) adj[n].erase(best);
    adj.erase(best);
    remaining.erase(best);
  }

  // prune clusters contained in another (keep the first of equal ones)
  std::vector<std::set<AtomKey>> maximal;
  for (const auto& c : clusters) {
    bool contained = false;
    for (const auto& other : maximal)
      if (std::includes(other.begin(), other.end(), c.begin(), c.end())) contained = true;
    if (contained) continue;
    std::erase_if(maximal, [&](const std::set<AtomKey>& other) {
      return std::includes(c.begin(), c.end(), other.begin(), other.end());
    });
    maximal.push_back(c);
  }

  for (const auto& c : maximal) {
    Parcluster pc;
    std::set<LogvarId> lvs;
    for (AtomKey k : c) {
      pc.prvs.insert(atoms.at(k));
      for (LogvarId lv : atoms.at(k).free_logvars()) lvs.insert(lv);
    }
    pc.constraint = Constraint::top({lvs.begin(), lvs.end()});
    t.nodes.push_back(std::move(pc));
  }

  // maximum spanning tree on separator sizes (Kruskal), zero-weight edges
  // connect disjoint components
  struct Cand {
    int w;
    int i;
    int j;
  };
  std::vector<Cand> cand;
  for (int i = 0; i < static_cast<int>(t.nodes.size()); ++i)
    for (int j = i + 1; j < static_cast<int>(t.nodes.size()); ++j) {
      std::set<Atom> sep = t.separator(i, j);
      cand.push_back({static_cast<int>(sep.size()), i, j});
    }
  std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) {
    if (a.w != b.w) return a.w > b.w;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<int> parent(t.nodes.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const Cand& c : cand) {
    if (find(c.i) == find(c.j)) continue;
    parent[find(c.i)] = find(c.j);
    t.edges.emplace_back(c.i, c.j);
  }
  std::sort(t.edges.begin(), t.edges.end());

  // assign each parfactor to the first covering cluster
  for (const Parfactor& g : pm.parfactors) {
    int where = -1;
    for (int i = 0; i < static_cast<int>(t.nodes.size()) && where < 0; ++i) {
      bool covers = true;
      for (const Arg& a : g.args)
        if (!t.nodes[i].contains(model::key_of(a.atom))) covers = false;
      if (covers) where = i;
    }
    if (where < 0) throw FojtError("parfactor " + g.name + " is not covered by any parcluster");
    t.nodes[where].local.push_back(g);
  }

  validate(t);
  return t;
}

void validate(const FoJtree& t) {
  int v = static_cast<int>(t.nodes.size());
  if (v == 0) throw FojtError("jtree has no nodes");
  if (static_cast<int>(t.edges.size()) != v - 1) throw FojtError("jtree is not a tree");
  // connectivity
  std::vector<int> seen(v, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    for (int n : t.neighbors(i))
      if (!seen[n]) {
        seen[n] = 1;
        q.push(n);
      }
  }
  if (std::count(seen.begin(), seen.end(), 1) != v) throw FojtError("jtree is disconnected");
  // local models covered by their cluster
  for (const Parcluster& pc : t.nodes)
    for (const Parfactor& g : pc.local)
      for (const Arg& a : g.args)
        if (!pc.contains(model::key_of(a.atom)))
          throw FojtError("parfactor " + g.name + " is not covered by its parcluster");
  // running intersection per PRV
  std::set<AtomKey> all_keys;
  for (const Parcluster& pc : t.nodes)
    for (const Atom& a : pc.prvs) all_keys.insert(model::key_of(a));
  for (AtomKey k : all_keys) {
    std::vector<int> holding;
    for (int i = 0; i < v; ++i)
      if (t.nodes[i].contains(k)) holding.push_back(i);
    if (holding.size() <= 1) continue;
    std::set<int> hset(holding.begin(), holding.end());
    std::set<int> reached;
    std::queue<int> q2;
    q2.push(holding[0]);
    reached.insert(holding[0]);
    while (!q2.empty()) {
      int i = q2.front();
      q2.pop();
      for (int n : t.neighbors(i))
        if (hset.count(n) && !reached.count(n)) {
          reached.insert(n);
          q2.push(n);
        }
    }
    if (reached.size() != hset.size())
      throw FojtError("running intersection violated");
  }
}

void enter_evidence(FoJtree& t, const std::vector<model::Observation>& obs,
                    InferenceStats* stats) {
  const Vocabulary& voc = *t.voc;
  // group by (PRV, value)
  std::map<std::pair<model::PrvId, int>, lve::EvidenceGroup> groups;
  for (const model::Observation& o : obs) {
    if (o.value < 0 || o.value >= static_cast<int>(voc.prv(o.term.prv).range.size()))
      throw FojtError("observed value out of range for " + voc.prv(o.term.prv).name);
    auto& g = groups[{o.term.prv, o.value}];
    g.prv = o.term.prv;
    g.slice = Slice::cur;
    g.value = o.value;
    g.instances.insert(o.term.consts);
  }
  for (const auto& [k, group] : groups) {
    bool anywhere = false;
    for (const Parcluster& pc : t.nodes)
      if (pc.contains({group.prv, group.slice})) anywhere = true;
    if (!anywhere)
      throw FojtError("observed PRV " + voc.prv(group.prv).name + " does not occur in the model");
    for (Parcluster& pc : t.nodes) {
      std::vector<Parfactor> next;
      for (Parfactor& g : pc.local) {
        bool mentions = g.mentions({group.prv, group.slice});
        auto pieces = lve::absorb_evidence(voc, g, group);
        if (stats && mentions && (pieces.size() != 1 || !(pieces[0].args == g.args)))
          stats->record(Event::Kind::split, g.name, "evidence");
        for (Parfactor& p : pieces) next.push_back(normalize(voc, std::move(p)));
      }
      pc.local = std::move(next);
    }
  }
}

namespace {

std::vector<Parfactor> compute_message(FoJtree& t, int i, int j, InferenceStats* stats) {
  std::vector<Parfactor> work = t.nodes[i].local;
  for (int l : t.neighbors(i)) {
    if (l == j) continue;
    auto it = t.messages.find({l, i});
    if (it == t.messages.end()) throw FojtError("internal: message order violated");
    work.insert(work.end(), it->second.begin(), it->second.end());
  }
  std::set<AtomKey> sep;
  for (const Atom& a : t.separator(i, j)) sep.insert(model::key_of(a));
  std::string saved = stats ? stats->context : "";
  if (stats)
    stats->context = "msg " + std::to_string(i) + "->" + std::to_string(j);
  auto result = eliminate_atoms(
      std::move(work), [&](const Arg& a) { return sep.count(model::key_of(a.atom)) > 0; },
      *t.voc, stats);
  if (stats) stats->context = saved;
  for (const Parfactor& g : result)
    for (const Arg& a : g.args)
      if (!sep.count(model::key_of(a.atom)))
        throw FojtError("internal: message argument outside the separator");
  return result;
}

}  // namespace

void pass_messages(FoJtree& t, InferenceStats* stats) {
  t.messages.clear();
  int v = static_cast<int>(t.nodes.size());
  if (v == 1) return;
  int root = 0;
  std::size_t best_deg = t.neighbors(0).size();
  for (int i = 1; i < v; ++i)
    if (t.neighbors(i).size() > best_deg) {
      root = i;
      best_deg = t.neighbors(i).size();
    }
  std::vector<int> order, parent(v, -1), seen(v, 0);
  std::queue<int> q;
  q.push(root);
  seen[root] = 1;
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    order.push_back(i);
    for (int n : t.neighbors(i))
      if (!seen[n]) {
        seen[n] = 1;
        parent[n] = i;
        q.push(n);
      }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (*it != root) t.messages[{*it, parent[*it]}] = compute_message(t, *it, parent[*it], stats);
  for (int i : order)
    for (int n : t.neighbors(i))
      if (parent[n] == i) t.messages[{i, n}] = compute_message(t, i, n, stats);
}

std::vector<double> answer_query(const FoJtree& t, const model::GroundTerm& q,
                                 InferenceStats* stats) {
  const Vocabulary& voc = *t.voc;
  AtomKey key{q.prv, Slice::cur};
  int where = -1;
  for (int i = 0; i < static_cast<int>(t.nodes.size()); ++i) {
    if (!t.nodes[i].contains(key)) continue;
    if (where < 0 || t.nodes[i].prvs.size() < t.nodes[where].prvs.size()) where = i;
  }
  if (where < 0)
    throw FojtError("query PRV " + voc.prv(q.prv).name + " does not occur in the model");

  std::vector<Parfactor> work = t.nodes[where].local;
  for (int l : t.neighbors(where)) {
    auto it = t.messages.find({l, where});
    if (it == t.messages.end()) throw FojtError("answer_query before message passing");
    work.insert(work.end(), it->second.begin(), it->second.end());
  }

  Atom ground;
  ground.prv = q.prv;
  ground.slice = Slice::cur;
  for (ConstId c : q.consts) ground.terms.push_back(model::Term::constant(c));

  std::string saved = stats ? stats->context : "";
  if (stats) stats->context = "query " + model::render_ground_term(voc, q);

  // split the covering parfactors at the query constants
  for (;;) {
    bool changed = false;
    for (std::size_t i = 0; i < work.size() && !changed; ++i) {
      for (std::size_t ai = 0; ai < work[i].args.size() && !changed; ++ai) {
        const Arg& a = work[i].args[ai];
        if (model::key_of(a.atom) != key) continue;
        if (!a.is_crv() && a.atom == ground) continue;
        auto covered = lve::instance_tuples(voc, work[i], ai);
        if (!covered.count(q.consts)) continue;
        if (a.is_crv()) {
          int pos = -1;
          const auto& params = voc.prv(q.prv).params;
          for (std::size_t p = 0; p < params.size(); ++p)
            if (!a.atom.terms[p].is_const() && a.atom.terms[p].lv == a.counted->lv)
              pos = static_cast<int>(p);
          if (pos < 0) throw FojtError("internal: counted position not found");
          Parfactor split = lve::crv_split_constant(voc, work[i], ai, q.consts[pos]);
          if (stats) stats->record(Event::Kind::split, work[i].name, "query");
          work[i] = normalize(voc, std::move(split));
        } else {
          auto [in_part, out_part] =
              lve::split_arg_by_instances(voc, work[i], ai, {q.consts});
          if (stats) stats->record(Event::Kind::split, work[i].name, "query");
          std::vector<Parfactor> pieces;
          if (in_part) pieces.push_back(normalize(voc, std::move(*in_part)));
          if (out_part) pieces.push_back(normalize(voc, std::move(*out_part)));
          work.erase(work.begin() + static_cast<long>(i));
          for (Parfactor& p : pieces) work.push_back(std::move(p));
        }
        changed = true;
      }
    }
    if (!changed) break;
  }

  auto result = eliminate_atoms(
      std::move(work),
      [&](const Arg& a) { return !a.is_crv() && a.atom == ground; }, voc, stats);
  if (stats) stats->context = saved;

  std::vector<Parfactor> with_atom;
  for (Parfactor& g : result)
    if (!g.args.empty()) with_atom.push_back(std::move(g));
  if (with_atom.empty())
    throw FojtError("query " + model::render_ground_term(voc, q) + " has no covering parfactor");
  Parfactor joint = multiply_all(std::move(with_atom), voc, stats);
  if (joint.args.size() != 1)
    throw FojtError("internal: query elimination left extra arguments");

  std::vector<double> dist(joint.table.v.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : joint.table.v) mx = std::max(mx, x);
  if (mx == -std::numeric_limits<double>::infinity())
    throw FojtError("query has zero probability mass");
  double z = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    dist[i] = std::exp(joint.table.v[i] - mx);
    z += dist[i];
  }
  for (double& x : dist) x /= z;
  return dist;
}

std::string dump(const FoJtree& t) {
  const Vocabulary& voc = *t.voc;
  std::ostringstream os;
  os << "fojtree nodes=" << t.nodes.size() << " edges=" << t.edges.size() << "\n";
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const Parcluster& pc = t.nodes[i];
    os << "node " << i;
    if (pc.is_in) os << " [in]";
    if (pc.is_out) os << " [out]";
    os << ":";
    std::vector<std::string> names;
    for (const Atom& a : pc.prvs) names.push_back(model::render_atom(voc, a, t.temporal));
    std::sort(names.begin(), names.end());
    for (const auto& n : names) os << " " << n;
    os << " | local:";
    for (const Parfactor& g : pc.local) os << " " << g.name;
    os << "\n";
  }
  for (const auto& [i, j] : t.edges) {
    os << "edge " << i << "-" << j << " sep:";
    std::vector<std::string> names;
    for (const Atom& a : t.separator(i, j)) names.push_back(model::render_atom(voc, a, t.temporal));
    std::sort(names.begin(), names.end());
    for (const auto& n : names) os << " " << n;
    os << "\n";
  }
  return os.str();
}

}  // namespace parlift::fojt
