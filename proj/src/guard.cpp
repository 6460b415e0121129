#include "parlift/guard.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

namespace parlift::guard {

using fojt::FoJtree;
using ldjt::TemporalStructures;
using model::AtomKey;
using model::Parfactor;
using model::PrvId;
using model::Slice;
using model::Vocabulary;

namespace {

std::vector<LogvarId> atom_lvs(const Atom& a) { return a.free_logvars(); }

bool subset(const std::vector<LogvarId>& a, const std::vector<LogvarId>& b) {
  for (LogvarId x : a)
    if (std::find(b.begin(), b.end(), x) == std::find(b.end(), b.end(), x) &&
        std::find(b.begin(), b.end(), x) == b.end())
      return false;
  return true;
}

struct SymbolicGe {
  std::set<Atom> atoms;
  std::vector<const Parfactor*> local_sources;
};

// The atoms of the lifted product of everything containing E at `cluster`:
// local parfactors, received messages (approximated by their separators) and,
// at the in-cluster, the alpha message over the interface.
SymbolicGe symbolic_ge(const FoJtree& t, int cluster, AtomKey e, int exclude_neighbor,
                       const TemporalStructures* s) {
  const Vocabulary& voc = *t.voc;
  SymbolicGe ge;
  for (const Parfactor& g : t.nodes[cluster].local) {
    if (!g.mentions(e)) continue;
    ge.local_sources.push_back(&g);
    for (const model::Arg& a : g.args)
      ge.atoms.insert(model::canonical_atom(voc, a.atom.prv, a.atom.slice));
  }
  for (int n : t.neighbors(cluster)) {
    if (n == exclude_neighbor) continue;
    std::set<Atom> sep = t.separator(cluster, n);
    bool has = false;
    for (const Atom& a : sep)
      if (model::key_of(a) == e) has = true;
    if (has) ge.atoms.insert(sep.begin(), sep.end());
  }
  if (s && cluster == t.in_cluster && t.temporal) {
    bool in_alpha = e.second == Slice::prev && s->interface.contains(e.first);
    if (in_alpha)
      for (PrvId p : s->interface.base) ge.atoms.insert(model::canonical_atom(voc, p, Slice::prev));
    if (in_alpha)
      for (PrvId p : s->interface.expanded)
        ge.atoms.insert(model::canonical_atom(voc, p, Slice::prev));
  }
  return ge;
}

std::vector<LogvarId> excess_logvars(const Atom& s_atom, const Atom& e_atom) {
  auto ls = atom_lvs(s_atom);
  auto le = atom_lvs(e_atom);
  std::vector<LogvarId> out;
  for (LogvarId l : ls)
    if (std::find(le.begin(), le.end(), l) == le.end()) out.push_back(l);
  return out;
}

int occurrences(const std::set<Atom>& atoms, LogvarId l) {
  int n = 0;
  for (const Atom& a : atoms) {
    auto f = a.free_logvars();
    if (std::find(f.begin(), f.end(), l) != f.end()) ++n;
  }
  return n;
}

// Nodes of the subtree holding PRV `s_key`, reachable from `start` without
// crossing back over `blocked`.
std::vector<int> s_subtree(const FoJtree& t, AtomKey s_key, int start, int blocked) {
  std::vector<int> out;
  if (!t.nodes[start].contains(s_key)) return out;
  std::set<int> seen{start};
  std::queue<int> q;
  q.push(start);
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    out.push_back(i);
    for (int n : t.neighbors(i)) {
      if (n == blocked && i == start) continue;
      if (!seen.count(n) && t.nodes[n].contains(s_key)) {
        seen.insert(n);
        q.push(n);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> tree_path(const FoJtree& t, int from, int to) {
  std::vector<int> parent(t.nodes.size(), -2);
  std::queue<int> q;
  q.push(from);
  parent[from] = -1;
  while (!q.empty()) {
    int i = q.front();
    q.pop();
    for (int n : t.neighbors(i))
      if (parent[n] == -2) {
        parent[n] = i;
        q.push(n);
      }
  }
  std::vector<int> path;
  for (int i = to; i != -1; i = parent[i]) path.push_back(i);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

std::vector<std::pair<Atom, bool>> check_eq1(const std::set<Atom>& separator, const Atom& e,
                                             const std::set<Atom>& ge_atoms) {
  std::vector<std::pair<Atom, bool>> out;
  auto le = atom_lvs(e);
  for (const Atom& s : separator) {
    bool in_ge = false;
    for (const Atom& a : ge_atoms)
      if (model::key_of(a) == model::key_of(s)) in_ge = true;
    if (!in_ge) continue;
    auto ls = atom_lvs(s);
    bool ok = true;
    for (LogvarId l : ls)
      if (std::find(le.begin(), le.end(), l) == le.end()) ok = false;
    out.emplace_back(s, ok);
  }
  return out;
}

std::optional<LogvarId> check_eq2(const Atom& s, const Atom& e, const std::set<Atom>& ge_atoms) {
  auto excess = excess_logvars(s, e);
  if (excess.size() != 1) return std::nullopt;
  LogvarId l = excess[0];
  if (occurrences(ge_atoms, l) != 1) return std::nullopt;
  return l;
}

bool check_eq3(const FoJtree& t, const Atom& s, LogvarId l, const std::vector<int>& path) {
  AtomKey s_key = model::key_of(s);
  for (int k : path) {
    // g^S: the product of the local parfactors of k containing S
    std::set<Atom> gs_atoms;
    bool any = false;
    for (const Parfactor& g : t.nodes[k].local) {
      if (!g.mentions(s_key)) continue;
      any = true;
      for (const model::Arg& a : g.args)
        gs_atoms.insert(model::canonical_atom(*t.voc, a.atom.prv, a.atom.slice));
    }
    bool convertible = !any || occurrences(gs_atoms, l) == 1;
    if (convertible) continue;
    bool forwarded_everywhere = true;
    for (int n : t.neighbors(k)) {
      const auto sep = t.separator(k, n);
      bool in_sep = false;
      for (const Atom& a : sep)
        if (model::key_of(a) == s_key) in_sep = true;
      if (!in_sep) forwarded_everywhere = false;
    }
    if (!forwarded_everywhere) return false;
  }
  return true;
}

void fuse(FoJtree& t, int ci, int cj) {
  if (!t.adjacent(ci, cj)) throw fojt::FojtError("fuse: parclusters are not adjacent");
  int a = std::min(ci, cj), b = std::max(ci, cj);
  fojt::Parcluster& dst = t.nodes[a];
  fojt::Parcluster& src = t.nodes[b];
  dst.prvs.insert(src.prvs.begin(), src.prvs.end());
  for (Parfactor& g : src.local) dst.local.push_back(std::move(g));
  dst.is_in |= src.is_in;
  dst.is_out |= src.is_out;
  std::set<LogvarId> lvs;
  for (const Atom& at : dst.prvs)
    for (LogvarId lv : at.free_logvars()) lvs.insert(lv);
  dst.constraint = model::Constraint::top({lvs.begin(), lvs.end()});

  auto remap = [&](int i) { return i == b ? a : (i > b ? i - 1 : i); };
  std::set<std::pair<int, int>> edges;
  for (auto [i, j] : t.edges) {
    int ri = remap(i), rj = remap(j);
    if (ri == rj) continue;
    edges.insert({std::min(ri, rj), std::max(ri, rj)});
  }
  t.edges.assign(edges.begin(), edges.end());
  t.nodes.erase(t.nodes.begin() + b);
  if (t.in_cluster >= 0) t.in_cluster = remap(t.in_cluster);
  if (t.out_cluster >= 0) t.out_cluster = remap(t.out_cluster);
  t.messages.clear();
  fojt::validate(t);
}

namespace {

struct IntraOutcome {
  bool fused = false;
  bool any_failure = false;
};

// One scan over all directed edges; fuses the first failing edge (unless it
// would merge the in- and out-cluster of a temporal tree) and returns.
IntraOutcome intra_scan(FoJtree& t, const std::string& tree_name, const TemporalStructures* s,
                        GroundingReport& report, std::set<std::string>& skipped) {
  const Vocabulary& voc = *t.voc;
  IntraOutcome outcome;
  for (const auto& [ei, ej] : t.edges) {
    for (auto [i, j] : {std::pair<int, int>{ei, ej}, std::pair<int, int>{ej, ei}}) {
      std::set<Atom> sep = t.separator(i, j);
      std::set<AtomKey> sep_keys;
      for (const Atom& a : sep) sep_keys.insert(model::key_of(a));
      std::map<std::string, Atom> targets;
      for (const Atom& a : t.nodes[i].prvs)
        if (!sep_keys.count(model::key_of(a)))
          targets.emplace(model::render_atom(voc, a, t.temporal), a);
      for (const auto& [ename, e] : targets) {
        SymbolicGe ge = symbolic_ge(t, i, model::key_of(e), j, s);
        if (ge.atoms.empty()) continue;
        int failed_eq = 0;
        for (const auto& [s_atom, ok] : check_eq1(sep, e, ge.atoms)) {
          if (ok) continue;
          auto l = check_eq2(s_atom, e, ge.atoms);
          if (!l) {
            failed_eq = 2;
            break;
          }
          auto nodes = s_subtree(t, model::key_of(s_atom), j, i);
          if (!check_eq3(t, s_atom, *l, nodes)) {
            failed_eq = 3;
            break;
          }
        }
        if (failed_eq == 0) continue;
        outcome.any_failure = true;
        bool protected_edge = s && t.temporal &&
                              ((i == t.in_cluster && j == t.out_cluster) ||
                               (i == t.out_cluster && j == t.in_cluster));
        std::string skip_key = tree_name + "|" + (protected_edge ? "inout" : "edge") + "|" + ename;
        if (skipped.count(skip_key)) continue;
        skipped.insert(skip_key);
        report.intra_failures.push_back({tree_name, {i, j}, ename, failed_eq});
        if (protected_edge) {
          report.irreducible.push_back(
              {ename, "preventing this grounding would fuse the in- and out-cluster"});
          continue;
        }
        fuse(t, i, j);
        report.actions.push_back("FUSE " + tree_name + " " + std::to_string(std::min(i, j)) + "+" +
                                 std::to_string(std::max(i, j)));
        outcome.fused = true;
        return outcome;
      }
    }
  }
  return outcome;
}

}  // namespace

void fuse_fixpoint(FoJtree& t) {
  GroundingReport scratch;
  std::set<std::string> skipped;
  for (;;) {
    skipped.clear();
    IntraOutcome o = intra_scan(t, "J", nullptr, scratch, skipped);
    if (!o.fused) break;
  }
}

std::vector<InterDetection> detect_inter(const TemporalStructures& s, const FoJtree& from_tree,
                                         int out_cluster) {
  const Vocabulary& voc = *s.pdm.voc;
  std::vector<InterDetection> out;

  std::set<Atom> sep;  // the inter-tree separator: interface + expanded, slice t
  std::set<AtomKey> sep_keys;
  for (PrvId p : s.interface.base) {
    Atom a = model::canonical_atom(voc, p, Slice::cur);
    sep_keys.insert(model::key_of(a));
    sep.insert(std::move(a));
  }
  for (PrvId p : s.interface.expanded) {
    Atom a = model::canonical_atom(voc, p, Slice::cur);
    sep_keys.insert(model::key_of(a));
    sep.insert(std::move(a));
  }

  std::map<std::string, Atom> targets;
  for (const Atom& a : from_tree.nodes[out_cluster].prvs)
    if (!sep_keys.count(model::key_of(a)))
      targets.emplace(model::render_atom(voc, a, true), a);

  std::vector<int> path = tree_path(s.jt, s.jt.in_cluster, s.jt.out_cluster);

  for (const auto& [ename, e] : targets) {
    SymbolicGe ge = symbolic_ge(from_tree, out_cluster, model::key_of(e), -1, &s);
    if (ge.atoms.empty()) continue;
    for (const auto& [s_atom, ok] : check_eq1(sep, e, ge.atoms)) {
      if (ok) continue;
      InterDetection det;
      det.e = e;
      det.s = s_atom;
      auto excess = excess_logvars(s_atom, e);
      auto l = check_eq2(s_atom, e, ge.atoms);
      if (!l) {
        det.equation = 2;
        if (excess.size() == 1) {
          // conversion of the single excess logvar is blocked; diagnose the
          // inter-slice case of an S occurring at both time steps
          for (const Parfactor* src : ge.local_sources) {
            bool s_prev = src->mentions({s_atom.prv, Slice::prev});
            bool s_cur = src->mentions({s_atom.prv, Slice::cur});
            bool has_l = src->constraint.has_logvar(excess[0]);
            if (s_prev && s_cur && has_l) det.inter_slice_block = true;
          }
        }
        out.push_back(det);
        break;
      }
      Atom s_prev_atom = model::canonical_atom(voc, s_atom.prv, Slice::prev);
      if (!check_eq3(s.jt, s_prev_atom, *l, path)) {
        det.equation = 3;
        out.push_back(det);
        break;
      }
    }
  }
  return out;
}

void expand(TemporalStructures& s, PrvId e) {
  const Vocabulary& voc = *s.pdm.voc;
  AtomKey prev_key{e, Slice::prev};
  for (const fojt::Parcluster& pc : s.jt.nodes)
    if (pc.contains(prev_key))
      throw ldjt::LdjtError("expand: " + voc.prv(e).name + " is already present in Jt");
  fojt::Parcluster& in = s.jt.nodes[s.jt.in_cluster];
  in.prvs.insert(model::canonical_atom(voc, e, Slice::prev));
  std::set<LogvarId> lvs;
  for (const Atom& a : in.prvs)
    for (LogvarId lv : a.free_logvars()) lvs.insert(lv);
  in.constraint = model::Constraint::top({lvs.begin(), lvs.end()});
  s.interface.expanded.insert(e);
  fojt::validate(s.jt);
  fojt::validate(s.j0);
}

GroundingReport prevent_all(TemporalStructures& s, bool enable_expanding) {
  const Vocabulary& voc = *s.pdm.voc;
  GroundingReport report;
  std::set<std::string> skipped_j0, skipped_jt, seen_inter;

  for (;;) {
    bool changed = false;
    for (;;) {
      skipped_j0.clear();
      IntraOutcome o = intra_scan(s.j0, "J0", nullptr, report, skipped_j0);
      if (!o.fused) break;
      changed = true;
    }
    for (;;) {
      skipped_jt.clear();
      IntraOutcome o = intra_scan(s.jt, "Jt", &s, report, skipped_jt);
      if (!o.fused) break;
      changed = true;
    }

    struct Boundary {
      const char* name;
      const FoJtree* tree;
    };
    for (const Boundary& b :
         {Boundary{"J0->Jt", &s.j0}, Boundary{"Jt->Jt", &s.jt}}) {
      for (const InterDetection& det : detect_inter(s, *b.tree, b.tree->out_cluster)) {
        std::string ename = model::render_atom(voc, det.e, true);
        std::string fail_key = std::string(b.name) + "|" + ename + "|" +
                               std::to_string(det.equation);
        if (!seen_inter.count(fail_key)) {
          seen_inter.insert(fail_key);
          report.inter_failures.push_back({b.name, ename, det.equation});
        }
        if (!enable_expanding) continue;
        if (det.inter_slice_block) {
          std::string sname = model::render_atom(voc, det.s, true);
          bool dup = false;
          for (const auto& ir : report.irreducible)
            if (ir.prv == sname) dup = true;
          if (!dup)
            report.irreducible.push_back(
                {sname, "count-conversion of " + sname +
                            " is blocked by an inter-slice parfactor mentioning it at both "
                            "time steps"});
          continue;
        }
        if (s.interface.contains(det.e.prv)) continue;
        expand(s, det.e.prv);
        report.actions.push_back(
            "EXPAND " + model::render_atom(voc, model::canonical_atom(voc, det.e.prv, Slice::prev),
                                           true));
        changed = true;
      }
    }
    if (!changed) break;
  }
  return report;
}

std::string GroundingReport::render() const {
  std::ostringstream os;
  os << "grounding report\n";
  os << "note: g^S read as the lifted product of the receiving parcluster's local parfactors "
        "containing S\n";
  os << "intra failures: " << intra_failures.size() << "\n";
  for (const auto& f : intra_failures)
    os << "  " << f.tree << " edge " << f.edge.first << "->" << f.edge.second
       << " eliminating " << f.prv << ": eq" << f.equation << " fails\n";
  os << "inter failures: " << inter_failures.size() << "\n";
  for (const auto& f : inter_failures)
    os << "  " << f.boundary << " eliminating " << f.prv << ": eq" << f.equation << " fails\n";
  os << "actions: " << actions.size() << "\n";
  for (const auto& a : actions) os << "  " << a << "\n";
  if (irreducible.empty()) {
    os << "irreducible: none\n";
  } else {
    os << "irreducible: " << irreducible.size() << "\n";
    for (const auto& ir : irreducible) os << "  " << ir.prv << ": " << ir.diagnosis << "\n";
  }
  return os.str();
}

}  // namespace parlift::guard
