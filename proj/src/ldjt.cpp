#include "parlift/ldjt.hpp"

#include <algorithm>
#include <cmath>

#include "parlift/guard.hpp"

namespace parlift::ldjt {

using fojt::FoJtree;
using lve::InferenceStats;
using model::Atom;
using model::AtomKey;
using model::Parfactor;
using model::Slice;
using model::Vocabulary;

namespace {

constexpr const char* kInterface0 = "gI0";
constexpr const char* kInterfacePrev = "gIprev";
constexpr const char* kInterfaceCur = "gIcur";

Parfactor interface_parfactor(const Vocabulary& voc, const std::set<model::PrvId>& prvs,
                              Slice slice, const std::string& name) {
  Parfactor g;
  g.name = name;
  for (model::PrvId p : prvs) g.args.push_back(model::Arg{model::canonical_atom(voc, p, slice), std::nullopt});
  g.constraint = model::Constraint::top(g.free_logvars());
  std::vector<int> dims;
  for (const auto& a : g.args) dims.push_back(model::arg_range_size(voc, a));
  g.table.dims = dims;
  g.table.v.assign(model::LogTable::flat_size(dims), 0.0);  // all-ones potential
  return g;
}

int cluster_holding(const FoJtree& t, const std::string& pf_name) {
  for (int i = 0; i < static_cast<int>(t.nodes.size()); ++i)
    for (const Parfactor& g : t.nodes[i].local)
      if (g.name == pf_name) return i;
  throw LdjtError("internal: interface parfactor not assigned");
}

void shift_max_to_zero(Parfactor& g) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : g.table.v) mx = std::max(mx, x);
  if (mx == -std::numeric_limits<double>::infinity() || mx == 0) return;
  for (double& x : g.table.v) x -= mx;
}

}  // namespace

std::set<model::PrvId> compute_interface(const model::Pdm& pdm) {
  std::set<model::PrvId> out;
  for (const Parfactor* g : pdm.inter_slice_parfactors())
    for (const model::Arg& a : g->args)
      if (a.atom.slice == Slice::prev) out.insert(a.atom.prv);
  if (out.empty()) throw LdjtError("empty interface: the model slices are disconnected");
  return out;
}

TemporalStructures build_temporal_structures(const model::Pdm& pdm) {
  const Vocabulary& voc = *pdm.voc;
  TemporalStructures s;
  s.pdm = pdm;
  s.interface.base = compute_interface(pdm);

  model::Pm pm0;
  pm0.voc = pdm.voc;
  pm0.parfactors = pdm.g0.parfactors;
  pm0.parfactors.push_back(interface_parfactor(voc, s.interface.base, Slice::cur, kInterface0));
  s.j0 = fojt::build_fojt(pm0);
  s.j0.in_cluster = s.j0.out_cluster = cluster_holding(s.j0, kInterface0);
  s.j0.nodes[s.j0.in_cluster].is_in = true;
  s.j0.nodes[s.j0.out_cluster].is_out = true;

  model::Pm pmt;
  pmt.voc = pdm.voc;
  pmt.parfactors = pdm.g_arrow.parfactors;
  pmt.parfactors.push_back(interface_parfactor(voc, s.interface.base, Slice::prev, kInterfacePrev));
  pmt.parfactors.push_back(interface_parfactor(voc, s.interface.base, Slice::cur, kInterfaceCur));
  s.jt = fojt::build_fojt(pmt);
  s.jt.temporal = true;
  s.jt.in_cluster = cluster_holding(s.jt, kInterfacePrev);
  s.jt.out_cluster = cluster_holding(s.jt, kInterfaceCur);
  s.jt.nodes[s.jt.in_cluster].is_in = true;
  s.jt.nodes[s.jt.out_cluster].is_out = true;
  return s;
}

AlphaMessage forward_step(const TemporalStructures& s, const AlphaMessage* prev, int t,
                          const std::vector<model::Observation>& evidence,
                          const std::vector<model::GroundTerm>& queries,
                          std::vector<std::vector<double>>& answers,
                          lve::InferenceStats* stats) {
  const Vocabulary& voc = *s.pdm.voc;
  FoJtree tree = t == 0 ? s.j0 : s.jt;
  tree.messages.clear();

  if (t > 0) {
    if (!prev) throw LdjtError("forward_step: missing previous state");
    auto& local = tree.nodes[tree.in_cluster].local;
    for (const Parfactor& g : prev->parfactors)
      local.push_back(model::retag(g, Slice::cur, Slice::prev));
  } else if (prev) {
    throw LdjtError("forward_step: unexpected state at t=0");
  }

  fojt::enter_evidence(tree, evidence, stats);
  fojt::pass_messages(tree, stats);

  answers.clear();
  for (const model::GroundTerm& q : queries) answers.push_back(fojt::answer_query(tree, q, stats));

  // alpha_t: eliminate everything but the interface from the out-cluster
  std::vector<Parfactor> work = tree.nodes[tree.out_cluster].local;
  for (int l : tree.neighbors(tree.out_cluster)) {
    auto it = tree.messages.find({l, tree.out_cluster});
    if (it != tree.messages.end())
      work.insert(work.end(), it->second.begin(), it->second.end());
  }
  std::string saved = stats ? stats->context : "";
  if (stats) stats->context = "alpha t=" + std::to_string(t);
  auto keep = [&](const model::Arg& a) {
    return a.atom.slice == Slice::cur && s.interface.contains(a.atom.prv);
  };
  AlphaMessage alpha;
  alpha.step = t;
  alpha.parfactors = fojt::eliminate_atoms(std::move(work), keep, voc, stats);
  if (stats) stats->context = saved;
  for (Parfactor& g : alpha.parfactors) {
    shift_max_to_zero(g);
    for (const model::Arg& a : g.args)
      if (!keep(a)) throw LdjtError("internal: alpha argument outside the interface");
  }
  return alpha;
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::ldjt_extended: return "ldjt_extended";
    case Algorithm::ldjt_original: return "ldjt_original";
    case Algorithm::ljt_unrolled: return "ljt_unrolled";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(const std::string& name) {
  if (name == "ldjt_extended") return Algorithm::ldjt_extended;
  if (name == "ldjt_original") return Algorithm::ldjt_original;
  if (name == "ljt_unrolled") return Algorithm::ljt_unrolled;
  return std::nullopt;
}

namespace {

void check_deadline(const RunOptions& opts) {
  if (opts.deadline && std::chrono::steady_clock::now() > *opts.deadline) throw TimeoutError();
}

std::vector<model::Observation> evidence_at(const model::Evidence& evidence, int t,
                                            const RunOptions& opts) {
  if (t > opts.evidence_horizon) return {};
  auto it = evidence.find(t);
  return it == evidence.end() ? std::vector<model::Observation>{} : it->second;
}

RunResult run_stepwise(const model::Pdm& pdm, const std::vector<model::GroundTerm>& queries,
                       const model::Evidence& evidence, const RunOptions& opts) {
  RunResult result;
  TemporalStructures s = build_temporal_structures(pdm);
  guard::prevent_all(s, opts.algorithm == Algorithm::ldjt_extended);
  AlphaMessage alpha;
  for (int t = 0; t <= opts.max_t; ++t) {
    check_deadline(opts);
    auto begin = std::chrono::steady_clock::now();
    StepResult step;
    step.t = t;
    alpha = forward_step(s, t == 0 ? nullptr : &alpha, t, evidence_at(evidence, t, opts), queries,
                         step.answers, &result.stats);
    step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    result.steps.push_back(std::move(step));
  }
  return result;
}

// Answers the step-t queries from a fresh FO jtree over the t-step unrolled
// model; the whole horizon is rebuilt as t advances.
RunResult run_unrolled(const model::Pdm& pdm, const std::vector<model::GroundTerm>& queries,
                       const model::Evidence& evidence, const RunOptions& opts) {
  RunResult result;
  for (int t = 0; t <= opts.max_t; ++t) {
    check_deadline(opts);
    auto begin = std::chrono::steady_clock::now();
    StepResult step;
    step.t = t;

    model::UnrolledPm unrolled = model::unroll_lifted(pdm, t);
    FoJtree tree = fojt::build_fojt(unrolled.pm);
    guard::fuse_fixpoint(tree);
    std::vector<model::Observation> obs;
    for (const auto& [at, list] : evidence) {
      if (at > t || at > opts.evidence_horizon) continue;
      for (const model::Observation& o : list) {
        model::Observation mapped = o;
        mapped.term.prv = unrolled.prv_at_step.at({o.term.prv, at});
        obs.push_back(mapped);
      }
    }
    fojt::enter_evidence(tree, obs, &result.stats);
    fojt::pass_messages(tree, &result.stats);
    for (const model::GroundTerm& q : queries) {
      check_deadline(opts);
      model::GroundTerm mapped = q;
      mapped.prv = unrolled.prv_at_step.at({q.prv, t});
      step.answers.push_back(fojt::answer_query(tree, mapped, &result.stats));
    }
    step.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
    result.steps.push_back(std::move(step));
  }
  return result;
}

}  // namespace

RunResult run(const model::Pdm& pdm, const std::vector<model::GroundTerm>& queries,
              const model::Evidence& evidence, const RunOptions& opts) {
  if (opts.max_t < 0) throw LdjtError("run: negative horizon");
  if (opts.algorithm == Algorithm::ljt_unrolled)
    return run_unrolled(pdm, queries, evidence, opts);
  return run_stepwise(pdm, queries, evidence, opts);
}

}  // namespace parlift::ldjt
