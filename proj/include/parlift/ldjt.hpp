#ifndef PARLIFT_LDJT_HPP
#define PARLIFT_LDJT_HPP

#include <chrono>
#include <limits>
#include <optional>

#include "parlift/fojt.hpp"
#include "parlift/model.hpp"

// Temporal structures (J0 and Jt with in-/out-clusters), the forward
// interface, alpha messages and the filtering/prediction loop.
namespace parlift::ldjt {

struct LdjtError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimeoutError : std::runtime_error {
  TimeoutError() : std::runtime_error("run timed out") {}
};

// The forward interface: slice-(t-1) PRVs with successors in slice t, plus
// the PRVs added later by separator expanding.
struct InterfaceSet {
  std::set<model::PrvId> base;
  std::set<model::PrvId> expanded;

  bool contains(model::PrvId p) const { return base.count(p) || expanded.count(p); }
};

struct TemporalStructures {
  model::Pdm pdm;
  fojt::FoJtree j0;  // in- and out-cluster coincide
  fojt::FoJtree jt;  // reused for every t > 0
  InterfaceSet interface;
};

// The PRVs of slice t-1 that appear together with a slice-t PRV in some
// parfactor of G->.  Throws LdjtError when the slices are disconnected.
std::set<model::PrvId> compute_interface(const model::Pdm& pdm);

// Adds the all-ones interface parfactors, builds J0 and Jt and labels the
// parclusters holding them as in-/out-cluster.
TemporalStructures build_temporal_structures(const model::Pdm& pdm);

// State carried from step t to t+1: parfactors over the interface PRVs,
// slice-tagged t and re-tagged t-1 on delivery.
struct AlphaMessage {
  int step = -1;
  std::vector<model::Parfactor> parfactors;
};

// One forward step: instantiates the tree for step t, delivers the previous
// alpha to the in-cluster, enters evidence, passes messages, answers the
// queries and computes alpha_t at the out-cluster.
AlphaMessage forward_step(const TemporalStructures& s, const AlphaMessage* prev, int t,
                          const std::vector<model::Observation>& evidence,
                          const std::vector<model::GroundTerm>& queries,
                          std::vector<std::vector<double>>& answers,
                          lve::InferenceStats* stats);

enum class Algorithm { ldjt_extended, ldjt_original, ljt_unrolled };

std::string algorithm_name(Algorithm a);
std::optional<Algorithm> parse_algorithm(const std::string& name);

struct RunOptions {
  Algorithm algorithm = Algorithm::ldjt_extended;
  int max_t = 0;
  // evidence is applied at steps <= horizon; later steps are predictions
  int evidence_horizon = std::numeric_limits<int>::max();
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct StepResult {
  int t = 0;
  std::vector<std::vector<double>> answers;  // one distribution per query
  double seconds = 0;
};

struct RunResult {
  std::vector<StepResult> steps;
  lve::InferenceStats stats;
};

// Runs grounding prevention offline, then the forward pass for t = 0..max_t.
// `ldjt_original` disables separator expanding (fusion stays on);
// `ljt_unrolled` answers the step-t queries from a fresh FO jtree over the
// t-step unrolled model instead.
RunResult run(const model::Pdm& pdm, const std::vector<model::GroundTerm>& queries,
              const model::Evidence& evidence, const RunOptions& opts);

}  // namespace parlift::ldjt

#endif  // PARLIFT_LDJT_HPP
