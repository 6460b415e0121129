#ifndef PARLIFT_FOJT_HPP
#define PARLIFT_FOJT_HPP

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "parlift/lve.hpp"
#include "parlift/model.hpp"

// First-order junction trees: construction from a PM, evidence entering,
// two-pass message passing and query answering.
namespace parlift::fojt {

using model::Atom;
using model::AtomKey;
using model::Parfactor;
using model::Vocabulary;

struct FojtError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A node of an FO jtree: a set of PRVs, a constraint and a local model.
struct Parcluster {
  std::set<Atom> prvs;  // canonical atoms
  model::Constraint constraint;
  std::vector<Parfactor> local;
  bool is_in = false;
  bool is_out = false;

  bool contains(AtomKey key) const;
  std::set<AtomKey> keys() const;
};

struct FoJtree {
  model::VocabularyPtr voc;
  bool temporal = false;  // rendering only
  std::vector<Parcluster> nodes;
  std::vector<std::pair<int, int>> edges;  // i < j
  int in_cluster = -1;
  int out_cluster = -1;

  // parfactors passed over each directed edge, filled by pass_messages
  std::map<std::pair<int, int>, std::vector<Parfactor>> messages;

  std::vector<int> neighbors(int i) const;
  std::set<Atom> separator(int i, int j) const;
  bool adjacent(int i, int j) const;
};

// Builds an FO jtree for the PM: min-fill elimination over the PRV
// interaction graph, elimination clusters, maximum-weight spanning tree on
// separator sizes, non-maximal clusters pruned.  Every parfactor is assigned
// to the first cluster covering it.
FoJtree build_fojt(const model::Pm& pm);

// Asserts the three structural jtree properties (parfactor coverage inside
// each local model, running intersection, connected and cycle-free).
// Throws FojtError on violation.
void validate(const FoJtree& t);

// Absorbs one step's observations into every local parfactor mentioning the
// observed PRV.  Observed PRVs must occur in the tree.
void enter_evidence(FoJtree& t, const std::vector<model::Observation>& obs,
                    lve::InferenceStats* stats);

// Inbound pass towards the maximum-degree root, then outbound.
void pass_messages(FoJtree& t, lve::InferenceStats* stats);

// Normalised distribution of a ground query term.  Requires messages.
std::vector<double> answer_query(const FoJtree& t, const model::GroundTerm& q,
                                 lve::InferenceStats* stats);

// Stable textual dump (nodes, local models, separators) for golden tests.
std::string dump(const FoJtree& t);

// The elimination engine: sums out every argument the predicate does not
// keep, picking lifted sum-out first, count conversion second, grounding
// last (logvar in the fewest parfactors, lexicographic tie-break).
using KeepPredicate = std::function<bool(const model::Arg&)>;
std::vector<Parfactor> eliminate_atoms(std::vector<Parfactor> work, const KeepPredicate& keep,
                                       const Vocabulary& voc, lve::InferenceStats* stats);

// Merges parfactors with identical arguments and constraints.
std::vector<Parfactor> consolidate(std::vector<Parfactor> work, const Vocabulary& voc);

// Multiplies a set of parfactors into one, splitting as needed to align
// shared atoms.  The set must be non-empty.
Parfactor multiply_all(std::vector<Parfactor> work, const Vocabulary& voc,
                       lve::InferenceStats* stats);

}  // namespace parlift::fojt

#endif  // PARLIFT_FOJT_HPP
