#ifndef PARLIFT_GUARD_HPP
#define PARLIFT_GUARD_HPP

#include <optional>
#include <string>
#include <vector>

#include "parlift/fojt.hpp"
#include "parlift/ldjt.hpp"
#include "parlift/model.hpp"

// Grounding detection and prevention: the three message-pass checks, fusion
// of parclusters for intra-tree groundings and separator expanding for
// inter-tree groundings, applied offline before any inference runs.
namespace parlift::guard {

using model::Atom;
using model::LogvarId;

struct GroundingReport {
  struct IntraFailure {
    std::string tree;  // "J0" or "Jt"
    std::pair<int, int> edge;
    std::string prv;  // offending PRV E
    int equation;     // 1, 2 or 3
  };
  struct InterFailure {
    std::string boundary;  // "J0->Jt" or "Jt->Jt"
    std::string prv;
    int equation;
  };
  struct Irreducible {
    std::string prv;
    std::string diagnosis;
  };

  std::vector<IntraFailure> intra_failures;
  std::vector<InterFailure> inter_failures;
  std::vector<std::string> actions;  // "FUSE ..." / "EXPAND ..."
  std::vector<Irreducible> irreducible;

  std::string render() const;
};

// Eq. (1): for each separator PRV S appearing in g^E, lv(S) must be a subset
// of lv(E).  g^E is given symbolically as the atoms of the lifted product of
// every parfactor containing E.
std::vector<std::pair<Atom, bool>> check_eq1(const std::set<Atom>& separator, const Atom& e,
                                             const std::set<Atom>& ge_atoms);

// Eq. (2): when eq. (1) fails for s, the unique excess logvar L = lv(S)\lv(E)
// if it is count-convertible in g^E (occurs in exactly one atom).
std::optional<LogvarId> check_eq2(const Atom& s, const Atom& e, const std::set<Atom>& ge_atoms);

// Eq. (3): a (P)CRV over s with counted l sent along `path` must be
// forwardable or count-convertible at every receiving parcluster.
bool check_eq3(const fojt::FoJtree& t, const Atom& s, LogvarId l, const std::vector<int>& path);

// Merges two adjacent parclusters: union of PRVs and local models.
// Re-validates the jtree properties.
void fuse(fojt::FoJtree& t, int ci, int cj);

// Repeatedly applies the intra checks and fuses failing edges until no
// grounding remains detectable.  For static trees (no in/out protection).
void fuse_fixpoint(fojt::FoJtree& t);

struct InterDetection {
  Atom e;             // offending out-cluster PRV (slice t)
  int equation;       // the failing equation (2 or 3)
  bool inter_slice_block = false;  // S occurs in an inter-slice parfactor at both slices
  Atom s;             // the separator PRV that cannot be handled
};

// Checks every PRV the out-cluster eliminates for the alpha message against
// eq. (1)-(3); returns the ones whose elimination grounds.
std::vector<InterDetection> detect_inter(const ldjt::TemporalStructures& s,
                                         const fojt::FoJtree& from_tree, int out_cluster);

// Adds E (slice t-1) to the in-cluster of Jt, the inter-tree separator and
// the interface set.  Throws if E is already present in Jt.
void expand(ldjt::TemporalStructures& s, model::PrvId e);

// The full offline pipeline: intra checks + fusion on J0 and Jt, then inter
// checks + expanding, looping until stable.  With `enable_expanding` off
// (the original algorithm) inter detections are only reported.
GroundingReport prevent_all(ldjt::TemporalStructures& s, bool enable_expanding = true);

}  // namespace parlift::guard

#endif  // PARLIFT_GUARD_HPP
