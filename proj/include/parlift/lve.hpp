#ifndef PARLIFT_LVE_HPP
#define PARLIFT_LVE_HPP

#include <set>
#include <string>
#include <vector>

#include "parlift/model.hpp"

// The lifted operator kernel.  All operators are pure: they take parfactors
// and return new ones; operator selection and tie-breaking belong to the
// callers.  Ground semantics is preserved by every operator (the oracle
// test suite holds them to that).
namespace parlift::lve {

using model::Arg;
using model::Atom;
using model::AtomKey;
using model::ConstId;
using model::Constraint;
using model::LogvarId;
using model::Parfactor;
using model::PrvId;
using model::Slice;
using model::Vocabulary;

struct OperatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Instrumentation for one inference run.  `ground` events count invocations
// of the grounding fallback; a fully lifted run has none.
struct Event {
  enum class Kind { sum_out, count_convert, ground, split, expand_crv };
  Kind kind;
  std::string parfactor;
  std::string detail;
  std::string context;
};

struct InferenceStats {
  std::vector<Event> events;
  std::string context;  // set by the caller around message/query computations

  void record(Event::Kind kind, const std::string& parfactor, const std::string& detail) {
    events.push_back(Event{kind, parfactor, detail, context});
  }
  long grounding_events() const {
    long n = 0;
    for (const auto& e : events)
      if (e.kind == Event::Kind::ground) ++n;
    return n;
  }
  long count_conversions() const {
    long n = 0;
    for (const auto& e : events)
      if (e.kind == Event::Kind::count_convert) ++n;
    return n;
  }
};

// Lifted product.  Shared arguments must agree exactly (atom, counting and
// covered instances); each side's potential enters with exponent 1/m where m
// is the number of result groundings per own grounding, so that
// gr(result) == gr(g1) u gr(g2) under the ground product semantics.
Parfactor lifted_multiply(const Vocabulary& voc, const Parfactor& g1, const Parfactor& g2);

// Lifted summing out of args[target].  Precondition: the argument's free
// logvars are exactly lv(g) (counted logvars are bound and count as covered).
// The result is exponentiated by the number of admissible groundings of the
// logvars that vanish with the argument.  CRV arguments are summed with
// multinomial weights n!/prod h(v)!.
Parfactor lift_sum_out(const Vocabulary& voc, const Parfactor& g, std::size_t target);

// Count conversion of logvar x: the unique argument containing x becomes a
// CRV over x with the histogram product potential.  Preconditions: x occurs
// in exactly one argument, that argument is not already counted, and the
// constraint factors as C_x x C_rest.
Parfactor count_convert(const Vocabulary& voc, const Parfactor& g, LogvarId x);

// One evidence group: instances of one PRV observed at one value.
struct EvidenceGroup {
  PrvId prv = -1;
  Slice slice = Slice::cur;
  int value = -1;
  std::set<std::vector<ConstId>> instances;  // full position tuples
};

// Absorbs the observation into g: the covered groundings lose the observed
// argument (potential sliced at the value, exponentiated for vanishing
// logvars); the uncovered remainder is returned unchanged as a second
// parfactor.  Returns {g} when g does not mention the PRV.
std::vector<Parfactor> absorb_evidence(const Vocabulary& voc, const Parfactor& g,
                                       const EvidenceGroup& obs);

// Grounding fallback: one parfactor per admissible value of x.  Instrumented.
std::vector<Parfactor> ground_logvar(const Vocabulary& voc, const Parfactor& g, LogvarId x,
                                     InferenceStats* stats);

// Expands a CRV argument back into one ground argument per counted constant.
Parfactor expand_crv(const Vocabulary& voc, const Parfactor& g, std::size_t target);

// Splits g by whether the instance of args[target] lies in `instances`.
// Either side may be absent (empty restriction).
std::pair<std::optional<Parfactor>, std::optional<Parfactor>> split_arg_by_instances(
    const Vocabulary& voc, const Parfactor& g, std::size_t target,
    const std::set<std::vector<ConstId>>& instances);

// Splits a CRV argument at one counted constant: the argument becomes the
// ground base atom at that constant plus a CRV over the remaining constants.
Parfactor crv_split_constant(const Vocabulary& voc, const Parfactor& g, std::size_t target,
                             ConstId constant);

// The ground instances covered by an argument (full position tuples).
std::set<std::vector<ConstId>> instance_tuples(const Vocabulary& voc, const Parfactor& g,
                                               std::size_t arg);

// log(n! / prod h_i!)
double log_multinomial(const std::vector<int>& h);

// A zero-argument parfactor carrying a constant log weight.
Parfactor scalar_parfactor(const std::string& name, double log_value);

}  // namespace parlift::lve

#endif  // PARLIFT_LVE_HPP
