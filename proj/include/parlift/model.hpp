#ifndef PARLIFT_MODEL_HPP
#define PARLIFT_MODEL_HPP

#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

// Parameterised probabilistic models: logvars, PRVs, counting randvars,
// constraints, parfactors and their grounding semantics.  Everything here is
// immutable after construction; inference modules copy what they mutate.
namespace parlift::model {

using LogvarId = int;
using PrvId = int;
using ConstId = int;

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A logical variable with a finite, ordered domain of constants.
struct Logvar {
  std::string name;
  std::vector<std::string> constants;
};

// A parameterised randvar template: randvar name, logvar signature, range.
// The range is boolean unless declared otherwise.
struct Prv {
  std::string name;
  std::vector<LogvarId> params;
  std::vector<std::string> range;
};

// Temporal position of a PRV occurrence inside a two-slice model.  Static
// models use `cur` throughout; `prev` only appears in inter-slice parfactors
// and in the in-cluster of the temporal structures.
enum class Slice : std::uint8_t { prev = 0, cur = 1 };

// Declarations shared by every parfactor of a model.
class Vocabulary {
 public:
  LogvarId add_logvar(const std::string& name, std::vector<std::string> constants);
  PrvId add_prv(const std::string& name, std::vector<LogvarId> params,
                std::vector<std::string> range);

  const Logvar& logvar(LogvarId id) const { return logvars_.at(id); }
  const Prv& prv(PrvId id) const { return prvs_.at(id); }
  int num_logvars() const { return static_cast<int>(logvars_.size()); }
  int num_prvs() const { return static_cast<int>(prvs_.size()); }
  int domain_size(LogvarId id) const { return static_cast<int>(logvars_.at(id).constants.size()); }

  std::optional<LogvarId> find_logvar(const std::string& name) const;
  std::optional<PrvId> find_prv(const std::string& name) const;
  std::optional<ConstId> find_constant(LogvarId lv, const std::string& name) const;
  std::optional<int> find_range_value(PrvId prv, const std::string& name) const;

 private:
  std::vector<Logvar> logvars_;
  std::vector<Prv> prvs_;
  std::map<std::string, LogvarId> logvar_ids_;
  std::map<std::string, PrvId> prv_ids_;
};

using VocabularyPtr = std::shared_ptr<const Vocabulary>;

// One argument position of an atom: a logvar or a bound constant.
struct Term {
  LogvarId lv = -1;
  ConstId cst = -1;

  static Term var(LogvarId l) { return Term{l, -1}; }
  static Term constant(ConstId c) { return Term{-1, c}; }
  bool is_const() const { return cst >= 0; }
  auto operator<=>(const Term&) const = default;
};

// An occurrence of a PRV: possibly slice-tagged, possibly partially ground.
struct Atom {
  PrvId prv = -1;
  Slice slice = Slice::cur;
  std::vector<Term> terms;

  auto operator<=>(const Atom&) const = default;
  std::vector<LogvarId> free_logvars() const;
  bool is_ground() const;
};

// The (prv, slice) identity used for separators, parclusters and elimination.
using AtomKey = std::pair<PrvId, Slice>;
inline AtomKey key_of(const Atom& a) { return {a.prv, a.slice}; }

// Canonical atom of a PRV: every position carries the declared logvar.
Atom canonical_atom(const Vocabulary& voc, PrvId prv, Slice slice);

// Counting over one logvar of an atom, with the admissible constants.
struct CountedLogvar {
  LogvarId lv = -1;
  std::vector<ConstId> values;  // sorted
  auto operator<=>(const CountedLogvar&) const = default;
};

// A parfactor argument: a PRV occurrence or a counting randvar over it.
struct Arg {
  Atom atom;
  std::optional<CountedLogvar> counted;

  auto operator<=>(const Arg&) const = default;
  bool is_crv() const { return counted.has_value(); }
  std::vector<LogvarId> free_logvars() const;
};

// Histograms over `k` range values with total count `n`, enumerated with the
// first coordinate descending: n=2,k=2 yields [2,0],[1,1],[0,2].
std::vector<std::vector<int>> enumerate_histograms(int n, int k);
int histogram_index(const std::vector<std::vector<int>>& hists, const std::vector<int>& h);

// Number of range values of an argument (histogram count for a CRV).
int arg_range_size(const Vocabulary& voc, const Arg& arg);

// An extensional restriction of logvar tuples.  `tuples == nullopt` is TOP
// (the full Cartesian product).  Logvars are kept sorted; tuples likewise.
class Constraint {
 public:
  Constraint() = default;
  static Constraint top(std::vector<LogvarId> logvars);
  static Constraint extensional(std::vector<LogvarId> logvars,
                                std::vector<std::vector<ConstId>> tuples);

  const std::vector<LogvarId>& logvars() const { return logvars_; }
  bool is_top() const { return !tuples_.has_value(); }
  bool has_logvar(LogvarId lv) const;
  int position_of(LogvarId lv) const;

  long long count(const Vocabulary& voc) const;
  std::vector<std::vector<ConstId>> rows(const Vocabulary& voc) const;

  // Natural join on shared logvars.  TOP joins stay lazy.
  static Constraint join(const Constraint& a, const Constraint& b, const Vocabulary& voc);

  // Projection onto a subset of logvars; `multiplicity` receives the number
  // of source rows per projected row when uniform, and the call fails with
  // ModelError otherwise.
  Constraint project(const std::vector<LogvarId>& keep, const Vocabulary& voc,
                     long long* multiplicity) const;

  // Splits rows by whether the projection onto `positions` (logvar ids) is a
  // member of `match`.  Either side may be empty.
  std::pair<Constraint, Constraint> split_by_membership(
      const std::vector<LogvarId>& on, const std::set<std::vector<ConstId>>& match,
      const Vocabulary& voc) const;

  // Checks that the constraint factors as C_lv x C_rest; returns the
  // admissible values of `lv` and the rest-constraint.
  std::optional<std::pair<std::vector<ConstId>, Constraint>> factor_out(
      LogvarId lv, const Vocabulary& voc) const;

  // Rows grouped by the value of `lv`: value -> constraint without `lv`.
  std::vector<std::pair<ConstId, Constraint>> group_by(LogvarId lv, const Vocabulary& voc) const;

  auto operator<=>(const Constraint&) const = default;

 private:
  std::vector<LogvarId> logvars_;
  std::optional<std::vector<std::vector<ConstId>>> tuples_;
};

// Dense table over argument ranges, values in log space (-inf encodes 0).
struct LogTable {
  std::vector<int> dims;
  std::vector<double> v;

  static double neg_inf() { return -std::numeric_limits<double>::infinity(); }
  std::size_t size() const { return v.size(); }
  static std::size_t flat_size(const std::vector<int>& dims);
  std::size_t index(const std::vector<int>& idx) const;
  void decode(std::size_t flat, std::vector<int>& idx) const;
};

// A potential over a sequence of (counted) PRVs under a constraint.  The
// constraint ranges over exactly the free logvars of the arguments.
struct Parfactor {
  std::string name;
  std::vector<Arg> args;
  Constraint constraint;
  LogTable table;

  std::vector<LogvarId> free_logvars() const;
  bool mentions(AtomKey key) const;
  bool inter_slice() const;
};

// Checks structural invariants (constraint over exactly the free logvars,
// table size complete, counted specs valid).  Throws ModelError.
void check_parfactor(const Vocabulary& voc, const Parfactor& g);

struct Pm {
  VocabularyPtr voc;
  std::vector<Parfactor> parfactors;
};

// A temporal model: the initial slice plus a stationary two-slice model.
struct Pdm {
  VocabularyPtr voc;
  Pm g0;
  Pm g_arrow;  // within-slice parfactors tagged cur + inter-slice parfactors

  std::vector<const Parfactor*> inter_slice_parfactors() const;
  std::vector<const Parfactor*> within_slice_parfactors() const;
};

// A ground PRV instance.
struct GroundTerm {
  PrvId prv = -1;
  std::vector<ConstId> consts;
  auto operator<=>(const GroundTerm&) const = default;
};

struct Observation {
  GroundTerm term;
  int value = -1;
  auto operator<=>(const Observation&) const = default;
};

// step -> observations for that step
using Evidence = std::map<int, std::vector<Observation>>;

// A filtering/prediction query: ground term at target step, given evidence
// up to `evidence_horizon`.  Filtering when target == horizon.
struct Query {
  GroundTerm term;
  int target_time = 0;
  int evidence_horizon = 0;
};

// --- rendering -------------------------------------------------------------

// "AttC(a1)", "Pub@t-1(X,P)", "#A[AttC@t(A)]".  `temporal` controls whether
// cur atoms carry the @t suffix.
std::string render_atom(const Vocabulary& voc, const Atom& atom, bool temporal);
std::string render_arg(const Vocabulary& voc, const Arg& arg, bool temporal);
std::string render_ground_term(const Vocabulary& voc, const GroundTerm& t);

// Name of the ground randvar for a term at a concrete step ("AttC(a1)@3").
std::string ground_var_name(const Vocabulary& voc, const GroundTerm& t, int step);

// --- grounding semantics ----------------------------------------------------

// One ground factor produced by gr(): named variables with range sizes and a
// linear-space table (row-major over scope order).
struct GroundFactorData {
  std::vector<std::string> var_names;
  std::vector<int> var_ranges;
  std::vector<double> table;  // linear space
};

// gr(g | C): one ground factor per admissible constraint tuple.  CRV
// arguments expand into their base instances; the factor value is the
// potential at the induced histogram.  `step` stamps variable names, or -1
// for a static context.
std::vector<GroundFactorData> gr(const Vocabulary& voc, const Parfactor& g, int step = -1);

// gr(A | C) for a single atom: the admissible ground instances.
std::vector<GroundTerm> gr_atom(const Vocabulary& voc, const Atom& atom,
                                const Constraint& constraint);

// lv(...): the free logvars.
std::vector<LogvarId> lv(const Atom& atom);
std::vector<LogvarId> lv(const Arg& arg);
std::vector<LogvarId> lv(const Parfactor& g);

// --- temporal helpers --------------------------------------------------------

// Re-tags every cur atom to prev (or back).  Counted specs are unaffected.
Parfactor retag(const Parfactor& g, Slice from, Slice to);

// Unrolls a PDM for steps 0..T into a static PM over a fresh vocabulary whose
// PRVs are stamped "Name@k".  `name_of` maps (prv, step) to the stamped id.
struct UnrolledPm {
  Pm pm;
  std::map<std::pair<PrvId, int>, PrvId> prv_at_step;
};
UnrolledPm unroll_lifted(const Pdm& pdm, int max_t);

}  // namespace parlift::model

#endif  // PARLIFT_MODEL_HPP
