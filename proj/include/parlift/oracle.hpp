#ifndef PARLIFT_ORACLE_HPP
#define PARLIFT_ORACLE_HPP

#include <map>
#include <string>
#include <vector>

#include "parlift/model.hpp"

// Ground-truth inference for verification: the temporal model is unrolled to
// a ground factor graph and queries are answered by plain variable
// elimination (or full joint enumeration on tiny graphs).  None of the
// lifted machinery is used here; tables are multiplied by this module's own
// code so it can serve as an honest oracle.
namespace parlift::oracle {

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Factor {
  std::vector<int> vars;       // indexes into the graph's variable list
  std::vector<double> table;   // linear space, row-major over vars
};

class GroundFactorGraph {
 public:
  int add_var(const std::string& name, int range);
  int var_index(const std::string& name) const;
  bool has_var(const std::string& name) const { return index_.count(name) > 0; }
  int num_vars() const { return static_cast<int>(names_.size()); }
  const std::string& var_name(int i) const { return names_.at(i); }
  int range(int i) const { return ranges_.at(i); }

  void add_factor(Factor f);
  const std::vector<Factor>& factors() const { return factors_; }

  void add_ground_factor(const model::GroundFactorData& data);

 private:
  std::vector<std::string> names_;
  std::vector<int> ranges_;
  std::map<std::string, int> index_;
  std::vector<Factor> factors_;
};

// var name -> observed value index
using GroundEvidence = std::map<std::string, int>;

// Unrolls the PDM for steps 0..T.  Variables are named "Term@step".
GroundFactorGraph unroll(const model::Pdm& pdm, int max_t);

// Exact marginal by variable elimination (min-degree order, evidence applied
// by table slicing).  Refuses graphs whose estimated cost exceeds
// `cost_cap` table entries.
std::vector<double> ground_ve(const GroundFactorGraph& g, const std::string& var,
                              const GroundEvidence& evidence, double cost_cap = 1e8);

// Full joint enumeration; only for graphs with few variables.
std::vector<double> enumerate_marginal(const GroundFactorGraph& g, const std::string& var,
                                       const GroundEvidence& evidence);

// Unnormalised joint over the given variables, all others summed out by
// brute force.  Row-major over `vars` order.  For operator soundness checks.
std::vector<double> joint_table(const GroundFactorGraph& g, const std::vector<std::string>& vars);

}  // namespace parlift::oracle

#endif  // PARLIFT_ORACLE_HPP
