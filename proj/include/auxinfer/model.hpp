#pragma once

// Bayesian networks over vector-valued variables: declarations, conditional
// families, structural validation, the factorized joint log-density, and
// graph diagnostics (Markov blankets, factor distance).

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "auxinfer/distributions.hpp"
#include "auxinfer/errors.hpp"

namespace auxinfer {

enum class VariableKind { observed, latent_continuous, latent_deterministic, auxiliary_root };

enum class Family {
  gaussian_affine_tanh,
  gaussian_affine_sigmoid,
  gaussian_affine_linear,
  bernoulli_affine_sigmoid,
  gaussian_isotropic_prior,
};

/// How a latent is generated from auxiliary noise in auxiliary form.
enum class GeneratorKind { location_scale, inverse_cdf };

std::string_view to_string(VariableKind k);
std::string_view to_string(Family f);
std::string_view to_string(GeneratorKind g);
VariableKind parse_variable_kind(std::string_view s);
Family parse_family(std::string_view s);
GeneratorKind parse_generator(std::string_view s);

bool is_gaussian(Family f);
bool has_affine_mean(Family f);
Nonlinearity nonlinearity_of(Family f);

struct VariableDecl {
  std::string name;
  Eigen::Index dim = 1;
  VariableKind kind = VariableKind::latent_continuous;
};

/// Names of the parameter-store entries a conditional reads.
struct ParamRefs {
  std::vector<std::string> weights;  // one per parent, in parent order
  std::string bias;
  std::string log_sigma;
};

struct ConditionalSpec {
  std::string child;
  std::vector<std::string> parents;
  Family family = Family::gaussian_isotropic_prior;
  ParamRefs params;
  GeneratorKind generator = GeneratorKind::location_scale;
};

struct ParamShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  friend bool operator==(const ParamShape&, const ParamShape&) = default;
};

class BayesNet {
 public:
  const std::vector<VariableDecl>& variables() const { return variables_; }
  /// Conditionals aligned with variables(): conditional(i).child == variables()[i].name.
  const ConditionalSpec& conditional(std::size_t i) const { return conditionals_.at(i); }
  const std::vector<ConditionalSpec>& conditionals() const { return conditionals_; }
  const std::vector<std::size_t>& topological_order() const { return order_; }
  const std::vector<std::size_t>& parents(std::size_t i) const { return parent_index_.at(i); }
  const std::vector<std::size_t>& children(std::size_t i) const { return child_index_.at(i); }
  const std::map<std::string, ParamShape>& parameter_shapes() const { return param_shapes_; }

  std::size_t size() const { return variables_.size(); }
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;
  const VariableDecl& variable(std::string_view name) const { return variables_[index_of(name)]; }
  const ConditionalSpec& conditional_of(std::string_view name) const { return conditionals_[index_of(name)]; }

  /// Names of variables of the given kind, in topological order.
  std::vector<std::string> names_of_kind(VariableKind kind) const;
  std::vector<std::string> topological_names() const;

 private:
  friend BayesNet build_network(std::vector<VariableDecl>, std::vector<ConditionalSpec>);

  std::vector<VariableDecl> variables_;
  std::vector<ConditionalSpec> conditionals_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> parent_index_;
  std::vector<std::vector<std::size_t>> child_index_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
  std::map<std::string, ParamShape> param_shapes_;
};

/// Validates structure and caches a topological order. Ties are broken by
/// declaration order. Only observed and latent-continuous kinds are accepted.
BayesNet build_network(std::vector<VariableDecl> variables, std::vector<ConditionalSpec> conditionals);

/// Zero-mean Gaussian prior with the given variance on every scalar entry.
/// Fixed entries are held constant by the learners and carry no prior term.
struct ParamPrior {
  double variance = 0.01;
  bool fixed = false;
};

struct PriorTable {
  ParamPrior fallback;
  std::map<std::string, ParamPrior> entries;

  const ParamPrior& lookup(const std::string& name) const;
};

class ParameterStore {
 public:
  ParameterStore() = default;

  void set(const std::string& name, Eigen::MatrixXd value, ParamPrior prior = {});
  const Eigen::MatrixXd& value(const std::string& name) const;
  Eigen::MatrixXd& mutable_value(const std::string& name);
  const ParamPrior& prior(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.contains(name); }

  /// All names, sorted.
  std::vector<std::string> names() const;
  /// Names of the entries a learner may move, sorted.
  std::vector<std::string> free_names() const;

  /// Sum of log prior densities over free entries.
  double log_prior() const;
  /// Gradient of log_prior() with respect to one entry (zero when fixed).
  Eigen::MatrixXd log_prior_grad(const std::string& name) const;

  /// Checks every referenced entry exists with its implied shape and is finite.
  void validate(const BayesNet& net) const;

  /// Draws each entry of the network's parameter shapes from
  /// N(0, init_variance) and attaches priors from the table.
  static ParameterStore sample_initial(const BayesNet& net, const PriorTable& priors, std::mt19937_64& rng,
                                       double init_variance = 0.01);

  const std::map<std::string, Eigen::MatrixXd>& entries() const { return entries_; }

 private:
  std::map<std::string, Eigen::MatrixXd> entries_;
  std::map<std::string, ParamPrior> priors_;
};

/// Per-variable value matrices, M rows each.
class Assignment {
 public:
  void set(const std::string& name, Eigen::MatrixXd value) { values_[name] = std::move(value); }
  const Eigen::MatrixXd& at(const std::string& name) const;
  Eigen::MatrixXd& at(const std::string& name);
  bool contains(const std::string& name) const { return values_.contains(name); }
  std::vector<std::string> names() const;
  /// Row count shared by all entries; 0 when empty.
  Eigen::Index rows() const;
  /// Copy of rows [begin, begin + count) of every entry.
  Assignment slice_rows(Eigen::Index begin, Eigen::Index count) const;
  /// Entries of `other` are added (replacing same-named ones).
  void merge(const Assignment& other);

  const std::map<std::string, Eigen::MatrixXd>& values() const { return values_; }

 private:
  std::map<std::string, Eigen::MatrixXd> values_;
};

/// Checks that all observed and latent variables are present with matching
/// dims and a common row count.
void validate_assignment(const BayesNet& net, const Assignment& values);

/// Sum over datapoints and factors of conditional log-densities.
double log_joint(const BayesNet& net, const Assignment& values, const ParameterStore& params);

/// Parents, children and co-parents of `name`, excluding `name` itself.
std::set<std::string> markov_blanket(const BayesNet& net, std::string_view name);

inline constexpr std::size_t kDisconnected = std::numeric_limits<std::size_t>::max();

/// Fewest factors on a path between two variables in the factor graph;
/// kDisconnected when no path exists.
std::size_t factor_distance(const BayesNet& net, std::string_view a, std::string_view b);

/// Draws every latent and observed variable by forward sampling.
Assignment ancestral_sample(const BayesNet& net, const ParameterStore& params, Eigen::Index rows,
                            std::mt19937_64& rng);

}  // namespace auxinfer
