#include "auxinfer/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numbers>
#include <utility>

#include "auxinfer/trace.hpp"
#include "record.hpp"

namespace auxinfer {
namespace {

constexpr std::array<std::pair<VariableKind, std::string_view>, 4> kKindNames = {{
    {VariableKind::observed, "observed"},
    {VariableKind::latent_continuous, "latent-continuous"},
    {VariableKind::latent_deterministic, "latent-deterministic"},
    {VariableKind::auxiliary_root, "auxiliary-root"},
}};

constexpr std::array<std::pair<Family, std::string_view>, 5> kFamilyNames = {{
    {Family::gaussian_affine_tanh, "gaussian-affine-tanh"},
    {Family::gaussian_affine_sigmoid, "gaussian-affine-sigmoid"},
    {Family::gaussian_affine_linear, "gaussian-affine-linear"},
    {Family::bernoulli_affine_sigmoid, "bernoulli-affine-sigmoid"},
    {Family::gaussian_isotropic_prior, "gaussian-isotropic-prior"},
}};

constexpr std::array<std::pair<GeneratorKind, std::string_view>, 2> kGeneratorNames = {{
    {GeneratorKind::location_scale, "location-scale"},
    {GeneratorKind::inverse_cdf, "inverse-cdf"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [k, v] : table)
    if (k == e) return v;
  return "?";
}

template <typename E, std::size_t N>
E parse_named(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s, const char* what) {
  for (const auto& [k, v] : table)
    if (v == s) return k;
  throw InvalidModel(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

void require_shape(std::map<std::string, ParamShape>& shapes, const std::string& name, ParamShape shape) {
  if (name.empty()) throw InvalidModel("empty parameter reference");
  auto [it, inserted] = shapes.emplace(name, shape);
  if (!inserted && !(it->second == shape))
    throw ShapeError("parameter '" + name + "' is used with shapes " + std::to_string(it->second.rows) + "x" +
                     std::to_string(it->second.cols) + " and " + std::to_string(shape.rows) + "x" +
                     std::to_string(shape.cols));
}

}  // namespace

std::string_view to_string(VariableKind k) { return name_of(kKindNames, k); }
std::string_view to_string(Family f) { return name_of(kFamilyNames, f); }
std::string_view to_string(GeneratorKind g) { return name_of(kGeneratorNames, g); }
VariableKind parse_variable_kind(std::string_view s) { return parse_named(kKindNames, s, "variable kind"); }
Family parse_family(std::string_view s) { return parse_named(kFamilyNames, s, "family"); }
GeneratorKind parse_generator(std::string_view s) { return parse_named(kGeneratorNames, s, "generator"); }

bool is_gaussian(Family f) { return f != Family::bernoulli_affine_sigmoid; }
bool has_affine_mean(Family f) { return f != Family::gaussian_isotropic_prior; }

Nonlinearity nonlinearity_of(Family f) {
  switch (f) {
    case Family::gaussian_affine_tanh: return Nonlinearity::tanh;
    case Family::gaussian_affine_sigmoid:
    case Family::bernoulli_affine_sigmoid: return Nonlinearity::sigmoid;
    default: return Nonlinearity::none;
  }
}

// ---------------------------------------------------------------------------
// BayesNet

std::size_t BayesNet::index_of(std::string_view name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw UnknownVariable("unknown variable '" + std::string(name) + "'");
  return it->second;
}

bool BayesNet::contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }

std::vector<std::string> BayesNet::names_of_kind(VariableKind kind) const {
  std::vector<std::string> out;
  for (std::size_t i : order_)
    if (variables_[i].kind == kind) out.push_back(variables_[i].name);
  return out;
}

std::vector<std::string> BayesNet::topological_names() const {
  std::vector<std::string> out;
  out.reserve(order_.size());
  for (std::size_t i : order_) out.push_back(variables_[i].name);
  return out;
}

BayesNet build_network(std::vector<VariableDecl> variables, std::vector<ConditionalSpec> conditionals) {
  BayesNet net;
  for (std::size_t i = 0; i < variables.size(); ++i) {
    const VariableDecl& v = variables[i];
    if (v.name.empty()) throw InvalidModel("variable with empty name");
    if (v.dim < 1) throw InvalidModel("variable '" + v.name + "' has dim < 1");
    if (v.kind != VariableKind::observed && v.kind != VariableKind::latent_continuous)
      throw InvalidModel("variable '" + v.name + "' has kind '" + std::string(to_string(v.kind)) +
                         "', which only auxiliary networks use");
    if (!net.by_name_.emplace(v.name, i).second) throw DuplicateName("duplicate variable '" + v.name + "'");
  }

  std::vector<std::optional<ConditionalSpec>> aligned(variables.size());
  for (auto& c : conditionals) {
    const std::size_t i = net.index_of(c.child);
    if (aligned[i]) throw InvalidModel("variable '" + c.child + "' has more than one conditional");
    aligned[i] = std::move(c);
  }

  net.parent_index_.resize(variables.size());
  net.child_index_.resize(variables.size());
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (!aligned[i]) throw InvalidModel("variable '" + variables[i].name + "' has no conditional");
    const ConditionalSpec& c = *aligned[i];
    const VariableDecl& child = variables[i];
    std::set<std::string> seen;
    for (const auto& p : c.parents) {
      const std::size_t j = net.index_of(p);
      if (!seen.insert(p).second) throw InvalidModel("'" + c.child + "' lists parent '" + p + "' twice");
      net.parent_index_[i].push_back(j);
      net.child_index_[j].push_back(i);
    }

    if (c.family == Family::gaussian_isotropic_prior && !c.parents.empty())
      throw InvalidModel("'" + c.child + "': gaussian-isotropic-prior takes no parents");
    if (c.family == Family::bernoulli_affine_sigmoid && child.kind != VariableKind::observed)
      throw InvalidModel("'" + c.child + "': bernoulli conditionals are only allowed on observed variables");

    if (has_affine_mean(c.family)) {
      if (c.params.weights.size() != c.parents.size())
        throw InvalidModel("'" + c.child + "': need one weight reference per parent");
      for (std::size_t k = 0; k < c.parents.size(); ++k)
        require_shape(net.param_shapes_, c.params.weights[k],
                      {child.dim, variables[net.parent_index_[i][k]].dim});
      require_shape(net.param_shapes_, c.params.bias, {child.dim, 1});
    } else if (!c.params.weights.empty() || !c.params.bias.empty()) {
      throw InvalidModel("'" + c.child + "': prior family takes no weights or bias");
    }
    if (is_gaussian(c.family)) require_shape(net.param_shapes_, c.params.log_sigma, {child.dim, 1});
  }

  // Kahn's algorithm; among ready variables the earliest declared goes first.
  std::vector<std::size_t> indegree(variables.size());
  for (std::size_t i = 0; i < variables.size(); ++i) indegree[i] = net.parent_index_[i].size();
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < variables.size(); ++i)
    if (indegree[i] == 0) ready.insert(i);
  while (!ready.empty()) {
    const std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    net.order_.push_back(i);
    for (std::size_t ch : net.child_index_[i])
      if (--indegree[ch] == 0) ready.insert(ch);
  }
  if (net.order_.size() != variables.size()) throw CycleError("parent edges contain a cycle");

  net.variables_ = std::move(variables);
  net.conditionals_.reserve(aligned.size());
  for (auto& c : aligned) net.conditionals_.push_back(std::move(*c));
  return net;
}

// ---------------------------------------------------------------------------
// Parameters

const ParamPrior& PriorTable::lookup(const std::string& name) const {
  auto it = entries.find(name);
  return it == entries.end() ? fallback : it->second;
}

void ParameterStore::set(const std::string& name, Eigen::MatrixXd value, ParamPrior prior) {
  if (!value.allFinite()) throw NonFinite("parameter '" + name + "' is not finite");
  if (!(prior.variance > 0.0)) throw ConfigError("parameter '" + name + "' prior variance must be positive");
  entries_[name] = std::move(value);
  priors_[name] = prior;
}

const Eigen::MatrixXd& ParameterStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

Eigen::MatrixXd& ParameterStore::mutable_value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

const ParamPrior& ParameterStore::prior(const std::string& name) const { return priors_.at(name); }

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<std::string> ParameterStore::free_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!priors_.at(k).fixed) out.push_back(k);
  return out;
}

double ParameterStore::log_prior() const {
  double total = 0.0;
  for (const auto& [name, value] : entries_) {
    const ParamPrior& p = priors_.at(name);
    if (p.fixed) continue;
    const double n = static_cast<double>(value.size());
    total += -0.5 * n * std::log(2.0 * std::numbers::pi * p.variance) - 0.5 * value.squaredNorm() / p.variance;
  }
  return total;
}

Eigen::MatrixXd ParameterStore::log_prior_grad(const std::string& name) const {
  const ParamPrior& p = prior(name);
  const Eigen::MatrixXd& v = value(name);
  if (p.fixed) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
  return -v / p.variance;
}

void ParameterStore::validate(const BayesNet& net) const {
  for (const auto& [name, shape] : net.parameter_shapes()) {
    const Eigen::MatrixXd& v = value(name);
    if (v.rows() != shape.rows || v.cols() != shape.cols)
      throw ShapeError("parameter '" + name + "' has shape " + std::to_string(v.rows()) + "x" +
                       std::to_string(v.cols()) + ", expected " + std::to_string(shape.rows) + "x" +
                       std::to_string(shape.cols));
    if (!v.allFinite()) throw NonFinite("parameter '" + name + "' is not finite");
  }
}

ParameterStore ParameterStore::sample_initial(const BayesNet& net, const PriorTable& priors, std::mt19937_64& rng,
                                              double init_variance) {
  ParameterStore store;
  std::normal_distribution<double> normal(0.0, std::sqrt(init_variance));
  for (const auto& [name, shape] : net.parameter_shapes()) {
    Eigen::MatrixXd v(shape.rows, shape.cols);
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      for (Eigen::Index r = 0; r < v.rows(); ++r) v(r, c) = normal(rng);
    store.set(name, std::move(v), priors.lookup(name));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Assignment

const Eigen::MatrixXd& Assignment::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw UnknownVariable("assignment has no value for '" + name + "'");
  return it->second;
}

Eigen::MatrixXd& Assignment::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw UnknownVariable("assignment has no value for '" + name + "'");
  return it->second;
}

std::vector<std::string> Assignment::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

Eigen::Index Assignment::rows() const { return values_.empty() ? 0 : values_.begin()->second.rows(); }

Assignment Assignment::slice_rows(Eigen::Index begin, Eigen::Index count) const {
  Assignment out;
  for (const auto& [k, v] : values_) out.set(k, v.middleRows(begin, count));
  return out;
}

void Assignment::merge(const Assignment& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

void validate_assignment(const BayesNet& net, const Assignment& values) {
  Eigen::Index rows = -1;
  for (const auto& v : net.variables()) {
    if (!values.contains(v.name)) throw ShapeError("assignment is missing '" + v.name + "'");
    const Eigen::MatrixXd& m = values.at(v.name);
    if (m.cols() != v.dim)
      throw ShapeError("'" + v.name + "' has " + std::to_string(m.cols()) + " columns, expected " +
                       std::to_string(v.dim));
    if (rows < 0) rows = m.rows();
    if (m.rows() != rows) throw ShapeError("'" + v.name + "' has an inconsistent row count");
  }
}

// ---------------------------------------------------------------------------
// Densities and graph queries

double log_joint(const BayesNet& net, const Assignment& values, const ParameterStore& params) {
  EvalTrace trace;
  detail::record_original(net, values, params, trace);
  return detail::checked_value(trace.value(), "log_joint");
}

std::set<std::string> markov_blanket(const BayesNet& net, std::string_view name) {
  const std::size_t i = net.index_of(name);
  std::set<std::string> out;
  for (std::size_t p : net.parents(i)) out.insert(net.variables()[p].name);
  for (std::size_t c : net.children(i)) {
    out.insert(net.variables()[c].name);
    for (std::size_t co : net.parents(c))
      if (co != i) out.insert(net.variables()[co].name);
  }
  return out;
}

std::size_t factor_distance(const BayesNet& net, std::string_view a, std::string_view b) {
  const std::size_t from = net.index_of(a);
  const std::size_t to = net.index_of(b);
  if (from == to) return 0;
  // Two variables are one factor apart when they share a factor, i.e. when
  // one is in the other's Markov blanket.
  std::vector<std::size_t> dist(net.size(), kDisconnected);
  std::deque<std::size_t> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (const auto& nb : markov_blanket(net, net.variables()[u].name)) {
      const std::size_t v = net.index_of(nb);
      if (dist[v] != kDisconnected) continue;
      dist[v] = dist[u] + 1;
      if (v == to) return dist[v];
      queue.push_back(v);
    }
  }
  return kDisconnected;
}

Assignment ancestral_sample(const BayesNet& net, const ParameterStore& params, Eigen::Index rows,
                            std::mt19937_64& rng) {
  params.validate(net);
  Assignment out;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  for (std::size_t i : net.topological_order()) {
    const VariableDecl& v = net.variables()[i];
    const ConditionalSpec& c = net.conditional(i);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(rows, v.dim);
    if (has_affine_mean(c.family)) {
      mean.rowwise() = params.value(c.params.bias).col(0).transpose();
      for (std::size_t k = 0; k < c.parents.size(); ++k)
        mean.noalias() += out.at(c.parents[k]) * params.value(c.params.weights[k]).transpose();
      const Nonlinearity f = nonlinearity_of(c.family);
      mean = mean.unaryExpr([f](double a) { return apply_nonlinearity(f, a); });
    }
    Eigen::MatrixXd draw(rows, v.dim);
    if (c.family == Family::bernoulli_affine_sigmoid) {
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index d = 0; d < v.dim; ++d) draw(r, d) = uniform(rng) < mean(r, d) ? 1.0 : 0.0;
    } else {
      const Eigen::VectorXd sigma = params.value(c.params.log_sigma).col(0).array().exp();
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index d = 0; d < v.dim; ++d) draw(r, d) = mean(r, d) + sigma(d) * normal(rng);
    }
    out.set(v.name, std::move(draw));
  }
  return out;
}

}  // namespace auxinfer
