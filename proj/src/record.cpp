#include "record.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace auxinfer::detail {
namespace {

class Recorder {
 public:
  Recorder(const BayesNet& net, const ParameterStore& params, EvalTrace& trace, Eigen::Index rows)
      : net_(net), params_(params), trace_(trace), rows_(rows) {}

  int param(const std::string& name) {
    auto it = graph.params.find(name);
    if (it != graph.params.end()) return it->second;
    const int id = trace_.leaf(params_.value(name));
    graph.params.emplace(name, id);
    return id;
  }

  int sigma(const std::string& log_sigma_name) {
    auto it = sigma_nodes_.find(log_sigma_name);
    if (it != sigma_nodes_.end()) return it->second;
    const int id = trace_.exp(param(log_sigma_name));
    sigma_nodes_.emplace(log_sigma_name, id);
    return id;
  }

  // Mean (Gaussian) or logit (Bernoulli) node of conditional i, given
  // the node carrying each variable's current value.
  int mean(std::size_t i, const std::map<std::string, int>& value_nodes) {
    const ConditionalSpec& c = net_.conditional(i);
    if (!has_affine_mean(c.family)) return kZeroInput;
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(c.parents.size());
    for (std::size_t k = 0; k < c.parents.size(); ++k)
      pairs.emplace_back(param(c.params.weights[k]), value_nodes.at(c.parents[k]));
    const int pre = trace_.affine(rows_, param(c.params.bias), pairs);
    if (c.family == Family::bernoulli_affine_sigmoid) return pre;  // logits
    switch (nonlinearity_of(c.family)) {
      case Nonlinearity::tanh: return trace_.tanh(pre);
      case Nonlinearity::sigmoid: return trace_.sigmoid(pre);
      case Nonlinearity::none: break;
    }
    return pre;
  }

  // Log-density term of conditional i evaluated at `x_node`.
  void density_term(std::size_t i, int x_node, int mean_node) {
    const ConditionalSpec& c = net_.conditional(i);
    if (c.family == Family::bernoulli_affine_sigmoid)
      trace_.add_term(trace_.bernoulli_logit_logpmf(x_node, mean_node));
    else
      trace_.add_term(trace_.gaussian_logpdf(x_node, mean_node, param(c.params.log_sigma)));
  }

  RecordedGraph graph;

 private:
  const BayesNet& net_;
  const ParameterStore& params_;
  EvalTrace& trace_;
  Eigen::Index rows_;
  std::map<std::string, int> sigma_nodes_;
};

}  // namespace

double checked_value(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFinite(std::string(what) + ": log-density is not finite");
  return v;
}

RecordedGraph record_original(const BayesNet& net, const Assignment& values, const ParameterStore& params,
                              EvalTrace& trace) {
  validate_assignment(net, values);
  Recorder rec(net, params, trace, values.rows());
  for (std::size_t i : net.topological_order()) {
    const std::string& name = net.variables()[i].name;
    rec.graph.values.emplace(name, trace.leaf(values.at(name)));
  }
  for (std::size_t i : net.topological_order()) {
    const int m = rec.mean(i, rec.graph.values);
    rec.density_term(i, rec.graph.values.at(net.variables()[i].name), m);
  }
  return std::move(rec.graph);
}

RecordedGraph record_auxiliary(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                               const ParameterStore& params, EvalTrace& trace) {
  const BayesNet& net = aux.base();
  Eigen::Index rows = -1;
  const auto check_rows = [&](const Eigen::MatrixXd& m, const std::string& name, Eigen::Index dim) {
    if (m.cols() != dim) throw ShapeError("value of '" + name + "' has wrong dimension");
    if (rows < 0) rows = m.rows();
    if (m.rows() != rows) throw ShapeError("value of '" + name + "' has inconsistent row count");
  };
  for (const auto& name : net.names_of_kind(VariableKind::observed)) {
    if (!observed.contains(name)) throw ShapeError("missing observed value for '" + name + "'");
    check_rows(observed.at(name), name, net.variable(name).dim);
  }
  for (const auto& root : aux.aux_roots()) {
    if (!epsilon.contains(root.name)) throw ShapeError("missing auxiliary value for '" + root.name + "'");
    check_rows(epsilon.at(root.name), root.name, root.dim);
  }

  Recorder rec(net, params, trace, std::max<Eigen::Index>(rows, 0));
  // Nodes carrying each variable's value: observed leaves and generated z~.
  std::map<std::string, int> value_nodes;
  for (std::size_t i : net.topological_order()) {
    const VariableDecl& v = net.variables()[i];
    const ConditionalSpec& c = net.conditional(i);
    if (v.kind == VariableKind::observed) {
      const int x = trace.leaf(observed.at(v.name));
      rec.graph.values.emplace(v.name, x);
      value_nodes.emplace(v.name, x);
      rec.density_term(i, x, rec.mean(i, value_nodes));
      continue;
    }
    const DeterministicNode& det = aux.det_node_for(v.name);
    const int noise = trace.leaf(epsilon.at(det.aux_root));
    rec.graph.noise.emplace(det.aux_root, noise);
    const int m = rec.mean(i, value_nodes);
    const int s = rec.sigma(c.params.log_sigma);
    int z;
    if (det.generator.kind == GeneratorKind::inverse_cdf) {
      z = trace.location_scale(m, s, trace.inverse_cdf(noise));
    } else {
      z = trace.location_scale(m, s, noise);
      trace.add_term(trace.std_normal_logpdf(noise));
    }
    rec.graph.generated.emplace(v.name, z);
    value_nodes.emplace(v.name, z);
  }
  return std::move(rec.graph);
}

}  // namespace auxinfer::detail
