#include "auxinfer/auxiliary.hpp"

#include <algorithm>

#include "auxinfer/trace.hpp"
#include "record.hpp"

namespace auxinfer {

std::string aux_root_name(const std::string& latent) { return "eps_" + latent; }

const DeterministicNode& AuxiliaryNet::det_node_for(const std::string& latent) const {
  auto it = det_index_.find(latent);
  if (it == det_index_.end()) throw UnknownVariable("'" + latent + "' has no deterministic node");
  return det_nodes_[it->second];
}

bool AuxiliaryNet::has_uniform_roots() const {
  return std::ranges::any_of(det_nodes_,
                             [](const auto& d) { return d.generator.kind == GeneratorKind::inverse_cdf; });
}

AuxiliaryNet to_auxiliary(const BayesNet& net) {
  AuxiliaryNet aux;
  aux.base_ = net;
  for (std::size_t i : net.topological_order()) {
    const VariableDecl& v = net.variables()[i];
    if (v.kind != VariableKind::latent_continuous) continue;
    const ConditionalSpec& c = net.conditional(i);
    if (!is_gaussian(c.family))
      throw UnsupportedFamily("latent '" + v.name + "' has family '" + std::string(to_string(c.family)) +
                              "', which has no generating function");
    DeterministicNode det{v.name, aux_root_name(v.name), {c.generator, i}};
    if (net.contains(det.aux_root)) throw DuplicateName("auxiliary root name '" + det.aux_root + "' is taken");
    aux.det_index_.emplace(v.name, aux.det_nodes_.size());
    aux.aux_roots_.push_back({det.aux_root, v.dim, VariableKind::auxiliary_root});
    aux.det_nodes_.push_back(std::move(det));
  }
  return aux;
}

BayesNet with_generator(const BayesNet& net, GeneratorKind kind) {
  std::vector<ConditionalSpec> conds = net.conditionals();
  for (std::size_t i = 0; i < conds.size(); ++i)
    if (net.variables()[i].kind == VariableKind::latent_continuous) conds[i].generator = kind;
  return build_network(net.variables(), std::move(conds));
}

Assignment generate_latents(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                            const ParameterStore& params) {
  EvalTrace trace;
  const auto graph = detail::record_auxiliary(aux, observed, epsilon, params, trace);
  Assignment out;
  for (const auto& [name, node] : graph.generated) out.set(name, trace.value_of(node));
  return out;
}

double aux_log_joint(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                     const ParameterStore& params) {
  EvalTrace trace;
  detail::record_auxiliary(aux, observed, epsilon, params, trace);
  return detail::checked_value(trace.value(), "aux_log_joint");
}

Assignment sample_epsilon(const AuxiliaryNet& aux, Eigen::Index rows, std::mt19937_64& rng) {
  if (rows < 1) throw RangeError("sample_epsilon: need at least one row");
  Assignment out;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  for (std::size_t k = 0; k < aux.det_nodes().size(); ++k) {
    const auto& det = aux.det_nodes()[k];
    const auto& root = aux.aux_roots()[k];
    Eigen::MatrixXd draw(rows, root.dim);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index d = 0; d < root.dim; ++d) {
        if (det.generator.kind == GeneratorKind::inverse_cdf) {
          double u = uniform(rng);
          while (u <= 0.0) u = uniform(rng);
          draw(r, d) = u;
        } else {
          draw(r, d) = normal(rng);
        }
      }
    }
    out.set(root.name, std::move(draw));
  }
  return out;
}

Assignment epsilon_from_latents(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& latents,
                                const ParameterStore& params) {
  const BayesNet& net = aux.base();
  Assignment all = observed;
  all.merge(latents);
  Assignment out;
  for (const auto& det : aux.det_nodes()) {
    const ConditionalSpec& c = net.conditional(det.generator.conditional);
    const Eigen::MatrixXd& z = latents.at(det.latent);
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    if (has_affine_mean(c.family)) {
      mean.rowwise() = params.value(c.params.bias).col(0).transpose();
      for (std::size_t k = 0; k < c.parents.size(); ++k)
        mean.noalias() += all.at(c.parents[k]) * params.value(c.params.weights[k]).transpose();
      const Nonlinearity f = nonlinearity_of(c.family);
      mean = mean.unaryExpr([f](double a) { return apply_nonlinearity(f, a); });
    }
    const Eigen::RowVectorXd inv_sigma = (-params.value(c.params.log_sigma).col(0).array()).exp().transpose();
    Eigen::MatrixXd std_noise = ((z - mean).array().rowwise() * inv_sigma.array()).matrix();
    if (det.generator.kind == GeneratorKind::inverse_cdf)
      std_noise = std_noise.unaryExpr([](double s) { return normal_cdf(s); });
    out.set(det.aux_root, std::move(std_noise));
  }
  return out;
}

double log_jacobian(const AuxiliaryNet& aux, const ParameterStore& params, Eigen::Index rows) {
  double total = 0.0;
  for (const auto& det : aux.det_nodes()) {
    if (det.generator.kind != GeneratorKind::location_scale) continue;
    const ConditionalSpec& c = aux.base().conditional(det.generator.conditional);
    total += static_cast<double>(rows) * params.value(c.params.log_sigma).sum();
  }
  return total;
}

void clamp_uniform_roots(const AuxiliaryNet& aux, Assignment& epsilon) {
  for (const auto& det : aux.det_nodes()) {
    if (det.generator.kind != GeneratorKind::inverse_cdf) continue;
    auto& u = epsilon.at(det.aux_root);
    u = u.array().max(kUniformFloor).min(1.0 - kUniformFloor);
  }
}

}  // namespace auxinfer
