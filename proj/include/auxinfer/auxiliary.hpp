#pragma once

// Auxiliary form of a Bayesian network. Every continuous latent Z_j is
// replaced by a deterministic node Z~_j = g_j(parents, E_j, theta) driven by
// a parentless auxiliary root E_j. Marginalizing the deterministic nodes
// leaves a density over (observed, auxiliary) values only:
//
//   log p(x, eps) = sum_j log f_X(x_j | pa~_j) + sum_j log p(eps_j),
//
// where each z~ is computed from its ancestors in topological order.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "auxinfer/model.hpp"

namespace auxinfer {

struct GeneratingFunction {
  GeneratorKind kind = GeneratorKind::location_scale;
  std::size_t conditional = 0;  // index of the replaced conditional in the base net
};

struct DeterministicNode {
  std::string latent;    // name of the replaced latent (also the z~ name)
  std::string aux_root;  // name of its auxiliary root
  GeneratingFunction generator;
};

class AuxiliaryNet {
 public:
  const BayesNet& base() const { return base_; }
  /// Deterministic nodes in the base net's topological order.
  const std::vector<DeterministicNode>& det_nodes() const { return det_nodes_; }
  /// Auxiliary roots, aligned with det_nodes().
  const std::vector<VariableDecl>& aux_roots() const { return aux_roots_; }
  const DeterministicNode& det_node_for(const std::string& latent) const;
  bool has_uniform_roots() const;

 private:
  friend AuxiliaryNet to_auxiliary(const BayesNet& net);

  BayesNet base_;
  std::vector<DeterministicNode> det_nodes_;
  std::vector<VariableDecl> aux_roots_;
  std::map<std::string, std::size_t> det_index_;
};

/// Auxiliary root name used for a latent.
std::string aux_root_name(const std::string& latent);

/// Builds the auxiliary network. Each latent's generator kind comes from its
/// conditional's `generator` field. Throws UnsupportedFamily for a latent
/// whose family has no generating function.
AuxiliaryNet to_auxiliary(const BayesNet& net);

/// Copy of `net` with every latent conditional's generator set to `kind`.
BayesNet with_generator(const BayesNet& net, GeneratorKind kind);

/// z~ for every latent, computed in topological order from observed values,
/// auxiliary values (keyed by aux root name) and parameters. Location-scale:
/// z~ = h(pa~) + sigma * eps. Inverse-cdf: z~ = h(pa~) + sigma * Phi^-1(eps).
Assignment generate_latents(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                            const ParameterStore& params);

/// Marginal auxiliary log-density log p(x, eps | theta).
double aux_log_joint(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                     const ParameterStore& params);

/// I.i.d. draws for every auxiliary root: standard normal for location-scale
/// roots, uniform on (0, 1) for inverse-cdf roots.
Assignment sample_epsilon(const AuxiliaryNet& aux, Eigen::Index rows, std::mt19937_64& rng);

/// Inverse of generate_latents: the auxiliary values that reproduce the given
/// latent values.
Assignment epsilon_from_latents(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& latents,
                                const ParameterStore& params);

/// Sum over rows and dims of ln(sigma) for all location-scale latents: the
/// constant aux_log_joint(x, eps) - log_joint(x, z~(eps)).
double log_jacobian(const AuxiliaryNet& aux, const ParameterStore& params, Eigen::Index rows);

/// Clamps uniform auxiliary values into [kUniformFloor, 1 - kUniformFloor].
void clamp_uniform_roots(const AuxiliaryNet& aux, Assignment& epsilon);

}  // namespace auxinfer
