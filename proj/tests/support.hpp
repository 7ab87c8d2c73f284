#pragma once

// Fixture builders shared by the unit tests.

#include <Eigen/Dense>
#include <fmt/format.h>

#include <random>
#include <string>
#include <vector>

#include "auxinfer/auxiliary.hpp"
#include "auxinfer/gradient.hpp"
#include "auxinfer/model.hpp"

namespace fixtures {

using namespace auxinfer;

inline VariableDecl latent(const std::string& name, Eigen::Index dim) {
  return {name, dim, VariableKind::latent_continuous};
}
inline VariableDecl observed(const std::string& name, Eigen::Index dim) {
  return {name, dim, VariableKind::observed};
}

inline ConditionalSpec root(const std::string& child, GeneratorKind g = GeneratorKind::location_scale) {
  return {child, {}, Family::gaussian_isotropic_prior, {{}, "", "ls_" + child}, g};
}

inline ConditionalSpec affine(const std::string& child, std::vector<std::string> parents, Family f,
                              GeneratorKind g = GeneratorKind::location_scale) {
  ParamRefs refs;
  for (const auto& p : parents) refs.weights.push_back("W_" + child + "_" + p);
  refs.bias = "b_" + child;
  if (f != Family::bernoulli_affine_sigmoid) refs.log_sigma = "ls_" + child;
  return {child, std::move(parents), f, refs, g};
}

/// Z1 -> Z2 -> Z3 with Zi -> Xi (six factors).
inline BayesNet chain3(Eigen::Index dim = 1, GeneratorKind g = GeneratorKind::location_scale) {
  return build_network({latent("Z1", dim), latent("Z2", dim), latent("Z3", dim), observed("X1", dim),
                        observed("X2", dim), observed("X3", dim)},
                       {root("Z1", g), affine("Z2", {"Z1"}, Family::gaussian_affine_tanh, g),
                        affine("Z3", {"Z2"}, Family::gaussian_affine_tanh, g),
                        affine("X1", {"Z1"}, Family::gaussian_affine_tanh),
                        affine("X2", {"Z2"}, Family::gaussian_affine_tanh),
                        affine("X3", {"Z3"}, Family::gaussian_affine_tanh)});
}

/// Z1 -> ... -> Z_depth -> X with 1-d variables.
inline BayesNet deep_chain(int depth, Family obs_family = Family::gaussian_affine_tanh) {
  std::vector<VariableDecl> vars;
  std::vector<ConditionalSpec> conds;
  for (int d = 1; d <= depth; ++d) {
    const std::string z = fmt::format("Z{}", d);
    vars.push_back(latent(z, 1));
    conds.push_back(d == 1 ? root(z) : affine(z, {fmt::format("Z{}", d - 1)}, Family::gaussian_affine_tanh));
  }
  vars.push_back(observed("X", 1));
  conds.push_back(affine("X", {fmt::format("Z{}", depth)}, obs_family));
  return build_network(vars, conds);
}

inline Family random_gaussian_family(std::mt19937_64& rng) {
  static const Family families[] = {Family::gaussian_affine_tanh, Family::gaussian_affine_sigmoid,
                                    Family::gaussian_affine_linear};
  return families[std::uniform_int_distribution<int>(0, 2)(rng)];
}

/// Layered Gaussian network: `depth` latent layers, each with 1-2 parents
/// from the previous layers, and an observed child per latent with
/// probability 1/2 (the last layer always has one).
inline BayesNet random_gaussian_net(std::mt19937_64& rng, int max_depth = 5, Eigen::Index max_dim = 8,
                                    GeneratorKind g = GeneratorKind::location_scale, bool bernoulli_obs = false) {
  std::uniform_int_distribution<int> depth_d(1, max_depth);
  std::uniform_int_distribution<Eigen::Index> dim_d(1, max_dim);
  std::bernoulli_distribution coin(0.5);
  const int depth = depth_d(rng);
  std::vector<VariableDecl> vars;
  std::vector<ConditionalSpec> conds;
  std::vector<std::string> latents;
  for (int d = 0; d < depth; ++d) {
    const std::string z = fmt::format("z{}", d);
    vars.push_back(latent(z, dim_d(rng)));
    if (latents.empty()) {
      conds.push_back(root(z, g));
    } else {
      std::vector<std::string> parents{latents.back()};
      if (latents.size() > 1 && coin(rng)) parents.insert(parents.begin(), latents[latents.size() - 2]);
      conds.push_back(affine(z, parents, random_gaussian_family(rng), g));
    }
    latents.push_back(z);
    if (d + 1 == depth || coin(rng)) {
      const std::string x = fmt::format("x{}", d);
      vars.push_back(observed(x, dim_d(rng)));
      conds.push_back(affine(x, {z}, bernoulli_obs && coin(rng) ? Family::bernoulli_affine_sigmoid
                                                               : random_gaussian_family(rng)));
    }
  }
  return build_network(vars, conds);
}

/// Random parameters with log-scales in [-0.5, 0.5] and weights ~ N(0, 1).
inline ParameterStore random_params(const BayesNet& net, std::mt19937_64& rng) {
  ParameterStore p = ParameterStore::sample_initial(net, PriorTable{}, rng, 1.0);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const auto& name : p.names())
    if (name.rfind("ls_", 0) == 0)
      for (double& v : p.mutable_value(name).reshaped()) v = u(rng);
  return p;
}

/// Observed values: ancestral draws, with Bernoulli children binary.
inline Assignment observed_values(const BayesNet& net, const ParameterStore& p, Eigen::Index rows,
                                  std::mt19937_64& rng) {
  const Assignment all = ancestral_sample(net, p, rows, rng);
  Assignment obs;
  for (const auto& name : net.names_of_kind(VariableKind::observed)) obs.set(name, all.at(name));
  return obs;
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (double& v : m.reshaped()) v = n(rng);
  return m;
}

/// Original-form density over (latents, free params) as a flat function.
struct OriginalObjective {
  const BayesNet& net;
  Assignment values;  // observed + latents
  ParameterStore params;
  FlatLayout latents;
  FlatLayout theta;

  OriginalObjective(const BayesNet& n, Assignment v, ParameterStore p) : net(n), values(std::move(v)), params(std::move(p)) {
    Assignment lat;
    for (const auto& name : net.names_of_kind(VariableKind::latent_continuous)) lat.set(name, values.at(name));
    latents = FlatLayout::of(lat);
    theta = FlatLayout::of(params, params.names());
  }
  Eigen::VectorXd point() const {
    Eigen::VectorXd q(latents.size() + theta.size());
    q << latents.pack(values.values()), theta.pack(params);
    return q;
  }
  std::pair<double, Eigen::VectorXd> operator()(const Eigen::VectorXd& q) {
    Assignment lat;
    latents.unpack(q.head(latents.size()), lat);
    values.merge(lat);
    theta.unpack(q.tail(theta.size()), params);
    const ValueAndGradient vg = grad_original(net, values, params);
    Eigen::VectorXd g(q.size());
    g << latents.pack(vg.gradient.wrt_values), theta.pack(vg.gradient.wrt_params);
    return {vg.value, g};
  }
};

/// Auxiliary-form density over (eps, free params) as a flat function.
struct AuxiliaryObjective {
  const AuxiliaryNet& aux;
  Assignment observed;
  Assignment eps;
  ParameterStore params;
  FlatLayout noise;
  FlatLayout theta;

  AuxiliaryObjective(const AuxiliaryNet& a, Assignment obs, Assignment e, ParameterStore p)
      : aux(a), observed(std::move(obs)), eps(std::move(e)), params(std::move(p)) {
    noise = FlatLayout::of(eps);
    theta = FlatLayout::of(params, params.names());
  }
  Eigen::VectorXd point() const {
    Eigen::VectorXd q(noise.size() + theta.size());
    q << noise.pack(eps), theta.pack(params);
    return q;
  }
  std::pair<double, Eigen::VectorXd> operator()(const Eigen::VectorXd& q) {
    noise.unpack(q.head(noise.size()), eps);
    theta.unpack(q.tail(theta.size()), params);
    const ValueAndGradient vg = grad_auxiliary(aux, observed, eps, params);
    Eigen::VectorXd g(q.size());
    g << noise.pack(vg.gradient.wrt_values), theta.pack(vg.gradient.wrt_params);
    return {vg.value, g};
  }
};

// log f(child | parents) for one row, straight from the distributions module.
inline double factor_logpdf(const ConditionalSpec& c, const Assignment& a, const ParameterStore& p,
                     Eigen::Index row) {
  const Vec<double> x = a.at(c.child).row(row).transpose();
  if (c.family == Family::gaussian_isotropic_prior) {
    const Vec<double> sigma = p.value(c.params.log_sigma).col(0).array().exp();
    return gaussian_logpdf(x, Vec<double>::Zero(x.size()), sigma);
  }
  AffineMap<double> m;
  std::vector<Vec<double>> parents;
  for (std::size_t k = 0; k < c.parents.size(); ++k) {
    m.weights.push_back(p.value(c.params.weights[k]));
    parents.push_back(a.at(c.parents[k]).row(row).transpose());
  }
  m.bias = p.value(c.params.bias).col(0);
  m.nonlinearity = nonlinearity_of(c.family);
  const Vec<double> mean = apply_affine<double>(m, parents);
  if (c.family == Family::bernoulli_affine_sigmoid) return bernoulli_logpmf(x, mean);
  return gaussian_logpdf(x, mean, Vec<double>(p.value(c.params.log_sigma).col(0).array().exp()));
}

/// Random DAG on n variables (all 1-d Gaussian, no observed); edge i -> j
/// for i < j with the given probability.
inline BayesNet random_dag(std::mt19937_64& rng, int n, double edge_prob) {
  std::bernoulli_distribution edge(edge_prob);
  std::vector<VariableDecl> vars;
  std::vector<ConditionalSpec> conds;
  for (int j = 0; j < n; ++j) {
    const std::string v = fmt::format("v{}", j);
    vars.push_back(latent(v, 1));
    std::vector<std::string> parents;
    for (int i = 0; i < j; ++i)
      if (edge(rng)) parents.push_back(fmt::format("v{}", i));
    conds.push_back(parents.empty() ? root(v) : affine(v, parents, Family::gaussian_affine_linear));
  }
  return build_network(vars, conds);
}

}  // namespace fixtures
