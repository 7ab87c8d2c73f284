#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "auxinfer/auxiliary.hpp"
#include "stats.hpp"
#include "support.hpp"

using namespace auxinfer;
using namespace fixtures;

namespace {

ParameterStore unit_params(const BayesNet& net) {
  ParameterStore p;
  for (const auto& [name, shape] : net.parameter_shapes()) p.set(name, Eigen::MatrixXd::Zero(shape.rows, shape.cols));
  return p;
}

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

double latent_factor_sum(const BayesNet& net, const Assignment& all, const ParameterStore& p) {
  double total = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (net.variables()[i].kind != VariableKind::latent_continuous) continue;
    for (Eigen::Index r = 0; r < all.rows(); ++r) total += factor_logpdf(net.conditional(i), all, p, r);
  }
  return total;
}

// Marginal CDF of Z2 in Z1 -> Z2 with Z1 ~ N(0, s1^2), Z2 | Z1 ~ N(tanh(w Z1 + b), s2^2),
// by trapezoid over the standard normal driving Z1.
double chain_cdf(double t, double w, double b, double s1, double s2) {
  const int n = 720;
  const double lo = -9.0, step = 18.0 / n;
  double total = 0;
  for (int k = 0; k <= n; ++k) {
    const double u = lo + k * step;
    const double weight = (k == 0 || k == n) ? 0.5 : 1.0;
    const double phi = std::exp(-0.5 * u * u) / std::sqrt(2 * std::numbers::pi);
    total += weight * phi * stats::std_normal_cdf((t - std::tanh(w * s1 * u + b)) / s2);
  }
  return total * step;
}

BayesNet two_layer(GeneratorKind g) {
  return build_network({latent("Z1", 1), latent("Z2", 1), observed("X", 1)},
                       {root("Z1", g), affine("Z2", {"Z1"}, Family::gaussian_affine_tanh, g),
                        affine("X", {"Z2"}, Family::gaussian_affine_linear)});
}

}  // namespace

TEST_CASE("to_auxiliary replaces every latent with a deterministic node and a root") {
  const BayesNet net = chain3(2);
  const AuxiliaryNet aux = to_auxiliary(net);
  REQUIRE(aux.det_nodes().size() == 3);
  REQUIRE(aux.aux_roots().size() == 3);
  const std::vector<std::string> expected{"Z1", "Z2", "Z3"};
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(aux.det_nodes()[k].latent == expected[k]);
    CHECK(aux.det_nodes()[k].aux_root == aux_root_name(expected[k]));
    CHECK(aux.aux_roots()[k].name == aux.det_nodes()[k].aux_root);
    CHECK(aux.aux_roots()[k].dim == 2);
    CHECK(aux.aux_roots()[k].kind == VariableKind::auxiliary_root);
    CHECK(net.conditional(aux.det_nodes()[k].generator.conditional).child == expected[k]);
  }
  CHECK_FALSE(aux.has_uniform_roots());
  CHECK(to_auxiliary(with_generator(net, GeneratorKind::inverse_cdf)).has_uniform_roots());
  CHECK_THROWS_AS(aux.det_node_for("X1"), UnknownVariable);
}

TEST_CASE("a network without latents has the same density in both forms") {
  const BayesNet net = build_network({observed("X", 3)}, {root("X")});
  const AuxiliaryNet aux = to_auxiliary(net);
  CHECK(aux.det_nodes().empty());
  std::mt19937_64 rng(2);
  const ParameterStore p = random_params(net, rng);
  Assignment obs;
  obs.set("X", normal_matrix(5, 3, rng));
  CHECK(aux_log_joint(aux, obs, Assignment{}, p) == log_joint(net, obs, p));
}

TEST_CASE("latent names that clash with auxiliary roots are rejected") {
  CHECK_THROWS_AS(to_auxiliary(build_network({latent("Z", 1), latent("eps_Z", 1)}, {root("Z"), root("eps_Z")})),
                  DuplicateName);
}

TEST_CASE("generate_latents on small examples") {
  SUBCASE("standard normal root passes the noise through") {
    const BayesNet net = build_network({latent("Z", 1)}, {root("Z")});
    const AuxiliaryNet aux = to_auxiliary(net);
    Assignment eps;
    eps.set("eps_Z", scalar(1.3));
    CHECK(generate_latents(aux, {}, eps, unit_params(net)).at("Z")(0, 0) == 1.3);
  }
  SUBCASE("inverse cdf of one half is zero") {
    const BayesNet net = build_network({latent("Z", 1)}, {root("Z", GeneratorKind::inverse_cdf)});
    const AuxiliaryNet aux = to_auxiliary(net);
    Assignment eps;
    eps.set("eps_Z", scalar(0.5));
    CHECK(generate_latents(aux, {}, eps, unit_params(net)).at("Z")(0, 0) == 0.0);
    eps.set("eps_Z", scalar(0.0));
    CHECK_THROWS_AS(generate_latents(aux, {}, eps, unit_params(net)), DomainError);
  }
  SUBCASE("two steps compose by hand") {
    const BayesNet net = two_layer(GeneratorKind::location_scale);
    const AuxiliaryNet aux = to_auxiliary(net);
    ParameterStore p = unit_params(net);
    p.set("ls_Z1", scalar(std::log(2.0)));
    p.set("W_Z2_Z1", scalar(0.7));
    p.set("b_Z2", scalar(-0.1));
    p.set("ls_Z2", scalar(std::log(0.5)));
    Assignment obs, eps;
    obs.set("X", scalar(0.0));
    eps.set("eps_Z1", scalar(0.4));
    eps.set("eps_Z2", scalar(-1.1));
    const Assignment z = generate_latents(aux, obs, eps, p);
    const double z1 = 2.0 * 0.4;
    CHECK(z.at("Z1")(0, 0) == doctest::Approx(z1).epsilon(1e-15));
    CHECK(z.at("Z2")(0, 0) == doctest::Approx(std::tanh(0.7 * z1 - 0.1) + 0.5 * -1.1).epsilon(1e-15));
  }
}

TEST_CASE("location-scale density differs from log_joint(z~) by M * sum log sigma") {
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 30; ++rep) {
    const BayesNet net = random_gaussian_net(rng, 5, 6, GeneratorKind::location_scale, true);
    const AuxiliaryNet aux = to_auxiliary(net);
    const ParameterStore p = random_params(net, rng);
    const Eigen::Index rows = 7;
    const Assignment obs = observed_values(net, p, rows, rng);

    double lo = INFINITY, hi = -INFINITY;
    for (int draw = 0; draw < 5; ++draw) {
      const Assignment eps = sample_epsilon(aux, rows, rng);
      Assignment all = obs;
      all.merge(generate_latents(aux, obs, eps, p));
      const double diff = aux_log_joint(aux, obs, eps, p) - log_joint(net, all, p);
      CHECK(diff == doctest::Approx(log_jacobian(aux, p, rows)).epsilon(1e-10));
      lo = std::min(lo, diff);
      hi = std::max(hi, diff);
    }
    CHECK(hi - lo < 1e-9);
  }
}

TEST_CASE("inverse-cdf density drops the latent factors") {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 30; ++rep) {
    const BayesNet net = random_gaussian_net(rng, 4, 4, GeneratorKind::inverse_cdf);
    const AuxiliaryNet aux = to_auxiliary(net);
    const ParameterStore p = random_params(net, rng);
    const Assignment obs = observed_values(net, p, 5, rng);
    const Assignment eps = sample_epsilon(aux, 5, rng);
    Assignment all = obs;
    all.merge(generate_latents(aux, obs, eps, p));
    const double diff = aux_log_joint(aux, obs, eps, p) - log_joint(net, all, p);
    CHECK(diff == doctest::Approx(-latent_factor_sum(net, all, p)).epsilon(1e-10));
    CHECK(log_jacobian(aux, p, 5) == 0.0);
  }
}

TEST_CASE("log_jacobian sums log scales of location-scale latents") {
  const BayesNet net = chain3(2);
  const AuxiliaryNet aux = to_auxiliary(net);
  ParameterStore p = unit_params(net);
  p.set("ls_Z1", Eigen::Vector2d(0.1, 0.2));
  p.set("ls_Z3", Eigen::Vector2d(-0.5, 0.0));
  p.set("ls_X1", Eigen::Vector2d(9.0, 9.0));
  CHECK(log_jacobian(aux, p, 4) == doctest::Approx(4 * (0.1 + 0.2 - 0.5)).epsilon(1e-15));
}

TEST_CASE("sample_epsilon") {
  const BayesNet net = chain3(3);
  const AuxiliaryNet gauss = to_auxiliary(net);
  const AuxiliaryNet unif = to_auxiliary(with_generator(net, GeneratorKind::inverse_cdf));

  std::mt19937_64 a(5), b(5);
  const Assignment ea = sample_epsilon(gauss, 10, a), eb = sample_epsilon(gauss, 10, b);
  for (const auto& name : ea.names()) CHECK(ea.at(name) == eb.at(name));

  std::mt19937_64 rng(6);
  const Assignment big = sample_epsilon(gauss, 20000, rng);
  for (const auto& name : big.names()) {
    CHECK(big.at(name).rows() == 20000);
    CHECK(big.at(name).cols() == 3);
    CHECK(std::abs(big.at(name).mean()) < 4.0 / std::sqrt(60000.0));
  }
  const Assignment u = sample_epsilon(unif, 20000, rng);
  for (const auto& name : u.names()) {
    CHECK(u.at(name).minCoeff() > 0.0);
    CHECK(u.at(name).maxCoeff() < 1.0);
    CHECK(std::abs(u.at(name).mean() - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / 60000.0));
  }
  CHECK_THROWS_AS(sample_epsilon(gauss, 0, rng), RangeError);
}

TEST_CASE("generated latents follow the ancestral distribution") {
  for (GeneratorKind g : {GeneratorKind::location_scale, GeneratorKind::inverse_cdf}) {
    CAPTURE(to_string(g));
    const BayesNet net = two_layer(g);
    const AuxiliaryNet aux = to_auxiliary(net);
    ParameterStore p = unit_params(net);
    p.set("ls_Z1", scalar(std::log(1.5)));
    p.set("W_Z2_Z1", scalar(1.2));
    p.set("b_Z2", scalar(0.3));
    p.set("ls_Z2", scalar(std::log(0.4)));

    const Eigen::Index n = 20000;
    std::mt19937_64 rng(31);
    const Assignment ancestral = ancestral_sample(net, p, n, rng);
    const Assignment eps = sample_epsilon(aux, n, rng);
    Assignment obs;
    obs.set("X", Eigen::MatrixXd::Zero(n, 1));
    const Assignment gen = generate_latents(aux, obs, eps, p);

    const auto col = [](const Eigen::MatrixXd& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
    const std::vector<double> a = col(ancestral.at("Z2")), z = col(gen.at("Z2"));
    CHECK(stats::ks_two_sample(a, z) < 1.63 * std::sqrt(2.0 / n));
    const auto cdf = [](double t) { return chain_cdf(t, 1.2, 0.3, 1.5, 0.4); };
    CHECK(stats::ks_one_sample(z, cdf) < 1.63 / std::sqrt(static_cast<double>(n)));
    CHECK(stats::ks_one_sample(a, cdf) < 1.63 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("epsilon_from_latents inverts generate_latents") {
  std::mt19937_64 rng(41);
  for (GeneratorKind g : {GeneratorKind::location_scale, GeneratorKind::inverse_cdf}) {
    for (int rep = 0; rep < 20; ++rep) {
      const BayesNet net = random_gaussian_net(rng, 5, 5, g);
      const AuxiliaryNet aux = to_auxiliary(net);
      const ParameterStore p = random_params(net, rng);
      const Assignment obs = observed_values(net, p, 6, rng);
      const Assignment eps = sample_epsilon(aux, 6, rng);
      const Assignment z = generate_latents(aux, obs, eps, p);
      const Assignment back = epsilon_from_latents(aux, obs, z, p);
      for (const auto& name : eps.names()) CHECK((back.at(name) - eps.at(name)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("generation does not depend on declaration order") {
  // Same network declared in two orders; different tie-breaks, same values.
  const std::vector<VariableDecl> vars{latent("A", 2), latent("B", 2), latent("C", 2), observed("X", 2)};
  const std::vector<ConditionalSpec> conds{root("A"), root("B"), affine("C", {"A", "B"}, Family::gaussian_affine_tanh),
                                           affine("X", {"C"}, Family::gaussian_affine_linear)};
  const BayesNet first = build_network(vars, conds);
  const BayesNet second = build_network({vars[1], vars[3], vars[2], vars[0]}, {conds[1], conds[3], conds[2], conds[0]});
  REQUIRE(first.topological_names() != second.topological_names());

  std::mt19937_64 rng(8);
  const ParameterStore p = random_params(first, rng);
  const Assignment obs = observed_values(first, p, 4, rng);
  const AuxiliaryNet a1 = to_auxiliary(first), a2 = to_auxiliary(second);
  const Assignment eps = sample_epsilon(a1, 4, rng);
  const Assignment z1 = generate_latents(a1, obs, eps, p), z2 = generate_latents(a2, obs, eps, p);
  for (const auto& name : z1.names()) CHECK(z1.at(name) == z2.at(name));
  CHECK(aux_log_joint(a1, obs, eps, p) == doctest::Approx(aux_log_joint(a2, obs, eps, p)).epsilon(1e-14));
}

TEST_CASE("clamp_uniform_roots keeps uniform roots inside the open interval") {
  const BayesNet net = build_network({latent("U", 3), latent("G", 3)},
                                     {root("U", GeneratorKind::inverse_cdf), root("G")});
  const AuxiliaryNet aux = to_auxiliary(net);
  Assignment eps;
  eps.set("eps_U", Eigen::RowVector3d(0.0, 0.5, 1.0));
  eps.set("eps_G", Eigen::RowVector3d(-5.0, 0.0, 5.0));
  clamp_uniform_roots(aux, eps);
  CHECK(eps.at("eps_U")(0, 0) == kUniformFloor);
  CHECK(eps.at("eps_U")(0, 1) == 0.5);
  CHECK(eps.at("eps_U")(0, 2) == 1.0 - kUniformFloor);
  CHECK(eps.at("eps_G") == Eigen::MatrixXd(Eigen::RowVector3d(-5.0, 0.0, 5.0)));
  CHECK(std::isfinite(aux_log_joint(aux, {}, eps, unit_params(net))));
}
