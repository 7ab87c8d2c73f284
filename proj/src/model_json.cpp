#include "auxinfer/model_json.hpp"

#include <fstream>

namespace auxinfer {
namespace {

ParamPrior parse_prior(const nlohmann::json& j, ParamPrior base) {
  base.variance = j.value("variance", base.variance);
  base.fixed = j.value("fixed", base.fixed);
  return base;
}

}  // namespace

ModelDocument parse_model(const nlohmann::json& doc) {
  try {
    std::vector<VariableDecl> vars;
    for (const auto& v : doc.at("variables"))
      vars.push_back({v.at("name").get<std::string>(), v.at("dim").get<Eigen::Index>(),
                      parse_variable_kind(v.at("kind").get<std::string>())});

    std::vector<ConditionalSpec> conds;
    for (const auto& c : doc.at("conditionals")) {
      ConditionalSpec spec;
      spec.child = c.at("child").get<std::string>();
      spec.parents = c.value("parents", std::vector<std::string>{});
      spec.family = parse_family(c.at("family").get<std::string>());
      if (c.contains("params")) {
        const auto& p = c.at("params");
        spec.params.weights = p.value("weights", std::vector<std::string>{});
        spec.params.bias = p.value("bias", std::string{});
        spec.params.log_sigma = p.value("log_sigma", std::string{});
      }
      if (c.contains("generator")) spec.generator = parse_generator(c.at("generator").get<std::string>());
      conds.push_back(std::move(spec));
    }

    PriorTable priors;
    if (doc.contains("priors")) {
      const auto& p = doc.at("priors");
      if (p.contains("default")) priors.fallback = parse_prior(p.at("default"), priors.fallback);
      for (const auto& [name, entry] : p.items())
        if (name != "default") priors.entries[name] = parse_prior(entry, priors.fallback);
    }
    return {build_network(std::move(vars), std::move(conds)), std::move(priors)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model document: ") + e.what());
  }
}

ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open model document '" + path + "'");
  try {
    return parse_model(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
}

nlohmann::json model_to_json(const BayesNet& net, const PriorTable& priors) {
  nlohmann::json doc;
  doc["variables"] = nlohmann::json::array();
  for (const auto& v : net.variables())
    doc["variables"].push_back({{"name", v.name}, {"dim", v.dim}, {"kind", to_string(v.kind)}});
  doc["conditionals"] = nlohmann::json::array();
  for (std::size_t i = 0; i < net.size(); ++i) {
    const ConditionalSpec& c = net.conditional(i);
    nlohmann::json params = nlohmann::json::object();
    if (has_affine_mean(c.family)) {
      params["weights"] = c.params.weights;
      params["bias"] = c.params.bias;
    }
    if (is_gaussian(c.family)) params["log_sigma"] = c.params.log_sigma;
    nlohmann::json entry = {{"child", c.child}, {"parents", c.parents}, {"family", to_string(c.family)},
                            {"params", params}};
    if (net.variables()[i].kind == VariableKind::latent_continuous) entry["generator"] = to_string(c.generator);
    doc["conditionals"].push_back(std::move(entry));
  }
  nlohmann::json p = {{"default", {{"variance", priors.fallback.variance}, {"fixed", priors.fallback.fixed}}}};
  for (const auto& [name, prior] : priors.entries) p[name] = {{"variance", prior.variance}, {"fixed", prior.fixed}};
  doc["priors"] = std::move(p);
  return doc;
}

}  // namespace auxinfer
