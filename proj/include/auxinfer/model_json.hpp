#pragma once

// JSON model documents:
//
//   {"variables":    [{"name": "z1", "dim": 16, "kind": "latent-continuous"}, ...],
//    "conditionals": [{"child": "z2", "parents": ["z1"], "family": "gaussian-affine-tanh",
//                      "params": {"weights": ["W_z2"], "bias": "b_z2", "log_sigma": "log_sigma_z2"},
//                      "generator": "location-scale"}, ...],
//    "priors":       {"default": {"variance": 0.01}, "W_z2": {"variance": 0.01, "fixed": false}}}

#include <nlohmann/json.hpp>

#include <string>

#include "auxinfer/model.hpp"

namespace auxinfer {

struct ModelDocument {
  BayesNet net;
  PriorTable priors;
};

ModelDocument parse_model(const nlohmann::json& doc);
ModelDocument load_model(const std::string& path);
nlohmann::json model_to_json(const BayesNet& net, const PriorTable& priors);

}  // namespace auxinfer
