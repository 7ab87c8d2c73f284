#pragma once

// Records a network's log-density into an EvalTrace. Shared by the value
// routines (log_joint, aux_log_joint) and the gradient routines, so both
// paths produce the same bits.

#include <map>
#include <string>

#include "auxinfer/auxiliary.hpp"
#include "auxinfer/model.hpp"
#include "auxinfer/trace.hpp"

namespace auxinfer::detail {

struct RecordedGraph {
  std::map<std::string, int> values;     // leaf node per variable value (original) or observed (auxiliary)
  std::map<std::string, int> params;     // leaf node per parameter entry
  std::map<std::string, int> generated;  // z~ node per latent (auxiliary only)
  std::map<std::string, int> noise;      // leaf node per auxiliary root (auxiliary only)
};

RecordedGraph record_original(const BayesNet& net, const Assignment& values, const ParameterStore& params,
                              EvalTrace& trace);

RecordedGraph record_auxiliary(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                               const ParameterStore& params, EvalTrace& trace);

/// Throws NonFinite when v is not finite.
double checked_value(double v, const char* what);

}  // namespace auxinfer::detail
