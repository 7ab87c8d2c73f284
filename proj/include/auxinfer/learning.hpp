#pragma once

// Outer learning loops (Monte Carlo EM, joint MAP ascent, full-Bayes HMC)
// run in either the original form (state: latent values z) or the auxiliary
// form (state: auxiliary values eps).

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "auxinfer/auxiliary.hpp"
#include "auxinfer/inference.hpp"
#include "auxinfer/model.hpp"

namespace auxinfer {

enum class Form { original, auxiliary };
enum class Algorithm { mcem, joint_map, full_bayes };
enum class MapOptimizer { adagrad, gradient_ascent };

std::string_view to_string(Form f);
std::string_view to_string(Algorithm a);
Form parse_form(std::string_view s);
Algorithm parse_algorithm(std::string_view s);

struct LearnConfig {
  Form form = Form::auxiliary;
  Algorithm algorithm = Algorithm::mcem;
  int outer_iterations = 1;
  HmcConfig hmc;
  double adagrad_learning_rate = 0.1;
  double adagrad_damping = 1e-8;
  int m_steps_per_iter = 5;
  std::uint64_t seed = 1;
  // Auxiliary-form runs compare the two objectives every this many iterations
  // (0 disables the check).
  int equivalence_check_every = 100;
  // joint-map only
  MapOptimizer map_optimizer = MapOptimizer::adagrad;
  double gradient_ascent_lr = 1e-3;
  // full-bayes only
  int burn_in = 0;
  int thin = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const LearnConfig& c);
void from_json(const nlohmann::json& j, LearnConfig& c);

struct TraceRecord {
  int iter = 0;
  double wall_s = 0.0;
  double log_joint = 0.0;  // log p(x, z | theta) + log p(theta); z = z~(eps) in auxiliary form
  double accept_rate = 0.0;
  double grad_norm_latent = 0.0;
  double grad_norm_param = 0.0;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
};

inline constexpr const char* kTraceCsvHeader = "iter,wall_s,log_joint,accept_rate,grad_norm_latent,grad_norm_param";

std::string format_trace_row(const TraceRecord& r);

/// Streams trace rows to a CSV file, flushing after each row.
class CsvTraceWriter {
 public:
  explicit CsvTraceWriter(const std::string& path);
  void append(const TraceRecord& r);

 private:
  std::ofstream out_;
};

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out);
ConvergenceTrace read_trace_csv(const std::string& path);

using TraceCallback = std::function<void(const TraceRecord&)>;

struct FitResult {
  ParameterStore params;
  Assignment latents;  // z (original form) or eps (auxiliary form)
  ConvergenceTrace trace;
  std::optional<std::string> error;  // set when the run stopped early
  double final_acceptance = 0.0;
  int mstep_blocks = 0;
  int mstep_monotone_blocks = 0;
};

/// Deterministic initial state shared by both forms: eps drawn from the
/// auxiliary roots' densities, and z = z~(eps) under the initial parameters.
struct InitialState {
  Assignment epsilon;
  Assignment latents;
};
InitialState initial_state(const BayesNet& net, const Assignment& observed, const ParameterStore& params,
                           std::mt19937_64& rng);

/// Monte Carlo EM: one HMC transition over the latent state per E-step,
/// then m_steps_per_iter Adagrad ascent steps on log p(x, state | theta) +
/// log p(theta) at fixed state.
FitResult mcem_fit(const BayesNet& net, const Assignment& data, const ParameterStore& init,
                   const LearnConfig& config, std::mt19937_64& rng, const TraceCallback& on_record = {});

/// Simultaneous ascent on (theta, state) of log p(x, state | theta) + log p(theta).
FitResult joint_map_fit(const BayesNet& net, const Assignment& data, const ParameterStore& init,
                        const LearnConfig& config, std::mt19937_64& rng, const TraceCallback& on_record = {});

struct FullBayesResult {
  FitResult fit;
  FlatLayout param_layout;               // layout of each sample (free parameters)
  std::vector<Eigen::VectorXd> samples;  // kept theta samples
};

/// HMC over the concatenated (theta, state) vector; theta is extracted
/// after burn-in every `thin` iterations.
FullBayesResult full_bayes_sample(const BayesNet& net, const Assignment& data, const ParameterStore& init,
                                  const LearnConfig& config, std::mt19937_64& rng,
                                  const TraceCallback& on_record = {});

/// Dispatches on config.algorithm (full-bayes returns its FitResult).
FitResult fit(const BayesNet& net, const Assignment& data, const ParameterStore& init, const LearnConfig& config,
              const TraceCallback& on_record = {});

}  // namespace auxinfer
