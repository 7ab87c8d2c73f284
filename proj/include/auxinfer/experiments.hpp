#pragma once

// Experiment harness: datasets (MNIST IDX images, synthetic dynamic Bayesian
// network sequences), the two reference model builders, and the
// original-vs-auxiliary comparison runs.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>

#include "auxinfer/learning.hpp"
#include "auxinfer/model_json.hpp"

namespace auxinfer {

struct DatasetMeta {
  std::string source;
  Eigen::Index rows = 0;
  std::map<std::string, Eigen::Index> dims;
  std::uint64_t seed = 0;
};

struct Dataset {
  Assignment observed;
  DatasetMeta meta;
};

/// Reads an IDX3 image file, draws `subset` distinct images with the given
/// seed, flattens each to rows x cols and binarizes at threshold * 255
/// (pixel >= cut maps to 1). Images are stored under variable `name`.
Dataset load_mnist_idx(const std::string& path, Eigen::Index subset, double threshold, std::uint64_t seed,
                       const std::string& name = "x");

/// Synthetic dynamic Bayesian network: z_0 ~ N(0, I),
/// z_{t+1} ~ N(tanh(W_z z_t + b_z), sigma_z^2 I), x_t ~ N(tanh(W_x z_t + b_x), sigma_x^2 I).
struct DbnSpec {
  int length = 10;  // T
  Eigen::Index latent_dim = 10;
  Eigen::Index obs_dim = 10;
  Eigen::Index rows = 100;  // M
  std::uint64_t seed = 7;
  // Replaces the drawn sigma_x and sigma_z when set (0 gives noiseless sequences).
  std::optional<double> truth_sigma;

  void validate() const;
};

std::string dbn_latent_name(int t);
std::string dbn_observed_name(int t);

/// Model document for the dynamic network: shared transition and emission
/// parameters across time, gaussian-affine-tanh conditionals.
ModelDocument dbn_model(const DbnSpec& spec, double prior_variance = 0.01);

/// Two-layer (or deeper) generative image model z_1 -> ... -> z_L -> x with
/// tanh Gaussian transitions and a Bernoulli-sigmoid image likelihood.
ModelDocument mnist_model(Eigen::Index latent_dim, int layers = 2, Eigen::Index obs_dim = 784,
                          double prior_variance = 0.01);

struct DbnData {
  Dataset data;
  ParameterStore truth;
  Assignment latents;
};

/// Ground-truth parameters drawn from N(0, 1) (z_0's scale fixed at 1), then
/// forward sampling of `rows` sequences; only the observations are kept in
/// `data`.
DbnData generate_dbn_data(const DbnSpec& spec, std::mt19937_64& rng);

/// One row per sequence, columns x_t{t}_d{d}.
void write_dbn_csv(const Dataset& data, const DbnSpec& spec, const std::string& path);
Dataset read_dbn_csv(const std::string& path, const DbnSpec& spec);

struct MnistSource {
  std::string path;
  Eigen::Index subset = 1000;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  Eigen::Index latent_dim = 16;
  int layers = 2;
};

struct DbnSource {
  DbnSpec spec;
  std::optional<std::string> csv_path;  // read sequences from CSV instead of sampling
};

struct ExperimentConfig {
  std::optional<std::string> model_path;  // overrides the built-in model for the source
  std::variant<MnistSource, DbnSource> data;
  LearnConfig learn;        // shared settings; form is set per run
  std::uint64_t init_seed = 1;  // seeds initial parameters
  std::string out_dir = "out";
  bool record_wall_clock = true;  // false writes wall_s as 0 for reproducible files

  void validate() const;
};

ExperimentConfig parse_experiment(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::string& path);

struct Experiment {
  ModelDocument model;
  Dataset data;
  ParameterStore init;
};

/// Model, data and initial parameters for a config.
Experiment prepare_experiment(const ExperimentConfig& config);

struct RunSummary {
  std::string label;
  double plateau = 0.0;       // mean objective over the last tenth of the run
  int iters_to_plateau = -1;  // first iteration within 5% of the reference plateau; -1 if never
  double wall_s = 0.0;
};

struct ComparisonReport {
  RunSummary first;
  RunSummary second;
  double reference_plateau = 0.0;  // min of the two plateaus
  double speedup_ratio = 0.0;      // first.iters_to_plateau / second.iters_to_plateau

  nlohmann::json to_json() const;
};

double plateau_of(const ConvergenceTrace& trace);
/// First iteration whose objective is within `fraction` of `target`
/// (objective >= target - fraction * |target|); -1 if none.
int iterations_to_reach(const ConvergenceTrace& trace, double target, double fraction = 0.05);

ComparisonReport compare_traces(const std::string& first_label, const ConvergenceTrace& first,
                                const std::string& second_label, const ConvergenceTrace& second);

struct FormRun {
  Form form = Form::original;
  FitResult result;
  std::string csv_path;
};

/// Runs one form, streaming its trace to <out_dir>/trace_<label>.csv.
FormRun run_form(const ExperimentConfig& config, const Experiment& exp, Form form, const std::string& label);

struct ComparisonOutcome {
  FormRun original;
  FormRun auxiliary;
  ComparisonReport report;
};

/// Keeps large matrix buffers in the heap between evaluations instead of
/// mapping and unmapping them each time (glibc only; no-op elsewhere).
void retain_large_allocations();

/// Runs both forms from identical seeds and initial parameters, writes two
/// CSV traces and report.json into config.out_dir.
ComparisonOutcome run_comparison(const ExperimentConfig& config);

}  // namespace auxinfer
