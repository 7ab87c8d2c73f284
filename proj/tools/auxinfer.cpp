// auxinfer: run original-vs-auxiliary learning comparisons, generate the
// synthetic dynamic network dataset, and check gradients.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "auxinfer/experiments.hpp"
#include "auxinfer/gradient.hpp"

using namespace auxinfer;

namespace {

int cmd_run(const std::string& config_path, const std::string& form, const std::string& out,
            std::optional<std::uint64_t> seed) {
  ExperimentConfig config = load_experiment(config_path);
  if (!out.empty()) config.out_dir = out;
  if (seed) {
    config.learn.seed = *seed;
    config.init_seed = *seed;
  }
  if (form == "both") {
    const ComparisonOutcome outcome = run_comparison(config);
    std::cout << outcome.report.to_json().dump(2) << '\n';
    for (const FormRun* r : {&outcome.original, &outcome.auxiliary})
      if (r->result.error) std::cerr << to_string(r->form) << " run stopped early: " << *r->result.error << '\n';
    return 0;
  }
  const Experiment exp = prepare_experiment(config);
  const Form f = parse_form(form);
  const FormRun run = run_form(config, exp, f, std::string(to_string(f)));
  const auto& records = run.result.trace.records;
  nlohmann::json summary = {{"form", to_string(f)},
                            {"trace", run.csv_path},
                            {"iterations", records.size()},
                            {"acceptance", run.result.final_acceptance}};
  if (!records.empty()) {
    summary["plateau"] = plateau_of(run.result.trace);
    summary["final_log_joint"] = records.back().log_joint;
    summary["wall_s"] = records.back().wall_s;
  }
  if (run.result.error) summary["error"] = *run.result.error;
  std::cout << summary.dump(2) << '\n';
  return run.result.error ? 1 : 0;
}

int cmd_gen_dbn(const std::string& config_path, const std::string& out) {
  const ExperimentConfig config = load_experiment(config_path);
  const auto* source = std::get_if<DbnSource>(&config.data);
  if (!source) throw ConfigError("gen-dbn needs a dbn-synthetic data source");
  std::mt19937_64 rng(source->spec.seed);
  const DbnData data = generate_dbn_data(source->spec, rng);
  if (auto parent = std::filesystem::path(out).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  write_dbn_csv(data.data, source->spec, out);

  nlohmann::json truth;
  for (const auto& [name, value] : data.truth.entries())
    truth[name] = std::vector<double>(value.data(), value.data() + value.size());
  std::ofstream(out + ".truth.json") << truth.dump(2) << '\n';
  std::cout << fmt::format("wrote {} sequences to {}\n", data.data.observed.rows(), out);
  return 0;
}

int cmd_check_grads(const std::string& config_path, int max_coords, double h) {
  const ExperimentConfig config = load_experiment(config_path);
  const Experiment exp = prepare_experiment(config);
  const BayesNet& net = exp.model.net;
  std::mt19937_64 rng(config.learn.seed);
  const InitialState state = initial_state(net, exp.data.observed, exp.init, rng);
  const AuxiliaryNet aux = to_auxiliary(net);

  const FlatLayout params = FlatLayout::of(exp.init, exp.init.names());
  int failures = 0;
  for (Form form : {Form::original, Form::auxiliary}) {
    const Assignment& latent = form == Form::auxiliary ? state.epsilon : state.latents;
    const FlatLayout values = FlatLayout::of(latent);
    Assignment all = exp.data.observed;
    ParameterStore p = exp.init;
    Assignment lat = latent;
    const ScalarWithGradient f = [&](const Eigen::VectorXd& q) {
      values.unpack(q.head(values.size()), lat);
      params.unpack(q.tail(params.size()), p);
      ValueAndGradient vg;
      if (form == Form::auxiliary) {
        vg = grad_auxiliary(aux, exp.data.observed, lat, p);
      } else {
        all.merge(lat);
        vg = grad_original(net, all, p);
      }
      Eigen::VectorXd g(q.size());
      g << values.pack(vg.gradient.wrt_values), params.pack(vg.gradient.wrt_params);
      return std::pair{vg.value, g};
    };
    Eigen::VectorXd point(values.size() + params.size());
    point << values.pack(latent), params.pack(exp.init);

    std::vector<Eigen::Index> coords;
    if (point.size() <= max_coords) {
      for (Eigen::Index i = 0; i < point.size(); ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, point.size() - 1);
      for (int k = 0; k < max_coords; ++k) coords.push_back(pick(rng));
    }
    const double err = finite_diff_check(f, point, h, coords);
    const bool ok = err <= 1e-4;
    failures += ok ? 0 : 1;
    std::cout << fmt::format("{:<10} coords={:<6} max_rel_err={:.3e} {}\n", to_string(form), coords.size(), err,
                             ok ? "ok" : "FAIL");
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference and learning in original and auxiliary form"};
  app.require_subcommand(1);

  std::string config_path;
  std::string form = "both";
  std::string out;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run learning in one or both forms and write traces");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--form", form, "original, auxiliary or both")
      ->check(CLI::IsMember({"original", "auxiliary", "both"}));
  run->add_option("--out", out, "Output directory (overrides the config)");
  run->add_option("--seed", seed, "Seed for initialization and sampling (overrides the config)");

  std::string gen_out;
  auto* gen = app.add_subcommand("gen-dbn", "Sample the synthetic dynamic network dataset to CSV");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  int max_coords = 400;
  double h = 1e-5;
  auto* check = app.add_subcommand("check-grads", "Compare analytic gradients with central differences");
  check->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  check->add_option("--max-coords", max_coords, "Coordinates probed per form");
  check->add_option("--step", h, "Finite-difference step");

  CLI11_PARSE(app, argc, argv);
  retain_large_allocations();
  try {
    if (*run) return cmd_run(config_path, form, out, seed);
    if (*gen) return cmd_gen_dbn(config_path, gen_out);
    if (*check) return cmd_check_grads(config_path, max_coords, h);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
