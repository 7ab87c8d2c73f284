#include "auxinfer/experiments.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace auxinfer {
namespace {

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

std::string dbn_column(int t, Eigen::Index d) { return fmt::format("x_t{}_d{}", t, d); }

}  // namespace

// ---------------------------------------------------------------------------
// MNIST

Dataset load_mnist_idx(const std::string& path, Eigen::Index subset, double threshold, std::uint64_t seed,
                       const std::string& name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open IDX file '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw FormatError("'" + path + "': truncated IDX header");
  if (read_be32(bytes.data()) != 0x00000803u) throw FormatError("'" + path + "': bad IDX magic (want 0x00000803)");
  const std::size_t count = read_be32(bytes.data() + 4);
  const std::size_t height = read_be32(bytes.data() + 8);
  const std::size_t width = read_be32(bytes.data() + 12);
  if (height != 28 || width != 28) throw FormatError("'" + path + "': images are not 28x28");
  const std::size_t pixels = height * width;
  if (bytes.size() < 16 + count * pixels) throw FormatError("'" + path + "': truncated image data");
  if (subset < 1) throw RangeError("subset size must be at least 1");
  if (static_cast<std::size_t>(subset) > count)
    throw RangeError(fmt::format("subset {} exceeds the {} images available", subset, count));

  // Partial Fisher-Yates: the first `subset` slots become the sample.
  std::vector<std::size_t> index(count);
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < subset; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), count - 1);
    std::swap(index[static_cast<std::size_t>(i)], index[pick(rng)]);
  }

  const double cut = threshold * 255.0;
  Eigen::MatrixXd x(subset, static_cast<Eigen::Index>(pixels));
  for (Eigen::Index r = 0; r < subset; ++r) {
    const unsigned char* img = bytes.data() + 16 + index[static_cast<std::size_t>(r)] * pixels;
    for (std::size_t p = 0; p < pixels; ++p) x(r, static_cast<Eigen::Index>(p)) = img[p] >= cut ? 1.0 : 0.0;
  }

  Dataset ds;
  ds.observed.set(name, std::move(x));
  ds.meta = {"mnist:" + path, subset, {{name, static_cast<Eigen::Index>(pixels)}}, seed};
  return ds;
}

// ---------------------------------------------------------------------------
// Models

void DbnSpec::validate() const {
  if (length < 2) throw ConfigError("dbn: length must be at least 2");
  if (latent_dim < 1 || obs_dim < 1) throw ConfigError("dbn: dims must be positive");
  if (rows < 1) throw ConfigError("dbn: need at least one sequence");
  if (truth_sigma && !(*truth_sigma >= 0.0)) throw ConfigError("dbn: truth_sigma must be non-negative");
}

std::string dbn_latent_name(int t) { return fmt::format("z{}", t); }
std::string dbn_observed_name(int t) { return fmt::format("x{}", t); }

ModelDocument dbn_model(const DbnSpec& spec, double prior_variance) {
  spec.validate();
  std::vector<VariableDecl> vars;
  std::vector<ConditionalSpec> conds;
  for (int t = 0; t < spec.length; ++t) {
    const std::string z = dbn_latent_name(t);
    const std::string x = dbn_observed_name(t);
    vars.push_back({z, spec.latent_dim, VariableKind::latent_continuous});
    vars.push_back({x, spec.obs_dim, VariableKind::observed});
    if (t == 0)
      conds.push_back({z, {}, Family::gaussian_isotropic_prior, {{}, "", "log_sigma_z0"}});
    else
      conds.push_back({z, {dbn_latent_name(t - 1)}, Family::gaussian_affine_tanh, {{"W_z"}, "b_z", "log_sigma_z"}});
    conds.push_back({x, {z}, Family::gaussian_affine_tanh, {{"W_x"}, "b_x", "log_sigma_x"}});
  }
  PriorTable priors;
  priors.fallback.variance = prior_variance;
  return {build_network(std::move(vars), std::move(conds)), priors};
}

ModelDocument mnist_model(Eigen::Index latent_dim, int layers, Eigen::Index obs_dim, double prior_variance) {
  if (layers < 1) throw ConfigError("mnist model needs at least one latent layer");
  std::vector<VariableDecl> vars;
  std::vector<ConditionalSpec> conds;
  for (int l = 1; l <= layers; ++l) {
    const std::string z = fmt::format("z{}", l);
    vars.push_back({z, latent_dim, VariableKind::latent_continuous});
    if (l == 1)
      conds.push_back({z, {}, Family::gaussian_isotropic_prior, {{}, "", "log_sigma_z1"}});
    else
      conds.push_back({z, {fmt::format("z{}", l - 1)}, Family::gaussian_affine_tanh,
                       {{fmt::format("W_z{}", l)}, fmt::format("b_z{}", l), fmt::format("log_sigma_z{}", l)}});
  }
  vars.push_back({"x", obs_dim, VariableKind::observed});
  conds.push_back({"x", {fmt::format("z{}", layers)}, Family::bernoulli_affine_sigmoid, {{"W_x"}, "b_x", ""}});
  PriorTable priors;
  priors.fallback.variance = prior_variance;
  return {build_network(std::move(vars), std::move(conds)), priors};
}

// ---------------------------------------------------------------------------
// Synthetic DBN data

DbnData generate_dbn_data(const DbnSpec& spec, std::mt19937_64& rng) {
  const ModelDocument model = dbn_model(spec);
  DbnData out;
  out.truth = ParameterStore::sample_initial(model.net, model.priors, rng, 1.0);
  out.truth.mutable_value("log_sigma_z0").setZero();
  if (spec.truth_sigma) {
    // A zero scale is stored as log(1e-300); exp() of it is far below any
    // representable perturbation of the means.
    const double log_s = std::log(std::max(*spec.truth_sigma, 1e-300));
    out.truth.mutable_value("log_sigma_x").setConstant(log_s);
    out.truth.mutable_value("log_sigma_z").setConstant(log_s);
  }
  Assignment all = ancestral_sample(model.net, out.truth, spec.rows, rng);
  out.data.meta = {"dbn-synthetic", spec.rows, {}, spec.seed};
  for (int t = 0; t < spec.length; ++t) {
    out.data.observed.set(dbn_observed_name(t), all.at(dbn_observed_name(t)));
    out.data.meta.dims[dbn_observed_name(t)] = spec.obs_dim;
    out.latents.set(dbn_latent_name(t), all.at(dbn_latent_name(t)));
  }
  return out;
}

void write_dbn_csv(const Dataset& data, const DbnSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (int t = 0; t < spec.length; ++t)
    for (Eigen::Index d = 0; d < spec.obs_dim; ++d) out << (t == 0 && d == 0 ? "" : ",") << dbn_column(t, d);
  out << '\n';
  for (Eigen::Index r = 0; r < data.observed.rows(); ++r) {
    for (int t = 0; t < spec.length; ++t) {
      const Eigen::MatrixXd& x = data.observed.at(dbn_observed_name(t));
      for (Eigen::Index d = 0; d < spec.obs_dim; ++d) out << (t == 0 && d == 0 ? "" : ",") << fmt::format("{}", x(r, d));
    }
    out << '\n';
  }
}

Dataset read_dbn_csv(const std::string& path, const DbnSpec& spec) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path + "' is empty");
  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const std::size_t width = static_cast<std::size_t>(spec.length * spec.obs_dim);
  if (header.size() != width) throw FormatError(fmt::format("'{}' has {} columns, expected {}", path, header.size(), width));
  for (int t = 0; t < spec.length; ++t)
    for (Eigen::Index d = 0; d < spec.obs_dim; ++d)
      if (header[static_cast<std::size_t>(t * spec.obs_dim + d)] != dbn_column(t, d))
        throw FormatError("'" + path + "': unexpected column '" + header[static_cast<std::size_t>(t * spec.obs_dim + d)] + "'");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != width) throw FormatError("'" + path + "': ragged row");
    rows.push_back(std::move(row));
  }
  Dataset ds;
  const auto m = static_cast<Eigen::Index>(rows.size());
  ds.meta = {"csv:" + path, m, {}, 0};
  for (int t = 0; t < spec.length; ++t) {
    Eigen::MatrixXd x(m, spec.obs_dim);
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index d = 0; d < spec.obs_dim; ++d) x(r, d) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(t * spec.obs_dim + d)];
    ds.observed.set(dbn_observed_name(t), std::move(x));
    ds.meta.dims[dbn_observed_name(t)] = spec.obs_dim;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  learn.validate();
  if (const auto* m = std::get_if<MnistSource>(&data)) {
    if (m->subset < 1) throw ConfigError("mnist: subset must be at least 1");
    if (m->latent_dim < 1 || m->layers < 1) throw ConfigError("mnist: latent_dim and layers must be positive");
  } else {
    std::get<DbnSource>(data).spec.validate();
  }
}

ExperimentConfig parse_experiment(const nlohmann::json& j) {
  try {
    ExperimentConfig c;
    if (j.contains("model")) c.model_path = j.at("model").get<std::string>();
    const auto& d = j.at("data");
    const std::string source = d.at("source").get<std::string>();
    if (source == "mnist") {
      MnistSource m;
      m.path = d.at("path").get<std::string>();
      m.subset = d.value("subset", m.subset);
      m.threshold = d.value("threshold", m.threshold);
      m.seed = d.value("seed", m.seed);
      m.latent_dim = d.value("latent_dim", m.latent_dim);
      m.layers = d.value("layers", m.layers);
      c.data = m;
    } else if (source == "dbn-synthetic") {
      DbnSource s;
      s.spec.length = d.value("T", s.spec.length);
      s.spec.latent_dim = d.value("latent_dim", s.spec.latent_dim);
      s.spec.obs_dim = d.value("obs_dim", s.spec.obs_dim);
      s.spec.rows = d.value("M", s.spec.rows);
      s.spec.seed = d.value("seed", s.spec.seed);
      if (d.contains("truth_sigma")) s.spec.truth_sigma = d.at("truth_sigma").get<double>();
      if (d.contains("csv")) s.csv_path = d.at("csv").get<std::string>();
      c.data = s;
    } else {
      throw ConfigError("unknown data source '" + source + "'");
    }
    if (j.contains("learn")) c.learn = j.at("learn").get<LearnConfig>();
    c.init_seed = j.value("init_seed", c.init_seed);
    c.out_dir = j.value("out", c.out_dir);
    c.record_wall_clock = j.value("record_wall_clock", c.record_wall_clock);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return parse_experiment(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

Experiment prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  Experiment exp;
  if (const auto* m = std::get_if<MnistSource>(&config.data)) {
    exp.model = config.model_path ? load_model(*config.model_path) : mnist_model(m->latent_dim, m->layers);
    exp.data = load_mnist_idx(m->path, m->subset, m->threshold, m->seed);
  } else {
    const auto& s = std::get<DbnSource>(config.data);
    exp.model = config.model_path ? load_model(*config.model_path) : dbn_model(s.spec);
    if (s.csv_path) {
      exp.data = read_dbn_csv(*s.csv_path, s.spec);
    } else {
      std::mt19937_64 rng(s.spec.seed);
      exp.data = generate_dbn_data(s.spec, rng).data;
    }
  }
  for (const auto& name : exp.model.net.names_of_kind(VariableKind::observed)) {
    if (!exp.data.observed.contains(name)) throw ConfigError("data has no values for observed '" + name + "'");
    if (exp.data.observed.at(name).cols() != exp.model.net.variable(name).dim)
      throw ConfigError("data for '" + name + "' does not match the model's dimension");
  }
  std::mt19937_64 rng(config.init_seed);
  exp.init = ParameterStore::sample_initial(exp.model.net, exp.model.priors, rng, 0.01);
  return exp;
}

// ---------------------------------------------------------------------------
// Comparison

double plateau_of(const ConvergenceTrace& trace) {
  const auto& r = trace.records;
  if (r.empty()) throw RangeError("empty trace has no plateau");
  const std::size_t tail = std::max<std::size_t>(1, r.size() / 10);
  double sum = 0.0;
  for (std::size_t i = r.size() - tail; i < r.size(); ++i) sum += r[i].log_joint;
  return sum / static_cast<double>(tail);
}

int iterations_to_reach(const ConvergenceTrace& trace, double target, double fraction) {
  const double cut = target - fraction * std::abs(target);
  for (const auto& rec : trace.records)
    if (rec.log_joint >= cut) return rec.iter;
  return -1;
}

ComparisonReport compare_traces(const std::string& first_label, const ConvergenceTrace& first,
                                const std::string& second_label, const ConvergenceTrace& second) {
  ComparisonReport rep;
  rep.first = {first_label, plateau_of(first), -1, first.records.empty() ? 0.0 : first.records.back().wall_s};
  rep.second = {second_label, plateau_of(second), -1, second.records.empty() ? 0.0 : second.records.back().wall_s};
  rep.reference_plateau = std::min(rep.first.plateau, rep.second.plateau);
  rep.first.iters_to_plateau = iterations_to_reach(first, rep.reference_plateau);
  rep.second.iters_to_plateau = iterations_to_reach(second, rep.reference_plateau);
  if (rep.first.iters_to_plateau > 0 && rep.second.iters_to_plateau > 0)
    rep.speedup_ratio = static_cast<double>(rep.first.iters_to_plateau) / rep.second.iters_to_plateau;
  else
    rep.speedup_ratio = std::numeric_limits<double>::quiet_NaN();
  return rep;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  for (const RunSummary* s : {&first, &second}) {
    j["plateau"][s->label] = s->plateau;
    j["iters_to_plateau"][s->label] = s->iters_to_plateau;
    j["wall_s"][s->label] = s->wall_s;
  }
  j["reference_plateau"] = reference_plateau;
  j["speedup_ratio"] = std::isfinite(speedup_ratio) ? nlohmann::json(speedup_ratio) : nlohmann::json(nullptr);
  return j;
}

FormRun run_form(const ExperimentConfig& config, const Experiment& exp, Form form, const std::string& label) {
  std::filesystem::create_directories(config.out_dir);
  FormRun run;
  run.form = form;
  run.csv_path = (std::filesystem::path(config.out_dir) / ("trace_" + label + ".csv")).string();
  CsvTraceWriter writer(run.csv_path);
  LearnConfig learn = config.learn;
  learn.form = form;
  const bool timing = config.record_wall_clock;
  run.result = fit(exp.model.net, exp.data.observed, exp.init, learn, [&](const TraceRecord& r) {
    TraceRecord copy = r;
    if (!timing) copy.wall_s = 0.0;
    writer.append(copy);
  });
  if (!timing)
    for (auto& r : run.result.trace.records) r.wall_s = 0.0;
  nlohmann::json params;
  for (const auto& [name, value] : run.result.params.entries())
    params[name] = std::vector<double>(value.data(), value.data() + value.size());
  std::ofstream(std::filesystem::path(config.out_dir) / ("params_" + label + ".json")) << params.dump() << '\n';
  return run;
}

void retain_large_allocations() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

ComparisonOutcome run_comparison(const ExperimentConfig& config) {
  const Experiment exp = prepare_experiment(config);
  ComparisonOutcome out;
  out.original = run_form(config, exp, Form::original, "original");
  out.auxiliary = run_form(config, exp, Form::auxiliary, "auxiliary");
  out.report = compare_traces("original", out.original.result.trace, "auxiliary", out.auxiliary.result.trace);
  nlohmann::json j = out.report.to_json();
  for (const FormRun* r : {&out.original, &out.auxiliary}) {
    j["acceptance"][std::string(to_string(r->form))] = r->result.final_acceptance;
    if (r->result.error) j["errors"][std::string(to_string(r->form))] = *r->result.error;
  }
  std::ofstream report(std::filesystem::path(config.out_dir) / "report.json", std::ios::trunc);
  report << j.dump(2) << '\n';
  return out;
}

}  // namespace auxinfer
