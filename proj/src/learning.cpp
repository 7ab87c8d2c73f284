#include "auxinfer/learning.hpp"

#include <fmt/format.h>

#include <array>
#include <chrono>
#include <cmath>
#include <sstream>

namespace auxinfer {
namespace {

constexpr std::array<std::pair<Form, std::string_view>, 2> kFormNames = {{
    {Form::original, "original"},
    {Form::auxiliary, "auxiliary"},
}};
constexpr std::array<std::pair<Algorithm, std::string_view>, 3> kAlgorithmNames = {{
    {Algorithm::mcem, "mcem"},
    {Algorithm::joint_map, "joint-map"},
    {Algorithm::full_bayes, "full-bayes"},
}};

template <typename E, std::size_t N>
E parse_named(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s, const char* what) {
  for (const auto& [k, v] : table)
    if (v == s) return k;
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [k, v] : table)
    if (k == e) return v;
  return "?";
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// log p(x, state | theta) in either form, with a reusable working copy of
// the observed data so evaluations do not copy it.
class FormObjective {
 public:
  FormObjective(const BayesNet& net, const Assignment& data, Form form) : net_(net), form_(form) {
    for (const auto& name : net.names_of_kind(VariableKind::observed)) {
      if (!data.contains(name)) throw ShapeError("data is missing observed variable '" + name + "'");
      observed_.set(name, data.at(name));
    }
    if (form == Form::auxiliary) aux_ = to_auxiliary(net);
    work_ = observed_;
  }

  Form form() const { return form_; }
  const AuxiliaryNet* aux() const { return aux_ ? &*aux_ : nullptr; }

  ValueAndGradient evaluate(const Assignment& state, const ParameterStore& params) {
    if (form_ == Form::auxiliary) return grad_auxiliary(*aux_, observed_, state, params);
    work_.merge(state);
    return grad_original(net_, work_, params);
  }

  double value(const Assignment& state, const ParameterStore& params) {
    if (form_ == Form::auxiliary) return aux_log_joint(*aux_, observed_, state, params);
    work_.merge(state);
    return log_joint(net_, work_, params);
  }

  /// log p(x, z | theta) at the latent values the state stands for.
  double original_log_joint(const Assignment& state, const ParameterStore& params) {
    if (form_ == Form::auxiliary) work_.merge(generate_latents(*aux_, observed_, state, params));
    else work_.merge(state);
    return log_joint(net_, work_, params);
  }

  void clamp(Assignment& state) const {
    if (aux_) clamp_uniform_roots(*aux_, state);
  }

 private:
  const BayesNet& net_;
  Form form_;
  Assignment observed_;
  Assignment work_;
  std::optional<AuxiliaryNet> aux_;
};

Eigen::VectorXd param_gradient(const FlatLayout& layout, const ValueAndGradient& vg, const ParameterStore& params) {
  Eigen::VectorXd g = layout.pack(vg.gradient.wrt_params);
  for (const auto& b : layout.blocks()) g.segment(b.offset, b.rows * b.cols) += params.log_prior_grad(b.name).reshaped();
  return g;
}

void check_equivalence(FormObjective& obj, const Assignment& state, const ParameterStore& params, double aux_value,
                       double original_value) {
  const AuxiliaryNet* aux = obj.aux();
  if (!aux || aux->has_uniform_roots()) return;
  const double expected = log_jacobian(*aux, params, state.rows());
  const double diff = aux_value - original_value;
  if (std::abs(diff - expected) > 1e-8 * std::max(1.0, std::abs(aux_value)))
    throw InvariantViolation(fmt::format("auxiliary and original objectives differ by {} instead of {}", diff,
                                         expected));
}

}  // namespace

std::string_view to_string(Form f) { return name_of(kFormNames, f); }
std::string_view to_string(Algorithm a) { return name_of(kAlgorithmNames, a); }
Form parse_form(std::string_view s) { return parse_named(kFormNames, s, "form"); }
Algorithm parse_algorithm(std::string_view s) { return parse_named(kAlgorithmNames, s, "algorithm"); }

void LearnConfig::validate() const {
  if (outer_iterations < 1) throw ConfigError("outer_iterations must be at least 1");
  if (m_steps_per_iter < 1) throw ConfigError("m_steps_per_iter must be at least 1");
  if (!(adagrad_learning_rate > 0.0)) throw ConfigError("adagrad learning rate must be positive");
  if (!(adagrad_damping > 0.0)) throw ConfigError("adagrad damping must be positive");
  if (burn_in < 0 || thin < 1) throw ConfigError("burn_in must be >= 0 and thin >= 1");
  if (equivalence_check_every < 0) throw ConfigError("equivalence_check_every must be >= 0");
  hmc.validate();
}

void to_json(nlohmann::json& j, const LearnConfig& c) {
  j = nlohmann::json{
      {"form", to_string(c.form)},
      {"algorithm", to_string(c.algorithm)},
      {"outer_iterations", c.outer_iterations},
      {"hmc", {{"leapfrog_steps", c.hmc.leapfrog_steps}, {"step_size", c.hmc.step_size}}},
      {"adagrad", {{"learning_rate", c.adagrad_learning_rate}, {"damping", c.adagrad_damping}}},
      {"m_steps_per_iter", c.m_steps_per_iter},
      {"seed", c.seed},
      {"equivalence_check_every", c.equivalence_check_every},
      {"map_optimizer", c.map_optimizer == MapOptimizer::adagrad ? "adagrad" : "gradient-ascent"},
      {"gradient_ascent_lr", c.gradient_ascent_lr},
      {"burn_in", c.burn_in},
      {"thin", c.thin},
  };
}

void from_json(const nlohmann::json& j, LearnConfig& c) {
  c = LearnConfig{};
  if (j.contains("form")) c.form = parse_form(j.at("form").get<std::string>());
  if (j.contains("algorithm")) c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  c.outer_iterations = j.value("outer_iterations", c.outer_iterations);
  if (j.contains("hmc")) {
    const auto& h = j.at("hmc");
    c.hmc.leapfrog_steps = h.value("leapfrog_steps", c.hmc.leapfrog_steps);
    c.hmc.step_size = h.value("step_size", c.hmc.step_size);
  }
  if (j.contains("adagrad")) {
    const auto& a = j.at("adagrad");
    c.adagrad_learning_rate = a.value("learning_rate", c.adagrad_learning_rate);
    c.adagrad_damping = a.value("damping", c.adagrad_damping);
  }
  c.m_steps_per_iter = j.value("m_steps_per_iter", c.m_steps_per_iter);
  c.seed = j.value("seed", c.seed);
  c.equivalence_check_every = j.value("equivalence_check_every", c.equivalence_check_every);
  if (j.contains("map_optimizer")) {
    const auto s = j.at("map_optimizer").get<std::string>();
    if (s == "adagrad") c.map_optimizer = MapOptimizer::adagrad;
    else if (s == "gradient-ascent") c.map_optimizer = MapOptimizer::gradient_ascent;
    else throw ConfigError("unknown map_optimizer '" + s + "'");
  }
  c.gradient_ascent_lr = j.value("gradient_ascent_lr", c.gradient_ascent_lr);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.thin = j.value("thin", c.thin);
}

// ---------------------------------------------------------------------------
// Trace output

std::string format_trace_row(const TraceRecord& r) {
  return fmt::format("{},{},{},{},{},{}", r.iter, r.wall_s, r.log_joint, r.accept_rate, r.grad_norm_latent,
                     r.grad_norm_param);
}

CsvTraceWriter::CsvTraceWriter(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw ConfigError("cannot open '" + path + "' for writing");
  out_ << kTraceCsvHeader << '\n' << std::flush;
}

void CsvTraceWriter::append(const TraceRecord& r) { out_ << format_trace_row(r) << '\n' << std::flush; }

void write_trace_csv(const ConvergenceTrace& trace, std::ostream& out) {
  out << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) out << format_trace_row(r) << '\n';
}

ConvergenceTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trace '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader) throw FormatError("'" + path + "' has no trace header");
  ConvergenceTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::array<double, 6> v{};
    for (double& x : v) {
      if (!std::getline(fields, cell, ',')) throw FormatError("short trace row in '" + path + "'");
      x = std::stod(cell);
    }
    trace.records.push_back({static_cast<int>(v[0]), v[1], v[2], v[3], v[4], v[5]});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Learners

InitialState initial_state(const BayesNet& net, const Assignment& observed, const ParameterStore& params,
                           std::mt19937_64& rng) {
  const AuxiliaryNet aux = to_auxiliary(net);
  InitialState s;
  Eigen::Index rows = observed.rows();
  if (rows == 0) rows = 1;
  s.epsilon = sample_epsilon(aux, rows, rng);
  s.latents = generate_latents(aux, observed, s.epsilon, params);
  return s;
}

FitResult mcem_fit(const BayesNet& net, const Assignment& data, const ParameterStore& init,
                   const LearnConfig& config, std::mt19937_64& rng, const TraceCallback& on_record) {
  config.validate();
  if (config.algorithm != Algorithm::mcem) throw ConfigError("mcem_fit called with a different algorithm");
  init.validate(net);
  const Stopwatch clock;

  FitResult out;
  out.params = init;
  FormObjective obj(net, data, config.form);
  {
    InitialState s = initial_state(net, data, init, rng);
    out.latents = config.form == Form::auxiliary ? std::move(s.epsilon) : std::move(s.latents);
  }

  const FlatLayout latent_layout = FlatLayout::of(out.latents);
  const FlatLayout param_layout = FlatLayout::of(out.params, out.params.free_names());
  Assignment scratch = out.latents;
  const LogDensityFn target = [&](const Eigen::VectorXd& q) {
    latent_layout.unpack(q, scratch);
    const ValueAndGradient vg = obj.evaluate(scratch, out.params);
    return std::pair{vg.value, latent_layout.pack(vg.gradient.wrt_values)};
  };

  AdagradState adagrad{config.adagrad_learning_rate, config.adagrad_damping, {}};
  Eigen::VectorXd theta = param_layout.pack(out.params);

  try {
    ValueAndGradient current = obj.evaluate(out.latents, out.params);
    ChainState chain;
    chain.position = latent_layout.pack(out.latents);
    chain.log_density = current.value;
    chain.gradient = latent_layout.pack(current.gradient.wrt_values);

    for (int it = 1; it <= config.outer_iterations; ++it) {
      // E-step: one HMC transition of the latent state at fixed theta.
      hmc_step(chain, target, config.hmc, rng);
      latent_layout.unpack(chain.position, out.latents);
      obj.clamp(out.latents);

      // M-step: Adagrad ascent on theta at fixed latent state.
      double block_start = 0.0;
      for (int s = 0; s < config.m_steps_per_iter; ++s) {
        const ValueAndGradient vg = obj.evaluate(out.latents, out.params);
        if (s == 0) block_start = vg.value + out.params.log_prior();
        adagrad_update(adagrad, theta, param_gradient(param_layout, vg, out.params));
        param_layout.unpack(theta, out.params);
        out.params.validate(net);
      }

      current = obj.evaluate(out.latents, out.params);
      const double log_prior = out.params.log_prior();
      ++out.mstep_blocks;
      if (current.value + log_prior >= block_start) ++out.mstep_monotone_blocks;
      chain.position = latent_layout.pack(out.latents);
      chain.log_density = current.value;
      chain.gradient = latent_layout.pack(current.gradient.wrt_values);

      double original = current.value;
      if (config.form == Form::auxiliary) {
        original = obj.original_log_joint(out.latents, out.params);
        if (config.equivalence_check_every > 0 && it % config.equivalence_check_every == 0)
          check_equivalence(obj, out.latents, out.params, current.value, original);
      }

      TraceRecord r{it, clock.seconds(), original + log_prior, chain.acceptance_rate(), chain.gradient.norm(),
                    param_gradient(param_layout, current, out.params).norm()};
      if (!std::isfinite(r.log_joint)) throw NonFinite(fmt::format("objective not finite at iteration {}", it));
      out.trace.records.push_back(r);
      if (on_record) on_record(r);
    }
    out.final_acceptance = chain.acceptance_rate();
  } catch (const NonFinite& e) {
    out.error = e.what();
  } catch (const DomainError& e) {
    out.error = e.what();
  }
  return out;
}

FitResult joint_map_fit(const BayesNet& net, const Assignment& data, const ParameterStore& init,
                        const LearnConfig& config, std::mt19937_64& rng, const TraceCallback& on_record) {
  config.validate();
  if (config.algorithm != Algorithm::joint_map) throw ConfigError("joint_map_fit called with a different algorithm");
  init.validate(net);
  const Stopwatch clock;

  FitResult out;
  out.params = init;
  FormObjective obj(net, data, config.form);
  {
    InitialState s = initial_state(net, data, init, rng);
    out.latents = config.form == Form::auxiliary ? std::move(s.epsilon) : std::move(s.latents);
  }
  const FlatLayout latent_layout = FlatLayout::of(out.latents);
  const FlatLayout param_layout = FlatLayout::of(out.params, out.params.free_names());
  const Eigen::Index n_theta = param_layout.size();

  Eigen::VectorXd joint(n_theta + latent_layout.size());
  joint << param_layout.pack(out.params), latent_layout.pack(out.latents);
  AdagradState adagrad{config.adagrad_learning_rate, config.adagrad_damping, {}};

  try {
    for (int it = 1; it <= config.outer_iterations; ++it) {
      const ValueAndGradient vg = obj.evaluate(out.latents, out.params);
      Eigen::VectorXd g(joint.size());
      g << param_gradient(param_layout, vg, out.params), latent_layout.pack(vg.gradient.wrt_values);
      if (config.map_optimizer == MapOptimizer::adagrad) adagrad_update(adagrad, joint, g);
      else joint = gradient_ascent_step(joint, g, config.gradient_ascent_lr);
      param_layout.unpack(joint.head(n_theta), out.params);
      latent_layout.unpack(joint.tail(latent_layout.size()), out.latents);
      obj.clamp(out.latents);
      joint.tail(latent_layout.size()) = latent_layout.pack(out.latents);
      out.params.validate(net);

      const ValueAndGradient after = obj.evaluate(out.latents, out.params);
      double original = after.value;
      if (config.form == Form::auxiliary) {
        original = obj.original_log_joint(out.latents, out.params);
        if (config.equivalence_check_every > 0 && it % config.equivalence_check_every == 0)
          check_equivalence(obj, out.latents, out.params, after.value, original);
      }
      TraceRecord r{it,
                    clock.seconds(),
                    original + out.params.log_prior(),
                    0.0,
                    latent_layout.pack(after.gradient.wrt_values).norm(),
                    param_gradient(param_layout, after, out.params).norm()};
      if (!std::isfinite(r.log_joint)) throw NonFinite(fmt::format("objective not finite at iteration {}", it));
      out.trace.records.push_back(r);
      if (on_record) on_record(r);
    }
  } catch (const NonFinite& e) {
    out.error = e.what();
  } catch (const DomainError& e) {
    out.error = e.what();
  }
  return out;
}

FullBayesResult full_bayes_sample(const BayesNet& net, const Assignment& data, const ParameterStore& init,
                                  const LearnConfig& config, std::mt19937_64& rng, const TraceCallback& on_record) {
  config.validate();
  if (config.algorithm != Algorithm::full_bayes)
    throw ConfigError("full_bayes_sample called with a different algorithm");
  init.validate(net);
  const Stopwatch clock;

  FullBayesResult result;
  FitResult& out = result.fit;
  out.params = init;
  FormObjective obj(net, data, config.form);
  {
    InitialState s = initial_state(net, data, init, rng);
    out.latents = config.form == Form::auxiliary ? std::move(s.epsilon) : std::move(s.latents);
  }
  const FlatLayout latent_layout = FlatLayout::of(out.latents);
  result.param_layout = FlatLayout::of(out.params, out.params.free_names());
  const FlatLayout& param_layout = result.param_layout;
  const Eigen::Index n_theta = param_layout.size();

  ParameterStore scratch_params = out.params;
  Assignment scratch_latents = out.latents;
  const LogDensityFn target = [&](const Eigen::VectorXd& q) {
    param_layout.unpack(q.head(n_theta), scratch_params);
    latent_layout.unpack(q.tail(latent_layout.size()), scratch_latents);
    if (!q.allFinite()) throw NonFinite("full-bayes: non-finite position");
    const ValueAndGradient vg = obj.evaluate(scratch_latents, scratch_params);
    Eigen::VectorXd g(q.size());
    g << param_gradient(param_layout, vg, scratch_params), latent_layout.pack(vg.gradient.wrt_values);
    return std::pair{vg.value + scratch_params.log_prior(), g};
  };

  try {
    Eigen::VectorXd start(n_theta + latent_layout.size());
    start << param_layout.pack(out.params), latent_layout.pack(out.latents);
    ChainState chain = make_chain(std::move(start), target);
    for (int it = 1; it <= config.outer_iterations; ++it) {
      hmc_step(chain, target, config.hmc, rng);
      param_layout.unpack(chain.position.head(n_theta), out.params);
      latent_layout.unpack(chain.position.tail(latent_layout.size()), out.latents);
      if (it > config.burn_in && (it - config.burn_in) % config.thin == 0)
        result.samples.push_back(chain.position.head(n_theta));

      double original = chain.log_density - out.params.log_prior();
      if (config.form == Form::auxiliary) original = obj.original_log_joint(out.latents, out.params);
      TraceRecord r{it,
                    clock.seconds(),
                    original + out.params.log_prior(),
                    chain.acceptance_rate(),
                    chain.gradient.tail(latent_layout.size()).norm(),
                    chain.gradient.head(n_theta).norm()};
      out.trace.records.push_back(r);
      if (on_record) on_record(r);
    }
    out.final_acceptance = chain.acceptance_rate();
  } catch (const NonFinite& e) {
    out.error = e.what();
  } catch (const DomainError& e) {
    out.error = e.what();
  }
  return result;
}

FitResult fit(const BayesNet& net, const Assignment& data, const ParameterStore& init, const LearnConfig& config,
              const TraceCallback& on_record) {
  std::mt19937_64 rng(config.seed);
  switch (config.algorithm) {
    case Algorithm::mcem: return mcem_fit(net, data, init, config, rng, on_record);
    case Algorithm::joint_map: return joint_map_fit(net, data, init, config, rng, on_record);
    case Algorithm::full_bayes: return full_bayes_sample(net, data, init, config, rng, on_record).fit;
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace auxinfer
