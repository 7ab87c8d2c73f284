#include "auxinfer/inference.hpp"

#include <algorithm>
#include <cmath>

namespace auxinfer {
namespace {

// Evaluates the density, mapping numerical failures to "no density".
bool try_eval(const LogDensityFn& f, const Eigen::VectorXd& q, double& value, Eigen::VectorXd& grad) {
  try {
    auto [v, g] = f(q);
    if (!std::isfinite(v) || !g.allFinite()) return false;
    value = v;
    grad = std::move(g);
    return true;
  } catch (const NonFinite&) {
    return false;
  } catch (const DomainError&) {
    return false;
  }
}

}  // namespace

void HmcConfig::validate() const {
  if (leapfrog_steps < 1) throw ConfigError("hmc: leapfrog_steps must be positive");
  if (!(step_size > 0.0)) throw ConfigError("hmc: step_size must be positive");
}

ChainState make_chain(Eigen::VectorXd position, const LogDensityFn& log_density) {
  ChainState s;
  s.position = std::move(position);
  refresh(s, log_density);
  return s;
}

void refresh(ChainState& state, const LogDensityFn& log_density) {
  if (!try_eval(log_density, state.position, state.log_density, state.gradient))
    throw NonFinite("chain state has no finite density");
}

LeapfrogResult leapfrog(const Eigen::VectorXd& position, const Eigen::VectorXd& momentum,
                        const LogDensityFn& log_density, double step_size, int n_steps) {
  double v = 0.0;
  Eigen::VectorXd g;
  if (!try_eval(log_density, position, v, g)) return {position, momentum, 0.0, {}, false};
  return leapfrog(position, momentum, g, log_density, step_size, n_steps);
}

LeapfrogResult leapfrog(const Eigen::VectorXd& position, const Eigen::VectorXd& momentum,
                        const Eigen::VectorXd& initial_gradient, const LogDensityFn& log_density,
                        double step_size, int n_steps) {
  LeapfrogResult r{position, momentum, 0.0, initial_gradient, true};
  for (int s = 0; s < n_steps; ++s) {
    r.momentum.noalias() += 0.5 * step_size * r.gradient;
    r.position.noalias() += step_size * r.momentum;
    if (!try_eval(log_density, r.position, r.log_density, r.gradient)) {
      r.ok = false;
      return r;
    }
    r.momentum.noalias() += 0.5 * step_size * r.gradient;
  }
  return r;
}

bool hmc_step(ChainState& state, const LogDensityFn& log_density, const HmcConfig& config, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd momentum(state.position.size());
  for (Eigen::Index i = 0; i < momentum.size(); ++i) momentum(i) = normal(rng);
  // Drawn unconditionally so the random stream does not depend on the outcome.
  const double u = std::uniform_real_distribution<double>()(rng);

  ++state.proposed;
  const LeapfrogResult r =
      leapfrog(state.position, momentum, state.gradient, log_density, config.step_size, config.leapfrog_steps);
  if (!r.ok) return false;

  const double h_current = -state.log_density + 0.5 * momentum.squaredNorm();
  const double h_proposed = -r.log_density + 0.5 * r.momentum.squaredNorm();
  const double log_ratio = h_current - h_proposed;
  if (!std::isfinite(log_ratio) || !(u < std::exp(std::min(0.0, log_ratio)))) return false;

  state.position = r.position;
  state.log_density = r.log_density;
  state.gradient = r.gradient;
  ++state.accepted;
  return true;
}

void adagrad_update(AdagradState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (params.size() != grads.size()) throw ShapeError("adagrad_update: gradient size mismatch");
  if (state.accumulator.size() != params.size()) state.accumulator = Eigen::VectorXd::Zero(params.size());
  state.accumulator.array() += grads.array().square();
  params.array() += state.learning_rate * grads.array() / (state.damping + state.accumulator.array().sqrt());
}

Eigen::VectorXd gradient_ascent_step(const Eigen::VectorXd& values, const Eigen::VectorXd& grads, double lr) {
  if (values.size() != grads.size()) throw ShapeError("gradient_ascent_step: gradient size mismatch");
  return values + lr * grads;
}

}  // namespace auxinfer
