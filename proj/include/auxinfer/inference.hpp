#pragma once

// Gradient-driven samplers and optimizers over flat parameter vectors:
// Hybrid Monte Carlo with a leapfrog integrator (identity mass matrix),
// Adagrad ascent, and plain gradient ascent.

#include <Eigen/Dense>

#include <cstddef>
#include <random>

#include "auxinfer/gradient.hpp"

namespace auxinfer {

/// Log-density and its gradient at a point. May throw NonFinite or
/// DomainError; samplers treat either as zero density.
using LogDensityFn = ScalarWithGradient;

struct HmcConfig {
  int leapfrog_steps = 5;
  double step_size = 0.01;

  void validate() const;
};

struct ChainState {
  Eigen::VectorXd position;
  double log_density = 0.0;
  Eigen::VectorXd gradient;  // of log_density at position
  std::size_t accepted = 0;
  std::size_t proposed = 0;

  double acceptance_rate() const {
    return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  }
};

/// Chain positioned at `position` with a valid cache. Throws if the
/// density is not finite there.
ChainState make_chain(Eigen::VectorXd position, const LogDensityFn& log_density);

/// Re-evaluates the cached density and gradient (after the target changed).
void refresh(ChainState& state, const LogDensityFn& log_density);

struct LeapfrogResult {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  double log_density = 0.0;
  Eigen::VectorXd gradient;
  bool ok = true;  // false when the trajectory hit a non-finite density
};

/// Half kick, drift, half kick, repeated n_steps times, on the Hamiltonian
/// H(q, p) = -log_density(q) + |p|^2 / 2.
LeapfrogResult leapfrog(const Eigen::VectorXd& position, const Eigen::VectorXd& momentum,
                        const LogDensityFn& log_density, double step_size, int n_steps);

/// Same, starting from a known gradient at `position`.
LeapfrogResult leapfrog(const Eigen::VectorXd& position, const Eigen::VectorXd& momentum,
                        const Eigen::VectorXd& initial_gradient, const LogDensityFn& log_density,
                        double step_size, int n_steps);

/// One HMC transition: fresh standard normal momentum, leapfrog proposal,
/// Metropolis correction. Returns whether the proposal was accepted.
bool hmc_step(ChainState& state, const LogDensityFn& log_density, const HmcConfig& config, std::mt19937_64& rng);

struct AdagradState {
  double learning_rate = 0.1;
  double damping = 1e-8;
  Eigen::VectorXd accumulator;  // running sum of squared gradients
};

/// theta += lr * g / (damping + sqrt(accumulator)), after accumulator += g^2.
void adagrad_update(AdagradState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

Eigen::VectorXd gradient_ascent_step(const Eigen::VectorXd& values, const Eigen::VectorXd& grads, double lr);

}  // namespace auxinfer
