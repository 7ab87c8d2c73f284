#pragma once

// Forward trace over a fixed set of matrix-valued primitives, with a
// hand-written adjoint rule per primitive. A log-density evaluation records
// one node per primitive application; the density is the sum of the nodes
// registered as terms. backward() accumulates adjoints in reverse record
// order, which is a reverse topological order of the computation.
//
// Row convention: variable values are M x dim (one row per datapoint).
// Weights are child_dim x parent_dim; biases and log-scales are dim x 1.

#include <Eigen/Dense>

#include <span>
#include <utility>
#include <vector>

namespace auxinfer {

enum class Primitive {
  leaf,
  affine,
  tanh,
  sigmoid,
  exp,
  location_scale,
  inverse_cdf,
  gaussian_logpdf,
  bernoulli_logit_logpmf,
  std_normal_logpdf,
};

/// Sentinel input id meaning "the zero matrix" (used for zero means).
inline constexpr int kZeroInput = -1;

struct TraceNode {
  Primitive op = Primitive::leaf;
  std::vector<int> inputs;
  Eigen::MatrixXd value;                    // unused for leaves
  const Eigen::MatrixXd* source = nullptr;  // leaves reference caller data
  Eigen::Index rows = 0;                    // affine only
};

class EvalTrace {
 public:
  /// Leaf referencing caller-owned storage. The referenced matrix must
  /// outlive every use of this trace.
  int leaf(const Eigen::MatrixXd& value);

  /// out = 1 b^T + sum_i v_i W_i^T, for pairs (W_i, v_i); `rows` is M.
  int affine(Eigen::Index rows, int bias, std::span<const std::pair<int, int>> weight_value_pairs);
  int tanh(int input);
  int sigmoid(int input);
  int exp(int input);
  /// out = mean + noise * diag(sigma); mean may be kZeroInput.
  int location_scale(int mean, int sigma, int noise);
  int inverse_cdf(int uniform);
  /// Sum of independent Gaussian log-densities; mean may be kZeroInput.
  int gaussian_logpdf(int x, int mean, int log_sigma);
  /// Bernoulli log-mass parameterized by logits; the logits are clamped so
  /// that the probability stays within [kProbFloor, 1 - kProbFloor].
  int bernoulli_logit_logpmf(int x, int logits);
  int std_normal_logpdf(int eps);

  /// Registers a scalar node as an additive term of the log-density.
  void add_term(int scalar_node);

  /// Sum of the registered terms, in registration order.
  double value() const;

  /// Recomputes every non-leaf node from the leaves and returns the sum
  /// of terms. Equal to value() bit for bit.
  double replay();

  /// Adjoints of value() with respect to every node.
  void backward();

  const Eigen::MatrixXd& value_of(int node) const;
  const Eigen::MatrixXd& adjoint_of(int node) const { return adjoints_.at(node); }
  std::size_t size() const { return nodes_.size(); }
  const TraceNode& node(int id) const { return nodes_.at(id); }

 private:
  int push(TraceNode node);
  void evaluate(TraceNode& node) const;
  void propagate(int id);

  std::vector<TraceNode> nodes_;
  std::vector<int> terms_;
  std::vector<Eigen::MatrixXd> adjoints_;
};

}  // namespace auxinfer
