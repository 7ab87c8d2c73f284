#pragma once

// Exact reverse-mode gradients of the original and auxiliary log-densities,
// plus a central-difference checker and helpers to flatten named matrices
// into the flat vectors samplers and optimizers work on.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "auxinfer/auxiliary.hpp"
#include "auxinfer/model.hpp"

namespace auxinfer {

struct Gradient {
  Assignment wrt_values;                            // latent z (original) or eps (auxiliary)
  std::map<std::string, Eigen::MatrixXd> wrt_params;  // every parameter the density reads
};

struct ValueAndGradient {
  double value = 0.0;
  Gradient gradient;
};

/// log_joint and its gradient with respect to latent values and parameters.
ValueAndGradient grad_original(const BayesNet& net, const Assignment& values, const ParameterStore& params);

/// aux_log_joint and its gradient with respect to auxiliary values and
/// parameters, flowing through every generating function.
ValueAndGradient grad_auxiliary(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                                const ParameterStore& params);

using ScalarWithGradient = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

/// max_i |analytic_i - central_difference_i| / max(1, |analytic_i|).
double finite_diff_check(const ScalarWithGradient& f, const Eigen::VectorXd& point, double h);

/// Same, restricted to the listed coordinates.
double finite_diff_check(const ScalarWithGradient& f, const Eigen::VectorXd& point, double h,
                         std::span<const Eigen::Index> coords);

/// Ordered list of named blocks, mapping between named matrices and one flat
/// vector (column-major within each block).
class FlatLayout {
 public:
  struct Block {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
  };

  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Eigen::Index size() const { return size_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  static FlatLayout of(const Assignment& a);
  static FlatLayout of(const ParameterStore& p, const std::vector<std::string>& names);

  Eigen::VectorXd pack(const Assignment& a) const;
  Eigen::VectorXd pack(const std::map<std::string, Eigen::MatrixXd>& m) const;
  Eigen::VectorXd pack(const ParameterStore& p) const;
  void unpack(const Eigen::VectorXd& flat, Assignment& out) const;
  void unpack(const Eigen::VectorXd& flat, ParameterStore& out) const;

 private:
  std::vector<Block> blocks_;
  Eigen::Index size_ = 0;
};

}  // namespace auxinfer
