#pragma once

// Closed-form densities for the conditional families used by the networks,
// their first derivatives, and the standard normal quantile function.
//
// Everything here is templated on the Eigen expression type so the same
// code serves double and long double callers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "auxinfer/errors.hpp"

namespace auxinfer {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Bernoulli probabilities are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-7;

/// Uniform auxiliary draws are clamped to [kUniformFloor, 1 - kUniformFloor]
/// before the quantile function is applied during optimization.
inline constexpr double kUniformFloor = 1e-12;

enum class Nonlinearity { none, tanh, sigmoid };

template <typename Scalar>
struct GaussianParams {
  Vec<Scalar> mean;
  Vec<Scalar> sigma;  // per-dimension, strictly positive
};

/// Affine map followed by an elementwise nonlinearity:
/// nonlinearity(sum_i W_i v_i + b). One weight matrix per parent,
/// each child_dim x parent_dim.
template <typename Scalar>
struct AffineMap {
  std::vector<Mat<Scalar>> weights;
  Vec<Scalar> bias;
  Nonlinearity nonlinearity = Nonlinearity::none;

  Eigen::Index output_dim() const { return bias.size(); }
};

template <typename Scalar>
Scalar sigmoid(Scalar a) {
  if (a >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-a));
  const Scalar e = std::exp(a);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar apply_nonlinearity(Nonlinearity f, Scalar a) {
  switch (f) {
    case Nonlinearity::tanh: return std::tanh(a);
    case Nonlinearity::sigmoid: return sigmoid(a);
    case Nonlinearity::none: break;
  }
  return a;
}

/// Derivative of the nonlinearity expressed through its output y = f(a).
template <typename Scalar>
Scalar nonlinearity_slope_from_output(Nonlinearity f, Scalar y) {
  switch (f) {
    case Nonlinearity::tanh: return Scalar(1) - y * y;
    case Nonlinearity::sigmoid: return y * (Scalar(1) - y);
    case Nonlinearity::none: break;
  }
  return Scalar(1);
}

template <typename DerivedX, typename DerivedM, typename DerivedS>
typename DerivedX::Scalar gaussian_logpdf(const Eigen::MatrixBase<DerivedX>& x,
                                          const Eigen::MatrixBase<DerivedM>& mean,
                                          const Eigen::MatrixBase<DerivedS>& sigma) {
  using Scalar = typename DerivedX::Scalar;
  const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  Scalar total(0);
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const Scalar r = (x(d) - mean(d)) / sigma(d);
    total += -half_log_2pi - std::log(sigma(d)) - Scalar(0.5) * r * r;
  }
  return total;
}

template <typename Scalar>
Scalar gaussian_logpdf(const Vec<Scalar>& x, const GaussianParams<Scalar>& p) {
  return gaussian_logpdf(x, p.mean, p.sigma);
}

/// Partial derivatives of gaussian_logpdf. The scale derivative is taken
/// with respect to log(sigma), the unconstrained coordinate we optimize.
template <typename Scalar>
struct GaussianLogpdfGrad {
  Vec<Scalar> d_x;
  Vec<Scalar> d_mean;
  Vec<Scalar> d_log_sigma;
};

template <typename Scalar>
GaussianLogpdfGrad<Scalar> gaussian_logpdf_grad(const Vec<Scalar>& x, const GaussianParams<Scalar>& p) {
  const Vec<Scalar> r = (x - p.mean).cwiseQuotient(p.sigma);
  GaussianLogpdfGrad<Scalar> g;
  g.d_mean = r.cwiseQuotient(p.sigma);
  g.d_x = -g.d_mean;
  g.d_log_sigma = r.cwiseProduct(r).array() - Scalar(1);
  return g;
}

template <typename Scalar>
Scalar clamp_probability(Scalar a) {
  return std::clamp(a, Scalar(kProbFloor), Scalar(1) - Scalar(kProbFloor));
}

template <typename DerivedX, typename DerivedA>
typename DerivedX::Scalar bernoulli_logpmf(const Eigen::MatrixBase<DerivedX>& x,
                                           const Eigen::MatrixBase<DerivedA>& a) {
  using Scalar = typename DerivedX::Scalar;
  Scalar total(0);
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const Scalar p = clamp_probability(a(d));
    total += x(d) * std::log(p) + (Scalar(1) - x(d)) * std::log(Scalar(1) - p);
  }
  return total;
}

/// d/da of bernoulli_logpmf; zero where the clamp is active.
template <typename Scalar>
Vec<Scalar> bernoulli_logpmf_grad(const Vec<Scalar>& x, const Vec<Scalar>& a) {
  Vec<Scalar> g(a.size());
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const Scalar p = clamp_probability(a(d));
    g(d) = (p != a(d)) ? Scalar(0) : x(d) / p - (Scalar(1) - x(d)) / (Scalar(1) - p);
  }
  return g;
}

template <typename Scalar>
Vec<Scalar> apply_affine(const AffineMap<Scalar>& m, std::span<const Vec<Scalar>> parent_values) {
  if (parent_values.size() != m.weights.size())
    throw ShapeError("apply_affine: parent count does not match weight count");
  Vec<Scalar> pre = m.bias;
  for (std::size_t i = 0; i < parent_values.size(); ++i) {
    if (m.weights[i].rows() != pre.size() || m.weights[i].cols() != parent_values[i].size())
      throw ShapeError("apply_affine: weight shape mismatch");
    pre.noalias() += m.weights[i] * parent_values[i];
  }
  return pre.unaryExpr([&](Scalar a) { return apply_nonlinearity(m.nonlinearity, a); });
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Standard normal density.
inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Quantile of the standard normal: z with normal_cdf(z) = u.
/// Throws DomainError unless 0 < u < 1.
double gaussian_inverse_cdf(double u);

/// d/du gaussian_inverse_cdf(u) = 1 / normal_pdf(z).
double gaussian_inverse_cdf_derivative(double u);

}  // namespace auxinfer
