#include "auxinfer/trace.hpp"

#include <cmath>
#include <numbers>

#include "auxinfer/distributions.hpp"
#include "auxinfer/errors.hpp"

namespace auxinfer {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
const double kLogitBound = std::log((1.0 - kProbFloor) / kProbFloor);

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

}  // namespace

namespace {
// Elementwise 1 / (1 + exp(-a)) with a single exp, stable for either sign.
Eigen::ArrayXXd logistic(const Eigen::ArrayXXd& a) {
  const Eigen::ArrayXXd e = (-a.abs()).exp();
  return (a >= 0.0).select(1.0, e) / (1.0 + e);
}

TraceNode op_node(Primitive op, std::vector<int> inputs) {
  TraceNode n;
  n.op = op;
  n.inputs = std::move(inputs);
  return n;
}
}  // namespace

int EvalTrace::push(TraceNode node) {
  if (node.op != Primitive::leaf) evaluate(node);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

int EvalTrace::leaf(const Eigen::MatrixXd& value) {
  TraceNode n;
  n.source = &value;
  return push(std::move(n));
}

int EvalTrace::affine(Eigen::Index rows, int bias, std::span<const std::pair<int, int>> pairs) {
  TraceNode n;
  n.op = Primitive::affine;
  n.rows = rows;
  n.inputs.push_back(bias);
  for (auto [w, v] : pairs) {
    n.inputs.push_back(w);
    n.inputs.push_back(v);
  }
  return push(std::move(n));
}

int EvalTrace::tanh(int input) { return push(op_node(Primitive::tanh, {input})); }
int EvalTrace::sigmoid(int input) { return push(op_node(Primitive::sigmoid, {input})); }
int EvalTrace::exp(int input) { return push(op_node(Primitive::exp, {input})); }
int EvalTrace::location_scale(int mean, int sigma, int noise) {
  return push(op_node(Primitive::location_scale, {mean, sigma, noise}));
}
int EvalTrace::inverse_cdf(int uniform) { return push(op_node(Primitive::inverse_cdf, {uniform})); }
int EvalTrace::gaussian_logpdf(int x, int mean, int log_sigma) {
  return push(op_node(Primitive::gaussian_logpdf, {x, mean, log_sigma}));
}
int EvalTrace::bernoulli_logit_logpmf(int x, int logits) {
  return push(op_node(Primitive::bernoulli_logit_logpmf, {x, logits}));
}
int EvalTrace::std_normal_logpdf(int eps) { return push(op_node(Primitive::std_normal_logpdf, {eps})); }

void EvalTrace::add_term(int scalar_node) {
  const auto& v = value_of(scalar_node);
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("EvalTrace::add_term: term is not a scalar");
  terms_.push_back(scalar_node);
}

const Eigen::MatrixXd& EvalTrace::value_of(int node) const {
  const TraceNode& n = nodes_.at(node);
  return n.op == Primitive::leaf ? *n.source : n.value;
}

double EvalTrace::value() const {
  double total = 0.0;
  for (int t : terms_) total += value_of(t)(0, 0);
  return total;
}

double EvalTrace::replay() {
  for (auto& n : nodes_)
    if (n.op != Primitive::leaf) evaluate(n);
  return value();
}

void EvalTrace::evaluate(TraceNode& n) const {
  const auto in = [&](std::size_t k) -> const Eigen::MatrixXd& { return value_of(n.inputs[k]); };
  switch (n.op) {
    case Primitive::leaf:
      return;
    case Primitive::affine: {
      const auto& b = in(0);
      n.value = b.transpose().replicate(n.rows, 1);
      for (std::size_t k = 1; k + 1 < n.inputs.size(); k += 2) {
        const auto& w = in(k);
        const auto& v = in(k + 1);
        if (v.cols() != w.cols() || w.rows() != b.rows() || v.rows() != n.rows)
          throw ShapeError("affine: operand shapes disagree");
        n.value.noalias() += v * w.transpose();
      }
      return;
    }
    case Primitive::tanh:
      n.value = in(0).array().tanh();
      return;
    case Primitive::sigmoid:
      n.value = logistic(in(0).array());
      return;
    case Primitive::exp:
      n.value = in(0).array().exp();
      return;
    case Primitive::location_scale: {
      const auto& sigma = in(1);
      const auto& noise = in(2);
      n.value = noise.array().rowwise() * sigma.col(0).transpose().array();
      if (n.inputs[0] != kZeroInput) n.value += in(0);
      return;
    }
    case Primitive::inverse_cdf:
      n.value = in(0).unaryExpr([](double u) { return gaussian_inverse_cdf(u); });
      return;
    case Primitive::gaussian_logpdf: {
      const auto& x = in(0);
      const auto& log_sigma = in(2).col(0);
      const Eigen::ArrayXXd resid = n.inputs[1] == kZeroInput ? Eigen::ArrayXXd(x.array()) : Eigen::ArrayXXd(x - in(1));
      const Eigen::RowVectorXd inv_sigma = (-log_sigma.array()).exp().transpose();
      const double quad = (resid.rowwise() * inv_sigma.array()).square().sum();
      const double m = static_cast<double>(x.rows());
      n.value = scalar(-m * static_cast<double>(x.cols()) * kHalfLog2Pi - m * log_sigma.sum() - 0.5 * quad);
      return;
    }
    case Primitive::bernoulli_logit_logpmf: {
      const auto& x = in(0).array();
      const Eigen::ArrayXXd a = in(1).array().max(-kLogitBound).min(kLogitBound);
      // x log sigmoid(a) + (1 - x) log sigmoid(-a) = x a - softplus(a)
      const Eigen::ArrayXXd softplus = a.max(0.0) + (1.0 + (-a.abs()).exp()).log();
      n.value = scalar((x * a - softplus).sum());
      return;
    }
    case Primitive::std_normal_logpdf: {
      const auto& e = in(0);
      n.value = scalar(-static_cast<double>(e.size()) * kHalfLog2Pi - 0.5 * e.squaredNorm());
      return;
    }
  }
}

void EvalTrace::backward() {
  adjoints_.assign(nodes_.size(), Eigen::MatrixXd());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& v = value_of(static_cast<int>(i));
    adjoints_[i].setZero(v.rows(), v.cols());
  }
  for (int t : terms_) adjoints_[t](0, 0) += 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) propagate(i);
}

void EvalTrace::propagate(int id) {
  const TraceNode& n = nodes_[id];
  const Eigen::MatrixXd& a = adjoints_[id];
  const auto in = [&](std::size_t k) -> const Eigen::MatrixXd& { return value_of(n.inputs[k]); };
  const auto adj = [&](std::size_t k) -> Eigen::MatrixXd& { return adjoints_[n.inputs[k]]; };
  switch (n.op) {
    case Primitive::leaf:
      return;
    case Primitive::affine: {
      adj(0).col(0) += a.colwise().sum().transpose();
      for (std::size_t k = 1; k + 1 < n.inputs.size(); k += 2) {
        adj(k).noalias() += a.transpose() * in(k + 1);
        adj(k + 1).noalias() += a * in(k);
      }
      return;
    }
    case Primitive::tanh:
      adj(0).array() += a.array() * (1.0 - n.value.array().square());
      return;
    case Primitive::sigmoid:
      adj(0).array() += a.array() * n.value.array() * (1.0 - n.value.array());
      return;
    case Primitive::exp:
      adj(0).array() += a.array() * n.value.array();
      return;
    case Primitive::location_scale: {
      const auto& sigma = in(1);
      const auto& noise = in(2);
      if (n.inputs[0] != kZeroInput) adj(0) += a;
      adj(1).col(0) += (a.array() * noise.array()).colwise().sum().transpose().matrix();
      adj(2).array() += a.array().rowwise() * sigma.col(0).transpose().array();
      return;
    }
    case Primitive::inverse_cdf:
      adj(0).array() += a.array() / n.value.unaryExpr([](double z) { return normal_pdf(z); }).array();
      return;
    case Primitive::gaussian_logpdf: {
      const double s = a(0, 0);
      const auto& x = in(0);
      const auto& log_sigma = in(2).col(0);
      const Eigen::ArrayXXd resid = n.inputs[1] == kZeroInput ? Eigen::ArrayXXd(x.array()) : Eigen::ArrayXXd(x - in(1));
      const Eigen::RowVectorXd inv_var = (-2.0 * log_sigma.array()).exp().transpose();
      const Eigen::ArrayXXd scaled = resid.rowwise() * inv_var.array();  // (x - mu) / sigma^2
      adj(0).array() -= s * scaled;
      if (n.inputs[1] != kZeroInput) adj(1).array() += s * scaled;
      const Eigen::ArrayXd sq = (resid * scaled).colwise().sum().transpose();
      adj(2).col(0).array() += s * (sq - static_cast<double>(x.rows()));
      return;
    }
    case Primitive::bernoulli_logit_logpmf: {
      const double s = a(0, 0);
      const auto& x = in(0).array();
      const auto& logits = in(1).array();
      const Eigen::ArrayXXd clamped = logits.max(-kLogitBound).min(kLogitBound);
      const Eigen::ArrayXXd p = logistic(clamped);
      adj(1).array() += s * (clamped == logits).select(x - p, 0.0);
      adj(0).array() += s * clamped;
      return;
    }
    case Primitive::std_normal_logpdf:
      adj(0) -= a(0, 0) * in(0);
      return;
  }
}

}  // namespace auxinfer
