#include "auxinfer/gradient.hpp"

#include <algorithm>
#include <cmath>

#include "auxinfer/trace.hpp"
#include "record.hpp"

namespace auxinfer {
namespace {

void collect_params(const EvalTrace& trace, const detail::RecordedGraph& graph, Gradient& g) {
  for (const auto& [name, node] : graph.params) {
    const Eigen::MatrixXd& adj = trace.adjoint_of(node);
    if (!adj.allFinite()) throw NonFinite("gradient wrt parameter '" + name + "' is not finite");
    g.wrt_params.emplace(name, adj);
  }
}

}  // namespace

ValueAndGradient grad_original(const BayesNet& net, const Assignment& values, const ParameterStore& params) {
  EvalTrace trace;
  const auto graph = detail::record_original(net, values, params, trace);
  ValueAndGradient out;
  out.value = detail::checked_value(trace.value(), "grad_original");
  trace.backward();
  for (const auto& name : net.names_of_kind(VariableKind::latent_continuous)) {
    const Eigen::MatrixXd& adj = trace.adjoint_of(graph.values.at(name));
    if (!adj.allFinite()) throw NonFinite("gradient wrt '" + name + "' is not finite");
    out.gradient.wrt_values.set(name, adj);
  }
  collect_params(trace, graph, out.gradient);
  return out;
}

ValueAndGradient grad_auxiliary(const AuxiliaryNet& aux, const Assignment& observed, const Assignment& epsilon,
                                const ParameterStore& params) {
  EvalTrace trace;
  const auto graph = detail::record_auxiliary(aux, observed, epsilon, params, trace);
  ValueAndGradient out;
  out.value = detail::checked_value(trace.value(), "grad_auxiliary");
  trace.backward();
  for (const auto& [name, node] : graph.noise) {
    const Eigen::MatrixXd& adj = trace.adjoint_of(node);
    if (!adj.allFinite()) throw NonFinite("gradient wrt '" + name + "' is not finite");
    out.gradient.wrt_values.set(name, adj);
  }
  collect_params(trace, graph, out.gradient);
  return out;
}

double finite_diff_check(const ScalarWithGradient& f, const Eigen::VectorXd& point, double h) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(point.size()));
  for (Eigen::Index i = 0; i < point.size(); ++i) all[static_cast<std::size_t>(i)] = i;
  return finite_diff_check(f, point, h, all);
}

double finite_diff_check(const ScalarWithGradient& f, const Eigen::VectorXd& point, double h,
                         std::span<const Eigen::Index> coords) {
  const Eigen::VectorXd analytic = f(point).second;
  double worst = 0.0;
  Eigen::VectorXd probe = point;
  for (Eigen::Index i : coords) {
    probe(i) = point(i) + h;
    const double up = f(probe).first;
    probe(i) = point(i) - h;
    const double down = f(probe).first;
    probe(i) = point(i);
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(analytic(i))));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// FlatLayout

void FlatLayout::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  blocks_.push_back({name, rows, cols, size_});
  size_ += rows * cols;
}

FlatLayout FlatLayout::of(const Assignment& a) {
  FlatLayout layout;
  for (const auto& [name, v] : a.values()) layout.add(name, v.rows(), v.cols());
  return layout;
}

FlatLayout FlatLayout::of(const ParameterStore& p, const std::vector<std::string>& names) {
  FlatLayout layout;
  for (const auto& name : names) {
    const auto& v = p.value(name);
    layout.add(name, v.rows(), v.cols());
  }
  return layout;
}

Eigen::VectorXd FlatLayout::pack(const std::map<std::string, Eigen::MatrixXd>& m) const {
  Eigen::VectorXd flat(size_);
  for (const auto& b : blocks_) {
    auto it = m.find(b.name);
    if (it == m.end()) {
      flat.segment(b.offset, b.rows * b.cols).setZero();
      continue;
    }
    if (it->second.rows() != b.rows || it->second.cols() != b.cols)
      throw ShapeError("FlatLayout::pack: block '" + b.name + "' has the wrong shape");
    flat.segment(b.offset, b.rows * b.cols) = it->second.reshaped();
  }
  return flat;
}

Eigen::VectorXd FlatLayout::pack(const Assignment& a) const { return pack(a.values()); }

Eigen::VectorXd FlatLayout::pack(const ParameterStore& p) const {
  Eigen::VectorXd flat(size_);
  for (const auto& b : blocks_) flat.segment(b.offset, b.rows * b.cols) = p.value(b.name).reshaped();
  return flat;
}

void FlatLayout::unpack(const Eigen::VectorXd& flat, Assignment& out) const {
  for (const auto& b : blocks_) out.set(b.name, flat.segment(b.offset, b.rows * b.cols).reshaped(b.rows, b.cols));
}

void FlatLayout::unpack(const Eigen::VectorXd& flat, ParameterStore& out) const {
  for (const auto& b : blocks_) out.mutable_value(b.name) = flat.segment(b.offset, b.rows * b.cols).reshaped(b.rows, b.cols);
}

}  // namespace auxinfer
