#include "coral/solver.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "coral/projections.hpp"

namespace coral {

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("lambda must be finite and non-negative");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw Error("beta must be finite and non-negative");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error("gamma must be finite and non-negative");
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error("theta must lie in [0, 1]");
  if (inner_iterations < 1) throw Error("inner_iterations must be at least 1");
  if (max_outer < 1) throw Error("max_outer must be at least 1");
  if (!(convergence_epsilon >= 0.0)) throw Error("convergence_epsilon must be non-negative");
}

CostMatrix CostMatrix::with_outlier(const LabelField& model_costs, double gamma) {
  CostMatrix c;
  c.rho.resize(model_costs.rows(), model_costs.cols() + 1);
  c.rho.leftCols(model_costs.cols()) = model_costs;
  c.rho.col(model_costs.cols()).setConstant(gamma);
  return c;
}

StepSizes precondition(const NeighborhoodGraph& graph, double lambda) {
  StepSizes s;
  s.tau.resize(graph.num_edges());
  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(graph.num_points);
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const Edge& edge = graph.edges[std::size_t(e)];
    const double k = std::abs(lambda * edge.weight);
    s.tau(e) = k > 0.0 ? 1.0 / (2.0 * k) : 1.0;
    col_sum(edge.src) += k;
    col_sum(edge.dst) += k;
  }
  s.alpha.resize(graph.num_points);
  for (Index i = 0; i < graph.num_points; ++i) s.alpha(i) = col_sum(i) > 0.0 ? 1.0 / col_sum(i) : 1.0;
  return s;
}

LabelField uniform_field(Index points, Index labels) {
  return LabelField::Constant(points, labels, labels > 0 ? 1.0 / double(labels) : 0.0);
}

LabelField one_hot(std::span<const int> labels, Index num_labels) {
  LabelField phi = LabelField::Zero(Index(labels.size()), num_labels);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    const Index col = l == kOutlier ? num_labels - 1 : Index(l);
    if (col < 0 || col >= num_labels) throw DimensionMismatch("label index out of range");
    phi(Index(i), col) = 1.0;
  }
  return phi;
}

double relaxed_energy(const LabelField& phi, const CostMatrix& cost, const NeighborhoodGraph& graph,
                      PenaltyNorm norm, double lambda) {
  if (phi.rows() != cost.rho.rows() || phi.cols() != cost.rho.cols())
    throw DimensionMismatch("label field and cost matrix differ in shape");
  const double data = cost.rho.cwiseProduct(phi).sum();
  return data + lambda * penalty_value(graph, norm, gradient(graph, phi));
}

namespace {

// Dual objective: min over the simplex of <rho + lambda K^T psi, phi>.
double dual_value(const CostMatrix& cost, const LabelField& div, double lambda,
                  std::span<const std::uint8_t> pinned) {
  double d = 0;
  const Index last = cost.rho.cols() - 1;
  for (Index i = 0; i < cost.rho.rows(); ++i) {
    if (!pinned.empty() && pinned[std::size_t(i)]) {
      d += cost.rho(i, last) + lambda * div(i, last);
      continue;
    }
    d += (cost.rho.row(i) + lambda * div.row(i)).minCoeff();
  }
  return d;
}

void pin_rows(LabelField& phi, std::span<const std::uint8_t> pinned) {
  if (pinned.empty()) return;
  const Index last = phi.cols() - 1;
  for (Index i = 0; i < phi.rows(); ++i) {
    if (!pinned[std::size_t(i)]) continue;
    phi.row(i).setZero();
    phi(i, last) = 1.0;
  }
}

}  // namespace

PrimalDualResult primal_dual_solve(const CostMatrix& cost, const NeighborhoodGraph& graph, PenaltyNorm norm,
                                   const SolverConfig& cfg, const LabelField& phi0,
                                   const PrimalDualOptions& options) {
  cfg.validate();
  const Index n = cost.rho.rows();
  const Index labels = cost.rho.cols();
  if (graph.num_points != n) throw DimensionMismatch("graph point count differs from cost rows");
  if (phi0.rows() != n || phi0.cols() != labels) throw DimensionMismatch("initial field differs from cost shape");
  if (!options.pinned_outlier.empty() && Index(options.pinned_outlier.size()) != n)
    throw DimensionMismatch("pinned mask size differs from point count");

  const double lambda = cfg.lambda;
  const StepSizes steps = precondition(graph, lambda);
  const auto& edges = graph.edges;

  PrimalDualResult result;
  LabelField phi = phi0;
  pin_rows(phi, options.pinned_outlier);
  LabelField phi_bar = phi;
  Eigen::RowVectorXd prev(labels);
  auto pinned = [&](Index i) { return !options.pinned_outlier.empty() && options.pinned_outlier[std::size_t(i)]; };
  DualField psi = DualField::Zero(graph.num_edges(), labels);
  LabelField div(n, labels);
  std::vector<double> scratch;

  int stalled = 0;
  int k = 0;
  for (; k < cfg.inner_iterations; ++k) {
    // Dual ascent on K phi_bar, then projection onto the dual-norm ball.
    for (Index e = 0; e < graph.num_edges(); ++e) {
      const Edge& edge = edges[std::size_t(e)];
      const double step = steps.tau(e) * lambda * edge.weight;
      psi.row(e) += step * (phi_bar.row(edge.dst) - phi_bar.row(edge.src));
    }
    project_dual_field(graph, norm, psi);

    div.setZero();
    for (Index e = 0; e < graph.num_edges(); ++e) {
      const Edge& edge = edges[std::size_t(e)];
      div.row(edge.dst) += edge.weight * psi.row(e);
      div.row(edge.src) -= edge.weight * psi.row(e);
    }

    // Primal descent, simplex projection and over-relaxation, row by row.
    double change = 0;
    for (Index i = 0; i < n; ++i) {
      auto row = phi.row(i);
      prev = row;
      if (pinned(i)) {
        phi_bar.row(i) = row;
        continue;
      }
      row -= steps.alpha(i) * (cost.rho.row(i) + lambda * div.row(i));
      const double* data = row.data();
      const double theta = detail::simplex_threshold<double>(labels, [data](Index c) { return data[c]; }, scratch);
      row = (row.array() - theta).cwiseMax(0.0).matrix();
      change = std::max(change, (row - prev).cwiseAbs().maxCoeff());
      phi_bar.row(i) = row + cfg.theta * (row - prev);
    }
    if (!phi.allFinite()) throw Error("non-finite value in primal-dual iteration");

    if (options.record_gap) {
      const double primal = relaxed_energy(phi, cost, graph, norm, lambda);
      result.gap.push_back(primal - dual_value(cost, div, lambda, options.pinned_outlier));
    }

    stalled = change < cfg.stall_tolerance ? stalled + 1 : 0;
    if (stalled >= cfg.stall_iterations) {
      ++k;
      break;
    }
  }
  result.iterations = k;

  LabelField start = phi0;
  pin_rows(start, options.pinned_outlier);
  if (relaxed_energy(phi, cost, graph, norm, lambda) <= relaxed_energy(start, cost, graph, norm, lambda))
    result.phi = std::move(phi);
  else
    result.phi = std::move(start);
  return result;
}

Labels threshold_labels(const LabelField& phi) {
  const Index models = phi.cols() - 1;
  Labels out(std::size_t(phi.rows()), kOutlier);
  for (Index i = 0; i < phi.rows(); ++i) {
    Index best = -1;
    double best_value = -std::numeric_limits<double>::infinity();
    for (Index l = 0; l < models; ++l) {
      if (phi(i, l) > best_value) {
        best_value = phi(i, l);
        best = l;
      }
    }
    if (best >= 0 && !(phi(i, models) > best_value)) out[std::size_t(i)] = int(best);
  }
  return out;
}

EnergyTerms total_energy(const LabelField& phi, const CostMatrix& cost, const NeighborhoodGraph& graph,
                         PenaltyNorm norm, const SolverConfig& cfg) {
  if (phi.rows() != cost.rho.rows() || phi.cols() != cost.rho.cols())
    throw DimensionMismatch("label field and cost matrix differ in shape");
  EnergyTerms t;
  t.data = cost.rho.cwiseProduct(phi).sum();
  t.smoothness = cfg.lambda * penalty_value(graph, norm, gradient(graph, phi));
  Index active = 0;
  for (Index l = 0; l + 1 < phi.cols(); ++l)
    if (phi.col(l).sum() > 1e-12) ++active;
  t.label = cfg.beta * double(active);
  return t;
}

EnergyTerms total_energy(std::span<const int> labels, const CostMatrix& cost, const NeighborhoodGraph& graph,
                         PenaltyNorm norm, const SolverConfig& cfg) {
  if (Index(labels.size()) != cost.rho.rows()) throw DimensionMismatch("label count differs from cost rows");
  const LabelField phi = one_hot(labels, cost.rho.cols());
  EnergyTerms t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index col = labels[i] == kOutlier ? cost.rho.cols() - 1 : Index(labels[i]);
    t.data += cost.rho(Index(i), col);
  }
  t.smoothness = cfg.lambda * penalty_value(graph, norm, gradient(graph, phi));
  std::set<int> used;
  for (int l : labels)
    if (l != kOutlier) used.insert(l);
  t.label = cfg.beta * double(used.size());
  return t;
}

}  // namespace coral
