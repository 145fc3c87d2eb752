#include "coral/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace coral {

HomographyProblem::HomographyProblem(std::span<const Correspondence<double>> matches, double sigma_pixel)
    : matches_(matches.begin(), matches.end()), sigma_pixel_(sigma_pixel) {
  if (!(sigma_pixel > 0.0)) throw Error("sigma_pixel must be positive");
}

std::optional<HomographyProblem::Model> HomographyProblem::fit(std::span<const Index> idx) const {
  std::vector<Correspondence<double>> sel;
  sel.reserve(idx.size());
  for (Index i : idx) sel.push_back(matches_[std::size_t(i)]);
  try {
    Model h = estimate_homography_dlt<double>(sel);
    if (!h.matrix().allFinite()) return std::nullopt;
    return h;
  } catch (const Error&) {
    return std::nullopt;
  }
}

double HomographyProblem::cost(const Model& h, Index i) const {
  const auto& c = matches_[std::size_t(i)];
  try {
    const auto cov = propagate_covariance(c, h, sigma_pixel_);
    const double v = symmetric_transfer_cost(c, h, cov);
    return std::isfinite(v) ? std::min(v, kMaxCost) : kMaxCost;
  } catch (const Error&) {
    return kMaxCost;
  }
}

PlaneProblem::PlaneProblem(std::span<const double> inverse_depth, Index width, Index height, double sigma_xi,
                           double gamma)
    : xi_(inverse_depth.begin(), inverse_depth.end()),
      width_(width),
      height_(height),
      sigma_xi_(sigma_xi),
      gamma_(gamma),
      diagonal_(std::hypot(double(width), double(height))) {
  if (width < 1 || height < 1) throw Error("image dimensions must be positive");
  if (Index(xi_.size()) != width * height) throw DimensionMismatch("inverse depth size differs from width x height");
  if (!(sigma_xi > 0.0)) throw Error("sigma_xi must be positive");
  valid_.resize(xi_.size());
  for (std::size_t i = 0; i < xi_.size(); ++i) valid_[i] = std::isfinite(xi_[i]) && xi_[i] > 0.0;
}

std::optional<PlaneProblem::Model> PlaneProblem::fit(std::span<const Index> idx) const {
  std::vector<DepthSample<double>> px;
  px.reserve(idx.size());
  for (Index i : idx)
    if (valid_[std::size_t(i)]) px.push_back({position(i), xi_[std::size_t(i)]});
  if (Index(px.size()) < 3) return std::nullopt;
  try {
    return fit_plane<double>(px);
  } catch (const Error&) {
    return std::nullopt;
  }
}

double PlaneProblem::cost(const Model& plane, Index i) const {
  if (!valid_[std::size_t(i)]) return gamma_;
  return std::min(plane_cost(position(i), xi_[std::size_t(i)], plane, sigma_xi_), kMaxCost);
}

double PlaneProblem::distance(const Model& a, const Model& b) const {
  return (a.scaled_params(diagonal_) - b.scaled_params(diagonal_)).norm();
}

SolverConfig HomographyTask::solver_config() const {
  SolverConfig cfg;
  cfg.lambda = lambda;
  cfg.beta = beta;
  cfg.gamma = gamma;
  cfg.inner_iterations = inner_iterations;
  cfg.max_outer = max_outer;
  cfg.seed = seed;
  return cfg;
}

SolverConfig PlaneTask::solver_config() const {
  SolverConfig cfg;
  cfg.lambda = lambda;
  cfg.beta = beta;
  cfg.gamma = gamma;
  cfg.inner_iterations = inner_iterations;
  cfg.max_outer = max_outer;
  cfg.seed = seed;
  return cfg;
}

std::vector<double> edge_weights(std::span<const double> intensity, Index width, Index height, double edge_alpha) {
  if (Index(intensity.size()) != width * height) throw DimensionMismatch("intensity size differs from width x height");
  const NeighborhoodGraph grid = build_grid4(width, height);
  std::vector<double> w;
  w.reserve(grid.edges.size());
  for (const Edge& e : grid.edges) {
    const double d = std::abs(intensity[std::size_t(e.dst)] - intensity[std::size_t(e.src)]);
    if (!std::isfinite(d)) throw Error("intensity must be finite");
    w.push_back(std::exp(-edge_alpha * d));
  }
  return w;
}

namespace {

// Canonical processing order of correspondences.
std::vector<std::size_t> canonical_order(const CorrespondenceSet& c) {
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = c[a];
    const auto& y = c[b];
    return std::tie(x.u1.x(), x.u1.y(), x.u2.x(), x.u2.y()) < std::tie(y.u1.x(), y.u1.y(), y.u2.x(), y.u2.y());
  });
  return order;
}

template <typename Model>
FitResult<Model> unpermute(FitResult<Model> r, const std::vector<std::size_t>& order) {
  Labels labels(r.labels.size(), kOutlier);
  for (std::size_t k = 0; k < order.size(); ++k) labels[order[k]] = r.labels[k];
  r.labels = std::move(labels);
  return r;
}

struct SortedHomography {
  std::vector<std::size_t> order;
  CorrespondenceSet sorted;
};

SortedHomography sort_task(const HomographyTask& task) {
  SortedHomography s;
  s.order = canonical_order(task.correspondences);
  for (std::size_t k : s.order) s.sorted.push_back(task.correspondences[k]);
  return s;
}

}  // namespace

FitResult<Homography<double>> run_homography_segmentation(const HomographyTask& task) {
  if (task.correspondences.size() < 4) throw TooFewPoints("homography segmentation needs at least 4 matches");
  if (task.k < 1) throw Error("k must be positive");
  const SortedHomography s = sort_task(task);
  const HomographyProblem problem(s.sorted, task.sigma_pixel);

  std::vector<Vec2<double>> positions;
  for (const auto& c : s.sorted) positions.push_back(c.u1);
  const NeighborhoodGraph graph = build_knn(positions, task.k);

  ProposalConfig pcfg;
  pcfg.count = task.proposals;
  pcfg.seed = task.seed;
  pcfg.local_radius = task.local_radius;
  std::vector<Homography<double>> proposals;
  try {
    proposals = propose_models(problem, pcfg).models;
  } catch (const NoModelsProposed&) {
  }
  return unpermute(coral_fit(problem, std::move(proposals), graph, PenaltyNorm::l11, task.solver_config()), s.order);
}

FitResult<Homography<double>> run_homography_ransac(const HomographyTask& task) {
  const SortedHomography s = sort_task(task);
  const HomographyProblem problem(s.sorted, task.sigma_pixel);
  RansacConfig rcfg = task.ransac;
  rcfg.seed = task.seed;
  return unpermute(sequential_ransac_fit(problem, rcfg), s.order);
}

namespace {

void check_plane_task(const PlaneTask& task) {
  if (task.width < 1 || task.height < 1) throw Error("image dimensions must be positive");
  const auto n = std::size_t(task.width * task.height);
  if (task.inverse_depth.size() != n) throw DimensionMismatch("inverse depth size differs from width x height");
  if (!task.intensity.empty() && task.intensity.size() != n)
    throw DimensionMismatch("intensity size differs from depth size");
  if (std::none_of(task.inverse_depth.begin(), task.inverse_depth.end(),
                   [](double v) { return std::isfinite(v) && v > 0.0; }))
    throw AllDepthInvalid("no pixel has valid depth");
}

}  // namespace

FitResult<InverseDepthPlane<double>> run_plane_segmentation(const PlaneTask& task) {
  check_plane_task(task);
  const PlaneProblem problem(task.inverse_depth, task.width, task.height, task.sigma_xi, task.gamma);

  NeighborhoodGraph graph = build_grid4(task.width, task.height);
  if (!task.intensity.empty()) {
    const auto w = edge_weights(task.intensity, task.width, task.height, task.edge_alpha);
    for (std::size_t e = 0; e < w.size(); ++e) graph.edges[e].weight = w[e];
  }

  ProposalConfig pcfg;
  pcfg.count = task.proposals;
  pcfg.seed = task.seed;
  pcfg.local_radius = task.local_radius;
  std::vector<InverseDepthPlane<double>> proposals;
  try {
    proposals = propose_models(problem, pcfg).models;
  } catch (const NoModelsProposed&) {
  }
  return coral_fit(problem, std::move(proposals), graph, PenaltyNorm::l12, task.solver_config());
}

FitResult<InverseDepthPlane<double>> run_plane_ransac(const PlaneTask& task) {
  check_plane_task(task);
  const PlaneProblem problem(task.inverse_depth, task.width, task.height, task.sigma_xi, task.gamma);
  RansacConfig rcfg = task.ransac;
  rcfg.seed = task.seed;
  return sequential_ransac_fit(problem, rcfg);
}

}  // namespace coral
