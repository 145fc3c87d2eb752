#pragma once

// The outer fitting loop: relaxed labeling, thresholding, model merging and
// re-estimation, plus the sequential RANSAC baseline.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "coral/problem.hpp"
#include "coral/proposals.hpp"
#include "coral/solver.hpp"

namespace coral {

template <typename Model>
struct FitResult {
  Labels labels;
  std::vector<Model> models;
  /// Hard-label energy after each accepted outer iteration.
  std::vector<EnergyTerms> energy_trace;
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool no_models_proposed = false;
};

/// Costs of every point under every model, n x M.
template <FittingProblem P>
LabelField model_costs(const P& problem, const std::vector<typename P::Model>& models) {
  const Index n = problem.size();
  LabelField out(n, Index(models.size()));
  for (Index m = 0; m < Index(models.size()); ++m)
    for (Index i = 0; i < n; ++i) out(i, m) = problem.cost(models[std::size_t(m)], i);
  return out;
}

template <FittingProblem P>
CostMatrix cost_matrix(const P& problem, const std::vector<typename P::Model>& models, double gamma) {
  return CostMatrix::with_outlier(model_costs(problem, models), gamma);
}

template <FittingProblem P>
std::vector<std::uint8_t> pinned_mask(const P& problem) {
  std::vector<std::uint8_t> mask;
  if constexpr (HasPinnedOutliers<P>) {
    mask.resize(std::size_t(problem.size()));
    bool any = false;
    for (Index i = 0; i < problem.size(); ++i) {
      mask[std::size_t(i)] = problem.pinned_outlier(i) ? 1 : 0;
      any = any || mask[std::size_t(i)];
    }
    if (!any) mask.clear();
  }
  return mask;
}

namespace detail {

inline std::vector<std::vector<Index>> members_of(const Labels& labels, std::size_t num_models) {
  std::vector<std::vector<Index>> members(num_models);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kOutlier) members[std::size_t(labels[i])].push_back(Index(i));
  return members;
}

template <FittingProblem P>
double summed_cost(const P& problem, const typename P::Model& model, std::span<const Index> idx) {
  double s = 0;
  for (Index i : idx) s += problem.cost(model, i);
  return s;
}

}  // namespace detail

template <typename Model>
struct MergeEvent {
  std::size_t kept = 0;     // index of the surviving model before the merge
  std::size_t removed = 0;  // index of the absorbed model before the merge
  double delta_data = 0;
  double distance = 0;
};

/// Snapshot handed to merge observers: the state before and after one merge.
template <typename Model>
struct MergeStep {
  const std::vector<Model>& models_before;
  const Labels& labels_before;
  const std::vector<Model>& models_after;
  const Labels& labels_after;
  const MergeEvent<Model>& event;
};

template <typename Model>
struct MergeResult {
  std::vector<Model> models;
  Labels labels;
  std::vector<MergeEvent<Model>> events;
  /// For every output model, the input model indices merged into it.
  std::vector<std::vector<std::size_t>> origin;
};

/// Greedy merging. Candidate pairs are visited in ascending parameter
/// distance; a pair merges when the data cost of the best joint model on the
/// union of their points exceeds the separate costs by less than beta. The
/// joint model is the refit on the union or either original, whichever is
/// cheaper. Repeats until no pair merges. Every model should own at least one
/// point (see drop_unused); absorbing an empty model leaves the energy as is.
template <FittingProblem P>
MergeResult<typename P::Model> merge_models(
    const P& problem, std::vector<typename P::Model> models, Labels labels, const SolverConfig& cfg,
    const std::function<void(const MergeStep<typename P::Model>&)>& observer = {}) {
  using Model = typename P::Model;
  MergeResult<Model> out;
  out.origin.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) out.origin[m] = {m};

  // Stable ids keep cached pair evaluations valid across merges.
  std::vector<std::size_t> ids(models.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  std::size_t next_id = models.size();

  struct PairEval {
    double distance;
    double delta;
    std::optional<Model> joint;
  };
  std::map<std::pair<std::size_t, std::size_t>, PairEval> cache;

  auto members = detail::members_of(labels, models.size());
  std::vector<double> own_cost(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) own_cost[m] = detail::summed_cost(problem, models[m], members[m]);

  auto evaluate = [&](std::size_t a, std::size_t b) -> const PairEval& {
    const auto key = std::make_pair(ids[a], ids[b]);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    PairEval ev{problem.distance(models[a], models[b]), std::numeric_limits<double>::infinity(), std::nullopt};
    if (ev.distance <= cfg.merge_tolerance) {
      std::vector<Index> uni = members[a];
      uni.insert(uni.end(), members[b].begin(), members[b].end());
      std::sort(uni.begin(), uni.end());
      const double separate = own_cost[a] + own_cost[b];
      std::vector<Model> candidates;
      if (Index(uni.size()) >= problem.minimal_sample_size())
        if (auto refit = problem.fit(uni)) candidates.push_back(std::move(*refit));
      candidates.push_back(models[a]);
      candidates.push_back(models[b]);
      for (auto& cand : candidates) {
        const double delta = detail::summed_cost(problem, cand, uni) - separate;
        if (delta < ev.delta) {
          ev.delta = delta;
          ev.joint = cand;
        }
      }
    }
    return cache.emplace(key, std::move(ev)).first->second;
  };

  for (;;) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> order;
    for (std::size_t a = 0; a < models.size(); ++a)
      for (std::size_t b = a + 1; b < models.size(); ++b) order.emplace_back(evaluate(a, b).distance, a, b);
    std::sort(order.begin(), order.end());

    bool merged = false;
    for (const auto& [dist, a, b] : order) {
      const PairEval& ev = evaluate(a, b);
      if (!(ev.delta < cfg.beta) || !ev.joint) continue;

      MergeEvent<Model> event{a, b, ev.delta, dist};
      std::vector<Model> before_models;
      Labels before_labels;
      if (observer) {
        before_models = models;
        before_labels = labels;
      }

      models[a] = *ev.joint;
      models.erase(models.begin() + std::ptrdiff_t(b));
      for (int& l : labels) {
        if (l == int(b)) l = int(a);
        else if (l > int(b)) --l;
      }
      out.origin[a].insert(out.origin[a].end(), out.origin[b].begin(), out.origin[b].end());
      out.origin.erase(out.origin.begin() + std::ptrdiff_t(b));
      members[a].insert(members[a].end(), members[b].begin(), members[b].end());
      std::sort(members[a].begin(), members[a].end());
      members.erase(members.begin() + std::ptrdiff_t(b));
      own_cost[a] = detail::summed_cost(problem, models[a], members[a]);
      own_cost.erase(own_cost.begin() + std::ptrdiff_t(b));
      ids[a] = next_id++;
      ids.erase(ids.begin() + std::ptrdiff_t(b));

      if (observer) observer({before_models, before_labels, models, labels, event});
      out.events.push_back(event);
      merged = true;
      break;
    }
    if (!merged) break;
  }

  out.models = std::move(models);
  out.labels = std::move(labels);
  return out;
}

/// Moves to the outlier label every point whose own-model cost exceeds gamma
/// by more than the largest smoothness increase the move can cause,
/// 2 * lambda * (sum of incident edge weights). Each move lowers the
/// hard-label energy for either penalty. Returns the number of points moved.
template <FittingProblem P>
std::size_t release_gross_outliers(const P& problem, const std::vector<typename P::Model>& models, Labels& labels,
                                   const NeighborhoodGraph& graph, const SolverConfig& cfg) {
  std::vector<double> incident(labels.size(), 0.0);
  for (const Edge& e : graph.edges) {
    incident[std::size_t(e.src)] += std::abs(e.weight);
    incident[std::size_t(e.dst)] += std::abs(e.weight);
  }
  std::size_t moved = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kOutlier) continue;
    const double c = problem.cost(models[std::size_t(labels[i])], Index(i));
    if (c - cfg.gamma > 2.0 * cfg.lambda * incident[i]) {
      labels[i] = kOutlier;
      ++moved;
    }
  }
  return moved;
}

/// Drops models without any assigned point; returns the kept input indices.
template <typename Model>
std::vector<std::size_t> drop_unused(std::vector<Model>& models, Labels& labels) {
  std::vector<int> count(models.size(), 0);
  for (int l : labels)
    if (l != kOutlier) ++count[std::size_t(l)];
  std::vector<int> remap(models.size(), kOutlier);
  std::vector<Model> kept;
  std::vector<std::size_t> origin;
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (count[m] == 0) continue;
    remap[m] = int(kept.size());
    kept.push_back(std::move(models[m]));
    origin.push_back(m);
  }
  for (int& l : labels)
    if (l != kOutlier) l = remap[std::size_t(l)];
  models = std::move(kept);
  return origin;
}

template <typename Model>
struct PruneResult {
  std::vector<Model> models;
  Labels labels;
  /// For every output model, its index in the input.
  std::vector<std::size_t> origin;
  int removed = 0;
};

/// Dissolves models into the remaining labels: the points of a model move to
/// their cheapest other label (outlier included) and the move is kept when the
/// hard-label energy strictly drops. When that greedy reassignment does not
/// pay off, the labeling over the reduced set is re-solved by the relaxation,
/// warm-started from it, and judged again. Models are tried smallest support
/// first, restarting after every accepted removal.
template <FittingProblem P>
PruneResult<typename P::Model> prune_models(const P& problem, std::vector<typename P::Model> models, Labels labels,
                                            const NeighborhoodGraph& graph, PenaltyNorm norm,
                                            const SolverConfig& cfg) {
  PruneResult<typename P::Model> out;
  out.origin.resize(models.size());
  std::iota(out.origin.begin(), out.origin.end(), std::size_t{0});
  CostMatrix cost = cost_matrix(problem, models, cfg.gamma);
  double energy = total_energy(labels, cost, graph, norm, cfg).total();
  const auto pinned = pinned_mask(problem);

  for (bool changed = true; changed && !models.empty();) {
    changed = false;
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (support, model)
    {
      std::vector<std::size_t> support(models.size(), 0);
      for (int l : labels)
        if (l != kOutlier) ++support[std::size_t(l)];
      for (std::size_t m = 0; m < models.size(); ++m) order.emplace_back(support[m], m);
      std::sort(order.begin(), order.end());
    }
    for (const auto& [support, m] : order) {
      const Index col = Index(m);
      const Index cols = cost.rho.cols();
      CostMatrix reduced;
      reduced.rho.resize(cost.rho.rows(), cols - 1);
      reduced.rho.leftCols(col) = cost.rho.leftCols(col);
      reduced.rho.rightCols(cols - 1 - col) = cost.rho.rightCols(cols - 1 - col);

      Labels trial = labels;
      for (std::size_t i = 0; i < trial.size(); ++i) {
        int& l = trial[i];
        if (l == int(m)) {
          Index best;
          reduced.rho.row(Index(i)).minCoeff(&best);
          l = best == reduced.rho.cols() - 1 ? kOutlier : int(best);
        } else if (l > int(m)) {
          --l;
        }
      }
      double e = total_energy(trial, reduced, graph, norm, cfg).total();
      if (!(e < energy) && reduced.num_models() > 0) {
        PrimalDualOptions options;
        options.pinned_outlier = pinned;
        const auto pd = primal_dual_solve(reduced, graph, norm, cfg, one_hot(trial, reduced.num_labels()), options);
        Labels resolved = threshold_labels(pd.phi);
        const double er = total_energy(resolved, reduced, graph, norm, cfg).total();
        if (er < e) {
          e = er;
          trial = std::move(resolved);
        }
      }
      if (e < energy) {
        energy = e;
        labels = std::move(trial);
        models.erase(models.begin() + std::ptrdiff_t(m));
        out.origin.erase(out.origin.begin() + std::ptrdiff_t(m));
        // The re-solve may leave further models without points.
        const auto kept = drop_unused(models, labels);
        std::vector<std::size_t> origin;
        for (std::size_t k : kept) origin.push_back(out.origin[k]);
        out.origin = std::move(origin);
        out.removed += int(cost.num_models()) - int(models.size());
        cost = cost_matrix(problem, models, cfg.gamma);
        changed = true;
        break;
      }
    }
  }
  out.models = std::move(models);
  out.labels = std::move(labels);
  return out;
}

template <typename Model>
struct ReestimateResult {
  std::vector<Model> models;
  Labels labels;
  /// For every output model, its index in the input.
  std::vector<std::size_t> origin;
};

/// Refits every model on its hard-assigned points. A refit is kept only when
/// it lowers the model's summed cost; models with fewer points than a
/// minimal sample are removed and their points become outliers.
template <FittingProblem P>
ReestimateResult<typename P::Model> reestimate_models(const P& problem, const std::vector<typename P::Model>& models,
                                                      const Labels& labels) {
  ReestimateResult<typename P::Model> out;
  const auto members = detail::members_of(labels, models.size());
  std::vector<int> remap(models.size(), kOutlier);
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (Index(members[m].size()) < problem.minimal_sample_size()) continue;
    auto model = models[m];
    if (auto refit = problem.fit(members[m])) {
      if (detail::summed_cost(problem, *refit, members[m]) <= detail::summed_cost(problem, model, members[m]))
        model = std::move(*refit);
    }
    remap[m] = int(out.models.size());
    out.models.push_back(std::move(model));
    out.origin.push_back(m);
  }
  out.labels.reserve(labels.size());
  for (int l : labels) out.labels.push_back(l == kOutlier ? kOutlier : remap[std::size_t(l)]);
  return out;
}

/// Sums old label columns into the new ones given, per new model, the old
/// columns feeding it; keeps the outlier column and renormalizes rows.
inline LabelField restrict_field(const LabelField& phi, const std::vector<std::vector<std::size_t>>& sources) {
  const Index n = phi.rows();
  const Index models = Index(sources.size());
  LabelField out = LabelField::Zero(n, models + 1);
  for (Index j = 0; j < models; ++j)
    for (std::size_t src : sources[std::size_t(j)]) out.col(j) += phi.col(Index(src));
  out.col(models) = phi.col(phi.cols() - 1);
  for (Index i = 0; i < n; ++i) {
    const double s = out.row(i).sum();
    if (s > 1e-12) out.row(i) /= s;
    else out.row(i).setConstant(1.0 / double(models + 1));
  }
  return out;
}

/// The full alternation: relaxed labeling with the current models,
/// thresholding, merging and re-estimation, until the hard-label energy
/// stalls or max_outer is reached. A state whose energy exceeds the previous
/// one is rejected and the loop ends, so the trace never increases.
template <FittingProblem P>
FitResult<typename P::Model> coral_fit(const P& problem, std::vector<typename P::Model> proposals,
                                       const NeighborhoodGraph& graph, PenaltyNorm norm, const SolverConfig& cfg) {
  using Model = typename P::Model;
  cfg.validate();
  const Index n = problem.size();
  if (graph.num_points != n) throw DimensionMismatch("graph point count differs from problem size");

  FitResult<Model> result;
  result.labels.assign(std::size_t(n), kOutlier);
  if (proposals.empty()) {
    result.no_models_proposed = true;
    const CostMatrix c = CostMatrix::with_outlier(LabelField(n, 0), cfg.gamma);
    result.energy_trace.push_back(total_energy(result.labels, c, graph, norm, cfg));
    return result;
  }

  const auto pinned = pinned_mask(problem);
  PrimalDualOptions options;
  options.pinned_outlier = pinned;

  std::vector<Model> models = std::move(proposals);
  LabelField phi = uniform_field(n, Index(models.size()) + 1);
  double threshold = 0;

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    const CostMatrix cost = cost_matrix(problem, models, cfg.gamma);
    PrimalDualResult pd = primal_dual_solve(cost, graph, norm, cfg, phi, options);
    result.inner_iterations += pd.iterations;

    Labels labels = threshold_labels(pd.phi);
    std::vector<Model> next = models;
    const auto used = drop_unused(next, labels);
    std::vector<std::vector<std::size_t>> sources;
    for (std::size_t u : used) sources.push_back({u});

    if (cfg.enable_merging) {
      auto merged = merge_models(problem, std::move(next), std::move(labels), cfg);
      std::vector<std::vector<std::size_t>> merged_sources;
      for (const auto& group : merged.origin) {
        std::vector<std::size_t> s;
        for (std::size_t g : group) s.insert(s.end(), sources[g].begin(), sources[g].end());
        merged_sources.push_back(std::move(s));
      }
      next = std::move(merged.models);
      labels = std::move(merged.labels);
      sources = std::move(merged_sources);
    }

    release_gross_outliers(problem, next, labels, graph, cfg);
    auto re = reestimate_models(problem, next, labels);
    std::vector<std::vector<std::size_t>> re_sources;
    for (std::size_t o : re.origin) re_sources.push_back(sources[o]);
    release_gross_outliers(problem, re.models, re.labels, graph, cfg);

    // Pruning judges refit models; minimal-sample proposals overstate cost.
    if (cfg.enable_pruning) {
      auto pruned = prune_models(problem, std::move(re.models), std::move(re.labels), graph, norm, cfg);
      std::vector<std::vector<std::size_t>> pruned_sources;
      for (std::size_t o : pruned.origin) pruned_sources.push_back(re_sources[o]);
      re.models = std::move(pruned.models);
      re.labels = std::move(pruned.labels);
      re_sources = std::move(pruned_sources);
    }

    const EnergyTerms energy = total_energy(re.labels, cost_matrix(problem, re.models, cfg.gamma), graph, norm, cfg);
    if (!result.energy_trace.empty()) {
      const double prev = result.energy_trace.back().total();
      if (energy.total() > prev) break;
    }

    result.models = std::move(re.models);
    result.labels = std::move(re.labels);
    result.energy_trace.push_back(energy);
    result.outer_iterations = outer + 1;

    if (result.energy_trace.size() == 1) {
      threshold = cfg.convergence_epsilon * std::abs(energy.total());
    } else {
      const double prev = result.energy_trace[result.energy_trace.size() - 2].total();
      if (prev - energy.total() < threshold) break;
    }
    if (result.models.empty()) break;

    models = result.models;
    phi = restrict_field(pd.phi, re_sources);
  }
  return result;
}

struct RansacConfig {
  int iterations = 500;
  /// Points with cost at or below this are inliers.
  double inlier_threshold = 9.0;
  Index min_support = 10;
  int refit_rounds = 3;
  std::uint64_t seed = 1;
};

/// Greedy baseline: maximal-consensus RANSAC on the unassigned points,
/// remove its inliers, repeat until the best support drops below
/// min_support. Leftover points are outliers.
template <FittingProblem P>
FitResult<typename P::Model> sequential_ransac_fit(const P& problem, const RansacConfig& cfg) {
  using Model = typename P::Model;
  const Index n = problem.size();
  const Index m = problem.minimal_sample_size();
  FitResult<Model> result;
  result.labels.assign(std::size_t(n), kOutlier);

  std::vector<Index> remaining;
  for (Index i = 0; i < n; ++i) {
    if constexpr (HasPinnedOutliers<P>) {
      if (problem.pinned_outlier(i)) continue;
    }
    remaining.push_back(i);
  }

  auto inliers_of = [&](const Model& model) {
    std::vector<Index> in;
    for (Index i : remaining)
      if (problem.cost(model, i) <= cfg.inlier_threshold) in.push_back(i);
    return in;
  };

  for (std::uint64_t round = 0; Index(remaining.size()) >= std::max(m, cfg.min_support); ++round) {
    auto rng = proposal_rng(cfg.seed, round);
    std::optional<Model> best;
    std::vector<Index> best_inliers;
    for (int it = 0; it < cfg.iterations; ++it) {
      std::vector<Index> sample = uniform_sample(Index(remaining.size()), m, rng);
      for (Index& s : sample) s = remaining[std::size_t(s)];
      auto model = problem.fit(sample);
      if (!model) continue;
      auto in = inliers_of(*model);
      if (in.size() > best_inliers.size()) {
        best = std::move(model);
        best_inliers = std::move(in);
      }
    }
    if (!best) break;
    for (int r = 0; r < cfg.refit_rounds; ++r) {
      auto refit = problem.fit(best_inliers);
      if (!refit) break;
      auto in = inliers_of(*refit);
      if (in.size() < best_inliers.size()) break;
      best = std::move(refit);
      best_inliers = std::move(in);
    }
    if (Index(best_inliers.size()) < cfg.min_support) break;

    const int label = int(result.models.size());
    result.models.push_back(*best);
    for (Index i : best_inliers) result.labels[std::size_t(i)] = label;
    std::vector<Index> rest;
    std::set_difference(remaining.begin(), remaining.end(), best_inliers.begin(), best_inliers.end(),
                        std::back_inserter(rest));
    remaining = std::move(rest);
    ++result.outer_iterations;
  }
  return result;
}

}  // namespace coral
