#pragma once

// Minimal-sample hypothesis generation. Each proposal draws from its own RNG
// stream seeded by (seed, proposal index), so results do not depend on the
// order in which proposals are evaluated.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "coral/errors.hpp"
#include "coral/problem.hpp"

namespace coral {

struct ProposalConfig {
  int count = 100;
  std::uint64_t seed = 1;
  int max_attempts = 50;
  /// Sample around a random anchor within this radius (problem positions).
  std::optional<double> local_radius;
};

template <typename Model>
struct ProposalSet {
  std::vector<Model> models;
  /// Sorted indices of the minimal sample each model was estimated from.
  std::vector<std::vector<Index>> samples;
};

inline std::mt19937_64 proposal_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream), std::uint32_t(stream >> 32)};
  return std::mt19937_64(seq);
}

/// Uniform draw of `m` distinct indices from [0, n), sorted.
template <typename Rng>
std::vector<Index> uniform_sample(Index n, Index m, Rng& rng) {
  std::vector<Index> out;
  out.reserve(std::size_t(m));
  std::uniform_int_distribution<Index> pick(0, n - 1);
  while (Index(out.size()) < m) {
    const Index i = pick(rng);
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Anchor plus m - 1 distinct points drawn uniformly among those within
/// `radius` of it. Throws InsufficientLocalPoints when fewer than m points
/// (anchor included) are in range.
template <typename Rng>
std::vector<Index> local_sample(std::span<const Vec2<double>> positions, Index anchor, double radius, Index m,
                                Rng& rng) {
  const Vec2<double> a = positions[std::size_t(anchor)];
  const double r2 = radius * radius;
  std::vector<Index> near;
  for (Index i = 0; i < Index(positions.size()); ++i)
    if (i != anchor && (positions[std::size_t(i)] - a).squaredNorm() <= r2) near.push_back(i);
  if (Index(near.size()) + 1 < m) throw InsufficientLocalPoints("not enough points within the sampling radius");
  std::vector<Index> out{anchor};
  std::vector<Index> picked = uniform_sample(Index(near.size()), m - 1, rng);
  for (Index p : picked) out.push_back(near[std::size_t(p)]);
  std::sort(out.begin(), out.end());
  return out;
}

/// Up to cfg.count models, each estimated from a minimal sample. Degenerate
/// samples are redrawn up to cfg.max_attempts times before the proposal is
/// skipped. Throws NoModelsProposed when nothing could be estimated.
template <FittingProblem P>
ProposalSet<typename P::Model> propose_models(const P& problem, const ProposalConfig& cfg) {
  if (cfg.count < 1) throw Error("proposal count must be at least 1");
  const Index n = problem.size();
  const Index m = problem.minimal_sample_size();
  if (n < m) throw NoModelsProposed("fewer points than a minimal sample");

  std::vector<Vec2<double>> positions;
  if constexpr (Positioned<P>) {
    if (cfg.local_radius) {
      positions.reserve(std::size_t(n));
      for (Index i = 0; i < n; ++i) positions.push_back(problem.position(i));
    }
  }

  ProposalSet<typename P::Model> out;
  for (int p = 0; p < cfg.count; ++p) {
    auto rng = proposal_rng(cfg.seed, std::uint64_t(p));
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
      std::vector<Index> sample;
      if (!positions.empty()) {
        const Index anchor = std::uniform_int_distribution<Index>(0, n - 1)(rng);
        try {
          sample = local_sample<std::mt19937_64>(positions, anchor, *cfg.local_radius, m, rng);
        } catch (const InsufficientLocalPoints&) {
          sample = uniform_sample(n, m, rng);
        }
      } else {
        sample = uniform_sample(n, m, rng);
      }
      if (auto model = problem.fit(sample)) {
        out.models.push_back(std::move(*model));
        out.samples.push_back(std::move(sample));
        break;
      }
    }
  }
  if (out.models.empty()) throw NoModelsProposed("every sample was degenerate");
  return out;
}

}  // namespace coral
