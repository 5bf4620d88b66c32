#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "cvkt/metrics.hpp"
#include "cvkt/transfer.hpp"

namespace cvkt {

struct CvGrid {
  std::vector<double> landmark_fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  /// Fractions of Psi_I's column count.
  std::vector<double> rank_fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  double holdout_fraction = 0.25;
  int folds = 1;
  std::uint64_t seed = 0;

  void validate() const {
    auto check = [](const std::vector<double>& list, const char* name) {
      if (list.empty()) throw config_error(std::string(name) + " must not be empty");
      for (double f : list) {
        if (!(f > 0.0 && f <= 1.0)) throw config_error(std::string(name) + " entries must be in (0, 1]");
      }
    };
    check(landmark_fractions, "landmark_fractions");
    check(rank_fractions, "rank_fractions");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw config_error("holdout_fraction must be in (0, 1)");
    if (folds < 1) throw config_error("folds must be at least 1");
  }

  std::size_t size() const { return landmark_fractions.size() * rank_fractions.size(); }
};

struct CvCandidate {
  double landmark_fraction = 0.0;
  double rank_fraction = 0.0;
  Index rank = 0;
  double score = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

struct CvResult {
  double landmark_fraction = 0.0;
  double rank_fraction = 0.0;
  Index rank = 0;
  double score = std::numeric_limits<double>::quiet_NaN();
  int evaluations = 0;
  std::vector<CvCandidate> candidates;

  ViewConfig config() const { return {landmark_fraction, rank, rank_fraction}; }
};

/// Samples of the target view hidden in a given fold.
inline IndexSet holdout_samples(const IndexSet& observed, double holdout_fraction, std::uint64_t seed) {
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(observed.size()))));
  if (observed.size() < h + 2) {
    throw argument_error("cross_validate: holdout of " + std::to_string(h) + " leaves fewer than 2 training samples");
  }
  IndexSet pool = observed;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < h; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(h);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// CA score of one grid point for `view`, averaged over folds. With
/// `oracle_truth`, the completion is trained on every observed sample and
/// scored against the full true kernel instead of an inner holdout.
inline CvCandidate evaluate_candidate(const std::vector<KernelMatrix>& kernels, int view, const CvGrid& grid,
                                      double landmark_fraction, double rank_fraction, const CompletionOptions& opts,
                                      const KernelMatrix* oracle_truth = nullptr) {
  const KernelMatrix& K = kernels.at(static_cast<std::size_t>(view));
  CompletionOptions view_opts = opts;
  view_opts.optimizer.seed = opts.optimizer.seed + static_cast<std::uint64_t>(view);
  const auto sources = source_features(kernels, view, landmark_fraction, view_opts.optimizer.seed);
  ViewConfig cfg{landmark_fraction, 0, rank_fraction};

  CvCandidate cand;
  cand.landmark_fraction = landmark_fraction;
  cand.rank_fraction = rank_fraction;
  if (oracle_truth != nullptr) {
    const ViewResult res = fit_view(sources, K, view, cfg, view_opts);
    cand.rank = res.rank;
    cand.score = completion_accuracy_term(res.predicted.values, oracle_truth->values);
    return cand;
  }
  double total = 0.0;
  for (int fold = 0; fold < grid.folds; ++fold) {
    const IndexSet held = holdout_samples(K.observed, grid.holdout_fraction,
                                          derive_seed(grid.seed, static_cast<std::uint64_t>(view) * 1000 + static_cast<std::uint64_t>(fold)));
    IndexSet train;
    std::set_difference(K.observed.begin(), K.observed.end(), held.begin(), held.end(), std::back_inserter(train));
    const KernelMatrix K_train = KernelMatrix::masked(K.values, train);
    const ViewResult res = fit_view(sources, K_train, view, cfg, view_opts);
    cand.rank = res.rank;
    total += completion_accuracy_term(res.predicted.values(held, K.observed), K.values(held, K.observed));
  }
  cand.score = total / grid.folds;
  return cand;
}

/// Grid search over (landmark fraction, rank fraction) minimizing CA. Ties go
/// to the smaller landmark fraction, then the smaller rank.
inline CvResult cross_validate(const std::vector<KernelMatrix>& kernels, int view, const CvGrid& grid,
                               const CompletionOptions& opts, const KernelMatrix* oracle_truth = nullptr) {
  grid.validate();
  opts.optimizer.validate();
  if (view < 0 || view >= static_cast<int>(kernels.size())) throw argument_error("cross_validate: view out of range");
  const KernelMatrix& K = kernels[static_cast<std::size_t>(view)];
  if (oracle_truth == nullptr) {
    // Fails early on a holdout that leaves fewer than two training samples.
    holdout_samples(K.observed, grid.holdout_fraction, 0);
  } else if (oracle_truth->n() != K.n() || !oracle_truth->values.allFinite()) {
    throw validation_error("cross_validate: oracle truth must be a complete kernel of matching size");
  }

  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto fractions = sorted(grid.landmark_fractions);
  const auto ranks = sorted(grid.rank_fractions);
  const bool single = fractions.size() == 1 && ranks.size() == 1;

  CvResult result;
  std::optional<std::size_t> best;
  for (double lf : fractions) {
    for (double rf : ranks) {
      CvCandidate cand;
      try {
        cand = evaluate_candidate(kernels, view, grid, lf, rf, opts, oracle_truth);
      } catch (const degenerate_input_error&) {
        cand = {lf, rf, 0, std::numeric_limits<double>::quiet_NaN(), true};
      } catch (const degenerate_transform_error&) {
        cand = {lf, rf, 0, std::numeric_limits<double>::quiet_NaN(), true};
      }
      result.evaluations += oracle_truth ? 1 : grid.folds;
      result.candidates.push_back(cand);
      if (cand.degenerate || !std::isfinite(cand.score)) continue;
      if (!best || cand.score < result.candidates[*best].score) best = result.candidates.size() - 1;
    }
  }
  if (!best) {
    if (!single) throw selection_error("cross_validate: every grid point was degenerate for view " + std::to_string(view));
    best = 0;
  }
  const CvCandidate& win = result.candidates[*best];
  result.landmark_fraction = win.landmark_fraction;
  result.rank_fraction = win.rank_fraction;
  result.rank = win.rank;
  result.score = win.score;
  return result;
}

}  // namespace cvkt
