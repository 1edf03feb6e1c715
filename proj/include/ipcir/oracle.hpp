#pragma once

#include <optional>
#include <vector>

#include "ipcir/fusion.hpp"
#include "ipcir/manifest.hpp"
#include "ipcir/metrics.hpp"

// Brute-force reference for the whole retrieval pipeline. Plain loops over
// std::vector<double>; nothing here calls into the scoring kernel, the Eigen
// fusion/balance templates, top_k, or the metric implementations.
namespace ipcir::oracle {

inline constexpr Index kMaxGallery = 1000;

using Scores = std::vector<double>;
using Rows = std::vector<Index>;

/// Gallery rows sorted by (score desc, row asc), excluded rows removed.
/// A non-negative `limit` stops after that many rows.
Rows full_ranking(const Scores& scores, const Rows& exclude = {}, Index limit = -1);

double recall_at_k(const Scores& scores, const Rows& ground_truth, Index k, const Rows& exclude = {});
double map_at_k(const Scores& scores, const Rows& ground_truth, Index k, const Rows& exclude = {});
double subset_recall_at_k(const Scores& scores, const Rows& subset, const Rows& ground_truth, Index k);

struct Options {
  FusionWeights weights;
  ProxyAggregation aggregation = ProxyAggregation::mean_embedding;
  MaxMode max_mode = MaxMode::abs;
  ScaleBasis basis = ScaleBasis::normalized;
  bool minmax = true;
  EvalConfig eval;
};

/// Recomputes fusion, cosine similarities, balance and metrics from the raw
/// matrices. Throws a size error for galleries above kMaxGallery.
EvalReport oracle_evaluate(const ResolvedDataset& ds, double lambda, const Options& options = {});

}  // namespace ipcir::oracle
