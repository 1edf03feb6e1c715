#pragma once

#include <optional>
#include <vector>

#include "ipcir/fusion.hpp"
#include "ipcir/manifest.hpp"
#include "ipcir/metrics.hpp"
#include "ipcir/simengine.hpp"

namespace ipcir {

struct PipelineConfig {
  FusionConfig fusion;
  BalanceParams balance;
  EvalConfig eval;
  KernelOptions kernel;
};

/// Lambda-independent similarities, already normalized per `normalization`.
struct SimilarityCache {
  ScoreNormalization normalization = ScoreNormalization::minmax_per_query;
  std::vector<SimilarityVector> text;   // S_t per query
  std::vector<SimilarityVector> proxy;  // S_p per query
  std::size_t degenerate_proxies = 0;   // robust proxies built from an all-zero f_p
};

/// Baseline text-side scores for every query (before normalization).
std::vector<SimilarityVector> text_similarities(const ResolvedDataset& ds, const FusionConfig& fusion,
                                                const KernelOptions& kernel);

/// Builds the robust proxy of each query (per proxy in per_proxy mode) and
/// scores it against the gallery. `proxy_limit` keeps only the first n
/// proxy ids of every query.
std::vector<SimilarityVector> proxy_similarities(const ResolvedDataset& ds, const FusionConfig& fusion,
                                                 const KernelOptions& kernel,
                                                 std::optional<std::size_t> proxy_limit,
                                                 std::size_t* degenerate = nullptr);

SimilarityCache compute_similarities(const ResolvedDataset& ds, const FusionConfig& fusion,
                                     ScoreNormalization normalization, const KernelOptions& kernel,
                                     std::optional<std::size_t> proxy_limit = std::nullopt);

struct RetrievalResult {
  std::vector<RankedList> rankings;
  EvalReport report;
};

/// Balance, rank, and evaluate from cached similarities.
RetrievalResult rank_and_evaluate(const ResolvedDataset& ds, const SimilarityCache& cache,
                                  double lambda, const EvalConfig& eval, int threads = 1);

/// Full pipeline: fusion, similarities, balance, top-K, metrics.
RetrievalResult run_retrieval(const ResolvedDataset& ds, const PipelineConfig& config);

struct SweepPoint {
  double x = 0;  // lambda or proxy count
  EvalReport report;
};

/// One evaluation per grid value; S_t and S_p are computed once.
std::vector<SweepPoint> sweep_lambda(const ResolvedDataset& ds, const PipelineConfig& config,
                                     const std::vector<double>& grid);

/// Evaluates proxy prefixes 1..max_proxies. Every query needs at least
/// max_proxies proxy ids.
std::vector<SweepPoint> sweep_proxies(const ResolvedDataset& ds, const PipelineConfig& config,
                                      std::size_t max_proxies);

/// CSV with header `<x_name>,metric,K,value`.
std::string sweep_to_csv(const std::vector<SweepPoint>& points, const std::string& x_name);

}  // namespace ipcir
