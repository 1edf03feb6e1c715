#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipcir/simengine.hpp"

namespace ipcir {

struct EvalConfig {
  std::vector<Index> recall_ks{1, 5, 10, 50};
  std::vector<Index> map_ks{5, 10, 25, 50};
  std::vector<Index> subset_ks{1, 2, 3};

  /// Each list sorted ascending with values >= 1; throws a config error otherwise.
  void validate() const;
  /// Ranking depth needed for recall and mAP.
  Index max_k() const;
};

/// 1 if any ground-truth row is in the first k entries, else 0.
double recall_at_k(const RankedList& ranked, std::span<const Index> ground_truth, Index k);

/// Truncated average precision:
///   AP@k = 1/min(k, |GT|) * sum_{r<=k} precision@r * rel(r)
double map_at_k(const RankedList& ranked, std::span<const Index> ground_truth, Index k);

/// Recall@k after ranking only the subset members by their final scores
/// (ties by ascending gallery row).
double subset_recall_at_k(const SimilarityVector& final_scores, std::span<const Index> subset,
                          std::span<const Index> ground_truth, Index k);

struct QueryMetrics {
  std::string query_id;
  std::map<Index, double> recall;
  std::map<Index, double> map;
  std::map<Index, double> subset_recall;  // empty when the query has no subset
  std::optional<Index> first_relevant_rank;  // 1-based, within the ranked list
};

/// Dataset-level means over queries, in [0,1]. Scaling to percentages is a
/// presentation concern left to the CLI.
struct EvalReport {
  std::size_t num_queries = 0;
  std::map<Index, double> recall;
  std::map<Index, double> map;
  std::map<Index, double> subset_recall;  // present only if every query has a subset
  std::vector<QueryMetrics> per_query;
  nlohmann::ordered_json config;  // resolved run configuration, echoed verbatim
};

QueryMetrics evaluate_query(const RankedList& ranked, std::span<const Index> ground_truth,
                            const EvalConfig& config,
                            const SimilarityVector* final_scores = nullptr,
                            std::optional<std::span<const Index>> subset = std::nullopt);

EvalReport summarize(std::vector<QueryMetrics> per_query, const EvalConfig& config);

nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_per_query = true);

/// Rows of `label,metric,K,value` (no header).
std::string report_to_csv_rows(const EvalReport& report, const std::string& label);

}  // namespace ipcir
