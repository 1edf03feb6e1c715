#include "ipcir/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

namespace ipcir {

namespace {

[[noreturn]] void protocol(const std::string& msg) { throw Error(ErrorKind::protocol, "metrics", msg); }

void require_k(Index k) {
  if (k < 1) throw Error(ErrorKind::argument, "metrics", "k must be >= 1");
}

std::unordered_set<Index> as_set(std::span<const Index> ids) {
  if (ids.empty()) protocol("empty ground truth");
  return {ids.begin(), ids.end()};
}

void check_list(const std::vector<Index>& ks, const char* name) {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1 || (i && ks[i] <= ks[i - 1])) {
      throw Error(ErrorKind::config, "metrics",
                  std::string(name) + " must be strictly ascending positive integers");
    }
  }
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void EvalConfig::validate() const {
  check_list(recall_ks, "recall_ks");
  check_list(map_ks, "map_ks");
  check_list(subset_ks, "subset_ks");
}

Index EvalConfig::max_k() const {
  Index k = 1;
  if (!recall_ks.empty()) k = std::max(k, recall_ks.back());
  if (!map_ks.empty()) k = std::max(k, map_ks.back());
  return k;
}

double recall_at_k(const RankedList& ranked, std::span<const Index> ground_truth, Index k) {
  require_k(k);
  const auto gt = as_set(ground_truth);
  const auto depth = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.entries.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (gt.count(ranked.entries[r].index)) return 1.0;
  }
  return 0.0;
}

double map_at_k(const RankedList& ranked, std::span<const Index> ground_truth, Index k) {
  require_k(k);
  const auto gt = as_set(ground_truth);
  const auto depth = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.entries.size());
  double hits = 0;
  double sum = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (gt.count(ranked.entries[r].index)) {
      hits += 1;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(k), gt.size()));
}

double subset_recall_at_k(const SimilarityVector& final_scores, std::span<const Index> subset,
                          std::span<const Index> ground_truth, Index k) {
  require_k(k);
  const auto gt = as_set(ground_truth);
  std::vector<Index> members(subset.begin(), subset.end());
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  for (Index g : gt) {
    if (!std::binary_search(members.begin(), members.end(), g)) {
      protocol("ground-truth row " + std::to_string(g) + " is not in the subset");
    }
  }
  if (k > static_cast<Index>(members.size())) {
    throw Error(ErrorKind::argument, "metrics",
                "subset k=" + std::to_string(k) + " exceeds subset size " + std::to_string(members.size()));
  }
  const auto& v = final_scores.scores;
  for (Index m : members) {
    if (m < 0 || m >= v.size()) protocol("subset row " + std::to_string(m) + " outside the gallery");
  }
  std::stable_sort(members.begin(), members.end(), [&v](Index a, Index b) { return v[a] > v[b]; });
  for (Index r = 0; r < k; ++r) {
    if (gt.count(members[static_cast<std::size_t>(r)])) return 1.0;
  }
  return 0.0;
}

QueryMetrics evaluate_query(const RankedList& ranked, std::span<const Index> ground_truth,
                            const EvalConfig& config, const SimilarityVector* final_scores,
                            std::optional<std::span<const Index>> subset) {
  QueryMetrics m;
  m.query_id = ranked.query_id;
  for (Index k : config.recall_ks) m.recall[k] = recall_at_k(ranked, ground_truth, k);
  for (Index k : config.map_ks) m.map[k] = map_at_k(ranked, ground_truth, k);
  if (subset && final_scores) {
    for (Index k : config.subset_ks) {
      m.subset_recall[k] = subset_recall_at_k(*final_scores, *subset, ground_truth, k);
    }
  }
  const std::unordered_set<Index> gt(ground_truth.begin(), ground_truth.end());
  for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
    if (gt.count(ranked.entries[r].index)) {
      m.first_relevant_rank = static_cast<Index>(r + 1);
      break;
    }
  }
  return m;
}

EvalReport summarize(std::vector<QueryMetrics> per_query, const EvalConfig& config) {
  EvalReport report;
  report.num_queries = per_query.size();
  if (per_query.empty()) {
    report.per_query = std::move(per_query);
    return report;
  }
  const double n = static_cast<double>(per_query.size());
  auto mean = [&](auto member, Index k) {
    double sum = 0;
    for (const auto& q : per_query) sum += (q.*member).at(k);
    return sum / n;
  };
  for (Index k : config.recall_ks) report.recall[k] = mean(&QueryMetrics::recall, k);
  for (Index k : config.map_ks) report.map[k] = mean(&QueryMetrics::map, k);
  const bool all_subsets = std::all_of(per_query.begin(), per_query.end(),
                                       [](const QueryMetrics& q) { return !q.subset_recall.empty(); });
  if (all_subsets) {
    for (Index k : config.subset_ks) report.subset_recall[k] = mean(&QueryMetrics::subset_recall, k);
  }
  report.per_query = std::move(per_query);
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_per_query) {
  nlohmann::ordered_json doc;
  doc["config"] = report.config;
  doc["num_queries"] = report.num_queries;
  auto table = [](const std::map<Index, double>& values) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values) t[std::to_string(k)] = v;
    return t;
  };
  nlohmann::ordered_json metrics;
  metrics["recall"] = table(report.recall);
  metrics["map"] = table(report.map);
  if (!report.subset_recall.empty()) metrics["subset_recall"] = table(report.subset_recall);
  doc["metrics"] = std::move(metrics);
  if (include_per_query) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& q : report.per_query) {
      nlohmann::ordered_json row;
      row["query_id"] = q.query_id;
      if (q.first_relevant_rank) {
        row["first_relevant_rank"] = *q.first_relevant_rank;
      } else {
        row["first_relevant_rank"] = nullptr;
      }
      rows.push_back(std::move(row));
    }
    doc["per_query"] = std::move(rows);
  }
  return doc;
}

std::string report_to_csv_rows(const EvalReport& report, const std::string& label) {
  std::string out;
  auto emit = [&](const char* metric, const std::map<Index, double>& values) {
    for (const auto& [k, v] : values) {
      out += label + "," + metric + "," + std::to_string(k) + "," + format_value(v) + "\n";
    }
  };
  emit("recall", report.recall);
  emit("map", report.map);
  emit("subset_recall", report.subset_recall);
  return out;
}

}  // namespace ipcir
