#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ipcir/embed_store.hpp"
#include "ipcir/scores_file.hpp"

namespace ipcir {

enum class MetricProtocol { multi_target_map, single_target_recall, subset_recall, recall_only };

std::string_view to_string(MetricProtocol p);
MetricProtocol protocol_from_string(std::string_view name);

struct QueryRecord {
  std::string query_id;
  std::string query_image;
  std::vector<std::string> proxy_images;
  std::vector<std::string> target_captions;
  std::vector<std::string> origin_captions;
  /// Id in the baseline_text set; used for S_t when no score file is given.
  std::optional<std::string> baseline_text;
  std::vector<std::string> ground_truth;
  std::optional<std::vector<std::string>> subset;
  /// Gallery ids removed from this query's ranking (e.g. the query image itself).
  std::vector<std::string> exclude;
};

/// Dataset description. Relative paths resolve against `base_dir`.
struct DatasetManifest {
  std::string name;
  MetricProtocol metric_protocol = MetricProtocol::recall_only;
  std::filesystem::path base_dir;
  std::filesystem::path gallery_ref;
  std::map<Role, std::filesystem::path> set_refs;  // non-gallery roles
  std::optional<std::filesystem::path> baseline_scores_ref;
  std::vector<QueryRecord> queries;
};

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string serialize_manifest(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Per-query references resolved to row indices.
struct ResolvedQuery {
  Index query_image = 0;
  std::vector<Index> proxy_images;
  std::vector<Index> target_captions;
  std::vector<Index> origin_captions;
  std::optional<Index> baseline_text;
  std::vector<Index> ground_truth;  // gallery rows
  std::optional<std::vector<Index>> subset;
  std::vector<Index> exclude;
};

/// All embedding sets of a dataset, loaded and cross-checked.
struct ResolvedDataset {
  DatasetManifest manifest;
  std::shared_ptr<const EmbeddingSet> gallery;
  std::shared_ptr<const EmbeddingSet> query_image;
  std::shared_ptr<const EmbeddingSet> proxy_image;
  std::shared_ptr<const EmbeddingSet> target_caption;
  std::shared_ptr<const EmbeddingSet> origin_caption;
  std::shared_ptr<const EmbeddingSet> baseline_text;  // may be null
  std::optional<ScoreMatrix> baseline_scores;         // rows follow manifest query order
  std::vector<ResolvedQuery> queries;

  Index dim() const { return gallery->dim(); }
};

/// Loads every referenced file and binds ids to rows.
ResolvedDataset resolve_manifest(const DatasetManifest& manifest);

/// Same binding over sets already in memory (no file access). Missing roles
/// in `sets` are looked up nowhere and referencing them is a resolution error.
ResolvedDataset resolve_in_memory(DatasetManifest manifest,
                                  std::map<Role, std::shared_ptr<const EmbeddingSet>> sets,
                                  std::optional<ScoreMatrix> baseline_scores = std::nullopt);

}  // namespace ipcir
