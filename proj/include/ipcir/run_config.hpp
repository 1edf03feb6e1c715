#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ipcir/pipeline.hpp"

namespace ipcir {

/// Everything a retrieve/sweep run depends on. Echoed into every report.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir = "ipcir_out";
  PipelineConfig pipeline;
  int threads = 0;  // 0 = auto

  /// Throws a config error on any out-of-range field or missing manifest.
  void validate() const;
};

/// Reads a run-configuration JSON document; unspecified fields keep defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunConfig& config);

/// "1,5,10" -> {1,5,10}; throws a config error on junk.
std::vector<Index> parse_k_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);
FusionWeights parse_weights(const std::string& text);
ProxyAggregation parse_aggregation(const std::string& text);
ScoreNormalization parse_normalization(const std::string& text);
MaxMode parse_max_mode(const std::string& text);
ScaleBasis parse_scale_basis(const std::string& text);

/// --threads value, else IPCIR_THREADS, else 0 (auto).
int resolve_thread_count(int flag_value);

}  // namespace ipcir
