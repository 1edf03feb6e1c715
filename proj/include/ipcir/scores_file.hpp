#pragma once

#include <filesystem>

#include "ipcir/embed_store.hpp"

namespace ipcir {

/// Externally computed similarity scores, one row per query, one column per
/// gallery item.
struct ScoreMatrix {
  RowMatrixXf scores;
};

/// Binary "IPCS" file: magic, u32 version=1, u64 query count, u64 gallery
/// count, row-major f32 scores. Little-endian.
void write_score_matrix(const std::filesystem::path& path, const ScoreMatrix& m);
ScoreMatrix load_score_matrix(const std::filesystem::path& path);

}  // namespace ipcir
