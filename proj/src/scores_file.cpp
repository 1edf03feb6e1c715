#include "ipcir/scores_file.hpp"

#include <array>
#include <fstream>

namespace ipcir {

namespace {

constexpr std::array<char, 4> kMagic{'I', 'P', 'C', 'S'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, "simengine", msg);
}

}  // namespace

void write_score_matrix(const std::filesystem::path& path, const ScoreMatrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::config, "cannot open '" + path.string() + "' for writing");
  const std::uint32_t version = kVersion;
  const auto rows = static_cast<std::uint64_t>(m.scores.rows());
  const auto cols = static_cast<std::uint64_t>(m.scores.cols());
  os.write(kMagic.data(), kMagic.size());
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  os.write(reinterpret_cast<const char*>(m.scores.data()),
           static_cast<std::streamsize>(m.scores.size() * sizeof(float)));
  if (!os) fail(ErrorKind::format, "write to '" + path.string() + "' failed");
}

ScoreMatrix load_score_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::format, "cannot open score file '" + path.string() + "'");
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  is.read(magic.data(), magic.size());
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&rows), sizeof rows);
  is.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!is || magic != kMagic) fail(ErrorKind::format, path.string() + ": bad IPCS header");
  if (version != kVersion) {
    fail(ErrorKind::format, path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto start = is.tellg();
  is.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uint64_t>(is.tellg() - start);
  is.seekg(start);
  if (cols != 0 && rows > payload / (cols * sizeof(float))) {
    fail(ErrorKind::format, path.string() + ": header counts exceed file payload");
  }
  ScoreMatrix m{RowMatrixXf(static_cast<Index>(rows), static_cast<Index>(cols))};
  if (!is.read(reinterpret_cast<char*>(m.scores.data()),
               static_cast<std::streamsize>(m.scores.size() * sizeof(float)))) {
    fail(ErrorKind::format, path.string() + ": truncated score payload");
  }
  if (!m.scores.allFinite()) fail(ErrorKind::data, path.string() + ": non-finite score");
  return m;
}

}  // namespace ipcir
