#include "ipcir/embed_store.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace ipcir {

static_assert(std::endian::native == std::endian::little,
              "IPCE/IPCS files are read and written with native little-endian layout");

namespace {

constexpr std::array<char, 4> kMagic{'I', 'P', 'C', 'E'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, "embed_store", msg);
}

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path, const char* field) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    fail(ErrorKind::format, path.string() + ": truncated header at field '" + field + "'");
  }
  return value;
}

}  // namespace

Embedding mean_embedding(std::span<const Embedding> set) {
  if (set.empty()) fail(ErrorKind::argument, "mean_embedding: empty input set");
  const Index dim = set.front().size();
  Embedding sum = Embedding::Zero(dim);
  for (const auto& e : set) {
    if (e.size() != dim) {
      fail(ErrorKind::shape, "mean_embedding: mixed dimensions " + std::to_string(dim) + " and " +
                                 std::to_string(e.size()));
    }
    const auto n = l2_normalize(e);
    if (!n.zero) sum += n.values;
  }
  return sum / static_cast<float>(set.size());
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::gallery: return "gallery";
    case Role::query_image: return "query_image";
    case Role::proxy_image: return "proxy_image";
    case Role::target_caption: return "target_caption";
    case Role::origin_caption: return "origin_caption";
    case Role::baseline_text: return "baseline_text";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (auto r : {Role::gallery, Role::query_image, Role::proxy_image, Role::target_caption,
                 Role::origin_caption, Role::baseline_text}) {
    if (to_string(r) == name) return r;
  }
  fail(ErrorKind::config, "unknown embedding role '" + std::string(name) + "'");
}

EmbeddingSet::EmbeddingSet(Role role, std::vector<std::string> ids, RowMatrixXf raw)
    : role_(role), ids_(std::move(ids)), raw_(std::move(raw)) {
  if (raw_.cols() < 1) fail(ErrorKind::shape, "embedding dim must be >= 1");
  if (static_cast<Index>(ids_.size()) != raw_.rows()) {
    fail(ErrorKind::shape, "id count " + std::to_string(ids_.size()) + " != row count " +
                               std::to_string(raw_.rows()));
  }
  index_.reserve(ids_.size());
  for (Index i = 0; i < raw_.rows(); ++i) {
    const auto& id = ids_[static_cast<std::size_t>(i)];
    if (!raw_.row(i).allFinite()) {
      fail(ErrorKind::data, "non-finite value in row " + std::to_string(i) + " (id '" + id + "')");
    }
    if (!index_.emplace(id, i).second) fail(ErrorKind::data, "duplicate id '" + id + "'");
  }

  unit_ = raw_;
  norms_.resize(raw_.rows());
  zero_.assign(static_cast<std::size_t>(raw_.rows()), false);
  for (Index i = 0; i < raw_.rows(); ++i) {
    const float n = raw_.row(i).norm();
    norms_[i] = n;
    if (static_cast<double>(n) < kZeroNorm) {
      zero_[static_cast<std::size_t>(i)] = true;
    } else {
      unit_.row(i) /= n;
    }
  }
}

Index EmbeddingSet::zero_count() const {
  Index n = 0;
  for (bool z : zero_) n += z ? 1 : 0;
  return n;
}

std::optional<Index> EmbeddingSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Index EmbeddingSet::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  fail(ErrorKind::resolution,
       "id '" + std::string(id) + "' not found in " + std::string(to_string(role_)) + " set");
}

void write_embedding_set(const std::filesystem::path& path, Role role,
                         const std::vector<std::string>& ids, const RowMatrixXf& matrix) {
  if (static_cast<Index>(ids.size()) != matrix.rows()) {
    fail(ErrorKind::shape, "write_embedding_set: id count does not match row count");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::config, "cannot open '" + path.string() + "' for writing");
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(role));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(matrix.cols()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(matrix.rows()));
  for (const auto& id : ids) {
    if (id.find('\0') != std::string::npos) fail(ErrorKind::data, "id contains NUL byte");
    os.write(id.c_str(), static_cast<std::streamsize>(id.size() + 1));
  }
  os.write(reinterpret_cast<const char*>(matrix.data()),
           static_cast<std::streamsize>(matrix.size() * sizeof(float)));
  if (!os) fail(ErrorKind::format, "write to '" + path.string() + "' failed");
}

void write_embedding_set(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_embedding_set(path, set.role(), set.ids(), set.raw());
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path, Role expected_role) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::format, "cannot open embedding file '" + path.string() + "'");

  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    fail(ErrorKind::format, path.string() + ": bad magic (expected \"IPCE\")");
  }
  const auto version = get<std::uint32_t>(is, path, "version");
  if (version != kVersion) {
    fail(ErrorKind::format, path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto role_raw = get<std::uint32_t>(is, path, "role");
  if (role_raw > static_cast<std::uint32_t>(Role::baseline_text)) {
    fail(ErrorKind::format, path.string() + ": unknown role code " + std::to_string(role_raw));
  }
  const auto role = static_cast<Role>(role_raw);
  const auto dim = get<std::uint32_t>(is, path, "dim");
  const auto count = get<std::uint64_t>(is, path, "count");
  if (dim == 0) fail(ErrorKind::format, path.string() + ": dim must be >= 1");
  if (role != expected_role) {
    fail(ErrorKind::role, path.string() + ": role is " + std::string(to_string(role)) +
                              ", expected " + std::string(to_string(expected_role)));
  }

  // Guard against absurd counts before allocating.
  const auto start = is.tellg();
  is.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(is.tellg() - start);
  is.seekg(start);
  if (count > remaining / (static_cast<std::uint64_t>(dim) * sizeof(float) + 1)) {
    fail(ErrorKind::format, path.string() + ": header count " + std::to_string(count) +
                                " exceeds file payload");
  }

  std::vector<std::string> ids(count);
  for (auto& id : ids) {
    if (!std::getline(is, id, '\0')) fail(ErrorKind::format, path.string() + ": truncated id table");
  }
  RowMatrixXf matrix(static_cast<Index>(count), static_cast<Index>(dim));
  const auto bytes = static_cast<std::streamsize>(matrix.size() * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(matrix.data()), bytes)) {
    fail(ErrorKind::format, path.string() + ": truncated matrix payload");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::format, path.string() + ": trailing bytes after matrix payload");
  }
  return EmbeddingSet(role, std::move(ids), std::move(matrix));
}

}  // namespace ipcir
