#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "ipcir/error.hpp"

namespace ipcir {

using Index = Eigen::Index;
using Embedding = Eigen::VectorXf;
using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Norms below this are treated as the zero vector everywhere in the engine.
inline constexpr double kZeroNorm = 1e-12;

template <typename Scalar>
struct Normalized {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;
  bool zero = false;
};

/// Unit-norm copy of `v`. A vector with norm < kZeroNorm comes back unchanged
/// with `zero` set; that is a flag, not a failure.
template <typename Derived>
Normalized<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Normalized<Scalar> out{v, false};
  const Scalar norm = out.values.norm();
  if (!(static_cast<double>(norm) >= kZeroNorm)) {
    out.zero = true;
    return out;
  }
  out.values /= norm;
  return out;
}

/// Largest absolute component (infinity norm); 0 for an empty vector.
template <typename Derived>
typename Derived::Scalar max_abs(const Eigen::MatrixBase<Derived>& v) {
  return v.size() == 0 ? typename Derived::Scalar(0) : v.cwiseAbs().maxCoeff();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

/// Componentwise mean of the L2-normalized inputs. Zero vectors contribute zero.
Embedding mean_embedding(std::span<const Embedding> set);

enum class Role : std::uint32_t {
  gallery = 0,
  query_image = 1,
  proxy_image = 2,
  target_caption = 3,
  origin_caption = 4,
  baseline_text = 5,
};

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

/// Immutable collection of same-dimension embeddings with string ids.
///
/// The raw matrix is kept bit-exact as loaded. Construction also derives the
/// row-normalized matrix used for cosine scoring, plus per-row raw norms.
class EmbeddingSet {
 public:
  EmbeddingSet(Role role, std::vector<std::string> ids, RowMatrixXf raw);

  Role role() const noexcept { return role_; }
  Index dim() const noexcept { return raw_.cols(); }
  Index count() const noexcept { return raw_.rows(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const RowMatrixXf& raw() const noexcept { return raw_; }
  const RowMatrixXf& unit() const noexcept { return unit_; }
  const Eigen::VectorXf& norms() const noexcept { return norms_; }
  bool is_zero(Index row) const { return zero_[static_cast<std::size_t>(row)]; }
  Index zero_count() const;

  std::optional<Index> find(std::string_view id) const;
  /// Throws a resolution error when `id` is absent.
  Index index_of(std::string_view id) const;

 private:
  Role role_;
  std::vector<std::string> ids_;
  RowMatrixXf raw_;
  RowMatrixXf unit_;
  Eigen::VectorXf norms_;
  std::vector<bool> zero_;
  std::unordered_map<std::string, Index> index_;
};

/// Binary "IPCE" file: magic, u32 version, u32 role, u32 dim, u64 count,
/// count NUL-terminated ids, count*dim f32 row-major. Little-endian.
void write_embedding_set(const std::filesystem::path& path, const EmbeddingSet& set);
void write_embedding_set(const std::filesystem::path& path, Role role,
                         const std::vector<std::string>& ids, const RowMatrixXf& matrix);
EmbeddingSet load_embedding_set(const std::filesystem::path& path, Role expected_role);

}  // namespace ipcir
