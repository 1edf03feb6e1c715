#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipcir/embed_store.hpp"

namespace ipcir {

enum class SimilarityKind { text, proxy, balanced, final };
enum class ScoreNormalization { minmax_per_query, none };

std::string_view to_string(SimilarityKind k);
std::string_view to_string(ScoreNormalization n);

/// Scores of one query against every gallery item. Kernel output is f32;
/// everything downstream of the kernel is carried in double.
struct SimilarityVector {
  std::string query_id;
  Eigen::VectorXd scores;
  SimilarityKind kind = SimilarityKind::text;
};

struct BalanceParams {
  double lambda = 0.5;
  ScoreNormalization normalization = ScoreNormalization::minmax_per_query;

  void validate() const;
};

struct RankedEntry {
  Index index = 0;  // gallery row
  double score = 0;
  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Descending score, ties by ascending gallery index.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;
};

/// Work decomposition for the scoring kernel. Results never depend on these.
struct KernelOptions {
  int threads = 1;
  Index query_block = 128;
  Index gallery_block = 8192;
};

/// Name of the SIMD path compiled into the kernel ("avx512", "avx2", "generic").
std::string_view kernel_backend();

/// Dot product with the kernel's fixed accumulation order: 16 strided lane
/// sums combined by a fixed pairwise tree. Every score the engine produces
/// is bit-identical to this function applied to the same two rows.
float kernel_dot(const float* a, const float* b, Index dim);

/// scores(i, j) = kernel_dot(queries row i, gallery row j). Rows are used
/// as given (no normalization).
RowMatrixXf dot_matrix(const RowMatrixXf& queries, const RowMatrixXf& gallery,
                       const KernelOptions& opts = {});

/// Normalizes each query row, then scores it against pre-normalized gallery rows.
RowMatrixXf cosine_score_matrix(const RowMatrixXf& queries, const RowMatrixXf& unit_gallery,
                                const KernelOptions& opts = {});

SimilarityVector cosine_scores(std::string query_id, const Embedding& query,
                               const EmbeddingSet& gallery,
                               SimilarityKind kind = SimilarityKind::text,
                               const KernelOptions& opts = {});

/// Exact top-k of cosine(query, gallery) for every query row, computed in
/// blocked tiles without materializing the full score matrix.
std::vector<RankedList> cosine_top_k(const RowMatrixXf& queries, const RowMatrixXf& unit_gallery,
                                     Index k, const KernelOptions& opts = {});

/// Affine map onto [0,1]; a constant vector maps to 0.5 everywhere.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> minmax_normalize(
    const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (s.size() == 0) return Vec();
  const Scalar lo = s.minCoeff();
  const Scalar hi = s.maxCoeff();
  if (!(hi > lo)) return Vec::Constant(s.size(), Scalar(0.5));
  return ((s.array() - lo) / (hi - lo)).matrix();
}

SimilarityVector minmax_normalize(const SimilarityVector& s);

/// S_b = S_t * S_p and S_f = lambda S_t + (1 - lambda) S_b, componentwise.
template <typename DerivedT, typename DerivedP>
Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, 1> balance(
    const Eigen::MatrixBase<DerivedT>& text, const Eigen::MatrixBase<DerivedP>& proxy,
    typename DerivedT::Scalar lambda) {
  using Scalar = typename DerivedT::Scalar;
  if (text.size() != proxy.size()) {
    throw Error(ErrorKind::shape, "simengine",
                "balance: lengths " + std::to_string(text.size()) + " and " +
                    std::to_string(proxy.size()));
  }
  const auto balanced = text.cwiseProduct(proxy);
  return lambda * text + (Scalar(1) - lambda) * balanced;
}

/// Applies p.normalization to both inputs, then the balance metric.
SimilarityVector balance(const SimilarityVector& text, const SimilarityVector& proxy,
                         const BalanceParams& p);

/// Lambda at which two candidates (text score, proxy score) receive equal
/// final scores, located by bisection on the balance metric. Returns NaN
/// when the order does not flip inside [0,1].
double balance_crossover(double text_a, double proxy_a, double text_b, double proxy_b,
                         double tolerance = 1e-13);

/// Exact top-k under the (score desc, index asc) order. k larger than the
/// candidate count returns the full ranking. Excluded rows are skipped.
RankedList top_k(const SimilarityVector& s, Index k, std::span<const Index> exclude = {});

}  // namespace ipcir
