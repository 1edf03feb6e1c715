#include "ipcir/simengine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ipcir {

std::string_view to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::text: return "text";
    case SimilarityKind::proxy: return "proxy";
    case SimilarityKind::balanced: return "balanced";
    case SimilarityKind::final: return "final";
  }
  return "text";
}

std::string_view to_string(ScoreNormalization n) {
  return n == ScoreNormalization::minmax_per_query ? "minmax" : "none";
}

void BalanceParams::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorKind::config, "simengine", "lambda must lie in [0,1]");
  }
}

SimilarityVector cosine_scores(std::string query_id, const Embedding& query,
                               const EmbeddingSet& gallery, SimilarityKind kind,
                               const KernelOptions& opts) {
  if (query.size() != gallery.dim()) {
    throw Error(ErrorKind::shape, "simengine",
                "query dim " + std::to_string(query.size()) + " != gallery dim " +
                    std::to_string(gallery.dim()));
  }
  RowMatrixXf q = query.transpose();
  const RowMatrixXf scores = cosine_score_matrix(q, gallery.unit(), opts);
  return {std::move(query_id), scores.row(0).transpose().cast<double>(), kind};
}

SimilarityVector minmax_normalize(const SimilarityVector& s) {
  return {s.query_id, minmax_normalize(s.scores), s.kind};
}

SimilarityVector balance(const SimilarityVector& text, const SimilarityVector& proxy,
                         const BalanceParams& p) {
  p.validate();
  if (p.normalization == ScoreNormalization::minmax_per_query) {
    return {text.query_id, balance(minmax_normalize(text.scores), minmax_normalize(proxy.scores), p.lambda),
            SimilarityKind::final};
  }
  return {text.query_id, balance(text.scores, proxy.scores, p.lambda), SimilarityKind::final};
}

double balance_crossover(double text_a, double proxy_a, double text_b, double proxy_b,
                         double tolerance) {
  const Eigen::Vector2d text(text_a, text_b);
  const Eigen::Vector2d proxy(proxy_a, proxy_b);
  auto gap = [&](double lambda) {
    const Eigen::Vector2d f = balance(text, proxy, lambda);
    return f[0] - f[1];
  };
  double lo = 0.0;
  double hi = 1.0;
  double g_lo = gap(lo);
  const double g_hi = gap(hi);
  if (g_lo == 0.0) return lo;
  if (g_hi == 0.0) return hi;
  if ((g_lo < 0) == (g_hi < 0)) return std::numeric_limits<double>::quiet_NaN();
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    const double g = gap(mid);
    if (g == 0.0) return mid;
    if ((g < 0) == (g_lo < 0)) {
      lo = mid;
      g_lo = g;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

RankedList top_k(const SimilarityVector& s, Index k, std::span<const Index> exclude) {
  if (k < 1) throw Error(ErrorKind::argument, "simengine", "top_k: k must be >= 1");
  const Index n = s.scores.size();
  std::vector<char> skip(static_cast<std::size_t>(n), 0);
  for (Index i : exclude) {
    if (i >= 0 && i < n) skip[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    if (!skip[static_cast<std::size_t>(i)]) order.push_back(i);
  }
  const auto& v = s.scores;
  auto before = [&v](Index a, Index b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);

  RankedList out{s.query_id, {}};
  out.entries.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) out.entries.push_back({order[r], v[order[r]]});
  return out;
}

}  // namespace ipcir
