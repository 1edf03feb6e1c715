#include "ipcir/pipeline.hpp"

#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>

#include <omp.h>

namespace ipcir {

namespace {

const RowMatrixXf& basis_matrix(const EmbeddingSet& set, ScaleBasis basis) {
  return basis == ScaleBasis::raw ? set.raw() : set.unit();
}

std::vector<Embedding> gather(const std::shared_ptr<const EmbeddingSet>& set,
                              const std::vector<Index>& rows, ScaleBasis basis, std::size_t limit) {
  std::vector<Embedding> out;
  const std::size_t n = std::min(limit, rows.size());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(basis_matrix(*set, basis).row(rows[i]).transpose());
  return out;
}

/// Caption and proxy reduction: mean of normalized vectors, or the plain
/// mean when fusion runs on raw features. Empty input gives the zero vector.
Embedding reduce(const std::vector<Embedding>& vs, ScaleBasis basis, Index dim) {
  if (vs.empty()) return Embedding::Zero(dim);
  if (basis == ScaleBasis::normalized) return mean_embedding(vs);
  Embedding sum = Embedding::Zero(dim);
  for (const auto& v : vs) sum += v;
  return sum / static_cast<float>(vs.size());
}

int threads_of(const KernelOptions& k) { return k.threads > 0 ? k.threads : 0; }

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<SimilarityVector> text_similarities(const ResolvedDataset& ds, const FusionConfig& fusion,
                                                const KernelOptions& kernel) {
  const std::size_t nq = ds.queries.size();
  std::vector<SimilarityVector> out(nq);
  if (ds.baseline_scores) {
    for (std::size_t q = 0; q < nq; ++q) {
      out[q] = {ds.manifest.queries[q].query_id,
                ds.baseline_scores->scores.row(static_cast<Index>(q)).transpose().cast<double>(),
                SimilarityKind::text};
    }
    return out;
  }
  RowMatrixXf text(static_cast<Index>(nq), ds.dim());
  for (std::size_t q = 0; q < nq; ++q) {
    const auto& rq = ds.queries[q];
    if (rq.baseline_text) {
      text.row(static_cast<Index>(q)) = basis_matrix(*ds.baseline_text, fusion.basis).row(*rq.baseline_text);
    } else {
      const auto caps = gather(ds.target_caption, rq.target_captions, fusion.basis, rq.target_captions.size());
      if (caps.empty()) {
        throw Error(ErrorKind::protocol, "simengine",
                    "query '" + ds.manifest.queries[q].query_id +
                        "' has no baseline scores, baseline_text, or target captions");
      }
      text.row(static_cast<Index>(q)) = reduce(caps, fusion.basis, ds.dim()).transpose();
    }
  }
  const RowMatrixXf scores = cosine_score_matrix(text, ds.gallery->unit(), kernel);
  for (std::size_t q = 0; q < nq; ++q) {
    out[q] = {ds.manifest.queries[q].query_id, scores.row(static_cast<Index>(q)).transpose().cast<double>(),
              SimilarityKind::text};
  }
  return out;
}

std::vector<SimilarityVector> proxy_similarities(const ResolvedDataset& ds, const FusionConfig& fusion,
                                                 const KernelOptions& kernel,
                                                 std::optional<std::size_t> proxy_limit,
                                                 std::size_t* degenerate) {
  fusion.weights.validate();
  const std::size_t nq = ds.queries.size();
  const Index dim = ds.dim();
  const std::size_t limit = proxy_limit.value_or(std::numeric_limits<std::size_t>::max());

  std::vector<Embedding> features;
  std::vector<std::size_t> owner;
  std::size_t degenerate_count = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    const auto& rq = ds.queries[q];
    FusionInputs in;
    in.query = basis_matrix(*ds.query_image, fusion.basis).row(rq.query_image).transpose();
    in.target_caption = reduce(gather(ds.target_caption, rq.target_captions, fusion.basis, SIZE_MAX),
                               fusion.basis, dim);
    in.origin_caption = reduce(gather(ds.origin_caption, rq.origin_captions, fusion.basis, SIZE_MAX),
                               fusion.basis, dim);
    auto proxies = gather(ds.proxy_image, rq.proxy_images, fusion.basis, limit);

    std::vector<Embedding> fp;
    if (proxies.empty()) {
      fp.push_back(Embedding::Zero(dim));
    } else if (fusion.aggregation == ProxyAggregation::per_proxy) {
      fp = std::move(proxies);
    } else {
      fp.push_back(reduce(proxies, fusion.basis, dim));
    }
    for (auto& p : fp) {
      in.proxy = std::move(p);
      auto rp = robust_proxy(in, fusion.weights, fusion.max_mode);
      if (rp.degenerate) ++degenerate_count;
      features.push_back(std::move(rp.feature));
      owner.push_back(q);
    }
  }
  if (degenerate) *degenerate = degenerate_count;

  RowMatrixXf stacked(static_cast<Index>(features.size()), dim);
  for (std::size_t i = 0; i < features.size(); ++i) stacked.row(static_cast<Index>(i)) = features[i].transpose();
  const RowMatrixXf scores = cosine_score_matrix(stacked, ds.gallery->unit(), kernel);

  std::vector<SimilarityVector> out(nq);
  std::vector<std::size_t> counts(nq, 0);
  for (std::size_t q = 0; q < nq; ++q) {
    out[q] = {ds.manifest.queries[q].query_id, Eigen::VectorXd::Zero(ds.gallery->count()), SimilarityKind::proxy};
  }
  for (std::size_t i = 0; i < owner.size(); ++i) {
    out[owner[i]].scores += scores.row(static_cast<Index>(i)).transpose().cast<double>();
    ++counts[owner[i]];
  }
  for (std::size_t q = 0; q < nq; ++q) {
    if (counts[q] > 1) out[q].scores /= static_cast<double>(counts[q]);
  }
  return out;
}

SimilarityCache compute_similarities(const ResolvedDataset& ds, const FusionConfig& fusion,
                                     ScoreNormalization normalization, const KernelOptions& kernel,
                                     std::optional<std::size_t> proxy_limit) {
  SimilarityCache cache;
  cache.normalization = normalization;
  cache.text = text_similarities(ds, fusion, kernel);
  cache.proxy = proxy_similarities(ds, fusion, kernel, proxy_limit, &cache.degenerate_proxies);
  if (normalization == ScoreNormalization::minmax_per_query) {
    for (auto& s : cache.text) s = minmax_normalize(s);
    for (auto& s : cache.proxy) s = minmax_normalize(s);
  }
  return cache;
}

RetrievalResult rank_and_evaluate(const ResolvedDataset& ds, const SimilarityCache& cache,
                                  double lambda, const EvalConfig& eval, int threads) {
  BalanceParams{lambda, cache.normalization}.validate();
  eval.validate();
  const auto nq = static_cast<Index>(ds.queries.size());
  const Index depth = eval.max_k();
  RetrievalResult result;
  result.rankings.resize(static_cast<std::size_t>(nq));
  std::vector<QueryMetrics> per_query(static_cast<std::size_t>(nq));

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads > 0 ? threads : omp_get_max_threads())
  for (Index q = 0; q < nq; ++q) {
    try {
      const auto i = static_cast<std::size_t>(q);
      const auto& rq = ds.queries[i];
      SimilarityVector final_scores{ds.manifest.queries[i].query_id,
                                    balance(cache.text[i].scores, cache.proxy[i].scores, lambda),
                                    SimilarityKind::final};
      result.rankings[i] = top_k(final_scores, depth, rq.exclude);
      std::optional<std::span<const Index>> subset;
      if (rq.subset) subset = std::span<const Index>(*rq.subset);
      per_query[i] = evaluate_query(result.rankings[i], rq.ground_truth, eval, &final_scores, subset);
    } catch (...) {
#pragma omp critical(ipcir_rank_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  result.report = summarize(std::move(per_query), eval);
  return result;
}

RetrievalResult run_retrieval(const ResolvedDataset& ds, const PipelineConfig& config) {
  config.balance.validate();
  config.eval.validate();
  const auto cache = compute_similarities(ds, config.fusion, config.balance.normalization, config.kernel);
  return rank_and_evaluate(ds, cache, config.balance.lambda, config.eval, threads_of(config.kernel));
}

std::vector<SweepPoint> sweep_lambda(const ResolvedDataset& ds, const PipelineConfig& config,
                                     const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorKind::config, "cli", "lambda grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    BalanceParams{grid[i], config.balance.normalization}.validate();
    if (i && grid[i] <= grid[i - 1]) throw Error(ErrorKind::config, "cli", "lambda grid must be ascending");
  }
  const auto cache = compute_similarities(ds, config.fusion, config.balance.normalization, config.kernel);
  std::vector<SweepPoint> out;
  for (double lambda : grid) {
    out.push_back({lambda, rank_and_evaluate(ds, cache, lambda, config.eval, threads_of(config.kernel)).report});
  }
  return out;
}

std::vector<SweepPoint> sweep_proxies(const ResolvedDataset& ds, const PipelineConfig& config,
                                      std::size_t max_proxies) {
  if (max_proxies < 1) throw Error(ErrorKind::config, "cli", "max proxies must be >= 1");
  for (std::size_t q = 0; q < ds.queries.size(); ++q) {
    if (ds.queries[q].proxy_images.size() < max_proxies) {
      throw Error(ErrorKind::protocol, "cli",
                  "query '" + ds.manifest.queries[q].query_id + "' has " +
                      std::to_string(ds.queries[q].proxy_images.size()) + " proxies, sweep needs " +
                      std::to_string(max_proxies));
    }
  }
  SimilarityCache cache;
  cache.normalization = config.balance.normalization;
  cache.text = text_similarities(ds, config.fusion, config.kernel);
  if (cache.normalization == ScoreNormalization::minmax_per_query) {
    for (auto& s : cache.text) s = minmax_normalize(s);
  }
  std::vector<SweepPoint> out;
  for (std::size_t n = 1; n <= max_proxies; ++n) {
    cache.proxy = proxy_similarities(ds, config.fusion, config.kernel, n);
    if (cache.normalization == ScoreNormalization::minmax_per_query) {
      for (auto& s : cache.proxy) s = minmax_normalize(s);
    }
    out.push_back({static_cast<double>(n),
                   rank_and_evaluate(ds, cache, config.balance.lambda, config.eval, threads_of(config.kernel)).report});
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepPoint>& points, const std::string& x_name) {
  std::string out = x_name + ",metric,K,value\n";
  for (const auto& p : points) {
    const std::string label = x_name == "n_proxies" ? std::to_string(static_cast<long long>(p.x)) : format_value(p.x);
    out += report_to_csv_rows(p.report, label);
  }
  return out;
}

}  // namespace ipcir
