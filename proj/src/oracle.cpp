#include "ipcir/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ipcir::oracle {

namespace {

using Vec = std::vector<double>;

Vec row_of(const EmbeddingSet& set, Index r) {
  Vec v(static_cast<std::size_t>(set.dim()));
  for (Index c = 0; c < set.dim(); ++c) v[static_cast<std::size_t>(c)] = set.raw()(r, c);
  return v;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

Vec unit(Vec v) {
  const double n = norm(v);
  if (n < 1e-12) return v;
  for (auto& x : v) x /= n;
  return v;
}

Vec prepare(const EmbeddingSet& set, Index r, ScaleBasis basis) {
  return basis == ScaleBasis::normalized ? unit(row_of(set, r)) : row_of(set, r);
}

Vec average(const std::vector<Vec>& vs, std::size_t dim) {
  Vec out(dim, 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < dim; ++i) out[i] += v[i];
  if (!vs.empty())
    for (auto& x : out) x /= static_cast<double>(vs.size());
  return out;
}

double biggest(const Vec& v, MaxMode mode) {
  double m = mode == MaxMode::abs ? 0.0 : -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, mode == MaxMode::abs ? std::fabs(x) : x);
  return m;
}

double ratio(const Vec& num, const Vec& den, MaxMode mode) {
  const double d = biggest(den, mode);
  if (std::fabs(d) < 1e-12) return 0.0;
  return biggest(num, mode) / d;
}

double cosine(const Vec& a, const Vec& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot(a, b) / (na * nb);
}

Scores score_all(const Vec& query, const EmbeddingSet& gallery) {
  Scores s(static_cast<std::size_t>(gallery.count()));
  for (Index g = 0; g < gallery.count(); ++g) s[static_cast<std::size_t>(g)] = cosine(query, row_of(gallery, g));
  return s;
}

Scores rescale(Scores s) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : s) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (auto& x : s) x = hi > lo ? (x - lo) / (hi - lo) : 0.5;
  return s;
}

bool contains(const Rows& rows, Index r) { return std::find(rows.begin(), rows.end(), r) != rows.end(); }

}  // namespace

Rows full_ranking(const Scores& scores, const Rows& exclude, Index limit) {
  // Selection sort: repeatedly pick the best remaining row.
  std::vector<bool> used(scores.size(), false);
  for (Index e : exclude) {
    if (e >= 0 && static_cast<std::size_t>(e) < used.size()) used[static_cast<std::size_t>(e)] = true;
  }
  Rows out;
  while (limit < 0 || static_cast<Index>(out.size()) < limit) {
    Index best = -1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (used[i]) continue;
      if (best < 0 || scores[i] > scores[static_cast<std::size_t>(best)]) best = static_cast<Index>(i);
    }
    if (best < 0) break;
    used[static_cast<std::size_t>(best)] = true;
    out.push_back(best);
  }
  return out;
}

double recall_at_k(const Scores& scores, const Rows& ground_truth, Index k, const Rows& exclude) {
  const Rows ranking = full_ranking(scores, exclude, k);
  for (Index r = 0; r < k && r < static_cast<Index>(ranking.size()); ++r) {
    if (contains(ground_truth, ranking[static_cast<std::size_t>(r)])) return 1.0;
  }
  return 0.0;
}

double map_at_k(const Scores& scores, const Rows& ground_truth, Index k, const Rows& exclude) {
  const Rows ranking = full_ranking(scores, exclude, k);
  Rows distinct;
  for (Index g : ground_truth) {
    if (!contains(distinct, g)) distinct.push_back(g);
  }
  double total = 0;
  for (Index r = 1; r <= k && r <= static_cast<Index>(ranking.size()); ++r) {
    if (!contains(distinct, ranking[static_cast<std::size_t>(r - 1)])) continue;
    Index relevant = 0;
    for (Index j = 0; j < r; ++j) relevant += contains(distinct, ranking[static_cast<std::size_t>(j)]) ? 1 : 0;
    total += static_cast<double>(relevant) / static_cast<double>(r);
  }
  return total / static_cast<double>(std::min<Index>(k, static_cast<Index>(distinct.size())));
}

double subset_recall_at_k(const Scores& scores, const Rows& subset, const Rows& ground_truth, Index k) {
  // Rank of a member = 1 + number of members that beat it.
  for (Index g : ground_truth) {
    if (!contains(subset, g)) continue;
    Index rank = 1;
    for (Index other : subset) {
      if (other == g) continue;
      const double so = scores[static_cast<std::size_t>(other)];
      const double sg = scores[static_cast<std::size_t>(g)];
      if (so > sg || (so == sg && other < g)) ++rank;
    }
    if (rank <= k) return 1.0;
  }
  return 0.0;
}

EvalReport oracle_evaluate(const ResolvedDataset& ds, double lambda, const Options& options) {
  if (ds.gallery->count() > kMaxGallery) {
    throw Error(ErrorKind::size, "synth",
                "oracle_evaluate supports galleries up to " + std::to_string(kMaxGallery) + " items");
  }
  const auto dim = static_cast<std::size_t>(ds.dim());
  const auto basis = options.basis;
  EvalReport report;
  report.num_queries = ds.queries.size();
  std::vector<std::map<Index, double>> recall, map, subset;

  for (std::size_t q = 0; q < ds.queries.size(); ++q) {
    const auto& rq = ds.queries[q];
    auto collect = [&](const std::shared_ptr<const EmbeddingSet>& set, const std::vector<Index>& rows) {
      std::vector<Vec> out;
      for (Index r : rows) out.push_back(prepare(*set, r, basis));
      return out;
    };

    // Text side.
    Scores text;
    if (ds.baseline_scores) {
      for (Index g = 0; g < ds.gallery->count(); ++g) {
        text.push_back(ds.baseline_scores->scores(static_cast<Index>(q), g));
      }
    } else if (rq.baseline_text) {
      text = score_all(prepare(*ds.baseline_text, *rq.baseline_text, basis), *ds.gallery);
    } else {
      text = score_all(average(collect(ds.target_caption, rq.target_captions), dim), *ds.gallery);
    }

    // Proxy side.
    const Vec fq = prepare(*ds.query_image, rq.query_image, basis);
    const Vec ft = average(collect(ds.target_caption, rq.target_captions), dim);
    const Vec fo = average(collect(ds.origin_caption, rq.origin_captions), dim);
    Vec fs(dim);
    for (std::size_t i = 0; i < dim; ++i) fs[i] = ft[i] - fo[i];

    std::vector<Vec> proxies = collect(ds.proxy_image, rq.proxy_images);
    if (proxies.empty()) {
      proxies.push_back(Vec(dim, 0.0));
    } else if (options.aggregation == ProxyAggregation::mean_embedding) {
      proxies = {average(proxies, dim)};
    }
    Scores proxy(static_cast<std::size_t>(ds.gallery->count()), 0.0);
    for (const auto& fp : proxies) {
      const double cq = options.weights.query * ratio(fp, fq, options.max_mode);
      const double cs = options.weights.perturbation * ratio(fp, fs, options.max_mode);
      Vec rp(dim);
      for (std::size_t i = 0; i < dim; ++i) rp[i] = options.weights.proxy * fp[i] + cq * fq[i] + cs * fs[i];
      const Scores s = score_all(rp, *ds.gallery);
      for (std::size_t g = 0; g < s.size(); ++g) proxy[g] += s[g];
    }
    for (auto& x : proxy) x /= static_cast<double>(proxies.size());

    if (options.minmax) {
      text = rescale(std::move(text));
      proxy = rescale(std::move(proxy));
    }
    Scores final_scores(text.size());
    for (std::size_t g = 0; g < text.size(); ++g) {
      final_scores[g] = lambda * text[g] + (1.0 - lambda) * (text[g] * proxy[g]);
    }

    std::map<Index, double> r_q, m_q, s_q;
    for (Index k : options.eval.recall_ks) r_q[k] = recall_at_k(final_scores, rq.ground_truth, k, rq.exclude);
    for (Index k : options.eval.map_ks) m_q[k] = map_at_k(final_scores, rq.ground_truth, k, rq.exclude);
    if (rq.subset) {
      for (Index k : options.eval.subset_ks) s_q[k] = subset_recall_at_k(final_scores, *rq.subset, rq.ground_truth, k);
    }
    recall.push_back(std::move(r_q));
    map.push_back(std::move(m_q));
    subset.push_back(std::move(s_q));
  }

  auto mean = [&](const std::vector<std::map<Index, double>>& per, Index k) {
    double s = 0;
    for (const auto& m : per) s += m.at(k);
    return s / static_cast<double>(per.size());
  };
  if (ds.queries.empty()) return report;
  for (Index k : options.eval.recall_ks) report.recall[k] = mean(recall, k);
  for (Index k : options.eval.map_ks) report.map[k] = mean(map, k);
  const bool all_subsets = std::all_of(ds.queries.begin(), ds.queries.end(),
                                       [](const ResolvedQuery& q) { return q.subset.has_value(); });
  if (all_subsets) {
    for (Index k : options.eval.subset_ks) report.subset_recall[k] = mean(subset, k);
  }
  return report;
}

}  // namespace ipcir::oracle
