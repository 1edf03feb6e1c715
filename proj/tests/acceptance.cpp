// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ipcir/fusion.hpp"
#include "ipcir/layout.hpp"
#include "ipcir/metrics.hpp"
#include "ipcir/oracle.hpp"
#include "ipcir/pipeline.hpp"
#include "ipcir/scores_file.hpp"
#include "ipcir/synth.hpp"
#include "layout_corpus.hpp"
#include "test_support.hpp"

using namespace ipcir;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s  %d. %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. lambda = 1 reproduces the baseline ranking.

Outcome plug_and_play_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2025);
  std::size_t compared = 0, mismatched = 0;
  for (int inst = 0; inst < 100; ++inst) {
    synth::SynthSpec spec;
    spec.seed = 5000 + static_cast<std::uint64_t>(inst);
    spec.dim = 16 + static_cast<Index>(rng() % 113);
    spec.num_queries = 5 + static_cast<Index>(rng() % 36);
    spec.gallery_size = 100 + static_cast<Index>(rng() % 1901);
    spec.edit_strength = std::uniform_real_distribution<double>(0, 1)(rng);
    spec.proxy_noise = std::uniform_real_distribution<double>(0, 1.5)(rng);
    spec.proxies_per_query = 1 + static_cast<Index>(rng() % 5);
    const auto dir = test::scratch_dir("accept1_" + std::to_string(inst));
    auto gen = synth::generate(spec);

    // Odd instances carry an external baseline score file, quantized so that
    // ties exercise the tie-break.
    std::optional<ScoreMatrix> external;
    if (inst % 2) {
      std::normal_distribution<float> n(0, 1);
      ScoreMatrix sm{RowMatrixXf(spec.num_queries, spec.gallery_size)};
      for (Index i = 0; i < sm.scores.size(); ++i) sm.scores.data()[i] = std::round(n(rng) * 200.0f) / 200.0f;
      write_score_matrix(dir / "baseline.ipcs", sm);
      gen.manifest.baseline_scores_ref = "baseline.ipcs";
      external = sm;
    }
    synth::write_dataset(gen, dir);
    const auto ds = resolve_manifest(load_manifest(dir / "manifest.json"));

    PipelineConfig cfg;
    cfg.balance.lambda = 1.0;
    cfg.fusion.weights = {std::uniform_real_distribution<double>(0, 2)(rng), 1.0, 0.5};
    const auto fused = run_retrieval(ds, cfg);

    for (std::size_t q = 0; q < ds.queries.size(); ++q) {
      SimilarityVector text;
      if (external) {
        text = {"", external->scores.row(static_cast<Index>(q)).transpose().cast<double>()};
      } else {
        text = text_similarities(ds, cfg.fusion, cfg.kernel)[q];
      }
      const auto baseline = top_k(text, cfg.eval.max_k());
      ++compared;
      if (baseline.entries.size() != fused.rankings[q].entries.size()) {
        ++mismatched;
        continue;
      }
      for (std::size_t r = 0; r < baseline.entries.size(); ++r) {
        if (baseline.entries[r].index != fused.rankings[q].entries[r].index) {
          ++mismatched;
          break;
        }
      }
    }
    fs::remove_all(dir);
  }
  const double t = seconds_since(t0);
  return {mismatched == 0 && t < 10.0,
          fmt("%zu rankings over 100 instances, %zu mismatched, %.2f s (limit 10 s)", compared, mismatched, t)};
}

// ---------------------------------------------------------------------------
// 2. Robust proxy against a direct transcription of the fusion formula.

Outcome fusion_transcription() {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0, 1);
  double worst = 0;
  int zero_fs = 0, zero_fq = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index dim = 2 + static_cast<Index>(rng() % 1023);
    FusionInputs in{Embedding(dim), Embedding(dim), Embedding(dim), Embedding(dim)};
    const double scale = std::exp(3 * n(rng));
    for (Embedding* v : {&in.proxy, &in.query, &in.target_caption, &in.origin_caption})
      for (Index i = 0; i < dim; ++i) (*v)[i] = static_cast<float>(scale * n(rng));
    if (trial % 7 == 0) {
      in.origin_caption = in.target_caption;
      ++zero_fs;
    }
    if (trial % 11 == 0) {
      in.query.setZero();
      ++zero_fq;
    }

    // f_RP = f_p + max(f_p)/max(f_q) f_q + max(f_p)/max(f_s) f_s, max read as
    // the largest absolute component, ratio 0 for a vanishing denominator.
    std::vector<double> p(dim), q(dim), s(dim);
    double mp = 0, mq = 0, ms = 0;
    for (Index i = 0; i < dim; ++i) {
      p[i] = in.proxy[i];
      q[i] = in.query[i];
      s[i] = static_cast<double>(in.target_caption[i]) - in.origin_caption[i];
      mp = std::max(mp, std::fabs(p[i]));
      mq = std::max(mq, std::fabs(q[i]));
      ms = std::max(ms, std::fabs(s[i]));
    }
    const double rq = mq < 1e-12 ? 0 : mp / mq;
    const double rs = ms < 1e-12 ? 0 : mp / ms;
    double err2 = 0, ref2 = 0;
    const auto got = robust_proxy(in).feature;
    for (Index i = 0; i < dim; ++i) {
      const double ref = p[i] + rq * q[i] + rs * s[i];
      err2 += (got[i] - ref) * (got[i] - ref);
      ref2 += ref * ref;
    }
    worst = std::max(worst, std::sqrt(err2 / ref2));
  }
  return {worst <= 1e-6, fmt("1000 inputs (%d zero f_s, %d zero f_q), worst relative error %.3g (limit 1e-6)",
                             zero_fs, zero_fq, worst)};
}

// ---------------------------------------------------------------------------
// 3. The 0.999 / 0.001 extreme case and the lambda crossover.

Outcome extreme_case_crossover() {
  const double t_a = 0.999, p_a = 0.001;  // A: strong text, weak proxy
  const double t_b = 0.5, p_b = 0.5;      // B: balanced
  const double sb_a = t_a * p_a, sb_b = t_b * p_b;
  const double closed = (sb_a - sb_b) / (t_b - t_a + sb_a - sb_b);

  Eigen::VectorXd text(2), proxy(2);
  text << t_a, t_b;
  proxy << p_a, p_b;
  const auto sb = balance(text, proxy, 0.0);
  const bool balanced_term = sb[1] > sb[0] && std::fabs(sb[0] - 0.000999) < 1e-15 && sb[1] == 0.25;

  // Engine sweep over a two-item gallery, normalization off, ground truth B.
  ResolvedDataset ds;
  ds.manifest.queries.push_back({});
  ds.manifest.queries[0].query_id = "extreme";
  ds.queries.push_back({});
  ds.queries[0].ground_truth = {1};
  SimilarityCache cache;
  cache.normalization = ScoreNormalization::none;
  cache.text = {{"extreme", text, SimilarityKind::text}};
  cache.proxy = {{"extreme", proxy, SimilarityKind::proxy}};
  const EvalConfig eval{{1}, {1}, {}};
  auto b_wins = [&](double lambda) { return rank_and_evaluate(ds, cache, lambda, eval).report.recall.at(1) == 1.0; };

  const bool lambda0 = b_wins(0.0);
  const bool lambda_half = !b_wins(0.5);
  bool sweep_ok = true;
  for (int i = 0; i <= 100; ++i) {
    const double lambda = i / 100.0;
    sweep_ok = sweep_ok && (b_wins(lambda) == (lambda < closed));
  }
  sweep_ok = sweep_ok && b_wins(closed - 1e-9) && !b_wins(closed + 1e-9);
  const double engine = balance_crossover(t_a, p_a, t_b, p_b);
  const bool matched = std::fabs(engine - closed) <= 1e-9;

  return {balanced_term && lambda0 && lambda_half && sweep_ok && matched,
          fmt("S_b %.6f vs %.2f, lambda=0 winner %s, lambda*=%.9f closed form, %.9f engine (|diff| %.2g, limit "
              "1e-9), sweep flips at lambda* %s",
              sb[0], sb[1], lambda0 ? "B" : "A", closed, engine, std::fabs(engine - closed),
              sweep_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 4. Metrics against the brute-force oracle.

Outcome metrics_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4242);
  const EvalConfig eval;
  double worst = 0;
  std::size_t queries = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const Index gallery = 6 + static_cast<Index>(rng() % 45);
    const int nq = 1 + static_cast<int>(rng() % 20);
    const int levels = 2 + static_cast<int>(rng() % 60);
    std::vector<QueryMetrics> per_query;
    std::map<Index, double> o_recall, o_map, o_subset;
    for (int q = 0; q < nq; ++q) {
      Eigen::VectorXd s(gallery);
      for (Index g = 0; g < gallery; ++g) s[g] = static_cast<double>(rng() % levels) / levels;
      std::vector<Index> perm(static_cast<std::size_t>(gallery));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const std::size_t n_gt = 1 + rng() % 5;
      const std::vector<Index> gt(perm.begin(), perm.begin() + static_cast<long>(n_gt));
      std::vector<Index> subset(perm.begin(), perm.begin() + 6);
      std::sort(subset.begin(), subset.end());

      const SimilarityVector f{"q", s, SimilarityKind::final};
      const auto ranked = top_k(f, eval.max_k());
      per_query.push_back(evaluate_query(ranked, gt, eval, &f, std::span<const Index>(subset)));

      const oracle::Scores sc(s.data(), s.data() + s.size());
      for (Index k : eval.recall_ks) o_recall[k] += oracle::recall_at_k(sc, gt, k) / nq;
      for (Index k : eval.map_ks) o_map[k] += oracle::map_at_k(sc, gt, k) / nq;
      for (Index k : eval.subset_ks) o_subset[k] += oracle::subset_recall_at_k(sc, subset, gt, k) / nq;
      ++queries;
    }
    const auto r = summarize(std::move(per_query), eval);
    for (const auto& [k, v] : o_recall) worst = std::max(worst, std::fabs(v - r.recall.at(k)));
    for (const auto& [k, v] : o_map) worst = std::max(worst, std::fabs(v - r.map.at(k)));
    for (const auto& [k, v] : o_subset) worst = std::max(worst, std::fabs(v - r.subset_recall.at(k)));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && t < 30.0,
          fmt("500 instances, %zu queries, worst |engine - oracle| %.3g (limit 1e-12), %.2f s (limit 30 s)", queries,
              worst, t)};
}

// ---------------------------------------------------------------------------
// 5 and 6. Planted benchmark.

synth::SynthSpec planted(std::uint64_t seed) {
  synth::SynthSpec s;
  s.dim = 64;
  s.gallery_size = 5000;
  s.num_queries = 200;
  s.edit_strength = 0.7;
  s.proxy_noise = 0.4;
  s.proxies_per_query = 5;
  s.hard_negative_fraction = 0.3;
  s.seed = seed;
  return s;
}

std::vector<double> lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

struct SweepMeans {
  std::vector<double> recall1, map10;
};

SweepMeans mean_lambda_sweep(std::uint64_t first_seed) {
  const auto grid = lambda_grid();
  SweepMeans m{std::vector<double>(grid.size(), 0.0), std::vector<double>(grid.size(), 0.0)};
  for (std::uint64_t s = first_seed; s < first_seed + 10; ++s) {
    const auto ds = synth::generate(planted(s)).resolve();
    const auto points = sweep_lambda(ds, PipelineConfig{}, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      m.recall1[i] += points[i].report.recall.at(1) / 10.0;
      m.map10[i] += points[i].report.map.at(10) / 10.0;
    }
  }
  return m;
}

// Held-out choice: lambda is tuned on seeds 1000..1009, judged on seeds 0..9.
double tuned_lambda = 0.5;

// Margins (fused minus text-only, seed-averaged) recorded at first measurement
// with the held-out lambda (0.0).
constexpr double kFrozenRecall1Margin = 0.6015;
constexpr double kFrozenMap10Margin = 0.5043;
constexpr double kMarginTolerance = 0.02;

Outcome planted_improvement() {
  const auto t0 = Clock::now();
  const auto grid = lambda_grid();
  const auto tune = mean_lambda_sweep(1000);
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (tune.recall1[i] + tune.map10[i] > tune.recall1[best] + tune.map10[best]) best = i;
  }
  tuned_lambda = grid[best];

  const auto eval = mean_lambda_sweep(0);
  const std::size_t text_only = grid.size() - 1;
  const double d_r1 = eval.recall1[best] - eval.recall1[text_only];
  const double d_map = eval.map10[best] - eval.map10[text_only];
  const bool strictly_better = d_r1 > 0 && d_map > 0;
  const bool frozen = !std::isnan(kFrozenRecall1Margin) && !std::isnan(kFrozenMap10Margin);
  const bool within = frozen && std::fabs(d_r1 - kFrozenRecall1Margin) <= kMarginTolerance &&
                      std::fabs(d_map - kFrozenMap10Margin) <= kMarginTolerance;

  std::string sweep;
  for (std::size_t i = 0; i < grid.size(); ++i) sweep += fmt(" %.1f:%.4f/%.4f", grid[i], eval.recall1[i], eval.map10[i]);
  return {strictly_better && within,
          fmt("lambda=%.1f (tuned on held-out seeds); R@1 %.4f vs %.4f text-only (+%.4f, frozen %.4f), "
              "mAP@10 %.4f vs %.4f (+%.4f, frozen %.4f), tolerance %.2f, %.1f s; eval sweep R@1/mAP@10:%s",
              tuned_lambda, eval.recall1[best], eval.recall1[text_only], d_r1, kFrozenRecall1Margin,
              eval.map10[best], eval.map10[text_only], d_map, kFrozenMap10Margin, kMarginTolerance,
              seconds_since(t0), sweep.c_str())};
}

Outcome proxy_count_trend() {
  std::vector<double> map10(5, 0.0);
  PipelineConfig cfg;
  cfg.balance.lambda = tuned_lambda;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto ds = synth::generate(planted(s)).resolve();
    const auto points = sweep_proxies(ds, cfg, 5);
    for (std::size_t n = 0; n < 5; ++n) map10[n] += points[n].report.map.at(10) / 10.0;
  }
  bool non_decreasing = true;
  for (std::size_t n = 1; n < 5; ++n) non_decreasing = non_decreasing && map10[n] >= map10[n - 1];
  const double g12 = map10[1] - map10[0];
  const double g45 = map10[4] - map10[3];
  return {non_decreasing && g45 <= g12,
          fmt("lambda=%.1f, mAP@10 by proxy count 1..5: %.4f %.4f %.4f %.4f %.4f; gain(1->2) %.4f, gain(4->5) %.4f",
              tuned_lambda, map10[0], map10[1], map10[2], map10[3], map10[4], g12, g45)};
}

// ---------------------------------------------------------------------------
// 7. Exact top-50 at scale.

Outcome scoring_performance() {
  const Index nq = 1000, ng = 100000, dim = 1024, k = 50;
  std::mt19937_64 rng(7);
  RowMatrixXf queries = test::random_matrix(nq, dim, rng);
  RowMatrixXf gallery = test::random_matrix(ng, dim, rng);
  gallery.rowwise().normalize();

  std::vector<std::vector<RankedList>> results;
  std::string timings;
  double time_at_8 = 0;
  for (int threads : {8, 4, 1}) {
    const auto t0 = Clock::now();
    results.push_back(cosine_top_k(queries, gallery, k, {threads}));
    const double t = seconds_since(t0);
    if (threads == 8) time_at_8 = t;
    timings += fmt(" %d:%.2fs", threads, t);
  }
  bool identical = true;
  for (std::size_t r = 1; r < results.size(); ++r) {
    for (Index q = 0; q < nq; ++q) {
      const auto& a = results[0][static_cast<std::size_t>(q)].entries;
      const auto& b = results[r][static_cast<std::size_t>(q)].entries;
      identical = identical && a.size() == static_cast<std::size_t>(k) && a == b;
    }
  }
  return {identical && time_at_8 < 10.0,
          fmt("%lldx%lldx%lld top-%lld, backend %s, %u hardware threads available; wall time by thread count:%s "
              "(limit 10 s at 8); bit-identical across {1,4,8}: %s",
              static_cast<long long>(nq), static_cast<long long>(ng), static_cast<long long>(dim),
              static_cast<long long>(k), std::string(kernel_backend()).c_str(), std::thread::hardware_concurrency(),
              timings.c_str(), identical ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 8. Seeded-fault layout corpus.

Outcome layout_validation() {
  const auto corpus = test::make_layout_corpus(200, 40, 8080);
  std::size_t true_pos = 0, false_pos = 0, dup_checked = 0, dup_wrong = 0;
  std::size_t fault = 0;
  for (std::size_t k = 0; k < corpus.layouts.size(); ++k) {
    const auto found = layout::validate_layout(corpus.layouts[k]);
    if (corpus.faulty[k]) {
      const auto& expected = corpus.faults[fault++];
      if (found.size() == 1 && found[0] == expected.violation) {
        ++true_pos;
      } else {
        false_pos += found.size();
      }
      continue;
    }
    false_pos += found.size();
    const auto& l = corpus.layouts[k];
    const auto images = std::count_if(l.instances.begin(), l.instances.end(),
                                      [](const auto& i) { return i.modality == layout::Modality::image; });
    const auto d = layout::duplicate_image_instances(l);
    ++dup_checked;
    if (d.instances.size() != l.instances.size() + static_cast<std::size_t>(images)) ++dup_wrong;
  }
  const double precision = true_pos + false_pos ? static_cast<double>(true_pos) / (true_pos + false_pos) : 0.0;
  const double recall = static_cast<double>(true_pos) / 40.0;
  return {precision == 1.0 && recall == 1.0 && dup_wrong == 0,
          fmt("200 layouts, 40 seeded faults: precision %.3f, recall %.3f; duplication counts exact on %zu/%zu valid "
              "layouts",
              precision, recall, dup_checked - dup_wrong, dup_checked)};
}

}  // namespace

int main() {
  report(1, "lambda=1 reproduces baseline rankings", plug_and_play_identity);
  report(2, "robust proxy matches direct transcription", fusion_transcription);
  report(3, "extreme-case balance and lambda crossover", extreme_case_crossover);
  report(4, "metrics match brute-force oracle", metrics_oracle);
  report(5, "planted benchmark: fused beats text-only", planted_improvement);
  report(6, "mAP@10 non-decreasing in proxy count, diminishing gains", proxy_count_trend);
  report(7, "exact top-50 scoring at 1000x100k x1024", scoring_performance);
  report(8, "layout validation on seeded-fault corpus", layout_validation);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures;
}
