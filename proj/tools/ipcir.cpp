// ipcir: command-line front end for the fusion / retrieval / evaluation engine.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "ipcir/embed_store.hpp"
#include "ipcir/layout.hpp"
#include "ipcir/manifest.hpp"
#include "ipcir/oracle.hpp"
#include "ipcir/pipeline.hpp"
#include "ipcir/run_config.hpp"
#include "ipcir/synth.hpp"

namespace fs = std::filesystem;
using namespace ipcir;

namespace {

/// Raw flag values; empty/unset means "take the config file or default".
struct RunFlags {
  std::string config;
  std::string manifest;
  std::optional<double> lambda;
  std::string weights, agg, norm, max_mode, scale_basis;
  std::string recall_ks, map_ks, subset_ks;
  std::string out;
  int threads = 0;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Run-configuration JSON file");
  cmd->add_option("--manifest", f.manifest, "Dataset manifest JSON");
  cmd->add_option("--lambda", f.lambda, "Balance parameter in [0,1]");
  cmd->add_option("--weights", f.weights, "Fusion weights wq,ws,wp");
  cmd->add_option("--agg", f.agg, "Proxy aggregation: mean | per-proxy");
  cmd->add_option("--norm", f.norm, "Score normalization: minmax | none");
  cmd->add_option("--max-mode", f.max_mode, "Scale-ratio max: abs | signed");
  cmd->add_option("--scale-basis", f.scale_basis, "Fusion inputs: normalized | raw");
  cmd->add_option("--recall-ks", f.recall_ks, "Recall@K list, e.g. 1,5,10,50");
  cmd->add_option("--map-ks", f.map_ks, "mAP@K list, e.g. 5,10,25,50");
  cmd->add_option("--subset-ks", f.subset_ks, "Subset Recall@K list, e.g. 1,2,3");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--threads", f.threads, "Worker threads (default: IPCIR_THREADS or all cores)");
}

RunConfig resolve_run_config(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.manifest.empty()) c.manifest = f.manifest;
  if (f.lambda) c.pipeline.balance.lambda = *f.lambda;
  if (!f.weights.empty()) c.pipeline.fusion.weights = parse_weights(f.weights);
  if (!f.agg.empty()) c.pipeline.fusion.aggregation = parse_aggregation(f.agg);
  if (!f.norm.empty()) c.pipeline.balance.normalization = parse_normalization(f.norm);
  if (!f.max_mode.empty()) c.pipeline.fusion.max_mode = parse_max_mode(f.max_mode);
  if (!f.scale_basis.empty()) c.pipeline.fusion.basis = parse_scale_basis(f.scale_basis);
  if (!f.recall_ks.empty()) c.pipeline.eval.recall_ks = parse_k_list(f.recall_ks);
  if (!f.map_ks.empty()) c.pipeline.eval.map_ks = parse_k_list(f.map_ks);
  if (!f.subset_ks.empty()) c.pipeline.eval.subset_ks = parse_k_list(f.subset_ks);
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.threads > 0 || c.threads == 0) c.threads = resolve_thread_count(f.threads);
  c.pipeline.kernel.threads = c.threads;
  c.validate();
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::config, "cli", "cannot write '" + path.string() + "'");
  os << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_summary(const EvalReport& r) {
  auto line = [](const char* name, const std::map<Index, double>& values) {
    if (values.empty()) return;
    std::printf("%-14s", name);
    for (const auto& [k, v] : values) std::printf("  @%-3lld %6.2f", static_cast<long long>(k), 100.0 * v);
    std::printf("\n");
  };
  std::printf("queries: %zu\n", r.num_queries);
  line("Recall", r.recall);
  line("mAP", r.map);
  line("Recall_Subset", r.subset_recall);
}

std::string rankings_tsv(const ResolvedDataset& ds, const std::vector<RankedList>& rankings) {
  std::string out = "query_id\trank\tgallery_id\tscore\n";
  for (const auto& list : rankings) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      const auto& e = list.entries[r];
      out += list.query_id + "\t" + std::to_string(r + 1) + "\t" +
             ds.gallery->ids()[static_cast<std::size_t>(e.index)] + "\t" + fmt(e.score) + "\n";
    }
  }
  return out;
}

int cmd_ingest(const std::string& manifest, const std::string& convert, const std::string& role,
               const std::string& output, const std::string& out_dir) {
  if (!convert.empty()) {
    // Text embeddings: one row per line, "id<TAB or space>v1 v2 ...".
    if (role.empty() || output.empty()) throw Error(ErrorKind::config, "cli", "--convert needs --role and --output");
    std::ifstream is(convert);
    if (!is) throw Error(ErrorKind::config, "cli", "cannot open '" + convert + "'");
    std::vector<std::string> ids;
    std::vector<std::vector<float>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string id;
      ls >> id;
      std::vector<float> row;
      std::string tok;
      while (ls >> tok) {
        try {
          row.push_back(std::stof(tok));
        } catch (const std::exception&) {
          throw Error(ErrorKind::format, "embed_store", convert + ":" + std::to_string(line_no) + ": bad value '" + tok + "'");
        }
      }
      if (!rows.empty() && row.size() != rows.front().size()) {
        throw Error(ErrorKind::shape, "embed_store", convert + ":" + std::to_string(line_no) + ": row width differs");
      }
      ids.push_back(id);
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorKind::format, "embed_store", convert + ": no rows");
    RowMatrixXf m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < rows[i].size(); ++c) m(static_cast<Index>(i), static_cast<Index>(c)) = rows[i][c];
    const EmbeddingSet set(role_from_string(role), std::move(ids), std::move(m));
    write_embedding_set(output, set);
    std::printf("wrote %s: %lld x %lld (%s)\n", output.c_str(), static_cast<long long>(set.count()),
                static_cast<long long>(set.dim()), std::string(to_string(set.role())).c_str());
    return 0;
  }

  if (manifest.empty()) throw Error(ErrorKind::config, "cli", "ingest needs --manifest or --convert");
  const auto ds = resolve_manifest(load_manifest(manifest));
  nlohmann::ordered_json summary;
  summary["name"] = ds.manifest.name;
  summary["metric_protocol"] = std::string(to_string(ds.manifest.metric_protocol));
  summary["dim"] = ds.dim();
  summary["queries"] = ds.queries.size();
  nlohmann::ordered_json sets;
  auto describe = [&](const std::shared_ptr<const EmbeddingSet>& s) {
    if (!s) return;
    sets[std::string(to_string(s->role()))] = {{"count", s->count()}, {"zero_vectors", s->zero_count()}};
  };
  for (const auto& s : {ds.gallery, ds.query_image, ds.proxy_image, ds.target_caption, ds.origin_caption, ds.baseline_text}) {
    describe(s);
  }
  summary["sets"] = sets;
  summary["baseline_scores"] = ds.baseline_scores.has_value();
  const std::string text = summary.dump(2) + "\n";
  std::cout << text;
  if (!out_dir.empty()) write_text(fs::path(out_dir) / "ingest.json", text);
  return 0;
}

int cmd_validate_layouts(const std::string& dir, const std::string& out) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::config, "cli", "'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string report;
  std::size_t findings = 0;
  for (const auto& f : files) {
    std::ifstream is(f);
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string name = f.filename().string();
    try {
      (void)layout::parse_layout(ss.str());
    } catch (const layout::LayoutParseError& e) {
      report += name + "\t-\tparse_error@" + std::to_string(e.byte_offset()) + "\n";
      ++findings;
    } catch (const layout::LayoutValidationError& e) {
      for (const auto& v : e.violations()) {
        report += name + "\t" + (v.instance < 0 ? std::string("-") : std::to_string(v.instance)) + "\t" + v.rule + "\n";
        ++findings;
      }
    }
  }
  if (out.empty()) {
    std::cout << report;
  } else {
    write_text(out, report);
  }
  std::fprintf(stderr, "validate-layouts: %zu file(s), %zu finding(s)\n", files.size(), findings);
  return findings == 0 ? 0 : 3;
}

int cmd_retrieve(const RunConfig& c) {
  const auto ds = resolve_manifest(load_manifest(c.manifest));
  auto cache = compute_similarities(ds, c.pipeline.fusion, c.pipeline.balance.normalization, c.pipeline.kernel);
  if (cache.degenerate_proxies) {
    std::fprintf(stderr, "warning: fusion: %zu robust proxies built from an all-zero proxy feature\n",
                 cache.degenerate_proxies);
  }
  auto result = rank_and_evaluate(ds, cache, c.pipeline.balance.lambda, c.pipeline.eval, c.threads);
  result.report.config = to_json(c);
  write_text(c.out_dir / "rankings.tsv", rankings_tsv(ds, result.rankings));
  write_text(c.out_dir / "report.json", report_to_json(result.report).dump(2) + "\n");
  write_text(c.out_dir / "report.csv", "config,metric,K,value\n" + report_to_csv_rows(result.report, "retrieve"));
  print_summary(result.report);
  return 0;
}

int cmd_sweep_lambda(const RunConfig& c, const std::string& grid_text) {
  std::vector<double> grid;
  if (grid_text.empty()) {
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  } else {
    grid = parse_double_list(grid_text);
  }
  const auto ds = resolve_manifest(load_manifest(c.manifest));
  const auto points = sweep_lambda(ds, c.pipeline, grid);
  write_text(c.out_dir / "sweep_lambda.csv", sweep_to_csv(points, "lambda"));
  nlohmann::ordered_json doc;
  doc["config"] = to_json(c);
  doc["grid"] = grid;
  std::printf("%-8s %10s %10s\n", "lambda", "R@1", "mAP@10");
  for (const auto& p : points) {
    auto pick = [](const std::map<Index, double>& m, Index k) { return m.count(k) ? 100.0 * m.at(k) : -1.0; };
    std::printf("%-8.3f %10.2f %10.2f\n", p.x, pick(p.report.recall, 1), pick(p.report.map, 10));
  }
  write_text(c.out_dir / "sweep_lambda.json", doc.dump(2) + "\n");
  return 0;
}

int cmd_sweep_proxies(const RunConfig& c, std::size_t max_proxies) {
  const auto ds = resolve_manifest(load_manifest(c.manifest));
  const auto points = sweep_proxies(ds, c.pipeline, max_proxies);
  write_text(c.out_dir / "sweep_proxies.csv", sweep_to_csv(points, "n_proxies"));
  for (const auto& p : points) {
    auto pick = [](const std::map<Index, double>& m, Index k) { return m.count(k) ? 100.0 * m.at(k) : -1.0; };
    std::printf("n=%-3d R@1 %6.2f  mAP@10 %6.2f\n", static_cast<int>(p.x), pick(p.report.recall, 1), pick(p.report.map, 10));
  }
  return 0;
}

/// Scores a rankings TSV (query_id, rank, gallery_id, score) against the
/// manifest ground truth; optionally also runs the brute-force oracle.
int cmd_evaluate(const RunConfig& c, const std::string& rankings_path, bool oracle) {
  const auto ds = resolve_manifest(load_manifest(c.manifest));
  EvalReport report;
  if (!rankings_path.empty()) {
    std::ifstream is(rankings_path);
    if (!is) throw Error(ErrorKind::config, "cli", "cannot open rankings '" + rankings_path + "'");
    std::map<std::string, std::vector<std::pair<long, RankedEntry>>> by_query;
    std::string line;
    std::getline(is, line);  // header
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string qid, gid;
      long rank = 0;
      double score = 0;
      if (!(ls >> qid >> rank >> gid >> score)) {
        throw Error(ErrorKind::format, "metrics", rankings_path + ":" + std::to_string(line_no) + ": malformed row");
      }
      by_query[qid].push_back({rank, {ds.gallery->index_of(gid), score}});
    }
    std::vector<QueryMetrics> per_query;
    for (std::size_t q = 0; q < ds.queries.size(); ++q) {
      const auto& id = ds.manifest.queries[q].query_id;
      RankedList list{id, {}};
      auto it = by_query.find(id);
      if (it != by_query.end()) {
        auto rows = it->second;
        std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& r : rows) list.entries.push_back(r.second);
      }
      // Subset recall needs scores for every subset member; rebuild them from
      // the ranking when it covers the whole subset.
      const auto& rq = ds.queries[q];
      std::optional<SimilarityVector> scores;
      if (rq.subset) {
        SimilarityVector s{id, Eigen::VectorXd::Constant(ds.gallery->count(), -std::numeric_limits<double>::infinity()),
                           SimilarityKind::final};
        for (const auto& e : list.entries) s.scores[e.index] = e.score;
        const bool covered = std::all_of(rq.subset->begin(), rq.subset->end(),
                                         [&](Index g) { return std::isfinite(s.scores[g]); });
        if (covered) scores = std::move(s);
      }
      std::optional<std::span<const Index>> subset;
      if (scores) subset = std::span<const Index>(*rq.subset);
      per_query.push_back(evaluate_query(list, rq.ground_truth, c.pipeline.eval, scores ? &*scores : nullptr, subset));
    }
    report = summarize(std::move(per_query), c.pipeline.eval);
    report.config = to_json(c);
    report.config["rankings"] = rankings_path;
    write_text(c.out_dir / "evaluation.json", report_to_json(report).dump(2) + "\n");
    print_summary(report);
  }
  if (oracle) {
    oracle::Options o;
    o.weights = c.pipeline.fusion.weights;
    o.aggregation = c.pipeline.fusion.aggregation;
    o.max_mode = c.pipeline.fusion.max_mode;
    o.basis = c.pipeline.fusion.basis;
    o.minmax = c.pipeline.balance.normalization == ScoreNormalization::minmax_per_query;
    o.eval = c.pipeline.eval;
    auto r = oracle::oracle_evaluate(ds, c.pipeline.balance.lambda, o);
    r.config = to_json(c);
    write_text(c.out_dir / "oracle_report.json", report_to_json(r, false).dump(2) + "\n");
    std::printf("oracle:\n");
    print_summary(r);
  }
  if (rankings_path.empty() && !oracle) throw Error(ErrorKind::config, "cli", "evaluate needs --rankings and/or --oracle");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ipcir: proxy-fused composed image retrieval over precomputed embeddings"};
  app.require_subcommand(1);

  std::string manifest, convert, role, output, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Validate a manifest, or convert text embeddings to IPCE");
  ingest->add_option("--manifest", manifest, "Dataset manifest to resolve");
  ingest->add_option("--convert", convert, "Text embedding file (id v1 v2 ... per line)");
  ingest->add_option("--role", role, "Role of the converted set");
  ingest->add_option("--output", output, "IPCE file to write");
  ingest->add_option("--out", ingest_out, "Directory for ingest.json");

  std::string layout_dir, layout_out;
  auto* vl = app.add_subcommand("validate-layouts", "Validate a directory of layout JSON files");
  vl->add_option("dir", layout_dir, "Directory of *.json layouts")->required();
  vl->add_option("--out", layout_out, "Write the violation report here instead of stdout");

  synth::SynthSpec spec;
  std::string synth_out;
  auto* gen = app.add_subcommand("gen-synth", "Generate a planted synthetic benchmark");
  gen->add_option("--out", synth_out, "Output directory")->required();
  gen->add_option("--seed", spec.seed, "RNG seed");
  gen->add_option("--dim", spec.dim, "Embedding dimension");
  gen->add_option("--gallery", spec.gallery_size, "Gallery size");
  gen->add_option("--queries", spec.num_queries, "Number of queries");
  gen->add_option("--edit", spec.edit_strength, "Edit strength in [0,1]");
  gen->add_option("--noise", spec.proxy_noise, "Proxy noise scale");
  gen->add_option("--proxies", spec.proxies_per_query, "Proxies per query");
  gen->add_option("--caption-noise", spec.caption_noise, "Caption noise scale");
  gen->add_option("--captions", spec.captions_per_query, "Captions per query");
  gen->add_option("--hard-negatives", spec.hard_negative_fraction, "Hard-negative fraction of distractors");
  gen->add_option("--subset-size", spec.subset_size, "Candidate subset size per query (0 = none)");

  RunFlags retrieve_flags, lambda_flags, proxy_flags, eval_flags;
  auto* retrieve = app.add_subcommand("retrieve", "Fuse, score, balance, rank and evaluate");
  add_run_flags(retrieve, retrieve_flags);

  std::string grid;
  auto* sl = app.add_subcommand("sweep-lambda", "Evaluate a grid of lambda values");
  add_run_flags(sl, lambda_flags);
  sl->add_option("--grid", grid, "Comma-separated ascending lambdas (default 0,0.1,...,1)");

  std::size_t max_proxies = 5;
  auto* sp = app.add_subcommand("sweep-proxies", "Evaluate proxy-count prefixes 1..N");
  add_run_flags(sp, proxy_flags);
  sp->add_option("--max-proxies", max_proxies, "Largest proxy count");

  std::string rankings;
  bool run_oracle = false;
  auto* ev = app.add_subcommand("evaluate", "Score a rankings file and/or run the brute-force oracle");
  add_run_flags(ev, eval_flags);
  ev->add_option("--rankings", rankings, "Rankings TSV (query_id rank gallery_id score)");
  ev->add_flag("--oracle", run_oracle, "Also recompute the whole pipeline with the reference oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(manifest, convert, role, output, ingest_out);
    if (*vl) return cmd_validate_layouts(layout_dir, layout_out);
    if (*gen) {
      const auto ds = synth::generate(spec);
      synth::write_dataset(ds, synth_out);
      std::printf("wrote %s (%lld queries, gallery %lld, dim %lld)\n", (fs::path(synth_out) / "manifest.json").c_str(),
                  static_cast<long long>(spec.num_queries), static_cast<long long>(spec.gallery_size),
                  static_cast<long long>(spec.dim));
      return 0;
    }
    if (*retrieve) return cmd_retrieve(resolve_run_config(retrieve_flags));
    if (*sl) return cmd_sweep_lambda(resolve_run_config(lambda_flags), grid);
    if (*sp) return cmd_sweep_proxies(resolve_run_config(proxy_flags), max_proxies);
    if (*ev) return cmd_evaluate(resolve_run_config(eval_flags), rankings, run_oracle);
  } catch (const Error& e) {
    std::fprintf(stderr, "ipcir: %s: %s: %s\n", e.module().c_str(), std::string(to_string(e.kind())).c_str(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ipcir: %s\n", e.what());
    return 3;
  }
  return 0;
}
