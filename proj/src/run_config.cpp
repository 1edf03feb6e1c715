#include "ipcir/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ipcir {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorKind::config, "cli", msg); }

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) bad("empty element in list '" + text + "'");
    parts.push_back(item.substr(b, e - b + 1));
  }
  if (parts.empty()) bad("empty list");
  return parts;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad("not a number: '" + s + "'");
  }
  if (used != s.size()) bad("not a number: '" + s + "'");
  return v;
}

std::vector<Index> k_list(const json& j, const char* key) {
  if (!j.is_array()) bad(std::string(key) + " must be an array of integers");
  std::vector<Index> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) bad(std::string(key) + " must contain integers");
    out.push_back(v.get<Index>());
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (manifest.empty()) bad("no manifest given (--manifest or config 'manifest')");
  if (!std::filesystem::exists(manifest)) bad("manifest '" + manifest.string() + "' does not exist");
  if (threads < 0) bad("threads must be positive or auto");
  pipeline.fusion.weights.validate();
  pipeline.balance.validate();
  pipeline.eval.validate();
}

std::vector<Index> parse_k_list(const std::string& text) {
  std::vector<Index> out;
  for (const auto& p : split(text)) {
    const double v = to_double(p);
    if (v != std::floor(v) || v < 1) bad("K values must be positive integers: '" + p + "'");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& p : split(text)) out.push_back(to_double(p));
  return out;
}

FusionWeights parse_weights(const std::string& text) {
  const auto v = parse_double_list(text);
  if (v.size() != 3) bad("--weights expects wq,ws,wp");
  FusionWeights w{v[0], v[1], v[2]};
  w.validate();
  return w;
}

ProxyAggregation parse_aggregation(const std::string& text) {
  if (text == "mean") return ProxyAggregation::mean_embedding;
  if (text == "per-proxy") return ProxyAggregation::per_proxy;
  bad("aggregation must be mean or per-proxy, got '" + text + "'");
}

ScoreNormalization parse_normalization(const std::string& text) {
  if (text == "minmax") return ScoreNormalization::minmax_per_query;
  if (text == "none") return ScoreNormalization::none;
  bad("normalization must be minmax or none, got '" + text + "'");
}

MaxMode parse_max_mode(const std::string& text) {
  if (text == "abs") return MaxMode::abs;
  if (text == "signed") return MaxMode::signed_max;
  bad("max mode must be abs or signed, got '" + text + "'");
}

ScaleBasis parse_scale_basis(const std::string& text) {
  if (text == "normalized") return ScaleBasis::normalized;
  if (text == "raw") return ScaleBasis::raw;
  bad("scale basis must be normalized or raw, got '" + text + "'");
}

int resolve_thread_count(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("IPCIR_THREADS")) {
    const std::string s(env);
    if (s == "auto" || s.empty()) return 0;
    const double v = to_double(s);
    if (v < 1 || v != std::floor(v)) bad("IPCIR_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return 0;
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    bad("run configuration is not valid JSON at byte " + std::to_string(e.byte));
  }
  if (!doc.is_object()) bad("run configuration must be a JSON object");
  RunConfig c;
  try {
    if (doc.contains("manifest")) c.manifest = doc["manifest"].get<std::string>();
    if (doc.contains("out")) c.out_dir = doc["out"].get<std::string>();
    if (doc.contains("lambda")) c.pipeline.balance.lambda = doc["lambda"].get<double>();
    if (doc.contains("normalization")) {
      c.pipeline.balance.normalization = parse_normalization(doc["normalization"].get<std::string>());
    }
    if (doc.contains("fusion")) {
      const auto& f = doc["fusion"];
      if (f.contains("weights")) {
        const auto w = f["weights"].get<std::vector<double>>();
        if (w.size() != 3) bad("fusion.weights expects [wq, ws, wp]");
        c.pipeline.fusion.weights = {w[0], w[1], w[2]};
      }
      if (f.contains("aggregation")) c.pipeline.fusion.aggregation = parse_aggregation(f["aggregation"].get<std::string>());
      if (f.contains("max_mode")) c.pipeline.fusion.max_mode = parse_max_mode(f["max_mode"].get<std::string>());
      if (f.contains("scale_basis")) c.pipeline.fusion.basis = parse_scale_basis(f["scale_basis"].get<std::string>());
    }
    if (doc.contains("recall_ks")) c.pipeline.eval.recall_ks = k_list(doc["recall_ks"], "recall_ks");
    if (doc.contains("map_ks")) c.pipeline.eval.map_ks = k_list(doc["map_ks"], "map_ks");
    if (doc.contains("subset_ks")) c.pipeline.eval.subset_ks = k_list(doc["subset_ks"], "subset_ks");
    if (doc.contains("threads")) {
      const auto& t = doc["threads"];
      if (t.is_string() && t.get<std::string>() == "auto") {
        c.threads = 0;
      } else if (t.is_number_integer() && t.get<int>() >= 1) {
        c.threads = t.get<int>();
      } else {
        bad("threads must be a positive integer or \"auto\"");
      }
    }
  } catch (const json::exception& e) {
    bad(std::string("run configuration field has the wrong type: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) bad("cannot open run configuration '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const auto& p = c.pipeline;
  j["manifest"] = c.manifest.generic_string();
  j["lambda"] = p.balance.lambda;
  j["normalization"] = std::string(to_string(p.balance.normalization));
  j["fusion"] = {{"weights", {p.fusion.weights.query, p.fusion.weights.perturbation, p.fusion.weights.proxy}},
                 {"aggregation", std::string(to_string(p.fusion.aggregation))},
                 {"max_mode", std::string(to_string(p.fusion.max_mode))},
                 {"scale_basis", std::string(to_string(p.fusion.basis))}};
  j["recall_ks"] = p.eval.recall_ks;
  j["map_ks"] = p.eval.map_ks;
  j["subset_ks"] = p.eval.subset_ks;
  j["out"] = c.out_dir.generic_string();
  if (c.threads > 0) {
    j["threads"] = c.threads;
  } else {
    j["threads"] = "auto";
  }
  return j;
}

}  // namespace ipcir
