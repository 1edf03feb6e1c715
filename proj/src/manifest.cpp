#include "ipcir/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace ipcir {

using nlohmann::json;

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, "embed_store", msg);
}

constexpr Role kSetRoles[] = {Role::query_image, Role::proxy_image, Role::target_caption,
                              Role::origin_caption, Role::baseline_text};

std::vector<std::string> string_list(const json& j, const char* key, const std::string& where,
                                     bool required) {
  if (!j.contains(key)) {
    if (required) fail(ErrorKind::format, where + ": missing field '" + key + "'");
    return {};
  }
  const auto& v = j.at(key);
  if (!v.is_array()) fail(ErrorKind::format, where + ": field '" + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) fail(ErrorKind::format, where + ": '" + key + "' holds a non-string");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string required_string(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    fail(ErrorKind::format, where + ": missing string field '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

std::filesystem::path resolve_path(const DatasetManifest& m, const std::filesystem::path& p) {
  return p.is_absolute() ? p : m.base_dir / p;
}

}  // namespace

std::string_view to_string(MetricProtocol p) {
  switch (p) {
    case MetricProtocol::multi_target_map: return "multi_target_map";
    case MetricProtocol::single_target_recall: return "single_target_recall";
    case MetricProtocol::subset_recall: return "subset_recall";
    case MetricProtocol::recall_only: return "recall_only";
  }
  return "recall_only";
}

MetricProtocol protocol_from_string(std::string_view name) {
  for (auto p : {MetricProtocol::multi_target_map, MetricProtocol::single_target_recall,
                 MetricProtocol::subset_recall, MetricProtocol::recall_only}) {
    if (to_string(p) == name) return p;
  }
  fail(ErrorKind::format, "unknown metric_protocol '" + std::string(name) + "'");
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::format, "manifest is not valid JSON at byte " + std::to_string(e.byte));
  }
  if (!doc.is_object()) fail(ErrorKind::format, "manifest root must be an object");

  DatasetManifest m;
  m.base_dir = base_dir;
  m.name = required_string(doc, "name", "manifest");
  m.metric_protocol = protocol_from_string(required_string(doc, "metric_protocol", "manifest"));
  m.gallery_ref = required_string(doc, "gallery", "manifest");
  if (doc.contains("sets")) {
    const auto& sets = doc.at("sets");
    if (!sets.is_object()) fail(ErrorKind::format, "manifest: 'sets' must be an object");
    for (const auto& [key, value] : sets.items()) {
      const Role role = role_from_string(key);
      if (role == Role::gallery) fail(ErrorKind::format, "manifest: gallery belongs in 'gallery'");
      if (!value.is_string()) fail(ErrorKind::format, "manifest: set path for " + key);
      m.set_refs[role] = value.get<std::string>();
    }
  }
  if (doc.contains("baseline_scores")) {
    m.baseline_scores_ref = required_string(doc, "baseline_scores", "manifest");
  }
  if (!doc.contains("queries") || !doc.at("queries").is_array()) {
    fail(ErrorKind::format, "manifest: missing array field 'queries'");
  }
  for (const auto& q : doc.at("queries")) {
    QueryRecord r;
    r.query_id = required_string(q, "query_id", "query");
    const std::string where = "query '" + r.query_id + "'";
    r.query_image = required_string(q, "query_image", where);
    r.proxy_images = string_list(q, "proxy_images", where, false);
    r.target_captions = string_list(q, "target_captions", where, false);
    r.origin_captions = string_list(q, "origin_captions", where, false);
    if (q.contains("baseline_text")) r.baseline_text = required_string(q, "baseline_text", where);
    r.ground_truth = string_list(q, "ground_truth", where, true);
    if (q.contains("subset")) r.subset = string_list(q, "subset", where, true);
    r.exclude = string_list(q, "exclude", where, false);
    m.queries.push_back(std::move(r));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::config, "cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

std::string serialize_manifest(const DatasetManifest& m) {
  json doc;
  doc["name"] = m.name;
  doc["metric_protocol"] = std::string(to_string(m.metric_protocol));
  doc["gallery"] = m.gallery_ref.generic_string();
  json sets = json::object();
  for (const auto& [role, path] : m.set_refs) sets[std::string(to_string(role))] = path.generic_string();
  doc["sets"] = sets;
  if (m.baseline_scores_ref) doc["baseline_scores"] = m.baseline_scores_ref->generic_string();
  json queries = json::array();
  for (const auto& r : m.queries) {
    json q;
    q["query_id"] = r.query_id;
    q["query_image"] = r.query_image;
    q["proxy_images"] = r.proxy_images;
    q["target_captions"] = r.target_captions;
    q["origin_captions"] = r.origin_captions;
    if (r.baseline_text) q["baseline_text"] = *r.baseline_text;
    q["ground_truth"] = r.ground_truth;
    if (r.subset) q["subset"] = *r.subset;
    if (!r.exclude.empty()) q["exclude"] = r.exclude;
    queries.push_back(std::move(q));
  }
  doc["queries"] = std::move(queries);
  return doc.dump(2) + "\n";
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorKind::config, "cannot open '" + path.string() + "' for writing");
  os << serialize_manifest(m);
}

ResolvedDataset resolve_in_memory(DatasetManifest manifest,
                                  std::map<Role, std::shared_ptr<const EmbeddingSet>> sets,
                                  std::optional<ScoreMatrix> baseline_scores) {
  ResolvedDataset ds;
  auto take = [&](Role role) -> std::shared_ptr<const EmbeddingSet> {
    auto it = sets.find(role);
    return it == sets.end() ? nullptr : it->second;
  };
  ds.gallery = take(Role::gallery);
  ds.query_image = take(Role::query_image);
  ds.proxy_image = take(Role::proxy_image);
  ds.target_caption = take(Role::target_caption);
  ds.origin_caption = take(Role::origin_caption);
  ds.baseline_text = take(Role::baseline_text);
  ds.baseline_scores = std::move(baseline_scores);

  if (!ds.gallery) fail(ErrorKind::resolution, "manifest has no gallery set");
  if (!ds.query_image) fail(ErrorKind::resolution, "manifest has no query_image set");
  const Index dim = ds.gallery->dim();
  for (const auto& [role, set] : sets) {
    if (!set) continue;
    if (set->role() != role) {
      fail(ErrorKind::role, "set bound as " + std::string(to_string(role)) + " has role " +
                                std::string(to_string(set->role())));
    }
    if (set->dim() != dim) {
      fail(ErrorKind::shape, std::string(to_string(role)) + " dim " + std::to_string(set->dim()) +
                                 " != gallery dim " + std::to_string(dim));
    }
  }
  if (ds.baseline_scores) {
    const auto& s = ds.baseline_scores->scores;
    if (s.rows() != static_cast<Index>(manifest.queries.size()) || s.cols() != ds.gallery->count()) {
      fail(ErrorKind::shape, "baseline score matrix is " + std::to_string(s.rows()) + "x" +
                                 std::to_string(s.cols()) + ", expected " +
                                 std::to_string(manifest.queries.size()) + "x" +
                                 std::to_string(ds.gallery->count()));
    }
  }

  std::unordered_set<std::string> seen_queries;
  for (const auto& r : manifest.queries) {
    const std::string where = "query '" + r.query_id + "'";
    if (!seen_queries.insert(r.query_id).second) fail(ErrorKind::data, "duplicate " + where);
    auto bind = [&](const std::shared_ptr<const EmbeddingSet>& set, Role role,
                    const std::string& id) -> Index {
      if (!set) {
        fail(ErrorKind::resolution,
             where + " references id '" + id + "' but no " + std::string(to_string(role)) + " set is bound");
      }
      auto i = set->find(id);
      if (!i) {
        fail(ErrorKind::resolution, where + ": dangling " + std::string(to_string(role)) + " id '" + id + "'");
      }
      return *i;
    };
    auto bind_all = [&](const std::shared_ptr<const EmbeddingSet>& set, Role role,
                        const std::vector<std::string>& ids) {
      std::vector<Index> out;
      out.reserve(ids.size());
      for (const auto& id : ids) out.push_back(bind(set, role, id));
      return out;
    };

    ResolvedQuery q;
    q.query_image = bind(ds.query_image, Role::query_image, r.query_image);
    q.proxy_images = bind_all(ds.proxy_image, Role::proxy_image, r.proxy_images);
    q.target_captions = bind_all(ds.target_caption, Role::target_caption, r.target_captions);
    q.origin_captions = bind_all(ds.origin_caption, Role::origin_caption, r.origin_captions);
    if (r.baseline_text) q.baseline_text = bind(ds.baseline_text, Role::baseline_text, *r.baseline_text);
    if (r.ground_truth.empty()) fail(ErrorKind::protocol, where + ": empty ground truth");
    q.ground_truth = bind_all(ds.gallery, Role::gallery, r.ground_truth);
    if (r.subset) {
      q.subset = bind_all(ds.gallery, Role::gallery, *r.subset);
      std::unordered_set<Index> members(q.subset->begin(), q.subset->end());
      for (std::size_t i = 0; i < q.ground_truth.size(); ++i) {
        if (!members.count(q.ground_truth[i])) {
          fail(ErrorKind::protocol,
               where + ": ground-truth id '" + r.ground_truth[i] + "' is not in its subset");
        }
      }
    }
    q.exclude = bind_all(ds.gallery, Role::gallery, r.exclude);
    ds.queries.push_back(std::move(q));
  }
  ds.manifest = std::move(manifest);
  return ds;
}

ResolvedDataset resolve_manifest(const DatasetManifest& manifest) {
  std::map<Role, std::shared_ptr<const EmbeddingSet>> sets;
  sets[Role::gallery] = std::make_shared<const EmbeddingSet>(
      load_embedding_set(resolve_path(manifest, manifest.gallery_ref), Role::gallery));
  for (Role role : kSetRoles) {
    auto it = manifest.set_refs.find(role);
    if (it == manifest.set_refs.end()) continue;
    sets[role] = std::make_shared<const EmbeddingSet>(
        load_embedding_set(resolve_path(manifest, it->second), role));
  }
  std::optional<ScoreMatrix> scores;
  if (manifest.baseline_scores_ref) {
    scores = load_score_matrix(resolve_path(manifest, *manifest.baseline_scores_ref));
  }
  return resolve_in_memory(manifest, std::move(sets), std::move(scores));
}

}  // namespace ipcir
