#include "ipcir/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ipcir::synth {

namespace {

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Embedding gaussian(Index dim, double sigma) {
    Embedding v(dim);
    for (Index i = 0; i < dim; ++i) v[i] = static_cast<float>(sigma * normal_(rng_));
    return v;
  }

  Embedding unit(Index dim) {
    for (;;) {
      Embedding v = gaussian(dim, 1.0);
      const float n = v.norm();
      if (n > 1e-6f) return v / n;
    }
  }

  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

Embedding normalized(const Embedding& v) {
  const auto n = l2_normalize(v);
  return n.values;
}

std::string tag(const char* prefix, Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06lld", prefix, static_cast<long long>(i));
  return buf;
}

struct Builder {
  std::vector<std::string> ids;
  std::vector<Embedding> rows;

  void add(std::string id, Embedding v) {
    ids.push_back(std::move(id));
    rows.push_back(std::move(v));
  }

  std::shared_ptr<const EmbeddingSet> build(Role role, Index dim) {
    RowMatrixXf m(static_cast<Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = rows[i].transpose();
    return std::make_shared<const EmbeddingSet>(role, std::move(ids), std::move(m));
  }
};

}  // namespace

void SynthSpec::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::config, "synth", msg); };
  if (dim < 2) bad("dim must be >= 2");
  if (num_queries < 1) bad("num_queries must be >= 1");
  if (gallery_size < num_queries) bad("gallery_size must be >= num_queries");
  if (!(edit_strength >= 0.0 && edit_strength <= 1.0)) bad("edit_strength must lie in [0,1]");
  if (!(proxy_noise >= 0.0) || !std::isfinite(proxy_noise)) bad("proxy_noise must be >= 0");
  if (!(caption_noise >= 0.0) || !std::isfinite(caption_noise)) bad("caption_noise must be >= 0");
  if (!(hard_negative_fraction >= 0.0 && hard_negative_fraction <= 1.0)) {
    bad("hard_negative_fraction must lie in [0,1]");
  }
  if (!(hard_negative_jitter >= 0.0)) bad("hard_negative_jitter must be >= 0");
  if (proxies_per_query < 1) bad("proxies_per_query must be >= 1");
  if (captions_per_query < 1) bad("captions_per_query must be >= 1");
  if (subset_size < 0 || (subset_size > 0 && subset_size > gallery_size)) bad("subset_size out of range");
}

SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  Sampler rng(spec.seed);
  const Index dim = spec.dim;
  const auto nq = static_cast<std::size_t>(spec.num_queries);
  const auto ng = static_cast<std::size_t>(spec.gallery_size);
  const float edit = static_cast<float>(spec.edit_strength);

  std::vector<Embedding> query_dir(nq), edit_dir(nq), target(nq);
  for (std::size_t i = 0; i < nq; ++i) {
    query_dir[i] = rng.unit(dim);
    edit_dir[i] = rng.unit(dim);
    target[i] = normalized(query_dir[i] + edit * edit_dir[i]);
  }

  // Gallery slots: targets, hard negatives, uniform distractors, shuffled.
  const std::size_t distractor_slots = ng - nq;
  const auto hard = std::min(distractor_slots, static_cast<std::size_t>(std::llround(
                                                    spec.hard_negative_fraction * static_cast<double>(distractor_slots))));
  std::vector<std::size_t> slot(ng);
  std::iota(slot.begin(), slot.end(), 0);
  std::shuffle(slot.begin(), slot.end(), rng.engine());

  std::vector<Embedding> gallery(ng);
  std::vector<std::vector<std::size_t>> hard_of(nq);
  for (std::size_t i = 0; i < nq; ++i) gallery[slot[i]] = target[i];
  for (std::size_t h = 0; h < hard; ++h) {
    const std::size_t owner = h % nq;
    const Embedding& base = (h / nq) % 2 == 0 ? query_dir[owner] : edit_dir[owner];
    gallery[slot[nq + h]] = normalized(base + rng.gaussian(dim, spec.hard_negative_jitter));
    hard_of[owner].push_back(slot[nq + h]);
  }
  for (std::size_t d = nq + hard; d < ng; ++d) gallery[slot[d]] = rng.unit(dim);

  Builder gal, qry, prx, tcap, ocap, base;
  for (std::size_t g = 0; g < ng; ++g) gal.add(tag("g", static_cast<Index>(g)), gallery[g]);

  SynthDataset out;
  auto& m = out.manifest;
  m.name = "synthetic-seed" + std::to_string(spec.seed);
  m.metric_protocol = spec.subset_size > 0 ? MetricProtocol::subset_recall : MetricProtocol::single_target_recall;
  m.gallery_ref = "gallery.ipce";
  m.set_refs = {{Role::query_image, "query_image.ipce"},       {Role::proxy_image, "proxy_image.ipce"},
                {Role::target_caption, "target_caption.ipce"}, {Role::origin_caption, "origin_caption.ipce"},
                {Role::baseline_text, "baseline_text.ipce"}};

  for (std::size_t i = 0; i < nq; ++i) {
    QueryRecord r;
    r.query_id = tag("q", static_cast<Index>(i));
    r.query_image = r.query_id;
    qry.add(r.query_id, query_dir[i]);

    std::vector<Embedding> targets;
    for (Index c = 0; c < spec.captions_per_query; ++c) {
      const std::string cid = r.query_id + "_c" + std::to_string(c);
      Embedding fo = normalized(query_dir[i] + rng.gaussian(dim, spec.caption_noise));
      Embedding ft = normalized(fo + edit * edit_dir[i] + rng.gaussian(dim, spec.caption_noise));
      ocap.add(cid, fo);
      tcap.add(cid, ft);
      targets.push_back(ft);
      r.origin_captions.push_back(cid);
      r.target_captions.push_back(cid);
    }
    base.add(r.query_id, mean_embedding(targets));
    r.baseline_text = r.query_id;

    for (Index p = 0; p < spec.proxies_per_query; ++p) {
      const std::string pid = r.query_id + "_p" + std::to_string(p);
      prx.add(pid, normalized(target[i] + rng.gaussian(dim, spec.proxy_noise)));
      r.proxy_images.push_back(pid);
    }

    const std::size_t target_slot = slot[i];
    r.ground_truth = {gal.ids[target_slot]};
    if (spec.subset_size > 0) {
      std::vector<std::size_t> members{target_slot};
      for (std::size_t h : hard_of[i]) {
        if (members.size() >= static_cast<std::size_t>(spec.subset_size)) break;
        members.push_back(h);
      }
      while (members.size() < static_cast<std::size_t>(spec.subset_size)) {
        const std::size_t g = rng.below(ng);
        if (std::find(members.begin(), members.end(), g) == members.end()) members.push_back(g);
      }
      std::sort(members.begin(), members.end());
      std::vector<std::string> subset;
      for (std::size_t g : members) subset.push_back(gal.ids[g]);
      r.subset = std::move(subset);
    }
    m.queries.push_back(std::move(r));
  }

  out.sets[Role::gallery] = gal.build(Role::gallery, dim);
  out.sets[Role::query_image] = qry.build(Role::query_image, dim);
  out.sets[Role::proxy_image] = prx.build(Role::proxy_image, dim);
  out.sets[Role::target_caption] = tcap.build(Role::target_caption, dim);
  out.sets[Role::origin_caption] = ocap.build(Role::origin_caption, dim);
  out.sets[Role::baseline_text] = base.build(Role::baseline_text, dim);
  return out;
}

ResolvedDataset SynthDataset::resolve() const { return resolve_in_memory(manifest, sets); }

void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_embedding_set(dir / ds.manifest.gallery_ref, *ds.sets.at(Role::gallery));
  for (const auto& [role, rel] : ds.manifest.set_refs) write_embedding_set(dir / rel, *ds.sets.at(role));
  write_manifest(dir / "manifest.json", ds.manifest);
}

}  // namespace ipcir::synth
