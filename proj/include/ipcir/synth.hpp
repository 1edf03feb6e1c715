#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>

#include "ipcir/manifest.hpp"

namespace ipcir::synth {

/// Planted composed-retrieval benchmark.
///
/// Per query: unit query direction q and edit direction e; the target is
/// normalize(q + edit_strength * e). Captions see q through Gaussian noise:
/// f_o = normalize(q + n), f_t = normalize(f_o + edit_strength * e + n').
/// Proxies are normalize(target + n''). Noise scales are per-component
/// standard deviations, so a noise vector's norm grows like scale * sqrt(dim).
///
/// The remaining gallery is uniform random unit vectors, except that a
/// `hard_negative_fraction` of it is built around specific queries:
/// alternately query-only (normalize(q + jitter)) and edit-only
/// (normalize(e + jitter)) items.
struct SynthSpec {
  Index dim = 64;
  Index gallery_size = 5000;
  Index num_queries = 200;
  double edit_strength = 0.7;
  double proxy_noise = 0.4;
  Index proxies_per_query = 5;
  std::uint64_t seed = 42;

  double caption_noise = 0.2;
  double hard_negative_fraction = 0.3;
  double hard_negative_jitter = 0.05;
  Index captions_per_query = 1;
  Index subset_size = 6;  // CIRR-style candidate subsets; 0 disables

  /// Throws a config error on out-of-range fields.
  void validate() const;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::map<Role, std::shared_ptr<const EmbeddingSet>> sets;

  /// Binds the in-memory sets without touching the filesystem.
  ResolvedDataset resolve() const;
};

/// Deterministic in `spec.seed`.
SynthDataset generate(const SynthSpec& spec);

/// Writes every set as an IPCE file plus manifest.json into `dir`.
void write_dataset(const SynthDataset& ds, const std::filesystem::path& dir);

}  // namespace ipcir::synth
