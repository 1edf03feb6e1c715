#include "ipcir/fusion.hpp"

#include <cmath>

namespace ipcir {

std::string_view to_string(MaxMode m) { return m == MaxMode::abs ? "abs" : "signed"; }

std::string_view to_string(ScaleBasis b) { return b == ScaleBasis::normalized ? "normalized" : "raw"; }

std::string_view to_string(ProxyAggregation a) {
  return a == ProxyAggregation::mean_embedding ? "mean" : "per-proxy";
}

void FusionWeights::validate() const {
  for (double w : {query, perturbation, proxy}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorKind::config, "fusion", "fusion weights must be finite and non-negative");
    }
  }
}

RobustProxy robust_proxy(const FusionInputs& in, const FusionWeights& w, MaxMode mode) {
  w.validate();
  const Index dim = in.proxy.size();
  if (in.query.size() != dim || in.target_caption.size() != dim || in.origin_caption.size() != dim) {
    throw Error(ErrorKind::shape, "fusion", "robust_proxy: inputs must share one dimension");
  }
  const Embedding perturbation = semantic_perturbation(in.target_caption, in.origin_caption);

  RobustProxy out;
  out.degenerate = static_cast<double>(max_abs(in.proxy)) < kZeroNorm;
  out.query_scale = scale_factor(in.proxy, in.query, mode);
  out.perturbation_scale = scale_factor(in.proxy, perturbation, mode);

  const float c_proxy = static_cast<float>(w.proxy);
  const float c_query = static_cast<float>(w.query) * out.query_scale;
  const float c_pert = static_cast<float>(w.perturbation) * out.perturbation_scale;
  out.feature = c_proxy * in.proxy + c_query * in.query + c_pert * perturbation;
  if (!out.feature.allFinite()) {
    throw Error(ErrorKind::data, "fusion", "robust proxy overflowed to a non-finite value");
  }
  return out;
}

std::vector<Embedding> aggregate_proxies(std::span<const Embedding> proxies, ProxyAggregation mode) {
  if (proxies.empty()) throw Error(ErrorKind::argument, "fusion", "aggregate_proxies: no proxies");
  if (mode == ProxyAggregation::per_proxy) return {proxies.begin(), proxies.end()};
  return {mean_embedding(proxies)};
}

}  // namespace ipcir
