#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "ipcir/embed_store.hpp"

namespace ipcir {

/// How max() in the proxy scale ratios is read.
enum class MaxMode { abs, signed_max };

/// Whether fusion sees ingestion-normalized rows or the raw encoder output.
enum class ScaleBasis { normalized, raw };

enum class ProxyAggregation { mean_embedding, per_proxy };

std::string_view to_string(MaxMode m);
std::string_view to_string(ScaleBasis b);
std::string_view to_string(ProxyAggregation a);

/// Multipliers on the three robust-proxy terms. Defaults give the plain
/// unweighted sum.
struct FusionWeights {
  double query = 1.0;
  double perturbation = 1.0;
  double proxy = 1.0;

  /// Throws a config error unless all weights are finite and >= 0.
  void validate() const;
};

struct FusionConfig {
  FusionWeights weights;
  ProxyAggregation aggregation = ProxyAggregation::mean_embedding;
  MaxMode max_mode = MaxMode::abs;
  ScaleBasis basis = ScaleBasis::normalized;
};

/// f_t - f_o: the edit direction. May be exactly zero.
template <typename DerivedT, typename DerivedO>
Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, 1> semantic_perturbation(
    const Eigen::MatrixBase<DerivedT>& target, const Eigen::MatrixBase<DerivedO>& origin) {
  if (target.size() != origin.size()) {
    throw Error(ErrorKind::shape, "fusion",
                "semantic_perturbation: dims " + std::to_string(target.size()) + " and " +
                    std::to_string(origin.size()));
  }
  return target - origin;
}

/// max(numerator) / max(denominator); 0 when the denominator's max is
/// below kZeroNorm in magnitude, which drops the term it scales.
template <typename DerivedN, typename DerivedD>
typename DerivedN::Scalar scale_factor(const Eigen::MatrixBase<DerivedN>& numerator,
                                       const Eigen::MatrixBase<DerivedD>& denominator,
                                       MaxMode mode = MaxMode::abs) {
  using Scalar = typename DerivedN::Scalar;
  if (numerator.size() != denominator.size()) {
    throw Error(ErrorKind::shape, "fusion", "scale_factor: dimension mismatch");
  }
  if (numerator.size() == 0) return Scalar(0);
  const Scalar num = mode == MaxMode::abs ? max_abs(numerator) : numerator.maxCoeff();
  const Scalar den = mode == MaxMode::abs ? max_abs(denominator) : denominator.maxCoeff();
  if (static_cast<double>(den < Scalar(0) ? -den : den) < kZeroNorm) return Scalar(0);
  return num / den;
}

struct FusionInputs {
  Embedding proxy;           // f_p
  Embedding query;           // f_q
  Embedding target_caption;  // f_t
  Embedding origin_caption;  // f_o
};

struct RobustProxy {
  Embedding feature;  // f_RP, not normalized
  float query_scale = 0;         // max(f_p)/max(f_q)
  float perturbation_scale = 0;  // max(f_p)/max(f_s)
  bool degenerate = false;       // f_p was all zero
};

/// f_RP = w_p f_p + w_q (max f_p / max f_q) f_q + w_s (max f_p / max f_s) f_s,
/// with f_s = f_t - f_o.
RobustProxy robust_proxy(const FusionInputs& in, const FusionWeights& w = {},
                         MaxMode mode = MaxMode::abs);

/// mean_embedding mode returns one averaged vector; per_proxy returns the
/// inputs unchanged.
std::vector<Embedding> aggregate_proxies(std::span<const Embedding> proxies, ProxyAggregation mode);

}  // namespace ipcir
