// Blocked f32 dot-product kernel.
//
// Every dot product is accumulated in 16 lanes (lane l sums elements
// d with d % 16 == l, in increasing d, each step a fused multiply-add), then
// the lanes are combined by the tree l += l+8, l += l+4, l += l+2, l += l+1.
// All three backends implement exactly that order, so the tile shape, block
// sizes and thread count never change a single bit of the output.

#include <algorithm>
#include <cmath>
#include <cstring>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

#include <omp.h>

#include "ipcir/simengine.hpp"

namespace ipcir {

namespace {

#if defined(__AVX512F__)

struct Lanes {
  __m512 v;
  static Lanes zero() { return {_mm512_setzero_ps()}; }
  static Lanes load(const float* p) { return {_mm512_loadu_ps(p)}; }
  static Lanes load_tail(const float* p, Index n) {
    return {_mm512_maskz_loadu_ps(static_cast<__mmask16>((1u << n) - 1u), p)};
  }
  void fma(const Lanes& a, const Lanes& b) { v = _mm512_fmadd_ps(a.v, b.v, v); }
  float reduce() const {
    __m256 s8 = _mm256_add_ps(_mm512_castps512_ps256(v), _mm512_extractf32x8_ps(v, 1));
    __m128 s4 = _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps(s8, 1));
    __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
    __m128 s1 = _mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1));
    return _mm_cvtss_f32(s1);
  }
};
constexpr int kQueryTile = 4;
constexpr int kGalleryTile = 4;
constexpr const char* kBackend = "avx512";

#elif defined(__AVX2__) && defined(__FMA__)

struct Lanes {
  __m256 lo, hi;
  static Lanes zero() { return {_mm256_setzero_ps(), _mm256_setzero_ps()}; }
  static Lanes load(const float* p) { return {_mm256_loadu_ps(p), _mm256_loadu_ps(p + 8)}; }
  static Lanes load_tail(const float* p, Index n) {
    alignas(32) float buf[16] = {};
    std::memcpy(buf, p, static_cast<std::size_t>(n) * sizeof(float));
    return load(buf);
  }
  void fma(const Lanes& a, const Lanes& b) {
    lo = _mm256_fmadd_ps(a.lo, b.lo, lo);
    hi = _mm256_fmadd_ps(a.hi, b.hi, hi);
  }
  float reduce() const {
    __m256 s8 = _mm256_add_ps(lo, hi);
    __m128 s4 = _mm_add_ps(_mm256_castps256_ps128(s8), _mm256_extractf128_ps(s8, 1));
    __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
    __m128 s1 = _mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 1));
    return _mm_cvtss_f32(s1);
  }
};
constexpr int kQueryTile = 2;
constexpr int kGalleryTile = 2;
constexpr const char* kBackend = "avx2";

#else

struct Lanes {
  float v[16];
  static Lanes zero() { return Lanes{}; }
  static Lanes load(const float* p) {
    Lanes l;
    std::memcpy(l.v, p, sizeof l.v);
    return l;
  }
  static Lanes load_tail(const float* p, Index n) {
    Lanes l{};
    std::memcpy(l.v, p, static_cast<std::size_t>(n) * sizeof(float));
    return l;
  }
  void fma(const Lanes& a, const Lanes& b) {
    for (int i = 0; i < 16; ++i) v[i] = std::fma(a.v[i], b.v[i], v[i]);
  }
  float reduce() const {
    float t[16];
    std::memcpy(t, v, sizeof t);
    for (int s = 8; s >= 1; s /= 2) {
      for (int i = 0; i < s; ++i) t[i] = t[i] + t[i + s];
    }
    return t[0];
  }
};
constexpr int kQueryTile = 2;
constexpr int kGalleryTile = 2;
constexpr const char* kBackend = "generic";

#endif

constexpr Index kLanes = 16;

/// Scores a QR x GR tile: out[i * ld + j] = dot(q[i], g[j]).
template <int QR, int GR>
inline void tile(const float* const* q, const float* const* g, Index dim, float* out, Index ld) {
  Lanes acc[QR][GR];
  for (int i = 0; i < QR; ++i)
    for (int j = 0; j < GR; ++j) acc[i][j] = Lanes::zero();

  Index d = 0;
  for (; d + kLanes <= dim; d += kLanes) {
    Lanes gv[GR];
    for (int j = 0; j < GR; ++j) gv[j] = Lanes::load(g[j] + d);
    for (int i = 0; i < QR; ++i) {
      const Lanes qv = Lanes::load(q[i] + d);
      for (int j = 0; j < GR; ++j) acc[i][j].fma(qv, gv[j]);
    }
  }
  if (d < dim) {
    const Index rest = dim - d;
    Lanes gv[GR];
    for (int j = 0; j < GR; ++j) gv[j] = Lanes::load_tail(g[j] + d, rest);
    for (int i = 0; i < QR; ++i) {
      const Lanes qv = Lanes::load_tail(q[i] + d, rest);
      for (int j = 0; j < GR; ++j) acc[i][j].fma(qv, gv[j]);
    }
  }
  for (int i = 0; i < QR; ++i)
    for (int j = 0; j < GR; ++j) out[i * ld + j] = acc[i][j].reduce();
}

/// out (nq x ng, leading dimension ld) = queries[q0..q0+nq) . gallery[g0..g0+ng)
void score_block(const RowMatrixXf& queries, Index q0, Index nq, const RowMatrixXf& gallery,
                 Index g0, Index ng, float* out, Index ld) {
  const Index dim = queries.cols();
  Index gi = 0;
  for (; gi + kGalleryTile <= ng; gi += kGalleryTile) {
    const float* g[kGalleryTile];
    for (int j = 0; j < kGalleryTile; ++j) g[j] = gallery.row(g0 + gi + j).data();
    Index qi = 0;
    for (; qi + kQueryTile <= nq; qi += kQueryTile) {
      const float* q[kQueryTile];
      for (int i = 0; i < kQueryTile; ++i) q[i] = queries.row(q0 + qi + i).data();
      tile<kQueryTile, kGalleryTile>(q, g, dim, out + qi * ld + gi, ld);
    }
    for (; qi < nq; ++qi) {
      const float* q[1] = {queries.row(q0 + qi).data()};
      tile<1, kGalleryTile>(q, g, dim, out + qi * ld + gi, ld);
    }
  }
  for (; gi < ng; ++gi) {
    const float* g[1] = {gallery.row(g0 + gi).data()};
    for (Index qi = 0; qi < nq; ++qi) {
      const float* q[1] = {queries.row(q0 + qi).data()};
      tile<1, 1>(q, g, dim, out + qi * ld + gi, ld);
    }
  }
}

int resolve_threads(int requested) {
  return requested > 0 ? requested : std::max(1, omp_get_max_threads());
}

void check_dims(const RowMatrixXf& queries, const RowMatrixXf& gallery) {
  if (queries.cols() != gallery.cols()) {
    throw Error(ErrorKind::shape, "simengine",
                "query dim " + std::to_string(queries.cols()) + " != gallery dim " +
                    std::to_string(gallery.cols()));
  }
}

/// Strict "a ranks before b".
inline bool ranks_before(float sa, Index ia, float sb, Index ib) {
  return sa > sb || (sa == sb && ia < ib);
}

struct Candidate {
  float score;
  Index index;
};

/// Bounded set of the best k candidates seen so far, worst on top.
class TopK {
 public:
  explicit TopK(Index k) : k_(static_cast<std::size_t>(k)) { heap_.reserve(k_ + 1); }

  void offer(float score, Index index) {
    if (heap_.size() < k_) {
      heap_.push_back({score, index});
      std::push_heap(heap_.begin(), heap_.end(), worse_on_top);
    } else if (ranks_before(score, index, heap_.front().score, heap_.front().index)) {
      std::pop_heap(heap_.begin(), heap_.end(), worse_on_top);
      heap_.back() = {score, index};
      std::push_heap(heap_.begin(), heap_.end(), worse_on_top);
    }
  }

  std::vector<Candidate>& items() { return heap_; }

 private:
  static bool worse_on_top(const Candidate& a, const Candidate& b) {
    return ranks_before(a.score, a.index, b.score, b.index);
  }
  std::size_t k_;
  std::vector<Candidate> heap_;
};

}  // namespace

std::string_view kernel_backend() { return kBackend; }

float kernel_dot(const float* a, const float* b, Index dim) {
  float out = 0;
  tile<1, 1>(&a, &b, dim, &out, 1);
  return out;
}

RowMatrixXf dot_matrix(const RowMatrixXf& queries, const RowMatrixXf& gallery,
                       const KernelOptions& opts) {
  check_dims(queries, gallery);
  const Index nq = queries.rows();
  const Index ng = gallery.rows();
  RowMatrixXf out(nq, ng);
  if (nq == 0 || ng == 0) return out;
  const Index qb = std::max<Index>(1, opts.query_block);
  const Index gb = std::max<Index>(1, opts.gallery_block);
  const Index q_tasks = (nq + qb - 1) / qb;
  const Index g_tasks = (ng + gb - 1) / gb;
  const Index tasks = q_tasks * g_tasks;

#pragma omp parallel for schedule(dynamic, 1) num_threads(resolve_threads(opts.threads))
  for (Index t = 0; t < tasks; ++t) {
    const Index q0 = (t / g_tasks) * qb;
    const Index g0 = (t % g_tasks) * gb;
    score_block(queries, q0, std::min(qb, nq - q0), gallery, g0, std::min(gb, ng - g0),
                out.data() + q0 * ng + g0, ng);
  }
  return out;
}

RowMatrixXf cosine_score_matrix(const RowMatrixXf& queries, const RowMatrixXf& unit_gallery,
                                const KernelOptions& opts) {
  RowMatrixXf unit = queries;
  for (Index i = 0; i < unit.rows(); ++i) {
    const auto n = l2_normalize(unit.row(i).transpose());
    if (!n.zero) unit.row(i) = n.values.transpose();
  }
  return dot_matrix(unit, unit_gallery, opts);
}

std::vector<RankedList> cosine_top_k(const RowMatrixXf& queries, const RowMatrixXf& unit_gallery,
                                     Index k, const KernelOptions& opts) {
  if (k < 1) throw Error(ErrorKind::argument, "simengine", "top_k: k must be >= 1");
  check_dims(queries, unit_gallery);
  RowMatrixXf unit = queries;
  for (Index i = 0; i < unit.rows(); ++i) {
    const auto n = l2_normalize(unit.row(i).transpose());
    if (!n.zero) unit.row(i) = n.values.transpose();
  }

  const Index nq = unit.rows();
  const Index ng = unit_gallery.rows();
  const Index keep = std::min(k, ng);
  const Index qb = std::max<Index>(1, opts.query_block);
  const Index gb = std::max<Index>(1, opts.gallery_block);
  const Index q_tasks = (nq + qb - 1) / qb;
  const Index g_tasks = (ng + gb - 1) / gb;
  const Index tasks = q_tasks * g_tasks;
  constexpr Index kSubBlock = 256;

  // partial[q * g_tasks + chunk] holds the chunk-local top-k of query q.
  std::vector<std::vector<Candidate>> partial(static_cast<std::size_t>(nq * g_tasks));

#pragma omp parallel num_threads(resolve_threads(opts.threads))
  {
    std::vector<float> buffer(static_cast<std::size_t>(qb * kSubBlock));
#pragma omp for schedule(dynamic, 1)
    for (Index t = 0; t < tasks; ++t) {
      const Index chunk = t % g_tasks;
      const Index q0 = (t / g_tasks) * qb;
      const Index g0 = chunk * gb;
      const Index nqb = std::min(qb, nq - q0);
      const Index ngb = std::min(gb, ng - g0);
      std::vector<TopK> best(static_cast<std::size_t>(nqb), TopK(keep));
      for (Index s = 0; s < ngb; s += kSubBlock) {
        const Index ns = std::min(kSubBlock, ngb - s);
        score_block(unit, q0, nqb, unit_gallery, g0 + s, ns, buffer.data(), kSubBlock);
        for (Index qi = 0; qi < nqb; ++qi) {
          const float* row = buffer.data() + qi * kSubBlock;
          auto& b = best[static_cast<std::size_t>(qi)];
          for (Index j = 0; j < ns; ++j) b.offer(row[j], g0 + s + j);
        }
      }
      for (Index qi = 0; qi < nqb; ++qi) {
        partial[static_cast<std::size_t>((q0 + qi) * g_tasks + chunk)] =
            std::move(best[static_cast<std::size_t>(qi)].items());
      }
    }
  }

  std::vector<RankedList> out(static_cast<std::size_t>(nq));
#pragma omp parallel for schedule(static) num_threads(resolve_threads(opts.threads))
  for (Index q = 0; q < nq; ++q) {
    std::vector<Candidate> merged;
    merged.reserve(static_cast<std::size_t>(keep * g_tasks));
    for (Index c = 0; c < g_tasks; ++c) {
      const auto& part = partial[static_cast<std::size_t>(q * g_tasks + c)];
      merged.insert(merged.end(), part.begin(), part.end());
    }
    const auto cut = merged.begin() + std::min<std::ptrdiff_t>(keep, static_cast<std::ptrdiff_t>(merged.size()));
    std::partial_sort(merged.begin(), cut, merged.end(), [](const Candidate& a, const Candidate& b) {
      return ranks_before(a.score, a.index, b.score, b.index);
    });
    auto& list = out[static_cast<std::size_t>(q)];
    list.query_id = std::to_string(q);
    for (auto it = merged.begin(); it != cut; ++it) list.entries.push_back({it->index, it->score});
  }
  return out;
}

}  // namespace ipcir
