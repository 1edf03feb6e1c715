#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <gtest/gtest.h>

#include "ipcir/simengine.hpp"
#include "test_support.hpp"

using namespace ipcir;

namespace {

EmbeddingSet random_gallery(Index n, Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return EmbeddingSet(Role::gallery, test::numbered_ids("g", n), test::random_matrix(n, dim, rng));
}

Eigen::VectorXd dvec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Full stable sort under (score desc, index asc).
std::vector<Index> full_sort(const Eigen::VectorXd& s) {
  std::vector<Index> idx(static_cast<std::size_t>(s.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return s[a] > s[b]; });
  return idx;
}

}  // namespace

TEST(CosineScores, SelfSimilarity) {
  const auto g = random_gallery(50, 64, 1);
  const auto s = cosine_scores("q", g.raw().row(7).transpose(), g);
  EXPECT_NEAR(s.scores[7], 1.0, 1e-6);
  Index arg;
  s.scores.maxCoeff(&arg);
  EXPECT_EQ(arg, 7);
}

TEST(CosineScores, Orthogonal) {
  RowMatrixXf m = RowMatrixXf::Zero(10, 8);
  std::mt19937_64 rng(2);
  m.leftCols(4) = test::random_matrix(10, 4, rng);
  const EmbeddingSet g(Role::gallery, test::numbered_ids("g", 10), m);
  Embedding q = Embedding::Zero(8);
  q.tail(4) = test::random_matrix(1, 4, rng).row(0).transpose();
  const auto s = cosine_scores("q", q, g);
  EXPECT_LE(s.scores.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CosineScores, MatchesNaiveOracle) {
  const auto g = random_gallery(200, 64, 3);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Embedding q = test::random_matrix(1, 64, rng).row(0).transpose();
    const auto s = cosine_scores("q", q, g);
    double qn = 0;
    for (Index d = 0; d < 64; ++d) qn += static_cast<double>(q[d]) * q[d];
    qn = std::sqrt(qn);
    for (Index i = 0; i < 200; ++i) {
      double dot = 0, gn = 0;
      for (Index d = 0; d < 64; ++d) {
        dot += static_cast<double>(q[d]) * g.raw()(i, d);
        gn += static_cast<double>(g.raw()(i, d)) * g.raw()(i, d);
      }
      EXPECT_NEAR(s.scores[i], dot / (qn * std::sqrt(gn)), 1e-5);
    }
  }
}

TEST(CosineScores, DimMismatch) {
  const auto g = random_gallery(5, 8, 5);
  try {
    cosine_scores("q", Embedding::Ones(7), g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Kernel, DotMatrixEqualsKernelDot) {
  std::mt19937_64 rng(6);
  for (Index dim : {1, 7, 16, 33, 100}) {
    const RowMatrixXf q = test::random_matrix(9, dim, rng);
    const RowMatrixXf g = test::random_matrix(37, dim, rng);
    const RowMatrixXf s = dot_matrix(q, g);
    for (Index i = 0; i < 9; ++i)
      for (Index j = 0; j < 37; ++j) ASSERT_EQ(s(i, j), kernel_dot(q.row(i).data(), g.row(j).data(), dim));
  }
}

TEST(Kernel, BitIdenticalAcrossThreadsAndBlocks) {
  std::mt19937_64 rng(7);
  const RowMatrixXf q = test::random_matrix(37, 100, rng);
  const auto g = random_gallery(3001, 100, 8);
  const RowMatrixXf base = cosine_score_matrix(q, g.unit());
  const auto base_top = cosine_top_k(q, g.unit(), 50);
  for (const KernelOptions opts : {KernelOptions{2, 5, 300}, KernelOptions{3, 1, 17}, KernelOptions{8, 128, 8192},
                                   KernelOptions{4, 64, 1}}) {
    const RowMatrixXf s = cosine_score_matrix(q, g.unit(), opts);
    ASSERT_EQ(std::memcmp(s.data(), base.data(), sizeof(float) * static_cast<std::size_t>(s.size())), 0);
    const auto top = cosine_top_k(q, g.unit(), 50, opts);
    ASSERT_EQ(top.size(), base_top.size());
    for (std::size_t i = 0; i < top.size(); ++i) ASSERT_EQ(top[i].entries, base_top[i].entries);
  }
}

TEST(Kernel, TopKMatchesFullScoreMatrix) {
  std::mt19937_64 rng(9);
  const RowMatrixXf q = test::random_matrix(20, 48, rng);
  const auto g = random_gallery(2000, 48, 10);
  const RowMatrixXf s = cosine_score_matrix(q, g.unit());
  const auto top = cosine_top_k(q, g.unit(), 25, {2, 3, 250});
  for (Index i = 0; i < 20; ++i) {
    const auto order = full_sort(s.row(i).transpose().cast<double>());
    ASSERT_EQ(top[static_cast<std::size_t>(i)].entries.size(), 25u);
    for (std::size_t r = 0; r < 25; ++r) {
      EXPECT_EQ(top[static_cast<std::size_t>(i)].entries[r].index, order[r]);
      EXPECT_EQ(top[static_cast<std::size_t>(i)].entries[r].score, s(i, order[r]));
    }
  }
}

TEST(MinMax, Examples) {
  EXPECT_EQ(minmax_normalize(dvec({-1, 0, 1})), dvec({0, 0.5, 1}));
  EXPECT_EQ(minmax_normalize(dvec({0.3, 0.3})), dvec({0.5, 0.5}));
}

TEST(MinMax, PreservesOrder) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd s(1000);
    for (Index i = 0; i < s.size(); ++i) s[i] = u(rng);
    // A few exact ties, as cosine scores cast from f32 produce.
    s[3] = s[4];
    const auto n = minmax_normalize(s);
    EXPECT_EQ(full_sort(s), full_sort(n));
    EXPECT_GE(n.minCoeff(), 0.0);
    EXPECT_LE(n.maxCoeff(), 1.0);
  }
}

TEST(Balance, ExtremeCaseSeparatesFromAveraging) {
  const auto a = balance(dvec({0.999}), dvec({0.001}), 0.5);
  const auto b = balance(dvec({0.5}), dvec({0.5}), 0.5);
  EXPECT_NEAR(0.999 * 0.001, 0.000999, 1e-15);
  EXPECT_NEAR(a[0], 0.4999995, 1e-12);
  EXPECT_NEAR(a[0], 0.49999953, 1e-7);
  EXPECT_DOUBLE_EQ(b[0], 0.375);
  EXPECT_EQ((0.999 + 0.001) / 2, (0.5 + 0.5) / 2);
  EXPECT_GT(a[0], b[0]);
}

TEST(Balance, LambdaExtremes) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::VectorXd t(100), p(100);
  for (Index i = 0; i < 100; ++i) t[i] = u(rng), p[i] = u(rng);
  EXPECT_EQ(balance(t, p, 1.0), t);
  EXPECT_EQ(balance(t, p, 0.0), t.cwiseProduct(p));
}

TEST(Balance, MonotoneInProxyAndBoundedByMin) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::VectorXd t(500), p(500);
  for (Index i = 0; i < 500; ++i) t[i] = u(rng), p[i] = u(rng);
  const auto tn = minmax_normalize(t);
  const auto pn = minmax_normalize(p);
  const Eigen::VectorXd sb = tn.cwiseProduct(pn);
  EXPECT_TRUE((sb.array() <= tn.cwiseMin(pn).array()).all());
  for (double lambda : {0.0, 0.3, 0.9}) {
    const auto lo = balance(tn, pn, lambda);
    const auto hi = balance(tn, (pn.array() + 0.1).matrix().eval(), lambda);
    EXPECT_TRUE((hi.array() >= lo.array()).all());
  }
}

TEST(Balance, SimilarityVectorOverloadNormalizes) {
  const SimilarityVector t{"q", dvec({-1, 0, 1}), SimilarityKind::text};
  const SimilarityVector p{"q", dvec({2, 2, 4}), SimilarityKind::proxy};
  const auto f = balance(t, p, {0.5, ScoreNormalization::minmax_per_query});
  EXPECT_EQ(f.kind, SimilarityKind::final);
  EXPECT_EQ(f.scores, dvec({0, 0.25, 1}));
  EXPECT_THROW(balance(t, SimilarityVector{"q", dvec({1, 2}), SimilarityKind::proxy}, BalanceParams{}), Error);
  EXPECT_THROW(balance(t, p, {1.5, ScoreNormalization::none}), Error);
}

TEST(Balance, CrossoverMatchesClosedForm) {
  // A: high text, low proxy. B: lower text, high proxy.
  const double ta = 0.9, pa = 0.2, tb = 0.6, pb = 0.9;
  const double sba = ta * pa, sbb = tb * pb;
  const double closed = (sbb - sba) / (ta - tb + sbb - sba);
  EXPECT_NEAR(balance_crossover(ta, pa, tb, pb), closed, 1e-12);
  EXPECT_TRUE(std::isnan(balance_crossover(0.9, 0.9, 0.1, 0.1)));
}

TEST(TopK, Examples) {
  const SimilarityVector s{"q", dvec({0.1, 0.9, 0.5})};
  const auto r = top_k(s, 2);
  EXPECT_EQ(r.entries, (std::vector<RankedEntry>{{1, 0.9}, {2, 0.5}}));
  const SimilarityVector flat{"q", Eigen::VectorXd::Constant(6, 0.25)};
  EXPECT_EQ(top_k(flat, 3).entries, (std::vector<RankedEntry>{{0, 0.25}, {1, 0.25}, {2, 0.25}}));
  EXPECT_EQ(top_k(s, 10).entries.size(), 3u);
}

TEST(TopK, ExcludeSkipsRows) {
  const SimilarityVector s{"q", dvec({0.1, 0.9, 0.5, 0.7})};
  const std::vector<Index> ex{1};
  EXPECT_EQ(top_k(s, 2, ex).entries, (std::vector<RankedEntry>{{3, 0.7}, {2, 0.5}}));
}

TEST(TopK, ZeroKIsArgumentError) {
  const SimilarityVector s{"q", dvec({0.1})};
  try {
    top_k(s, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::argument);
  }
}

TEST(TopK, MatchesFullSortOn100k) {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> coarse(0, 5000);  // plenty of ties
  Eigen::VectorXd v(100000);
  for (Index i = 0; i < v.size(); ++i) v[i] = coarse(rng) / 5000.0;
  const auto order = full_sort(v);
  const auto r = top_k({"q", v}, 50);
  ASSERT_EQ(r.entries.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(r.entries[i].index, order[i]);
    EXPECT_EQ(r.entries[i].score, v[order[i]]);
  }
}
