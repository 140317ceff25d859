#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>

#include "bowkit/data.hpp"
#include "bowkit/dictionary.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bowkit;

namespace {

bool non_increasing(const Vec& t) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[i - 1] + 1e-8 * std::max(1.0, t[i - 1])) return false;
  return true;
}

Mat synthetic_sample(std::size_t n, std::uint64_t seed) {
  SynthSpec s;
  s.videos_per_class = 10;
  s.descriptors_per_video = 20;
  s.channels = 1;
  s.dim = 12;
  const auto d = generate_synthetic(s);
  Rng rng(seed);
  return sample_features(d.channels[0], n, rng);
}

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

double kmeans_objective(const Mat& x, const Mat& c) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.cols(); ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < c.cols(); ++j) best = std::min(best, sqdist(x.column(i), c.column(j)));
    total += best;
  }
  return total;
}

}  // namespace

TEST(RandomWeights, OneDimensionalColumnsAreSigns) {
  Rng rng(1);
  LearnParams p;
  p.K = 3;
  const auto d = learn_random_weights(1, p, rng);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(std::abs(d.atoms(0, j)), 1.0);
}

TEST(RandomWeights, UnitNormAndDeterministic) {
  LearnParams p;
  p.method = Learner::RW;
  p.K = 16;
  p.seed = 9;
  const Mat x(8, 1);
  const auto a = learn_dictionary(x, p), b = learn_dictionary(x, p);
  EXPECT_TRUE(a.atoms == b.atoms);
  EXPECT_LE(a.max_unit_deviation(), 1e-8);
  EXPECT_EQ(a.size(), 16u);
}

TEST(RandomExemplars, BasisIsPermuted) {
  Rng rng(4);
  LearnParams p;
  p.K = 2;
  const auto d = learn_random_exemplars(Mat::identity(2), p, rng);
  std::set<std::vector<double>> cols{d.atoms.column(0), d.atoms.column(1)};
  EXPECT_EQ(cols, (std::set<std::vector<double>>{{1, 0}, {0, 1}}));
}

TEST(RandomExemplars, ColumnsAreNormalizedDistinctInputs) {
  const Mat x = synthetic_sample(200, 3);
  Rng rng(5);
  LearnParams p;
  p.K = 30;
  const auto d = learn_random_exemplars(x, p, rng);
  EXPECT_LE(d.max_unit_deviation(), 1e-8);
  std::set<std::size_t> used;
  for (std::size_t j = 0; j < d.size(); ++j) {
    bool found = false;
    for (std::size_t i = 0; i < x.cols() && !found; ++i) {
      const Vec xi = x.column(i);
      const double n = norm2(xi);
      double err = 0.0;
      for (std::size_t r = 0; r < x.rows(); ++r) err = std::max(err, std::abs(xi[r] / n - d.atoms(r, j)));
      if (err < 1e-12 && !used.count(i)) {
        used.insert(i);
        found = true;
      }
    }
    EXPECT_TRUE(found) << "atom " << j;
  }
}

TEST(RandomExemplars, Errors) {
  Rng rng(1);
  LearnParams p;
  p.K = 3;
  EXPECT_EQ(error_of([&] { learn_random_exemplars(Mat::identity(2), p, rng); }), Errc::InsufficientData);
  p.K = 2;
  const Mat with_zero = Mat::from_rows({{0, 1}, {0, 0}});
  EXPECT_EQ(error_of([&] { learn_random_exemplars(with_zero, p, rng); }), Errc::DegenerateAtom);
}

TEST(KMeans, PerfectClusters) {
  const Mat x = Mat::from_rows({{0, 0, 1, 1}});
  LearnParams p;
  p.K = 2;
  p.seed = 3;
  const auto d = learn_dictionary(x, p);
  std::set<double> c{d.atoms(0, 0), d.atoms(0, 1)};
  EXPECT_EQ(c, (std::set<double>{0.0, 1.0}));
  EXPECT_EQ(d.objective_trace.back(), 0.0);
}

TEST(KMeans, TraceNonIncreasingAndAssignmentsNearest) {
  const Mat x = synthetic_sample(600, 8);
  LearnParams p;
  p.K = 20;
  p.iterations = 100;
  p.tol = 1e-12;
  p.seed = 2;
  const auto d = learn_dictionary(x, p);
  EXPECT_TRUE(non_increasing(d.objective_trace));
  EXPECT_EQ(d.stop_reason, "converged");
  // at a fixed point each centroid is the mean of the descriptors nearest to it
  Mat sum(x.rows(), p.K);
  std::vector<int> cnt(p.K, 0);
  for (std::size_t i = 0; i < x.cols(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.K; ++j)
      if (sqdist(x.column(i), d.atoms.column(j)) < sqdist(x.column(i), d.atoms.column(best))) best = j;
    ++cnt[best];
    for (std::size_t r = 0; r < x.rows(); ++r) sum(r, best) += x(r, i);
  }
  for (std::size_t j = 0; j < p.K; ++j) {
    ASSERT_GT(cnt[j], 0);
    for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_NEAR(sum(r, j) / cnt[j], d.atoms(r, j), 1e-12);
  }
}

TEST(KMeans, BestOfAllInitialPairsIsGlobalOptimum) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Mat x(2, 8);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t r = 0; r < 2; ++r) x(r, i) = rng.normal() + (i < 4 ? 2.0 : 0.0) * trial / 4.0;
    LearnParams p;
    p.K = 2;
    p.iterations = 100;
    p.tol = 0.0;
    double best = 1e300;
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t b = a + 1; b < 8; ++b) {
        const auto d = kmeans_from(x, Mat::from_columns({x.column(a), x.column(b)}), p);
        best = std::min(best, d.objective_trace.back());
      }
    EXPECT_NEAR(best, oracle::best_two_partition(x), 1e-10);
  }
}

TEST(KMeans, EmptyClusterIsReseeded) {
  // third centroid starts far from every point and captures nothing
  const Mat x = Mat::from_rows({{0, 0.1, 5, 5.1}});
  LearnParams p;
  p.iterations = 10;
  const auto d = kmeans_from(x, Mat::from_rows({{0, 5, 100}}), p);
  EXPECT_TRUE(non_increasing(d.objective_trace));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_LT(d.atoms(0, j), 6.0);
}

TEST(KMeans, ProvenanceAndErrors) {
  LearnParams p;
  p.K = 5;
  p.seed = 12;
  EXPECT_EQ(error_of([&] { learn_dictionary(Mat(2, 3), p); }), Errc::InsufficientData);
  const auto d = learn_dictionary(synthetic_sample(50, 1), p);
  EXPECT_NE(d.method.find("kmeans;K=5"), std::string::npos);
  EXPECT_NE(d.method.find("seed=12"), std::string::npos);
  EXPECT_EQ(d.seed, 12u);
}

TEST(Ksvd, ExactSparseModelReachesZero) {
  Rng rng(2);
  const Mat q = oracle::random_orthonormal(6, rng);
  // every descriptor is one of the atoms, scaled
  Mat x(6, 30);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t r = 0; r < 6; ++r) x(r, i) = q(r, i % 6) * (1.0 + 0.1 * static_cast<double>(i / 6));
  LearnParams p;
  p.method = Learner::KSVD;
  p.K = 6;
  p.sparsity = 1;
  p.iterations = 10;
  p.seed = 1;
  const auto init = Mat::from_columns({x.column(0), x.column(1), x.column(2), x.column(3), x.column(4), x.column(5)});
  const auto d = ksvd_from(x, normalized_columns(init), p);
  ASSERT_LE(d.objective_trace.size(), 2u);
  EXPECT_LE(d.objective_trace.back(), 1e-10);
  EXPECT_LE(d.max_unit_deviation(), 1e-8);
}

TEST(Ksvd, TraceNonIncreasingAndUnitNorm) {
  const Mat x = synthetic_sample(500, 4);
  for (std::size_t k : {1u, 2u, 3u}) {
    LearnParams p;
    p.method = Learner::KSVD;
    p.K = 24;
    p.sparsity = k;
    p.iterations = 15;
    p.seed = 7;
    const auto d = learn_dictionary(x, p);
    EXPECT_TRUE(non_increasing(d.objective_trace)) << "k=" << k;
    EXPECT_LE(d.max_unit_deviation(), 1e-8);
    EXPECT_TRUE(d.atoms.all_finite());
    // codes against the learned dictionary respect the sparsity
    EncodeParams ep;
    ep.method = Encoder::OMP;
    ep.k = k;
    for (const auto& c : encode_batch(x, Codebook(d.atoms), ep)) EXPECT_LE(c.nnz(), k);
  }
}

TEST(Ksvd, KEqualsNFromNormalizedData) {
  const Mat x = synthetic_sample(20, 6);
  LearnParams p;
  p.method = Learner::KSVD;
  p.K = 20;
  p.sparsity = 1;
  p.iterations = 5;
  const auto d = ksvd_from(x, normalized_columns(x), p);
  EXPECT_LE(d.objective_trace.back(), 1e-10);
}

TEST(Ksvd, DeadAtomReplacedByWorstDescriptor) {
  // e1 and e2 win every OMP-1 selection, so the third atom is never used
  const Mat x = Mat::from_rows({{1, 2, 0, 0, 0.3}, {0, 0, 1, 2, 0.3}, {0, 0, 0, 0, 1.0}});
  const double h = std::sqrt(0.5);
  const Mat init = Mat::from_rows({{1, 0, h}, {0, 1, -h}, {0, 0, 0}});
  LearnParams p;
  p.method = Learner::KSVD;
  p.sparsity = 1;
  p.iterations = 1;
  const auto d = ksvd_from(x, init, p);
  ASSERT_FALSE(d.warnings.empty());
  // worst reconstructed descriptor under OMP-1 is x5; replaced atom is x5 / ||x5||
  const Vec x5 = x.column(4);
  const double n = norm2(x5);
  bool replaced = false;
  for (std::size_t j = 0; j < 3; ++j) {
    double err = 0.0;
    for (std::size_t r = 0; r < 3; ++r) err = std::max(err, std::abs(d.atoms(r, j) - x5[r] / n));
    replaced = replaced || err < 1e-12;
  }
  EXPECT_TRUE(replaced);
}

TEST(Ksvd, SparsityValidation) {
  LearnParams p;
  p.method = Learner::KSVD;
  p.K = 4;
  p.sparsity = 5;
  EXPECT_EQ(error_of([&] { learn_dictionary(synthetic_sample(40, 1), p); }), Errc::InvalidArgument);
}

TEST(SparseCoding, TraceNonIncreasingAndUnitNorm) {
  const Mat x = synthetic_sample(400, 9);
  LearnParams p;
  p.method = Learner::SC;
  p.K = 24;
  p.iterations = 15;
  p.seed = 3;
  const auto d = learn_dictionary(x, p);
  EXPECT_TRUE(non_increasing(d.objective_trace));
  EXPECT_LE(d.max_unit_deviation(), 1e-8);
  EXPECT_GT(d.objective_trace.size(), 1u);
  EXPECT_LT(d.objective_trace.back(), d.objective_trace.front());
}

TEST(SparseCoding, PlantedDictionaryUpperBound) {
  Rng rng(31);
  const std::size_t d = 8, K = 12, N = 12;
  const Mat planted = oracle::random_dictionary(d, K, rng);
  Mat x(d, N);
  std::vector<Vec> codes(N, Vec(K, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t a = i % K, b = (i * 5 + 3) % K;
    codes[i][a] = 1.0 + rng.uniform();
    if (b != a) codes[i][b] = -0.5 - rng.uniform();
    for (std::size_t r = 0; r < d; ++r) x(r, i) = planted(r, a) * codes[i][a] + planted(r, b) * codes[i][b];
  }
  const double lambda = 0.01;
  double planted_obj = 0.0;
  for (std::size_t i = 0; i < N; ++i) planted_obj += oracle::lasso_objective(planted, x.column(i), codes[i], lambda);
  LearnParams p;
  p.method = Learner::SC;
  p.K = K;
  p.lambda = lambda;
  p.iterations = 50;
  p.seed = 4;
  const auto dict = learn_dictionary(x, p);
  EXPECT_LE(dict.objective_trace.back(), planted_obj + 1e-6);
  EXPECT_TRUE(non_increasing(dict.objective_trace));
}

TEST(SparseCoding, HugeLambdaLeavesDictionaryAndWarns) {
  const Mat x = synthetic_sample(60, 2);
  LearnParams p;
  p.method = Learner::SC;
  p.K = 6;
  p.lambda = 1e6;
  p.iterations = 2;
  p.seed = 5;
  Rng rng(p.seed);
  LearnParams re = p;
  re.method = Learner::RE;
  const auto init = learn_random_exemplars(x, re, rng);
  const auto d = learn_dictionary(x, p);
  EXPECT_TRUE(d.atoms == init.atoms);
  EXPECT_FALSE(d.warnings.empty());
}

TEST(Learners, DeterministicUnderSeed) {
  const Mat x = synthetic_sample(300, 1);
  for (const char* m : {"RE", "K-means", "OMP-2", "SC"}) {
    LearnParams p = parse_learner(m);
    p.K = 16;
    p.iterations = 5;
    p.seed = 99;
    p.threads = 1;
    const auto a = learn_dictionary(x, p);
    p.threads = 4;
    const auto b = learn_dictionary(x, p);
    EXPECT_TRUE(a.atoms == b.atoms) << m;
    EXPECT_EQ(a.objective_trace, b.objective_trace) << m;
  }
}

TEST(Learners, ParseLabels) {
  EXPECT_EQ(parse_learner("k-means").method, Learner::KMeans);
  EXPECT_EQ(parse_learner("OMP-10").sparsity, 10u);
  EXPECT_EQ(parse_learner("OMP-10").label(), "OMP-10");
  EXPECT_EQ(error_of([] { parse_learner("PCA"); }), Errc::ConfigInvalid);
  EXPECT_EQ(error_of([] { parse_learner("OMP-x"); }), Errc::ConfigInvalid);
}

TEST(DictionaryFile, RoundTrip) {
  LearnParams p;
  p.method = Learner::RW;
  p.K = 7;
  p.seed = 5;
  const auto d = learn_dictionary(Mat(5, 1), p);
  const auto path = tmp_path("dict.bwdc");
  save_dictionary(d, path);
  const auto got = load_dictionary(path);
  EXPECT_EQ(got.method, d.method);
  EXPECT_EQ(got.seed, 5u);
  ASSERT_EQ(got.size(), 7u);
  for (std::size_t j = 0; j < 7; ++j)
    for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(got.atoms(r, j), static_cast<float>(d.atoms(r, j)));
}

TEST(DictionaryFile, KMeansObjectiveMatchesTrace) {
  const Mat x = synthetic_sample(200, 11);
  LearnParams p;
  p.K = 8;
  p.iterations = 200;
  p.tol = 0.0;
  const auto d = learn_dictionary(x, p);
  // after convergence the final assignment step evaluates the returned centroids
  EXPECT_NEAR(kmeans_objective(x, d.atoms), d.objective_trace.back(), 1e-9 * d.objective_trace.back());
}
