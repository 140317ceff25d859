#include <gtest/gtest.h>

#include <cmath>

#include "bowkit/aggregation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bowkit;

namespace {

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

Code dense_code(const Vec& v) {
  std::vector<std::pair<std::uint32_t, double>> e;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) e.emplace_back(static_cast<std::uint32_t>(i), v[i]);
  return make_code(v.size(), e);
}

}  // namespace

TEST(PoolSum, Counts) {
  const auto p = pool_sum({dense_code({1, 0}), dense_code({0, 1}), dense_code({1, 0})}, 2);
  EXPECT_EQ(p.values, (Vec{2, 1}));
  EXPECT_FALSE(p.zero);
}

TEST(PoolSum, AbsoluteValues) {
  EXPECT_EQ(pool_sum({dense_code({-1, 0})}, 2).values, (Vec{1, 0}));
}

TEST(PoolSum, EmptyListIsFlaggedZero) {
  const auto p = pool_sum({}, 3);
  EXPECT_EQ(p.values, Vec(3, 0.0));
  EXPECT_TRUE(p.zero);
}

TEST(PoolSum, LengthMismatch) {
  EXPECT_EQ(error_of([] { pool_sum({dense_code({1, 0, 0})}, 2); }), Errc::LengthMismatch);
}

TEST(PoolSum, PermutationInvariant) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<Code> codes;
    for (int n = 0; n < 20; ++n) {
      Vec v(8, 0.0);
      for (auto& x : v)
        if (rng.uniform() < 0.3) x = rng.normal();
      codes.push_back(dense_code(v));
    }
    const auto a = pool_sum(codes, 8);
    rng.shuffle(codes);
    const auto b = pool_sum(codes, 8);
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
      EXPECT_GE(a.values[i], 0.0);
    }
  }
}

TEST(PowerL2, Example) {
  const Vec g = normalize_power_l2({2, 1}, 0.5);
  EXPECT_NEAR(g[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(g[1], std::sqrt(1.0 / 3.0), 1e-15);
  EXPECT_NEAR(g[0], 0.8165, 1e-4);
  EXPECT_NEAR(g[1], 0.5774, 1e-4);
}

TEST(PowerL2, SingleEntry) {
  for (double c : {1e-200, 0.3, 7.0, 1e200}) EXPECT_EQ(normalize_power_l2({c, 0, 0}, 0.5), (Vec{1, 0, 0}));
}

TEST(PowerL2, AlphaOneIsPlainL2) {
  const Vec g = normalize_power_l2({3, 4}, 1.0);
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1], 0.8, 1e-15);
}

TEST(PowerL2, ZeroInputReturnedAndFlagged) {
  bool zero = false;
  EXPECT_EQ(normalize_power_l2({0, 0, 0}, 0.5, &zero), Vec(3, 0.0));
  EXPECT_TRUE(zero);
  normalize_power_l2({0, 1}, 0.5, &zero);
  EXPECT_FALSE(zero);
}

TEST(PowerL2, AlphaRange) {
  EXPECT_EQ(error_of([] { normalize_power_l2({1}, 0.0); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([] { normalize_power_l2({1}, 1.5); }), Errc::InvalidArgument);
}

TEST(PowerL2, UnitNormAndClosedForm) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t K = 1 + rng.below(64);
    Vec h(K);
    double total = 0.0;
    for (auto& x : h) {
      x = rng.uniform() < 0.2 ? 0.0 : std::exp(4.0 * rng.normal());
      total += x;
    }
    if (total == 0.0) continue;
    const double alpha = t % 2 ? 0.5 : 0.05 + 0.95 * rng.uniform();
    const Vec g = normalize_power_l2(h, alpha);
    EXPECT_NEAR(norm2(g), 1.0, 1e-8);
    if (alpha == 0.5) {
      for (std::size_t i = 0; i < K; ++i) EXPECT_NEAR(g[i], std::sqrt(h[i]) / std::sqrt(total), 1e-12);
    }
  }
}

TEST(PowerL2, SignedInput) {
  const Vec g = normalize_power_l2({-4, 1}, 0.5);
  EXPECT_NEAR(g[0], -2 / std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(g[1], 1 / std::sqrt(5.0), 1e-15);
}

TEST(BuildHistograms, OneHotForSingleDescriptor) {
  DescriptorSet s;
  s.channel = "hog";
  s.descriptors = Mat::from_rows({{0.9}, {0.1}});
  s.video_id = {5};
  s.video_class = {{5, 1}};
  const auto hs = build_histograms(s, Mat::identity(2), parse_encoder("VQ"), 0.5);
  ASSERT_EQ(hs.size(), 1u);
  EXPECT_EQ(hs[0].values, (Vec{1, 0}));
  EXPECT_EQ(hs[0].video_id, 5u);
  EXPECT_EQ(hs[0].class_id, 1);
  EXPECT_EQ(hs[0].channel, "hog");
}

TEST(BuildHistograms, IdenticalVideosAndAscendingOrder) {
  DescriptorSet s;
  s.channel = "hof";
  s.descriptors = Mat::from_rows({{1, 0.2, 1, 0.2}, {0, 0.7, 0, 0.7}});
  s.video_id = {9, 9, 3, 3};
  s.video_class = {{9, 0}, {3, 1}};
  const auto hs = build_histograms(s, Mat::identity(2), parse_encoder("SA-2"), 0.5);
  ASSERT_EQ(hs.size(), 2u);
  EXPECT_EQ(hs[0].video_id, 3u);
  EXPECT_EQ(hs[1].video_id, 9u);
  EXPECT_EQ(hs[0].values, hs[1].values);
}

TEST(BuildHistograms, SyntheticAllUnitNormAndThreadIndependent) {
  SynthSpec spec;
  spec.videos_per_class = 6;
  const auto syn = generate_synthetic(spec);
  Rng rng(3);
  const Mat D = oracle::random_dictionary(spec.dim, 24, rng);
  for (const char* label : {"VQ", "SA-5", "OMP-5", "LLC-5", "SC"}) {
    auto p = parse_encoder(label);
    p.threads = 1;
    const auto a = build_histograms(syn.channels[0], D, p, 0.5);
    p.threads = 5;
    const auto b = build_histograms(syn.channels[0], D, p, 0.5);
    ASSERT_EQ(a.size(), 30u);
    for (std::size_t v = 0; v < a.size(); ++v) {
      EXPECT_EQ(a[v].values, b[v].values);
      EXPECT_FALSE(a[v].zero);
      EXPECT_NEAR(norm2(a[v].values), 1.0, 1e-8) << label;
    }
  }
}

TEST(BuildHistograms, HugeLambdaGivesFlaggedZeros) {
  SynthSpec spec;
  spec.videos_per_class = 2;
  spec.classes = 2;
  const auto syn = generate_synthetic(spec);
  Rng rng(4);
  auto p = parse_encoder("SC");
  p.lambda = 1e6;
  const auto hs = build_histograms(syn.channels[0], oracle::random_dictionary(spec.dim, 8, rng), p, 0.5);
  for (const auto& h : hs) {
    EXPECT_TRUE(h.zero);
    EXPECT_EQ(h.values, Vec(8, 0.0));
  }
}

TEST(BuildHistograms, PropagatesEncoderErrors) {
  DescriptorSet s;
  s.channel = "hog";
  s.descriptors = Mat::from_rows({{1}, {1}});
  s.video_id = {0};
  s.video_class = {{0, 0}};
  EXPECT_EQ(error_of([&] { build_histograms(s, Mat::from_rows({{2, 0}, {0, 1}}), parse_encoder("OMP-1"), 0.5); }),
            Errc::NotUnitNorm);
}

TEST(Histograms, FileRoundTrip) {
  std::vector<VideoHistogram> hs(2);
  hs[0] = {4, 1, "hog", {0.6, 0.8, 0}, "power-l2", false};
  hs[1] = {7, kUnlabeled, "hog", {0, 0, 0}, "power-l2", true};
  const auto p = tmp_path("hist.bwhs");
  save_histograms(hs, p);
  const auto got = load_histograms(p);
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].video_id, 4u);
  EXPECT_EQ(got[0].class_id, 1);
  EXPECT_EQ(got[0].channel, "hog");
  EXPECT_NEAR(got[0].values[1], 0.8, 1e-7);
  EXPECT_TRUE(got[1].zero);
  EXPECT_EQ(got[1].class_id, kUnlabeled);
}
