#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "bowkit/data.hpp"
#include "test_util.hpp"

using namespace bowkit;

namespace {

DescriptorSet tiny_set() {
  DescriptorSet s;
  s.channel = "hog";
  s.descriptors = Mat::from_rows({{1, 2, 3}, {4, 5, 6}});
  s.video_id = {0, 0, 1};
  s.video_class = {{0, 2}, {1, 3}};
  return s;
}

std::vector<unsigned char> read_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

Errc load_error(const std::string& p) {
  try {
    load_descriptors(p);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;  // sentinel: no error
}

}  // namespace

TEST(Descriptors, RoundTripSmall) {
  const auto p = tmp_path("small.bwds");
  save_descriptors(tiny_set(), p);
  const auto got = load_descriptors(p);
  EXPECT_EQ(got.size(), 3u);
  EXPECT_EQ(got.dim(), 2u);
  EXPECT_EQ(got.channel, "hog");
  EXPECT_TRUE(got.descriptors == tiny_set().descriptors);
  EXPECT_EQ(got.video_id, tiny_set().video_id);
  EXPECT_EQ(got.video_class, tiny_set().video_class);
}

TEST(Descriptors, LayoutMatchesFormat) {
  const auto bytes = encode_descriptors(tiny_set());
  // magic + version + d + N + tag + 3 records of (4 + 2 + 2*4)
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 1 + 3 + 3 * 14);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BWDS");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);   // d
  EXPECT_EQ(bytes[12], 3);  // N
  EXPECT_EQ(bytes[20], 3);  // tag length
}

TEST(Descriptors, RandomRoundTripIsBitExact) {
  Rng rng(3);
  DescriptorSet s;
  s.channel = "hof";
  s.descriptors = Mat(9, 50);
  for (std::size_t j = 0; j < 50; ++j) {
    for (std::size_t r = 0; r < 9; ++r) s.descriptors(r, j) = static_cast<float>(rng.normal());
    s.video_id.push_back(static_cast<std::uint32_t>(j / 7));
  }
  for (std::uint32_t v = 0; v <= 7; ++v) s.video_class[v] = static_cast<std::uint16_t>(v % 3);
  const auto p = tmp_path("random.bwds");
  save_descriptors(s, p);
  const auto first = read_bytes(p);
  const auto got = load_descriptors(p);
  EXPECT_TRUE(got.descriptors == s.descriptors);
  save_descriptors(got, p);
  EXPECT_EQ(read_bytes(p), first);
}

TEST(Descriptors, UnlabeledSentinelSurvives) {
  auto s = tiny_set();
  s.video_class[1] = kUnlabeled;
  const auto p = tmp_path("unlabeled.bwds");
  save_descriptors(s, p);
  EXPECT_EQ(load_descriptors(p).class_of(1), kUnlabeled);
}

TEST(Descriptors, EmptyPayloadIsTruncated) {
  io::Writer w;
  w.magic("BWDS");
  w.u32(1);
  w.u32(2);
  w.u64(0);
  w.tag("hog");
  const auto p = tmp_path("empty.bwds");
  w.save(p);
  EXPECT_EQ(load_error(p), Errc::TruncatedFile);
}

TEST(Descriptors, CorruptFilesAreRejected) {
  const auto good = encode_descriptors(tiny_set());
  const auto p = tmp_path("corrupt.bwds");

  auto b = good;
  b[0] = 'X';
  write_bytes(p, b);
  EXPECT_EQ(load_error(p), Errc::BadMagic);

  b = good;
  b[4] = 2;
  write_bytes(p, b);
  EXPECT_EQ(load_error(p), Errc::VersionUnsupported);

  b.assign(good.begin(), good.end() - 3);
  write_bytes(p, b);
  EXPECT_EQ(load_error(p), Errc::TruncatedFile);

  b = good;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(b.data() + good.size() - 4, &nan, 4);
  write_bytes(p, b);
  EXPECT_EQ(load_error(p), Errc::NonFiniteValue);

  EXPECT_EQ(load_error(tmp_path("does-not-exist.bwds")), Errc::IoFailure);
}

TEST(Descriptors, ConflictingVideoLabels) {
  auto b = encode_descriptors(tiny_set());
  // second record (video 0) gets class 9 instead of 2
  const std::size_t rec1 = 4 + 4 + 4 + 8 + 1 + 3 + 14;
  b[rec1 + 4] = 9;
  const auto p = tmp_path("conflict.bwds");
  write_bytes(p, b);
  EXPECT_EQ(load_error(p), Errc::InvalidData);
}

TEST(Split, RoundTripAndOverlap) {
  SplitSpec s{{1, 2, 5}, {3, 4}};
  const auto p = tmp_path("split.bwsp");
  save_split(s, p);
  const auto got = load_split(p);
  EXPECT_EQ(got.train, s.train);
  EXPECT_EQ(got.test, s.test);
  SplitSpec bad{{1, 2}, {2}};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Sample, FullDrawIsPermutation) {
  Rng rng(1);
  DescriptorSet s = tiny_set();
  const Mat x = sample_features(s, 3, rng);
  std::multiset<double> want{1, 2, 3}, got;
  for (std::size_t j = 0; j < 3; ++j) got.insert(x(0, j));
  EXPECT_EQ(got, want);
}

TEST(Sample, SeededRepeat) {
  DescriptorSet s = tiny_set();
  Rng a(77), b(77);
  EXPECT_TRUE(sample_features(s, 1, a) == sample_features(s, 1, b));
}

TEST(Sample, OversampleUsesReplacement) {
  Rng rng(2);
  const Mat x = sample_features(tiny_set(), 100000, rng);
  EXPECT_EQ(x.cols(), 100000u);
}

TEST(Sample, NeverFabricatesValues) {
  const auto syn = generate_synthetic(SynthSpec{});
  const auto& set = syn.channels[0];
  std::set<std::vector<double>> cols;
  for (std::size_t j = 0; j < set.size(); ++j) cols.insert(set.descriptors.column(j));
  Rng rng(4);
  for (std::size_t n : {std::size_t{10}, set.size(), set.size() + 5}) {
    const Mat x = sample_features(set, n, rng);
    for (std::size_t j = 0; j < n; ++j) ASSERT_TRUE(cols.count(x.column(j)));
  }
}

TEST(Sample, Errors) {
  Rng rng(1);
  DescriptorSet empty;
  empty.descriptors = Mat(2, 0);
  EXPECT_THROW(sample_features(empty, 1, rng), Error);
  try {
    sample_features(empty, 1, rng);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptySet);
  }
}

TEST(Synthetic, Counting) {
  SynthSpec s;
  s.classes = 1;
  s.videos_per_class = 2;
  s.descriptors_per_video = 3;
  s.channels = 1;
  const auto d = generate_synthetic(s);
  ASSERT_EQ(d.channels.size(), 1u);
  EXPECT_EQ(d.channels[0].size(), 6u);
  EXPECT_EQ(d.channels[0].videos().size(), 2u);
  EXPECT_EQ(d.split.train.size() + d.split.test.size(), 2u);
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  SynthSpec s;
  s.videos_per_class = 4;
  const auto a = generate_synthetic(s), b = generate_synthetic(s);
  EXPECT_EQ(encode_descriptors(a.channels[1]), encode_descriptors(b.channels[1]));
  EXPECT_EQ(a.split.train, b.split.train);
  s.seed = 8;
  const auto c = generate_synthetic(s);
  EXPECT_NE(encode_descriptors(a.channels[0]), encode_descriptors(c.channels[0]));
}

TEST(Synthetic, SplitIsSixtyFortyPerClass) {
  const auto d = generate_synthetic(SynthSpec{});
  EXPECT_EQ(d.split.train.size(), 5u * 24);
  EXPECT_EQ(d.split.test.size(), 5u * 16);
  d.split.validate();
  for (std::uint16_t c = 0; c < 5; ++c) {
    int n = 0;
    for (auto v : d.split.train) n += d.channels[0].class_of(v) == c;
    EXPECT_EQ(n, 24);
  }
}

TEST(Synthetic, NearestCenterRecoversClass) {
  SynthSpec s;
  s.cluster_spread = 0.05;
  s.noise_sigma = 0.05;
  const auto d = generate_synthetic(s);
  const auto& set = d.channels[0];
  const Mat& centers = d.centers[0];
  std::size_t hit = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < centers.cols(); ++c) {
      double s2 = 0.0;
      for (std::size_t r = 0; r < set.dim(); ++r) s2 += std::pow(set.descriptors(r, i) - centers(r, c), 2);
      if (s2 < bd) {
        bd = s2;
        best = c;
      }
    }
    hit += best / s.clusters_per_class == set.class_of(set.video_id[i]);
  }
  EXPECT_GE(static_cast<double>(hit) / static_cast<double>(set.size()), 0.95);
}

TEST(Synthetic, InvalidSpec) {
  SynthSpec s;
  s.noise_sigma = 0.0;
  try {
    generate_synthetic(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigInvalid);
  }
}

TEST(SelectVideos, KeepsOnlyListed) {
  const auto s = select_videos(tiny_set(), {1});
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.descriptors(0, 0), 3.0);
  EXPECT_EQ(s.class_of(1), 3);
}
