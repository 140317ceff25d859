#pragma once

// Descriptor sets, train/test splits, their binary formats, and the seeded
// synthetic generator used for desk-scale experiments.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bowkit/error.hpp"
#include "bowkit/io.hpp"
#include "bowkit/numerics.hpp"

namespace bowkit {

inline constexpr std::uint16_t kUnlabeled = 0xFFFF;

/// Local descriptors of many videos for one channel (e.g. "hog").
/// Column i of `descriptors` belongs to video `video_id[i]`.
struct DescriptorSet {
  std::string channel;
  Mat descriptors;  // d x N
  std::vector<std::uint32_t> video_id;
  std::map<std::uint32_t, std::uint16_t> video_class;

  std::size_t dim() const noexcept { return descriptors.rows(); }
  std::size_t size() const noexcept { return descriptors.cols(); }

  std::uint16_t class_of(std::uint32_t video) const {
    auto it = video_class.find(video);
    if (it == video_class.end()) fail(Errc::IdMismatch, "unknown video " + std::to_string(video));
    return it->second;
  }

  /// Sorted list of distinct video ids.
  std::vector<std::uint32_t> videos() const {
    std::vector<std::uint32_t> out;
    out.reserve(video_class.size());
    for (const auto& [v, c] : video_class) out.push_back(v);
    return out;
  }

  void validate() const {
    if (size() == 0) fail(Errc::EmptySet, "descriptor set has no descriptors");
    if (dim() == 0) fail(Errc::InvalidData, "descriptor dimension is zero");
    if (video_id.size() != size()) fail(Errc::InvalidData, "video_id length differs from descriptor count");
    for (auto v : video_id)
      if (!video_class.count(v)) fail(Errc::InvalidData, "video " + std::to_string(v) + " has no class");
    if (!descriptors.all_finite()) fail(Errc::NonFiniteValue, "descriptor set contains non-finite values");
  }
};

struct SplitSpec {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> test;

  void validate() const {
    std::set<std::uint32_t> a(train.begin(), train.end());
    for (auto v : test)
      if (a.count(v)) fail(Errc::InvalidData, "video " + std::to_string(v) + " is in both train and test");
  }
};

/// Keeps only descriptors of the listed videos; column order is preserved.
inline DescriptorSet select_videos(const DescriptorSet& set, const std::vector<std::uint32_t>& ids) {
  const std::set<std::uint32_t> keep(ids.begin(), ids.end());
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (keep.count(set.video_id[i])) cols.push_back(i);
  DescriptorSet out;
  out.channel = set.channel;
  out.descriptors = Mat(set.dim(), cols.size());
  out.video_id.reserve(cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t r = 0; r < set.dim(); ++r) out.descriptors(r, j) = set.descriptors(r, cols[j]);
    out.video_id.push_back(set.video_id[cols[j]]);
  }
  for (auto v : out.video_id) out.video_class[v] = set.class_of(v);
  return out;
}

// ---- BWDS -----------------------------------------------------------------

inline std::vector<unsigned char> encode_descriptors(const DescriptorSet& set) {
  set.validate();
  if (set.dim() > UINT32_MAX) fail(Errc::InvalidArgument, "dimension does not fit u32");
  io::Writer w;
  w.magic("BWDS");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(set.dim()));
  w.u64(set.size());
  w.tag(set.channel);
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.u32(set.video_id[i]);
    w.u16(set.class_of(set.video_id[i]));
    for (std::size_t r = 0; r < set.dim(); ++r) w.f32(static_cast<float>(set.descriptors(r, i)));
  }
  return w.buffer();
}

inline DescriptorSet decode_descriptors(io::Reader& in) {
  in.expect_magic("BWDS");
  in.expect_version(1);
  const std::uint32_t d = in.u32();
  const std::uint64_t n = in.u64();
  DescriptorSet set;
  set.channel = in.tag();
  if (n == 0) fail(Errc::TruncatedFile, "descriptor file has an empty payload");
  if (d == 0) fail(Errc::InvalidData, "descriptor dimension is zero");
  const std::uint64_t record = 4 + 2 + 4ULL * d;
  if (in.remaining() / record < n) fail(Errc::TruncatedFile, "descriptor payload shorter than header claims");
  set.descriptors = Mat(d, static_cast<std::size_t>(n));
  set.video_id.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t v = in.u32();
    const std::uint16_t c = in.u16();
    auto [it, inserted] = set.video_class.emplace(v, c);
    if (!inserted && it->second != c)
      fail(Errc::InvalidData, "video " + std::to_string(v) + " carries two class labels");
    set.video_id[i] = v;
    for (std::size_t r = 0; r < d; ++r) set.descriptors(r, i) = in.finite_f32();
  }
  return set;
}

inline void save_descriptors(const DescriptorSet& set, const std::string& path) {
  io::Writer w;
  const auto bytes = encode_descriptors(set);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

inline DescriptorSet load_descriptors(const std::string& path) {
  auto in = io::Reader::open(path);
  return decode_descriptors(in);
}

// ---- BWSP -----------------------------------------------------------------

inline void save_split(const SplitSpec& split, const std::string& path) {
  split.validate();
  io::Writer w;
  w.magic("BWSP");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(split.train.size()));
  w.u32(static_cast<std::uint32_t>(split.test.size()));
  for (auto v : split.train) w.u32(v);
  for (auto v : split.test) w.u32(v);
  w.save(path);
}

inline SplitSpec load_split(const std::string& path) {
  auto in = io::Reader::open(path);
  in.expect_magic("BWSP");
  in.expect_version(1);
  const std::uint32_t ntr = in.u32();
  const std::uint32_t nte = in.u32();
  if (in.remaining() / 4 < static_cast<std::uint64_t>(ntr) + nte)
    fail(Errc::TruncatedFile, "split payload shorter than header claims");
  SplitSpec s;
  s.train.resize(ntr);
  s.test.resize(nte);
  for (auto& v : s.train) v = in.u32();
  for (auto& v : s.test) v = in.u32();
  s.validate();
  return s;
}

// ---- sampling -------------------------------------------------------------

/// Draws `count` descriptor columns: without replacement when count <= N,
/// otherwise uniformly with replacement.
inline Mat sample_features(const DescriptorSet& set, std::size_t count, Rng& rng) {
  const std::size_t n = set.size();
  if (n == 0) fail(Errc::EmptySet, "cannot sample from an empty set");
  if (count == 0) fail(Errc::InvalidArgument, "sample count must be >= 1");
  std::vector<std::size_t> pick(count);
  if (count <= n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
      std::swap(idx[i], idx[j]);
      pick[i] = idx[i];
    }
  } else {
    for (auto& p : pick) p = static_cast<std::size_t>(rng.below(n));
  }
  Mat out(set.dim(), count);
  for (std::size_t j = 0; j < count; ++j)
    for (std::size_t r = 0; r < set.dim(); ++r) out(r, j) = set.descriptors(r, pick[j]);
  return out;
}

// ---- synthetic data -------------------------------------------------------

struct SynthSpec {
  std::size_t classes = 5;
  std::size_t videos_per_class = 40;
  std::size_t descriptors_per_video = 100;
  std::size_t dim = 32;
  std::size_t clusters_per_class = 4;
  double cluster_spread = 0.1;  // per-video jitter of each cluster center
  double noise_sigma = 0.2;     // per-descriptor isotropic noise
  std::size_t channels = 2;
  std::uint64_t seed = 7;

  void validate() const {
    if (!classes || !videos_per_class || !descriptors_per_video || !dim || !clusters_per_class || !channels)
      fail(Errc::ConfigInvalid, "synthetic counts must all be >= 1");
    if (!(cluster_spread > 0.0) || !(noise_sigma > 0.0))
      fail(Errc::ConfigInvalid, "cluster_spread and noise_sigma must be > 0");
    if (classes > 0xFFFE) fail(Errc::ConfigInvalid, "too many classes for a u16 label");
  }
};

struct SynthData {
  std::vector<DescriptorSet> channels;
  SplitSpec split;
  /// centers[channel] is d x (classes * clusters_per_class); column c*m + j
  /// is cluster j of class c.
  std::vector<Mat> centers;
};

inline std::string channel_tag(std::size_t i) {
  static const char* kNames[] = {"hog", "hof"};
  return i < 2 ? kNames[i] : "ch" + std::to_string(i);
}

/// Class-conditional Gaussian mixtures on the unit sphere.
///
/// For every channel, each class owns `clusters_per_class` centers drawn
/// uniformly on the unit sphere. A video draws its own mixture weights and
/// jitters every center of its class by N(0, cluster_spread^2 I); each of its
/// descriptors is a jittered center plus N(0, noise_sigma^2 I). Values are
/// rounded to float so sets round-trip through BWDS exactly. The split puts
/// 60% of each class's videos (seeded shuffle) into training.
inline SynthData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  SynthData out;
  const std::size_t d = spec.dim;
  const std::size_t m = spec.clusters_per_class;
  const std::size_t n_videos = spec.classes * spec.videos_per_class;
  const std::size_t n = n_videos * spec.descriptors_per_video;

  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    Rng rng(derive_seed(spec.seed, "synth/channel/" + std::to_string(ch)));
    Mat centers(d, spec.classes * m);
    Vec c(d);
    for (std::size_t j = 0; j < centers.cols(); ++j) {
      double nrm = 0.0;
      while (nrm < 1e-12) {
        for (auto& x : c) x = rng.normal();
        nrm = norm2(c);
      }
      for (auto& x : c) x /= nrm;
      centers.set_column(j, c);
    }

    DescriptorSet set;
    set.channel = channel_tag(ch);
    set.descriptors = Mat(d, n);
    set.video_id.resize(n);
    std::size_t col = 0;
    Vec weights(m);
    Mat jittered(m, d);
    for (std::size_t cls = 0; cls < spec.classes; ++cls) {
      for (std::size_t vi = 0; vi < spec.videos_per_class; ++vi) {
        const auto video = static_cast<std::uint32_t>(cls * spec.videos_per_class + vi);
        set.video_class[video] = static_cast<std::uint16_t>(cls);
        double wsum = 0.0;
        for (auto& w : weights) wsum += (w = 0.25 + rng.uniform());
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t r = 0; r < d; ++r)
            jittered(j, r) = centers(r, cls * m + j) + spec.cluster_spread * rng.normal();
        for (std::size_t k = 0; k < spec.descriptors_per_video; ++k, ++col) {
          double u = rng.uniform() * wsum;
          std::size_t j = 0;
          while (j + 1 < m && u >= weights[j]) u -= weights[j++];
          for (std::size_t r = 0; r < d; ++r) {
            const double v = jittered(j, r) + spec.noise_sigma * rng.normal();
            set.descriptors(r, col) = static_cast<double>(static_cast<float>(v));
          }
          set.video_id[col] = video;
        }
      }
    }
    out.channels.push_back(std::move(set));
    out.centers.push_back(std::move(centers));
  }

  Rng split_rng(derive_seed(spec.seed, "synth/split"));
  const std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.6 * static_cast<double>(spec.videos_per_class))));
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    std::vector<std::uint32_t> ids(spec.videos_per_class);
    for (std::size_t vi = 0; vi < ids.size(); ++vi)
      ids[vi] = static_cast<std::uint32_t>(cls * spec.videos_per_class + vi);
    split_rng.shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) (i < n_train ? out.split.train : out.split.test).push_back(ids[i]);
  }
  std::sort(out.split.train.begin(), out.split.train.end());
  std::sort(out.split.test.begin(), out.split.test.end());
  return out;
}

}  // namespace bowkit
