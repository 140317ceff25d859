#pragma once

// Per-video sum pooling of codes and Power+L2 histogram normalization.

#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "bowkit/data.hpp"
#include "bowkit/dictionary.hpp"
#include "bowkit/encoding.hpp"
#include "bowkit/error.hpp"
#include "bowkit/io.hpp"
#include "bowkit/numerics.hpp"
#include "bowkit/parallel.hpp"

namespace bowkit {

struct VideoHistogram {
  std::uint32_t video_id = 0;
  std::uint16_t class_id = kUnlabeled;
  std::string channel;
  Vec values;
  std::string normalization = "none";
  bool zero = false;  // pooled vector was all-zero
};

struct Pooled {
  Vec values;
  bool zero = true;
};

/// h_i = sum_n |s_ni|, accumulated in ascending n then ascending i.
inline Pooled pool_sum(const std::vector<Code>& codes, std::size_t K) {
  Pooled out{Vec(K, 0.0), true};
  for (const auto& c : codes) {
    if (c.length != K) fail(Errc::LengthMismatch, "code of length " + std::to_string(c.length) + ", expected " + std::to_string(K));
    for (std::size_t a = 0; a < c.support.size(); ++a) {
      if (c.support[a] >= K) fail(Errc::LengthMismatch, "code index out of range");
      out.values[c.support[a]] += std::abs(c.values[a]);
    }
  }
  for (double v : out.values)
    if (v != 0.0) {
      out.zero = false;
      break;
    }
  return out;
}

/// g_i = sign(h_i)|h_i|^alpha, then g / ||g||. All-zero input is returned unchanged.
inline Vec normalize_power_l2(const Vec& h, double alpha, bool* was_zero = nullptr) {
  if (!(alpha > 0.0 && alpha <= 1.0)) fail(Errc::InvalidArgument, "alpha must lie in (0, 1]");
  Vec g(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double m = std::pow(std::abs(h[i]), alpha);
    g[i] = h[i] < 0.0 ? -m : m;
  }
  const double n = norm2(g);
  if (was_zero) *was_zero = !(n > 0.0);
  if (!(n > 0.0)) return h;
  for (double& v : g) v /= n;
  return g;
}

/// One histogram per video, in ascending video id. Videos are processed
/// concurrently (params.threads); each video's pooling is sequential.
inline std::vector<VideoHistogram> build_histograms(const DescriptorSet& set, const Mat& dictionary,
                                                    const EncodeParams& params, double alpha) {
  set.validate();
  params.validate();
  if (set.dim() != dictionary.rows()) fail(Errc::DimensionMismatch, "descriptor dim differs from dictionary dim");
  std::map<std::uint32_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < set.size(); ++i) members[set.video_id[i]].push_back(i);

  const Codebook cb(dictionary);
  const std::size_t K = dictionary.cols();
  std::vector<std::pair<std::uint32_t, const std::vector<std::size_t>*>> order;
  for (const auto& [v, idx] : members) order.emplace_back(v, &idx);
  std::vector<VideoHistogram> out(order.size());

  EncodeParams single = params;
  single.threads = 1;
  std::size_t first_bad = order.size();
  std::exception_ptr first_err;
  std::mutex mu;
  parallel_chunks(order.size(), params.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t v = lo; v < hi; ++v) {
      try {
        const auto& idx = *order[v].second;
        Mat x(set.dim(), idx.size());
        for (std::size_t c = 0; c < idx.size(); ++c)
          for (std::size_t r = 0; r < set.dim(); ++r) x(r, c) = set.descriptors(r, idx[c]);
        const Pooled p = pool_sum(encode_batch(x, cb, single), K);
        VideoHistogram& h = out[v];
        h.video_id = order[v].first;
        h.class_id = set.class_of(h.video_id);
        h.channel = set.channel;
        h.values = normalize_power_l2(p.values, alpha, &h.zero);
        h.normalization = "power-l2;alpha=" + detail::fmt_real(alpha);
      } catch (const Error&) {
        std::lock_guard lock(mu);
        if (v < first_bad) {
          first_bad = v;
          first_err = std::current_exception();
        }
        return;
      }
    }
  });
  if (first_err) std::rethrow_exception(first_err);
  return out;
}

inline std::vector<VideoHistogram> build_histograms(const DescriptorSet& set, const Dictionary& dict,
                                                    const EncodeParams& params, double alpha) {
  return build_histograms(set, dict.atoms, params, alpha);
}

// ---- BWHS -----------------------------------------------------------------

inline void save_histograms(const std::vector<VideoHistogram>& hs, const std::string& path) {
  if (hs.empty()) fail(Errc::InvalidArgument, "no histograms to save");
  const std::size_t K = hs.front().values.size();
  io::Writer w;
  w.magic("BWHS");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(K));
  w.u32(static_cast<std::uint32_t>(hs.size()));
  w.tag(hs.front().channel);
  for (const auto& h : hs) {
    if (h.values.size() != K) fail(Errc::LengthMismatch, "histograms differ in length");
    w.u32(h.video_id);
    w.u16(h.class_id);
    for (double v : h.values) w.f32(static_cast<float>(v));
  }
  w.save(path);
}

inline std::vector<VideoHistogram> load_histograms(const std::string& path) {
  auto in = io::Reader::open(path);
  in.expect_magic("BWHS");
  in.expect_version(1);
  const std::uint32_t K = in.u32();
  const std::uint32_t n = in.u32();
  const std::string channel = in.tag();
  if (K == 0) fail(Errc::InvalidData, "histogram length is zero");
  if (in.remaining() / (6 + 4ull * K) < n) fail(Errc::TruncatedFile, "histogram payload");
  std::vector<VideoHistogram> out(n);
  for (auto& h : out) {
    h.video_id = in.u32();
    h.class_id = in.u16();
    h.channel = channel;
    h.normalization = "loaded";
    h.values.resize(K);
    bool any = false;
    for (auto& v : h.values) {
      v = in.finite_f32();
      any = any || v != 0.0;
    }
    h.zero = !any;
  }
  return out;
}

}  // namespace bowkit
