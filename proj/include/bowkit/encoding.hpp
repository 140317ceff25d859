#pragma once

// Descriptor encoders: VQ, soft assignment (SA-k), OMP-k, l1 sparse coding by
// feature-sign search, and locality-constrained linear coding (k-NN and full).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "bowkit/error.hpp"
#include "bowkit/numerics.hpp"
#include "bowkit/parallel.hpp"

namespace bowkit {

/// Sparse coefficient vector over K atoms. `support` is sorted and unique.
struct Code {
  std::size_t length = 0;
  std::vector<std::uint32_t> support;
  std::vector<double> values;

  std::size_t nnz() const noexcept {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return v != 0.0; }));
  }

  Vec dense() const {
    Vec out(length, 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) out[support[i]] = values[i];
    return out;
  }

  double at(std::size_t j) const {
    auto it = std::lower_bound(support.begin(), support.end(), static_cast<std::uint32_t>(j));
    return (it != support.end() && *it == j) ? values[static_cast<std::size_t>(it - support.begin())] : 0.0;
  }

  friend bool operator==(const Code&, const Code&) = default;
};

/// Builds a Code from (index, value) pairs in any order.
inline Code make_code(std::size_t length, std::vector<std::pair<std::uint32_t, double>> entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Code c;
  c.length = length;
  c.support.reserve(entries.size());
  c.values.reserve(entries.size());
  for (const auto& [i, v] : entries) {
    c.support.push_back(i);
    c.values.push_back(v);
  }
  return c;
}

/// Dictionary atoms laid out contiguously (K x d) with cached squared norms.
class Codebook {
 public:
  explicit Codebook(const Mat& dict) : dim_(dict.rows()), size_(dict.cols()), atoms_(dict.transpose()) {
    if (size_ == 0 || dim_ == 0) fail(Errc::DimensionMismatch, "empty dictionary");
    sqnorm_.resize(size_);
    for (std::size_t j = 0; j < size_; ++j) {
      sqnorm_[j] = dot(atoms_.row(j), atoms_.row(j));
      max_unit_dev_ = std::max(max_unit_dev_, std::abs(std::sqrt(sqnorm_[j]) - 1.0));
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return size_; }
  std::span<const double> atom(std::size_t j) const noexcept { return atoms_.row(j); }
  double sqnorm(std::size_t j) const noexcept { return sqnorm_[j]; }
  bool unit_norm(double tol = 1e-6) const noexcept { return max_unit_dev_ <= tol; }

  /// Squared distances from x to every atom.
  void distances(std::span<const double> x, Vec& out) const {
    out.resize(size_);
    for (std::size_t j = 0; j < size_; ++j) out[j] = sqdist(x, atoms_.row(j));
  }

  /// D^T x
  void correlate(std::span<const double> x, Vec& out) const {
    out.resize(size_);
    for (std::size_t j = 0; j < size_; ++j) out[j] = dot(atoms_.row(j), x);
  }

 private:
  std::size_t dim_;
  std::size_t size_;
  Mat atoms_;
  Vec sqnorm_;
  double max_unit_dev_ = 0.0;
};

enum class Encoder { VQ, SA, OMP, SC, LLC, LLCFull };

struct EncodeParams {
  Encoder method = Encoder::VQ;
  std::size_t k = 5;      // neighbours (SA, LLC) or sparsity (OMP)
  double beta = 1.0;      // SA smoothing
  double lambda = 0.15;   // SC l1 weight, LLC ridge / locality weight
  double sigma = 1.0;     // LLC-full locality bandwidth
  double tol = 1e-9;      // inner solves
  /// SA: normalize over the k nearest atoms instead of all K.
  bool sa_knn_denominator = false;
  /// SC: cap on feature-sign steps; 0 means 10 * K.
  std::size_t max_steps = 0;
  /// encode_batch worker threads; 0 means hardware concurrency.
  std::size_t threads = 1;

  void validate() const {
    if (k < 1) fail(Errc::InvalidArgument, "k must be >= 1");
    if (!(beta > 0.0) || !(sigma > 0.0)) fail(Errc::InvalidArgument, "beta and sigma must be > 0");
    if (!(lambda >= 0.0)) fail(Errc::InvalidArgument, "lambda must be >= 0");
    if (method == Encoder::SC && !(lambda > 0.0)) fail(Errc::InvalidArgument, "SC needs lambda > 0");
  }

  std::string label() const {
    switch (method) {
      case Encoder::VQ: return "VQ";
      case Encoder::SA: return "SA-" + std::to_string(k);
      case Encoder::OMP: return "OMP-" + std::to_string(k);
      case Encoder::SC: return "SC";
      case Encoder::LLC: return "LLC-" + std::to_string(k);
      case Encoder::LLCFull: return "LLC-FULL";
    }
    return "?";
  }
};

/// Parses "VQ", "SA-5", "OMP-10", "SC", "LLC-2", "LLC-FULL" (case-insensitive)
/// on top of `base`, which supplies beta / lambda / sigma / tol.
inline EncodeParams parse_encoder(std::string_view label, EncodeParams base = {}) {
  std::string s(label);
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  auto with_k = [&](std::string_view prefix, Encoder e) -> bool {
    if (s.rfind(prefix, 0) != 0) return false;
    const std::string rest = s.substr(prefix.size());
    if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
      fail(Errc::ConfigInvalid, "bad encoder label '" + std::string(label) + "'");
    base.method = e;
    base.k = std::stoul(rest);
    return true;
  };
  if (s == "VQ") {
    base.method = Encoder::VQ;
  } else if (s == "SC") {
    base.method = Encoder::SC;
  } else if (s == "LLC-FULL") {
    base.method = Encoder::LLCFull;
  } else if (!with_k("SA-", Encoder::SA) && !with_k("OMP-", Encoder::OMP) && !with_k("LLC-", Encoder::LLC)) {
    fail(Errc::ConfigInvalid, "unknown encoder '" + std::string(label) + "'");
  }
  base.validate();
  return base;
}

namespace detail {

inline void check_dim(std::span<const double> x, const Codebook& cb) {
  if (x.size() != cb.dim())
    fail(Errc::DimensionMismatch, "descriptor has " + std::to_string(x.size()) + " dims, dictionary " +
                                      std::to_string(cb.dim()));
}

/// Indices of the k smallest entries, ordered by (value, index).
inline std::vector<std::uint32_t> k_smallest(const Vec& v, std::size_t k) {
  std::vector<std::uint32_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto less = [&](std::uint32_t a, std::uint32_t b) { return v[a] < v[b] || (v[a] == v[b] && a < b); };
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
  idx.resize(k);
  return idx;
}

/// Minimizes c^T (Z Z^T + diag(ridge)) c subject to sum(c) = 1, where the
/// rows of Z are (atom - x). Solves the (m+1) x (m+1) KKT system.
inline Vec affine_ls(const Mat& z, const Vec& ridge) {
  const std::size_t m = z.rows();
  Mat kkt(m + 1, m + 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      const double g = 2.0 * dot(z.row(i), z.row(j));
      kkt(i, j) = g;
      kkt(j, i) = g;
    }
    kkt(i, i) += 2.0 * ridge[i];
    kkt(i, m) = 1.0;
    kkt(m, i) = 1.0;
  }
  Vec rhs(m + 1, 0.0);
  rhs[m] = 1.0;
  Vec sol;
  try {
    sol = solve_linear(kkt, rhs);
  } catch (const Error& e) {
    if (e.code() != Errc::SingularMatrix) throw;
    // Degenerate neighbourhood (e.g. repeated atoms): add a tiny ridge.
    double tr = 0.0;
    for (std::size_t i = 0; i < m; ++i) tr += kkt(i, i);
    for (std::size_t i = 0; i < m; ++i) kkt(i, i) += 1e-10 * std::max(tr, 1.0);
    sol = solve_linear(kkt, rhs);
  }
  sol.resize(m);
  return sol;
}

}  // namespace detail

// ---- VQ -------------------------------------------------------------------

inline Code encode_vq(std::span<const double> x, const Codebook& cb) {
  detail::check_dim(x, cb);
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cb.size(); ++j) {
    const double dj = sqdist(x, cb.atom(j));
    if (dj < best_d) {
      best_d = dj;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return Code{cb.size(), {best}, {1.0}};
}

// ---- SA-k -----------------------------------------------------------------

/// Soft assignment restricted to the k nearest atoms. The denominator sums
/// over all K atoms unless `sa_knn_denominator` is set.
inline Code encode_sa(std::span<const double> x, const Codebook& cb, const EncodeParams& p) {
  detail::check_dim(x, cb);
  if (p.k > cb.size()) fail(Errc::InvalidArgument, "SA k exceeds dictionary size");
  Vec dist;
  cb.distances(x, dist);
  const auto nn = detail::k_smallest(dist, p.k);
  const double dmin = dist[nn.front()];  // shift for stability; cancels in the ratio
  double denom = 0.0;
  if (p.sa_knn_denominator) {
    for (auto j : nn) denom += std::exp(-p.beta * (dist[j] - dmin));
  } else {
    for (double dj : dist) denom += std::exp(-p.beta * (dj - dmin));
  }
  std::vector<std::pair<std::uint32_t, double>> e;
  e.reserve(nn.size());
  for (auto j : nn) e.emplace_back(j, std::exp(-p.beta * (dist[j] - dmin)) / denom);
  return make_code(cb.size(), std::move(e));
}

// ---- OMP-k ----------------------------------------------------------------

/// Orthogonal matching pursuit. Atoms must be unit norm.
inline Code encode_omp(std::span<const double> x, const Codebook& cb, const EncodeParams& p) {
  detail::check_dim(x, cb);
  if (!cb.unit_norm()) fail(Errc::NotUnitNorm, "OMP requires unit-norm atoms");
  if (p.k > std::min(cb.dim(), cb.size())) fail(Errc::InvalidArgument, "OMP k exceeds min(d, K)");

  const std::size_t d = cb.dim();
  std::vector<std::uint32_t> sel;
  std::vector<char> used(cb.size(), 0);
  Vec coef, r(x.begin(), x.end()), corr;
  const double scale = std::max(1.0, norm2(x));

  for (std::size_t step = 0; step < p.k; ++step) {
    cb.correlate(r, corr);
    std::size_t best = cb.size();
    double best_abs = 0.0;
    for (std::size_t j = 0; j < cb.size(); ++j) {
      if (used[j]) continue;
      const double a = std::abs(corr[j]);
      if (a > best_abs) {
        best_abs = a;
        best = j;
      }
    }
    if (best == cb.size() || best_abs <= 1e-14 * scale) break;  // residual orthogonal to all atoms
    used[best] = 1;
    sel.push_back(static_cast<std::uint32_t>(best));

    const std::size_t m = sel.size();
    Mat g(m, m);
    Vec rhs(m);
    for (std::size_t a = 0; a < m; ++a) {
      rhs[a] = dot(cb.atom(sel[a]), x);
      for (std::size_t b = a; b < m; ++b) {
        const double v = dot(cb.atom(sel[a]), cb.atom(sel[b]));
        g(a, b) = v;
        g(b, a) = v;
      }
    }
    try {
      coef = Cholesky(g).solve(rhs);
    } catch (const Error& e) {
      if (e.code() == Errc::NotPositiveDefinite) fail(Errc::SingularSupport, "OMP support Gram is singular");
      throw;
    }
    r.assign(x.begin(), x.end());
    for (std::size_t a = 0; a < m; ++a) {
      auto atom = cb.atom(sel[a]);
      for (std::size_t i = 0; i < d; ++i) r[i] -= coef[a] * atom[i];
    }
  }
  std::vector<std::pair<std::uint32_t, double>> e;
  for (std::size_t a = 0; a < sel.size(); ++a) e.emplace_back(sel[a], coef[a]);
  return make_code(cb.size(), std::move(e));
}

// ---- SC (feature-sign search) ---------------------------------------------

/// Solves min_s ||x - D s||^2 + lambda ||s||_1 by feature-sign search.
inline Code encode_sc(std::span<const double> x, const Codebook& cb, const EncodeParams& p) {
  detail::check_dim(x, cb);
  if (!(p.lambda > 0.0)) fail(Errc::InvalidArgument, "SC needs lambda > 0");
  const std::size_t K = cb.size();
  const double lambda = p.lambda;
  const std::size_t cap = p.max_steps ? p.max_steps : 10 * K;

  Vec c0;  // D^T x
  cb.correlate(x, c0);
  double cmax = 0.0;
  for (double v : c0) cmax = std::max(cmax, std::abs(v));
  // with s = 0 the gradient is -2 D^T x
  if (2.0 * cmax <= lambda) return Code{K, {}, {}};

  const double tol = p.tol * std::max(1.0, 2.0 * cmax);
  const double xx = dot(x, x);

  // Gram columns D^T d_j for atoms that ever become active.
  std::vector<Vec> gcol(K);
  auto gram_col = [&](std::size_t j) -> const Vec& {
    if (gcol[j].empty()) cb.correlate(cb.atom(j), gcol[j]);
    return gcol[j];
  };

  Vec s(K, 0.0);
  std::vector<int> theta(K, 0);
  std::vector<std::size_t> active;

  // gradient of ||x - Ds||^2: -2 (D^T x - G s)
  Vec grad(K);
  auto compute_grad = [&] {
    for (std::size_t j = 0; j < K; ++j) grad[j] = -2.0 * c0[j];
    for (auto a : active) {
      if (s[a] == 0.0) continue;
      const Vec& g = gram_col(a);
      for (std::size_t j = 0; j < K; ++j) grad[j] += 2.0 * g[j] * s[a];
    }
  };
  // objective restricted to the active set, via the Gram form
  auto objective = [&](const Vec& sa) {
    double quad = 0.0, lin = 0.0, l1 = 0.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (sa[a] == 0.0) continue;
      const Vec& g = gram_col(active[a]);
      lin += sa[a] * c0[active[a]];
      l1 += std::abs(sa[a]);
      for (std::size_t b = 0; b < active.size(); ++b) quad += sa[a] * g[active[b]] * sa[b];
    }
    return xx - 2.0 * lin + quad + lambda * l1;
  };

  std::size_t steps = 0;
  compute_grad();
  for (;;) {
    // Activate the zero coefficient with the steepest violation, if any.
    std::size_t pick = K;
    double pick_abs = lambda + tol;
    for (std::size_t j = 0; j < K; ++j) {
      if (s[j] != 0.0 || theta[j] != 0) continue;
      if (std::abs(grad[j]) > pick_abs) {
        pick_abs = std::abs(grad[j]);
        pick = j;
      }
    }
    if (pick == K) {
      bool nonzero_ok = true;
      for (auto a : active)
        if (std::abs(grad[a] + lambda * theta[a]) > tol) nonzero_ok = false;
      if (nonzero_ok) break;
    } else {
      theta[pick] = grad[pick] > 0.0 ? -1 : 1;
      active.push_back(pick);
    }

    // Feature-sign steps until the active coefficients are optimal.
    for (;;) {
      if (++steps > cap) fail(Errc::MaxIterations, "feature-sign exceeded " + std::to_string(cap) + " steps");
      const std::size_t m = active.size();
      Mat g(m, m);
      Vec rhs(m), cur(m);
      for (std::size_t a = 0; a < m; ++a) {
        const Vec& ga = gram_col(active[a]);
        for (std::size_t b = 0; b < m; ++b) g(a, b) = ga[active[b]];
        rhs[a] = c0[active[a]] - 0.5 * lambda * theta[active[a]];
        cur[a] = s[active[a]];
      }
      Vec target;
      try {
        target = Cholesky(g).solve(rhs);
      } catch (const Error& e) {
        if (e.code() != Errc::NotPositiveDefinite) throw;
        double tr = 0.0;
        for (std::size_t a = 0; a < m; ++a) tr += g(a, a);
        for (std::size_t a = 0; a < m; ++a) g(a, a) += 1e-10 * std::max(tr, 1.0);
        target = Cholesky(g).solve(rhs);
      }

      // Discrete line search over the full step and every sign crossing.
      Vec best = target;
      double best_f = objective(target);
      for (std::size_t a = 0; a < m; ++a) {
        if (cur[a] == 0.0 || (cur[a] > 0.0) == (target[a] > 0.0)) continue;
        if (target[a] == 0.0) continue;
        const double t = cur[a] / (cur[a] - target[a]);
        Vec cand(m);
        for (std::size_t b = 0; b < m; ++b) cand[b] = cur[b] + t * (target[b] - cur[b]);
        cand[a] = 0.0;
        const double f = objective(cand);
        if (f < best_f) {
          best_f = f;
          best = std::move(cand);
        }
      }

      std::vector<std::size_t> kept;
      for (std::size_t a = 0; a < m; ++a) {
        const std::size_t j = active[a];
        s[j] = best[a];
        if (best[a] == 0.0) {
          theta[j] = 0;
        } else {
          theta[j] = best[a] > 0.0 ? 1 : -1;
          kept.push_back(j);
        }
      }
      active.swap(kept);
      compute_grad();

      bool nonzero_ok = true;
      for (auto a : active)
        if (std::abs(grad[a] + lambda * theta[a]) > tol) nonzero_ok = false;
      if (nonzero_ok) break;
    }
  }

  std::vector<std::pair<std::uint32_t, double>> e;
  for (auto a : active)
    if (s[a] != 0.0) e.emplace_back(static_cast<std::uint32_t>(a), s[a]);
  return make_code(K, std::move(e));
}

// ---- LLC ------------------------------------------------------------------

/// LLC restricted to the k nearest atoms with a plain ridge:
/// min ||x - B c||^2 + lambda ||c||^2  s.t. sum(c) = 1.
inline Code encode_llc_knn(std::span<const double> x, const Codebook& cb, const EncodeParams& p) {
  detail::check_dim(x, cb);
  if (p.k > cb.size()) fail(Errc::InvalidArgument, "LLC k exceeds dictionary size");
  Vec dist;
  cb.distances(x, dist);
  const auto nn = detail::k_smallest(dist, p.k);
  const std::size_t m = nn.size();
  Mat z(m, cb.dim());
  for (std::size_t a = 0; a < m; ++a) {
    auto atom = cb.atom(nn[a]);
    auto row = z.row(a);
    for (std::size_t i = 0; i < cb.dim(); ++i) row[i] = atom[i] - x[i];
  }
  const Vec c = detail::affine_ls(z, Vec(m, p.lambda));
  std::vector<std::pair<std::uint32_t, double>> e;
  for (std::size_t a = 0; a < m; ++a) e.emplace_back(nn[a], c[a]);
  return make_code(cb.size(), std::move(e));
}

/// Full LLC over all K atoms with locality adaptor e_j = exp(||x - d_j|| / sigma):
/// min ||x - D s||^2 + lambda ||e . s||^2  s.t. sum(s) = 1.
inline Code encode_llc_full(std::span<const double> x, const Codebook& cb, const EncodeParams& p) {
  detail::check_dim(x, cb);
  if (!(p.sigma > 0.0)) fail(Errc::InvalidArgument, "LLC sigma must be > 0");
  const std::size_t K = cb.size();
  Mat z(K, cb.dim());
  Vec ridge(K);
  for (std::size_t j = 0; j < K; ++j) {
    auto atom = cb.atom(j);
    auto row = z.row(j);
    for (std::size_t i = 0; i < cb.dim(); ++i) row[i] = atom[i] - x[i];
    // e_j^2 = exp(2 dist / sigma); exponent capped to stay finite
    const double ex = std::min(2.0 * norm2(row) / p.sigma, 700.0);
    ridge[j] = p.lambda * std::exp(ex);
  }
  const Vec s = detail::affine_ls(z, ridge);
  std::vector<std::pair<std::uint32_t, double>> e;
  for (std::size_t j = 0; j < K; ++j) e.emplace_back(static_cast<std::uint32_t>(j), s[j]);
  return make_code(K, std::move(e));
}

// ---- dispatch / batch -----------------------------------------------------

inline Code encode(std::span<const double> x, const Codebook& cb, const EncodeParams& p) {
  switch (p.method) {
    case Encoder::VQ: return encode_vq(x, cb);
    case Encoder::SA: return encode_sa(x, cb, p);
    case Encoder::OMP: return encode_omp(x, cb, p);
    case Encoder::SC: return encode_sc(x, cb, p);
    case Encoder::LLC: return encode_llc_knn(x, cb, p);
    case Encoder::LLCFull: return encode_llc_full(x, cb, p);
  }
  fail(Errc::InvalidArgument, "unknown encoder");
}

/// Failure of one descriptor inside encode_batch.
class EncodeError : public Error {
 public:
  EncodeError(std::size_t index, const Error& cause)
      : Error(cause.code(), "descriptor " + std::to_string(index) + ": " + cause.what()), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Encodes every column of X (d x N). Output order and values do not depend
/// on the thread count: each code is a pure function of its column.
inline std::vector<Code> encode_batch(const Mat& x, const Codebook& cb, const EncodeParams& p) {
  p.validate();
  const std::size_t n = x.cols();
  if (x.rows() != cb.dim()) fail(Errc::DimensionMismatch, "descriptor matrix rows differ from dictionary dim");
  const Mat xt = x.transpose();
  std::vector<Code> out(n);

  std::size_t first_bad = n;
  std::exception_ptr first_err;
  std::mutex mu;

  parallel_chunks(n, p.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      try {
        out[i] = encode(xt.row(i), cb, p);
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        if (i < first_bad) {
          first_bad = i;
          first_err = std::make_exception_ptr(EncodeError(i, e));
        }
        return;
      }
    }
  });
  if (first_err) std::rethrow_exception(first_err);
  return out;
}

/// Debug dump: one "descriptor_index,atom_index,value" line per stored entry.
inline void write_codes_csv(const std::vector<Code>& codes, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoFailure, "cannot open " + path);
  out << "descriptor_index,atom_index,value\n";
  char buf[64];
  for (std::size_t i = 0; i < codes.size(); ++i)
    for (std::size_t a = 0; a < codes[i].support.size(); ++a) {
      std::snprintf(buf, sizeof buf, "%.17g", codes[i].values[a]);
      out << i << ',' << codes[i].support[a] << ',' << buf << '\n';
    }
  if (!out) fail(Errc::IoFailure, "short write to " + path);
}

}  // namespace bowkit
