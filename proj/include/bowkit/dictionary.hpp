#pragma once

// Unsupervised dictionary learners: random weights (RW), random exemplars
// (RE), K-means, K-SVD with OMP-k coding, and l1 sparse coding.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "bowkit/encoding.hpp"
#include "bowkit/error.hpp"
#include "bowkit/io.hpp"
#include "bowkit/numerics.hpp"
#include "bowkit/parallel.hpp"

namespace bowkit {

enum class Learner { RW, RE, KMeans, KSVD, SC };

struct LearnParams {
  Learner method = Learner::KMeans;
  std::size_t K = 64;
  std::size_t iterations = 50;
  std::size_t sparsity = 2;  // K-SVD only
  double lambda = 0.15;      // SC only
  double tol = 1e-6;         // K-means: max centroid shift; K-SVD/SC: relative objective change
  std::uint64_t seed = 0;
  std::size_t threads = 1;   // coding step inside K-SVD / SC sweeps

  std::string label() const {
    switch (method) {
      case Learner::RW: return "RW";
      case Learner::RE: return "RE";
      case Learner::KMeans: return "K-means";
      case Learner::KSVD: return "OMP-" + std::to_string(sparsity);
      case Learner::SC: return "SC";
    }
    return "?";
  }
};

/// Parses "RW", "RE", "K-means" (or "kmeans"), "OMP-<k>" / "KSVD-<k>", "SC".
inline LearnParams parse_learner(std::string_view label, LearnParams base = {}) {
  std::string s(label);
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (s == "RW") {
    base.method = Learner::RW;
  } else if (s == "RE") {
    base.method = Learner::RE;
  } else if (s == "K-MEANS" || s == "KMEANS") {
    base.method = Learner::KMeans;
  } else if (s == "SC") {
    base.method = Learner::SC;
  } else {
    std::string rest;
    if (s.rfind("OMP-", 0) == 0) rest = s.substr(4);
    else if (s.rfind("KSVD-", 0) == 0) rest = s.substr(5);
    else fail(Errc::ConfigInvalid, "unknown dictionary method '" + std::string(label) + "'");
    if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos)
      fail(Errc::ConfigInvalid, "bad dictionary label '" + std::string(label) + "'");
    base.method = Learner::KSVD;
    base.sparsity = std::stoul(rest);
  }
  return base;
}

struct Dictionary {
  Mat atoms;           // d x K
  std::string method;  // e.g. "kmeans;K=64;iters=50;tol=1e-06;seed=7"
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  Vec objective_trace;
  std::string stop_reason;
  std::vector<std::string> warnings;

  std::size_t dim() const noexcept { return atoms.rows(); }
  std::size_t size() const noexcept { return atoms.cols(); }

  double max_unit_deviation() const {
    double dev = 0.0;
    for (std::size_t j = 0; j < atoms.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < atoms.rows(); ++r) s += atoms(r, j) * atoms(r, j);
      dev = std::max(dev, std::abs(std::sqrt(s) - 1.0));
    }
    return dev;
  }
};

namespace detail {

inline std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::string method_tag(const LearnParams& p, std::string_view name) {
  std::string t = std::string(name) + ";K=" + std::to_string(p.K);
  if (p.method == Learner::KMeans || p.method == Learner::KSVD || p.method == Learner::SC)
    t += ";iters=" + std::to_string(p.iterations) + ";tol=" + fmt_real(p.tol);
  if (p.method == Learner::KSVD) t += ";k=" + std::to_string(p.sparsity);
  if (p.method == Learner::SC) t += ";lambda=" + fmt_real(p.lambda);
  if (p.method == Learner::KMeans) t += ";normalized=no";
  t += ";seed=" + std::to_string(p.seed);
  return t;
}

inline void warn(Dictionary& dict, std::string msg) {
  std::cerr << "[bowkit] warning: " << msg << '\n';
  dict.warnings.push_back(std::move(msg));
}

/// K distinct column indices of an N-column matrix (partial Fisher-Yates).
inline std::vector<std::size_t> distinct_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + static_cast<std::size_t>(rng.below(n - i))]);
  idx.resize(k);
  return idx;
}

inline void require_data(const Mat& x, std::size_t K) {
  if (K < 1) fail(Errc::InvalidArgument, "dictionary size must be >= 1");
  if (x.cols() < K)
    fail(Errc::InsufficientData, std::to_string(x.cols()) + " descriptors for " + std::to_string(K) + " atoms");
}

inline bool stalled(double prev, double cur, double tol) {
  if (cur <= 0.0) return true;
  return (prev - cur) <= tol * std::max(prev, std::numeric_limits<double>::min());
}

/// Sum of squared residuals plus optional l1 term, codes over atoms K x d.
inline double code_objective(const Mat& xt, const Mat& dt, const std::vector<Code>& codes, double lambda,
                             Mat* residual = nullptr) {
  const std::size_t d = xt.cols();
  double total = 0.0;
  Vec r(d);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto x = xt.row(i);
    std::copy(x.begin(), x.end(), r.begin());
    double l1 = 0.0;
    for (std::size_t a = 0; a < codes[i].support.size(); ++a) {
      const double v = codes[i].values[a];
      if (v == 0.0) continue;
      auto atom = dt.row(codes[i].support[a]);
      for (std::size_t k = 0; k < d; ++k) r[k] -= v * atom[k];
      l1 += std::abs(v);
    }
    total += dot(r, r) + lambda * l1;
    if (residual) std::copy(r.begin(), r.end(), residual->row(i).begin());
  }
  return total;
}

inline double single_objective(std::span<const double> x, const Mat& dt, const Code& c, double lambda) {
  Vec r(x.begin(), x.end());
  double l1 = 0.0;
  for (std::size_t a = 0; a < c.support.size(); ++a) {
    const double v = c.values[a];
    if (v == 0.0) continue;
    auto atom = dt.row(c.support[a]);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= v * atom[k];
    l1 += std::abs(v);
  }
  return dot(r, r) + lambda * l1;
}

/// Re-codes every descriptor against `dt` (atoms as rows). A new code only
/// replaces the previous one when it does not raise that descriptor's
/// objective, so a sweep can never undo progress made by the atom update.
inline void recode(const Mat& xt, const Mat& dt, const EncodeParams& ep, double lambda, std::size_t threads,
                   std::vector<Code>& codes, bool have_previous, std::size_t& failures) {
  const Codebook cb(dt.transpose());
  std::vector<char> failed(codes.size(), 0);
  parallel_chunks(codes.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Code fresh;
      try {
        fresh = encode(xt.row(i), cb, ep);
      } catch (const Error&) {
        failed[i] = 1;
        if (!have_previous) codes[i] = Code{cb.size(), {}, {}};
        continue;
      }
      if (have_previous &&
          single_objective(xt.row(i), dt, fresh, lambda) > single_objective(xt.row(i), dt, codes[i], lambda))
        continue;
      codes[i] = std::move(fresh);
    }
  });
  failures = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
}

/// Flips (u, v) so that the largest-magnitude entry of u is positive.
inline void canonical_sign(Vec& u, Vec& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < u.size(); ++i)
    if (std::abs(u[i]) > std::abs(u[arg])) arg = i;
  if (u[arg] < 0.0) {
    for (double& x : u) x = -x;
    for (double& x : v) x = -x;
  }
}

inline Dictionary finish(Mat atoms, const LearnParams& p, std::string_view name) {
  Dictionary d;
  d.atoms = std::move(atoms);
  d.method = method_tag(p, name);
  d.seed = p.seed;
  return d;
}

}  // namespace detail

// ---- RW / RE --------------------------------------------------------------

/// Columns of i.i.d. standard normals, normalized to unit length.
inline Dictionary learn_random_weights(std::size_t d, const LearnParams& p, Rng& rng) {
  if (d < 1 || p.K < 1) fail(Errc::InvalidArgument, "RW needs d >= 1 and K >= 1");
  Mat atoms(d, p.K);
  Vec col(d);
  for (std::size_t j = 0; j < p.K; ++j) {
    double nrm = 0.0;
    while (nrm == 0.0) {
      for (auto& x : col) x = rng.normal();
      nrm = norm2(col);
    }
    for (auto& x : col) x /= nrm;
    atoms.set_column(j, col);
  }
  return detail::finish(std::move(atoms), p, "rw");
}

/// K distinct training descriptors, each normalized to unit length.
inline Dictionary learn_random_exemplars(const Mat& x, const LearnParams& p, Rng& rng) {
  detail::require_data(x, p.K);
  const auto idx = detail::distinct_indices(x.cols(), p.K, rng);
  Mat atoms(x.rows(), p.K);
  for (std::size_t j = 0; j < p.K; ++j) {
    Vec col = x.column(idx[j]);
    const double nrm = norm2(col);
    if (!(nrm > 0.0)) fail(Errc::DegenerateAtom, "sampled descriptor " + std::to_string(idx[j]) + " is zero");
    for (auto& v : col) v /= nrm;
    atoms.set_column(j, col);
  }
  return detail::finish(std::move(atoms), p, "re");
}

// ---- K-means --------------------------------------------------------------

/// Lloyd iterations from explicit initial centroids (d x K).
inline Dictionary kmeans_from(const Mat& x, const Mat& init, const LearnParams& p) {
  detail::require_data(x, init.cols());
  if (init.rows() != x.rows()) fail(Errc::DimensionMismatch, "initial centroids have the wrong dimension");
  const std::size_t n = x.cols(), d = x.rows(), K = init.cols();
  const Mat xt = x.transpose();
  Mat ct = init.transpose();  // K x d
  std::vector<std::size_t> assign(n, 0);
  Vec dist(n), cnorm(K);

  Dictionary out;
  out.stop_reason = "iterations";
  for (std::size_t it = 0; it < p.iterations; ++it) {
    for (std::size_t j = 0; j < K; ++j) cnorm[j] = dot(ct.row(j), ct.row(j));
    // argmin_j ||c_j||^2 - 2 c_j.x  (||x||^2 is common to all j)
    parallel_chunks(n, p.threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        auto xi = xt.row(i);
        std::size_t best = 0;
        double best_v = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < K; ++j) {
          const double v = cnorm[j] - 2.0 * dot(ct.row(j), xi);
          if (v < best_v) {
            best_v = v;
            best = j;
          }
        }
        assign[i] = best;
        dist[i] = sqdist(xi, ct.row(best));
      }
    });
    double obj = 0.0;
    for (double v : dist) obj += v;
    out.objective_trace.push_back(obj);
    out.iterations_run = it + 1;

    Mat sum(K, d);
    std::vector<std::size_t> count(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = sum.row(assign[i]);
      auto xi = xt.row(i);
      for (std::size_t r = 0; r < d; ++r) row[r] += xi[r];
      ++count[assign[i]];
    }
    std::vector<char> taken(n, 0);
    double shift = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      Vec next(d);
      if (count[j] > 0) {
        for (std::size_t r = 0; r < d; ++r) next[r] = sum(j, r) / static_cast<double>(count[j]);
      } else {
        // empty cluster: move it onto the descriptor farthest from its centroid
        std::size_t far = n;
        for (std::size_t i = 0; i < n; ++i)
          if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
        taken[far] = 1;
        auto xf = xt.row(far);
        next.assign(xf.begin(), xf.end());
      }
      shift = std::max(shift, std::sqrt(sqdist(next, ct.row(j))));
      std::copy(next.begin(), next.end(), ct.row(j).begin());
    }
    if (shift < p.tol) {
      out.stop_reason = "converged";
      break;
    }
  }
  out.atoms = ct.transpose();
  out.method = detail::method_tag(p, "kmeans");
  out.seed = p.seed;
  return out;
}

/// K-means initialized from K distinct raw training descriptors.
inline Dictionary learn_kmeans(const Mat& x, const LearnParams& p, Rng& rng) {
  detail::require_data(x, p.K);
  const auto idx = detail::distinct_indices(x.cols(), p.K, rng);
  Mat init(x.rows(), p.K);
  for (std::size_t j = 0; j < p.K; ++j) init.set_column(j, x.column(idx[j]));
  return kmeans_from(x, init, p);
}

// ---- K-SVD ----------------------------------------------------------------

/// K-SVD from an explicit unit-norm initial dictionary.
///
/// Each sweep codes all descriptors with OMP-k, then updates atoms in index
/// order: atom j and its coefficients become the leading singular pair of the
/// residual restricted to the descriptors using j. Unused atoms are replaced
/// by the worst-reconstructed descriptor (normalized). The trace records the
/// reconstruction error after each sweep.
inline Dictionary ksvd_from(const Mat& x, const Mat& init, const LearnParams& p) {
  detail::require_data(x, init.cols());
  if (init.rows() != x.rows()) fail(Errc::DimensionMismatch, "initial dictionary has the wrong dimension");
  const std::size_t n = x.cols(), d = x.rows(), K = init.cols();
  if (p.sparsity < 1 || p.sparsity > std::min(d, K)) fail(Errc::InvalidArgument, "sparsity must be in [1, min(d, K)]");

  const Mat xt = x.transpose();
  Mat dt = init.transpose();  // atoms as rows
  EncodeParams ep;
  ep.method = Encoder::OMP;
  ep.k = p.sparsity;

  Dictionary out;
  out.stop_reason = "iterations";
  std::vector<Code> codes(n);
  Mat resid(n, d);
  double prev = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0; it < p.iterations; ++it) {
    std::size_t failures = 0;
    detail::recode(xt, dt, ep, 0.0, p.threads, codes, it > 0, failures);
    if (failures) detail::warn(out, std::to_string(failures) + " OMP failures in sweep " + std::to_string(it));
    detail::code_objective(xt, dt, codes, 0.0, &resid);

    // users[j] = (descriptor, position within its code)
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> users(K);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < codes[i].support.size(); ++a)
        if (codes[i].values[a] != 0.0) users[codes[i].support[a]].emplace_back(i, a);

    std::vector<char> reseeded(n, 0);
    std::size_t dead = 0;
    for (std::size_t j = 0; j < K; ++j) {
      auto atom = dt.row(j);
      const auto& u = users[j];
      if (u.empty()) {
        std::size_t worst = n;
        double worst_e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (reseeded[i]) continue;
          const double e = dot(resid.row(i), resid.row(i));
          if (e > worst_e) {
            worst_e = e;
            worst = i;
          }
        }
        if (worst == n) continue;
        const double nrm = norm2(xt.row(worst));
        if (!(nrm > 0.0)) continue;
        reseeded[worst] = 1;
        auto xw = xt.row(worst);
        for (std::size_t r = 0; r < d; ++r) atom[r] = xw[r] / nrm;
        ++dead;
        continue;
      }
      // E = residual of the users with atom j's contribution added back
      Mat e(d, u.size());
      for (std::size_t c = 0; c < u.size(); ++c) {
        const auto [i, a] = u[c];
        const double s = codes[i].values[a];
        auto ri = resid.row(i);
        for (std::size_t r = 0; r < d; ++r) e(r, c) = ri[r] + atom[r] * s;
      }
      SingularTriplet t;
      try {
        t = rank1_svd(e, std::span<const double>(atom.data(), atom.size()));
      } catch (const Error& err) {
        if (err.code() != Errc::ZeroMatrix) throw;
        // the other atoms already explain these descriptors exactly
        for (std::size_t c = 0; c < u.size(); ++c) {
          const auto [i, a] = u[c];
          auto ri = resid.row(i);
          for (std::size_t r = 0; r < d; ++r) ri[r] = e(r, c);
          codes[i].values[a] = 0.0;
        }
        continue;
      }
      detail::canonical_sign(t.u, t.v);
      std::copy(t.u.begin(), t.u.end(), atom.begin());
      for (std::size_t c = 0; c < u.size(); ++c) {
        const auto [i, a] = u[c];
        const double s = t.sigma * t.v[c];
        codes[i].values[a] = s;
        auto ri = resid.row(i);
        for (std::size_t r = 0; r < d; ++r) ri[r] = e(r, c) - atom[r] * s;
      }
    }

    double obj = 0.0;
    for (std::size_t i = 0; i < n; ++i) obj += dot(resid.row(i), resid.row(i));
    out.objective_trace.push_back(obj);
    out.iterations_run = it + 1;
    if (dead) detail::warn(out, std::to_string(dead) + " unused atoms replaced in sweep " + std::to_string(it));
    if (it > 0 && detail::stalled(prev, obj, p.tol)) {
      out.stop_reason = "converged";
      break;
    }
    if (obj <= 0.0) {
      out.stop_reason = "exact";
      break;
    }
    prev = obj;
  }
  out.atoms = dt.transpose();
  out.method = detail::method_tag(p, "ksvd");
  out.seed = p.seed;
  return out;
}

inline Dictionary learn_ksvd(const Mat& x, const LearnParams& p, Rng& rng) {
  LearnParams re = p;
  re.method = Learner::RE;
  const Dictionary init = learn_random_exemplars(x, re, rng);
  return ksvd_from(x, init.atoms, p);
}

// ---- l1 sparse coding -----------------------------------------------------

namespace detail {

/// Reconstruction part of the objective for atoms D (d x m) given
/// A = S S^T and B = X S^T, dropping the constant ||X||^2.
inline double recon_value(const Mat& dcols, const Mat& a, const Mat& b) {
  const Mat dta = matmul(dcols, a);  // d x m
  double v = 0.0;
  for (std::size_t r = 0; r < dcols.rows(); ++r)
    for (std::size_t c = 0; c < dcols.cols(); ++c) v += dcols(r, c) * (dta(r, c) - 2.0 * b(r, c));
  return v;
}

/// One cyclic pass of exact per-column minimization over the unit ball.
inline void ball_bcd_sweep(Mat& dcols, const Mat& a, const Mat& b) {
  const std::size_t d = dcols.rows(), m = dcols.cols();
  Vec u(d);
  for (std::size_t j = 0; j < m; ++j) {
    if (!(a(j, j) > 0.0)) continue;
    for (std::size_t r = 0; r < d; ++r) {
      double da = 0.0;
      for (std::size_t k = 0; k < m; ++k) da += dcols(r, k) * a(k, j);
      u[r] = dcols(r, j) + (b(r, j) - da) / a(j, j);
    }
    const double s = std::max(1.0, norm2(u));
    for (std::size_t r = 0; r < d; ++r) dcols(r, j) = u[r] / s;
  }
}

/// min_D ||X - D S||^2 s.t. ||d_j||^2 <= 1 via Newton's method on the
/// Lagrange dual, D = B (A + diag(l))^-1 with l >= 0. Returns D (d x m).
inline Mat lagrange_dual_update(const Mat& a, const Mat& b) {
  const std::size_t m = a.rows(), d = b.rows();
  Vec lam(m, 1.0);
  double trace_a = 0.0;
  for (std::size_t j = 0; j < m; ++j) trace_a += a(j, j);
  const double jitter = 1e-12 * std::max(trace_a / static_cast<double>(m), 1.0);

  auto factor = [&](const Vec& l) {
    Mat al = a;
    for (std::size_t j = 0; j < m; ++j) al(j, j) += std::max(l[j], jitter);
    return Cholesky(al).inverse();
  };
  // dual objective (without constants): -tr(B M B^T) - sum(l)
  auto dual_value = [&](const Mat& minv, const Vec& l) {
    const Mat bm = matmul(b, minv);
    double v = 0.0;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < m; ++c) v -= bm(r, c) * b(r, c);
    for (double x : l) v -= x;
    return v;
  };

  Mat minv = factor(lam);
  double cur = dual_value(minv, lam);
  for (int it = 0; it < 100; ++it) {
    const Mat bm = matmul(b, minv);  // d x m, columns are the candidate atoms
    Vec g(m);
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += bm(r, j) * bm(r, j);
      g[j] = s - 1.0;
    }
    std::vector<std::size_t> freev;
    double pg = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (lam[j] > 0.0 || g[j] > 0.0) {
        freev.push_back(j);
        pg = std::max(pg, std::abs(g[j]));
      }
    if (freev.empty() || pg < 1e-10) break;

    // -Hessian = 2 (M B^T B M) .* M, restricted to the free set
    Mat btb(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i; j < m; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += bm(r, i) * bm(r, j);
        btb(i, j) = s;
        btb(j, i) = s;
      }
    const std::size_t f = freev.size();
    Mat h(f, f);
    Vec gf(f);
    for (std::size_t i = 0; i < f; ++i) {
      gf[i] = g[freev[i]];
      for (std::size_t j = 0; j < f; ++j) h(i, j) = 2.0 * btb(freev[i], freev[j]) * minv(freev[i], freev[j]);
    }
    Vec step;
    try {
      step = Cholesky(h).solve(gf);
    } catch (const Error&) {
      step = gf;  // fall back to gradient ascent
    }

    bool improved = false;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      Vec trial = lam;
      for (std::size_t i = 0; i < f; ++i) trial[freev[i]] = std::max(0.0, lam[freev[i]] + t * step[i]);
      Mat tm;
      try {
        tm = factor(trial);
      } catch (const Error&) {
        continue;
      }
      const double tv = dual_value(tm, trial);
      if (tv > cur) {
        improved = (tv - cur) > 1e-15 * std::max(1.0, std::abs(cur));
        lam = std::move(trial);
        minv = std::move(tm);
        cur = tv;
        break;
      }
    }
    if (!improved) break;
  }
  return matmul(b, minv);
}

}  // namespace detail

/// Alternates feature-sign coding with the l2-ball constrained dictionary
/// update (Lagrange dual, then exact per-column polishing). Used atoms that
/// end up inside the ball are rescaled to unit norm with their coefficients
/// scaled to match, which keeps D S fixed and can only shrink the l1 term.
inline Dictionary sc_from(const Mat& x, const Mat& init, const LearnParams& p) {
  detail::require_data(x, init.cols());
  if (init.rows() != x.rows()) fail(Errc::DimensionMismatch, "initial dictionary has the wrong dimension");
  if (!(p.lambda > 0.0)) fail(Errc::InvalidArgument, "SC learning needs lambda > 0");
  const std::size_t n = x.cols(), d = x.rows(), K = init.cols();
  const Mat xt = x.transpose();
  Mat dt = init.transpose();
  EncodeParams ep;
  ep.method = Encoder::SC;
  ep.lambda = p.lambda;

  Dictionary out;
  out.stop_reason = "iterations";
  std::vector<Code> codes(n);
  double prev = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0; it < p.iterations; ++it) {
    std::size_t failures = 0;
    detail::recode(xt, dt, ep, p.lambda, p.threads, codes, it > 0, failures);
    if (failures)
      detail::warn(out, std::to_string(failures) + " feature-sign failures in sweep " + std::to_string(it));

    // used atoms and their dense index
    std::vector<std::size_t> slot(K, K);
    std::vector<std::size_t> used;
    for (const auto& c : codes)
      for (std::size_t a = 0; a < c.support.size(); ++a)
        if (c.values[a] != 0.0 && slot[c.support[a]] == K) {
          slot[c.support[a]] = used.size();
          used.push_back(c.support[a]);
        }
    std::sort(used.begin(), used.end());
    for (std::size_t u = 0; u < used.size(); ++u) slot[used[u]] = u;

    if (used.empty()) {
      detail::warn(out, "all codes are zero in sweep " + std::to_string(it) + "; dictionary unchanged");
    } else {
      const std::size_t m = used.size();
      Mat a(m, m), b(d, m);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& c = codes[i];
        auto xi = xt.row(i);
        for (std::size_t p1 = 0; p1 < c.support.size(); ++p1) {
          const double v1 = c.values[p1];
          if (v1 == 0.0) continue;
          const std::size_t s1 = slot[c.support[p1]];
          for (std::size_t r = 0; r < d; ++r) b(r, s1) += xi[r] * v1;
          for (std::size_t p2 = 0; p2 < c.support.size(); ++p2) {
            const double v2 = c.values[p2];
            if (v2 != 0.0) a(s1, slot[c.support[p2]]) += v1 * v2;
          }
        }
      }
      Mat old_cols(d, m);
      for (std::size_t u = 0; u < m; ++u)
        for (std::size_t r = 0; r < d; ++r) old_cols(r, u) = dt(used[u], r);

      Mat cand;
      try {
        cand = detail::lagrange_dual_update(a, b);
      } catch (const Error&) {
        cand = old_cols;
      }
      for (std::size_t u = 0; u < m; ++u) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += cand(r, u) * cand(r, u);
        s = std::sqrt(s);
        if (s > 1.0 || !std::isfinite(s))
          for (std::size_t r = 0; r < d; ++r) cand(r, u) = std::isfinite(s) ? cand(r, u) / s : old_cols(r, u);
      }
      for (int sweep = 0; sweep < 2; ++sweep) detail::ball_bcd_sweep(cand, a, b);
      if (detail::recon_value(cand, a, b) > detail::recon_value(old_cols, a, b)) {
        cand = old_cols;
        for (int sweep = 0; sweep < 3; ++sweep) detail::ball_bcd_sweep(cand, a, b);
      }

      // unit-normalize used columns; move the scale into the coefficients
      Vec scale(m, 1.0);
      for (std::size_t u = 0; u < m; ++u) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += cand(r, u) * cand(r, u);
        s = std::sqrt(s);
        if (s > 1e-12) {
          scale[u] = s;
          for (std::size_t r = 0; r < d; ++r) dt(used[u], r) = cand(r, u) / s;
        } else {
          scale[u] = 0.0;  // collapsed atom: keep the old column, drop its coefficients
        }
      }
      for (auto& c : codes)
        for (std::size_t a2 = 0; a2 < c.support.size(); ++a2)
          if (c.values[a2] != 0.0 && slot[c.support[a2]] < m) c.values[a2] *= scale[slot[c.support[a2]]];
    }

    const double obj = detail::code_objective(xt, dt, codes, p.lambda);
    out.objective_trace.push_back(obj);
    out.iterations_run = it + 1;
    if (it > 0 && detail::stalled(prev, obj, p.tol)) {
      out.stop_reason = "converged";
      break;
    }
    prev = obj;
  }
  out.atoms = dt.transpose();
  out.method = detail::method_tag(p, "sc");
  out.seed = p.seed;
  return out;
}

inline Dictionary learn_sc(const Mat& x, const LearnParams& p, Rng& rng) {
  LearnParams re = p;
  re.method = Learner::RE;
  const Dictionary init = learn_random_exemplars(x, re, rng);
  return sc_from(x, init.atoms, p);
}

// ---- dispatch / file format -----------------------------------------------

/// Runs the configured learner with an Rng seeded from params.seed.
inline Dictionary learn_dictionary(const Mat& x, const LearnParams& p) {
  Rng rng(p.seed);
  switch (p.method) {
    case Learner::RW: return learn_random_weights(x.rows(), p, rng);
    case Learner::RE: return learn_random_exemplars(x, p, rng);
    case Learner::KMeans: return learn_kmeans(x, p, rng);
    case Learner::KSVD: return learn_ksvd(x, p, rng);
    case Learner::SC: return learn_sc(x, p, rng);
  }
  fail(Errc::InvalidArgument, "unknown learner");
}

inline void save_dictionary(const Dictionary& dict, const std::string& path) {
  io::Writer w;
  w.magic("BWDC");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(dict.dim()));
  w.u32(static_cast<std::uint32_t>(dict.size()));
  w.tag(dict.method);
  w.u64(dict.seed);
  for (std::size_t c = 0; c < dict.size(); ++c)
    for (std::size_t r = 0; r < dict.dim(); ++r) w.f32(static_cast<float>(dict.atoms(r, c)));
  w.save(path);
}

inline Dictionary load_dictionary(const std::string& path) {
  auto in = io::Reader::open(path);
  in.expect_magic("BWDC");
  in.expect_version(1);
  const std::uint32_t d = in.u32();
  const std::uint32_t k = in.u32();
  Dictionary dict;
  dict.method = in.tag();
  dict.seed = in.u64();
  if (d == 0 || k == 0) fail(Errc::InvalidData, "empty dictionary");
  if (in.remaining() / 4 < static_cast<std::uint64_t>(d) * k) fail(Errc::TruncatedFile, "dictionary payload");
  dict.atoms = Mat(d, k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t r = 0; r < d; ++r) dict.atoms(r, c) = in.finite_f32();
  return dict;
}

/// Copy with every column scaled to unit length (zero columns left as-is).
inline Mat normalized_columns(const Mat& atoms) {
  Mat out = atoms;
  for (std::size_t c = 0; c < out.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < out.rows(); ++r) s += out(r, c) * out(r, c);
    s = std::sqrt(s);
    if (s > 0.0)
      for (std::size_t r = 0; r < out.rows(); ++r) out(r, c) /= s;
  }
  return out;
}

}  // namespace bowkit
