#pragma once

// Dense linear algebra and seeded randomness shared by the whole pipeline.
// Nothing here tries to be a BLAS; sizes are small (d <= a few hundred,
// supports of OMP / feature-sign <= a few dozen).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bowkit/error.hpp"

namespace bowkit {

using Vec = std::vector<double>;

/// Row-major dense matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Mat m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) fail(Errc::DimensionMismatch, "ragged initializer");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  /// Builds a d x n matrix whose columns are the given vectors.
  static Mat from_columns(const std::vector<Vec>& cols) {
    const std::size_t n = cols.size();
    const std::size_t d = n ? cols.front().size() : 0;
    Mat m(d, n);
    for (std::size_t j = 0; j < n; ++j) {
      if (cols[j].size() != d) fail(Errc::DimensionMismatch, "ragged columns");
      m.set_column(j, cols[j]);
    }
    return m;
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  Vec column(std::size_t c) const {
    Vec out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_column(std::size_t c, std::span<const double> v) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
  }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---- small vector kernels -------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

inline double sqdist(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

/// y = A x
inline Vec matvec(const Mat& a, std::span<const double> x) {
  if (a.cols() != x.size()) fail(Errc::DimensionMismatch, "matvec");
  Vec y(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
  return y;
}

/// y = A^T x
inline Vec matvec_t(const Mat& a, std::span<const double> x) {
  if (a.rows() != x.size()) fail(Errc::DimensionMismatch, "matvec_t");
  Vec y(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) y[c] += row[c] * xr;
  }
  return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) fail(Errc::DimensionMismatch, "matmul");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto crow = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// ---- seeded randomness ----------------------------------------------------

/// SplitMix64: a Weyl sequence (increment 0x9E3779B97F4A7C15) passed through
/// the finalizer with multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB
/// and shifts 30/27/31. Integer output is identical on every platform.
/// Single owner; never share one instance across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail(Errc::InvalidArgument, "Rng::below(0)");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal by the Marsaglia polar method (no trigonometry).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Mixes a textual tag into a base seed (FNV-1a then one SplitMix step), so
/// that e.g. the seed for ("kmeans", channel 1) never depends on list order.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  Rng mix(base ^ h);
  return mix.next_u64();
}

// ---- factorizations -------------------------------------------------------

/// Lower Cholesky factor of a symmetric positive-definite matrix.
class Cholesky {
 public:
  static constexpr double kMinPivot = 1e-12;

  explicit Cholesky(const Mat& a) : n_(a.rows()), l_(a.rows(), a.rows()) {
    if (a.rows() != a.cols()) fail(Errc::DimensionMismatch, "Cholesky of non-square matrix");
    for (std::size_t j = 0; j < n_; ++j) {
      double diag = a(j, j);
      for (std::size_t k = 0; k < j; ++k) diag -= l_(j, k) * l_(j, k);
      if (!(diag > kMinPivot))
        fail(Errc::NotPositiveDefinite, "pivot " + std::to_string(diag) + " at " + std::to_string(j));
      const double ljj = std::sqrt(diag);
      l_(j, j) = ljj;
      for (std::size_t i = j + 1; i < n_; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / ljj;
      }
    }
  }

  Vec solve(std::span<const double> b) const {
    if (b.size() != n_) fail(Errc::DimensionMismatch, "Cholesky::solve");
    Vec y(b.begin(), b.end());
    for (std::size_t i = 0; i < n_; ++i) {
      double s = y[i];
      for (std::size_t k = 0; k < i; ++k) s -= l_(i, k) * y[k];
      y[i] = s / l_(i, i);
    }
    for (std::size_t i = n_; i-- > 0;) {
      double s = y[i];
      for (std::size_t k = i + 1; k < n_; ++k) s -= l_(k, i) * y[k];
      y[i] = s / l_(i, i);
    }
    return y;
  }

  Mat inverse() const {
    Mat inv(n_, n_);
    Vec e(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      e[j] = 1.0;
      inv.set_column(j, solve(e));
      e[j] = 0.0;
    }
    return inv;
  }

  const Mat& factor() const noexcept { return l_; }

 private:
  std::size_t n_;
  Mat l_;
};

/// Solves A x = b for symmetric positive-definite A.
/// Throws NotPositiveDefinite when a Cholesky pivot drops to 1e-12 or below.
inline Vec solve_spd(const Mat& a, std::span<const double> b) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    fail(Errc::DimensionMismatch, "solve_spd dimensions");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10) fail(Errc::NotSymmetric, "solve_spd input");
  return Cholesky(a).solve(b);
}

/// General square solve by Gaussian elimination with partial pivoting.
/// Used for the indefinite KKT systems of LLC.
inline Vec solve_linear(Mat a, Vec b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) fail(Errc::DimensionMismatch, "solve_linear dimensions");
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  const double tiny = std::max(scale, 1.0) * 1e-14;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
    if (std::abs(a(p, k)) <= tiny) fail(Errc::SingularMatrix, "zero pivot in column " + std::to_string(k));
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(p, j));
      std::swap(b[k], b[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * b[j];
    b[i] = s / a(i, i);
  }
  return b;
}

// ---- leading singular triplet ---------------------------------------------

struct SingularTriplet {
  Vec u;
  double sigma = 0.0;
  Vec v;
  int iterations = 0;
};

/// Leading singular triplet of R (m x n) by power iteration on R R^T.
/// Stops after 500 iterations or when the left vector moves less than 1e-10.
/// `start`, when given, seeds the iteration (K-SVD passes the current atom);
/// otherwise the largest-norm column of R is used.
inline SingularTriplet rank1_svd(const Mat& r, std::optional<std::span<const double>> start = {}) {
  constexpr int kMaxIter = 500;
  constexpr double kTol = 1e-10;
  const std::size_t m = r.rows(), n = r.cols();

  double fro = 0.0;
  for (double v : r.data()) fro += v * v;
  if (std::sqrt(fro) < 1e-14) fail(Errc::ZeroMatrix, "rank1_svd of a zero matrix");

  Vec u(m, 0.0);
  if (start && start->size() == m && norm2(*start) > 0.0) {
    u.assign(start->begin(), start->end());
  } else {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += r(i, c) * r(i, c);
      if (s > best_norm) {
        best_norm = s;
        best = c;
      }
    }
    for (std::size_t i = 0; i < m; ++i) u[i] = r(i, best);
  }
  {
    const double nu = norm2(u);
    for (double& x : u) x /= nu;
  }

  // Form the m x m Gram once when it is the cheaper operator.
  std::optional<Mat> gram;
  if (m <= n) {
    Mat g(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i; j < m; ++j) {
        const double s = dot(r.row(i), r.row(j));
        g(i, j) = s;
        g(j, i) = s;
      }
    gram = std::move(g);
  }

  SingularTriplet out;
  Vec next(m);
  for (int it = 1; it <= kMaxIter; ++it) {
    out.iterations = it;
    if (gram) {
      next = matvec(*gram, u);
    } else {
      next = matvec(r, matvec_t(r, u));
    }
    const double nn = norm2(next);
    if (nn == 0.0) break;  // start vector orthogonal to the range; rare
    double change = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      next[i] /= nn;
      const double t = next[i] - u[i];
      change += t * t;
    }
    u.swap(next);
    if (std::sqrt(change) < kTol) break;
  }

  Vec rtu = matvec_t(r, u);
  out.sigma = norm2(rtu);
  if (out.sigma > 0.0)
    for (double& x : rtu) x /= out.sigma;
  out.u = std::move(u);
  out.v = std::move(rtu);
  return out;
}

/// Squared Euclidean distances between the columns of A (d x m) and B (d x n).
inline Mat pairwise_sqdist(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) fail(Errc::DimensionMismatch, "pairwise_sqdist row counts differ");
  const std::size_t d = a.rows();
  const Mat at = a.transpose();
  const Mat bt = b.transpose();
  Mat out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      const double s = d ? sqdist(at.row(i), bt.row(j)) : 0.0;
      out(i, j) = s < 0.0 ? 0.0 : s;
    }
  return out;
}

}  // namespace bowkit
