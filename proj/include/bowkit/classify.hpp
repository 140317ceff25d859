#pragma once

// Chi-square RBF kernels over histograms and a precomputed-kernel SVM
// (SMO, maximal violating pair) with one-against-rest multi-class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "bowkit/aggregation.hpp"
#include "bowkit/error.hpp"
#include "bowkit/io.hpp"
#include "bowkit/numerics.hpp"
#include "bowkit/parallel.hpp"

namespace bowkit {

/// 0.5 * sum_i (h_i - g_i)^2 / (h_i + g_i); terms with h_i + g_i <= 1e-15 are skipped.
inline double chi2_distance(std::span<const double> h, std::span<const double> g) {
  if (h.size() != g.size()) fail(Errc::LengthMismatch, "histograms differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] < 0.0 || g[i] < 0.0) fail(Errc::NegativeEntry, "negative histogram entry at " + std::to_string(i));
    const double den = h[i] + g[i];
    if (den <= 1e-15) continue;
    const double diff = h[i] - g[i];
    s += diff * diff / den;
  }
  return 0.5 * s;
}

struct KernelMatrix {
  Mat values;  // rows x cols
  std::vector<std::uint32_t> row_ids;
  std::vector<std::uint32_t> col_ids;
  std::vector<std::string> channels;
  Vec normalizers;  // one A per channel

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }

  double max_asymmetry() const {
    if (rows() != cols()) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = i + 1; j < cols(); ++j) m = std::max(m, std::abs(values(i, j) - values(j, i)));
    return m;
  }
};

/// Mean chi-square distance over all unordered pairs of distinct histograms.
/// Falls back to 1 when every pair is identical.
inline double mean_chi2(const std::vector<VideoHistogram>& hs) {
  if (hs.size() < 2) return 1.0;
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hs.size(); ++i)
    for (std::size_t j = i + 1; j < hs.size(); ++j, ++n) s += chi2_distance(hs[i].values, hs[j].values);
  const double m = s / static_cast<double>(n);
  return m > 0.0 ? m : 1.0;
}

/// exp(-chi2(row, col) / A) for every pair.
inline KernelMatrix rbf_chi2_kernel(const std::vector<VideoHistogram>& rows, const std::vector<VideoHistogram>& cols,
                                    double A, std::size_t threads = 1) {
  if (!(A > 0.0)) fail(Errc::InvalidArgument, "kernel normalizer must be positive");
  KernelMatrix k;
  k.values = Mat(rows.size(), cols.size());
  for (const auto& h : rows) k.row_ids.push_back(h.video_id);
  for (const auto& h : cols) k.col_ids.push_back(h.video_id);
  const std::string ch = rows.empty() ? (cols.empty() ? "" : cols.front().channel) : rows.front().channel;
  k.channels = {ch};
  k.normalizers = {A};
  parallel_chunks(rows.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = 0; j < cols.size(); ++j)
        k.values(i, j) = std::exp(-chi2_distance(rows[i].values, cols[j].values) / A);
  });
  return k;
}

/// Entrywise mean of kernels with identical shapes and id lists.
inline KernelMatrix average_kernels(const std::vector<KernelMatrix>& ks) {
  if (ks.empty()) fail(Errc::InvalidArgument, "no kernels to average");
  KernelMatrix out = ks.front();
  for (std::size_t t = 1; t < ks.size(); ++t) {
    const auto& k = ks[t];
    if (k.rows() != out.rows() || k.cols() != out.cols()) fail(Errc::ShapeMismatch, "kernel shapes differ");
    if (k.row_ids != out.row_ids || k.col_ids != out.col_ids) fail(Errc::IdMismatch, "kernel id lists differ");
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out.values(i, j) += k.values(i, j);
    out.channels.insert(out.channels.end(), k.channels.begin(), k.channels.end());
    out.normalizers.insert(out.normalizers.end(), k.normalizers.begin(), k.normalizers.end());
  }
  const double inv = 1.0 / static_cast<double>(ks.size());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.values(i, j) *= inv;
  return out;
}

// ---- SVM ------------------------------------------------------------------

struct SmoOptions {
  double C = 100.0;
  double tol = 1e-3;
  std::size_t max_iterations = 0;  // 0: max(10^7, 100 n)
  std::size_t threads = 1;         // one-vs-rest problems in parallel
};

struct BinarySvm {
  Vec alpha_y;  // alpha_i * y_i
  double bias = 0.0;
  std::size_t iterations = 0;
  double gap = 0.0;  // m(alpha) - M(alpha) at exit
  bool converged = false;
};

struct SvmModel {
  std::vector<std::uint16_t> classes;
  std::vector<std::uint32_t> train_ids;
  double C = 100.0;
  double tol = 1e-3;
  std::vector<std::string> channels;
  Vec normalizers;
  std::vector<BinarySvm> machines;  // one per class, same order as `classes`
};

namespace detail {

inline bool in_up(double y, double a, double C) { return (y > 0 && a < C) || (y < 0 && a > 0); }
inline bool in_low(double y, double a, double C) { return (y > 0 && a > 0) || (y < 0 && a < C); }

}  // namespace detail

/// Soft-margin dual  min 1/2 a'Qa - e'a,  0 <= a <= C,  y'a = 0,  Q_ij = y_i y_j K_ij.
inline BinarySvm smo_solve(const Mat& k, const std::vector<double>& y, const SmoOptions& opt) {
  const std::size_t n = y.size();
  const double C = opt.C;
  const std::size_t cap = opt.max_iterations ? opt.max_iterations : std::max<std::size_t>(10'000'000, 100 * n);
  Vec a(n, 0.0), g(n, -1.0);  // gradient Qa - e
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * k(i, j); };
  constexpr double kTau = 1e-12;

  BinarySvm out;
  for (;;) {
    std::size_t i = n, j = n;
    double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * g[t];
      if (detail::in_up(y[t], a[t], C) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (detail::in_low(y[t], a[t], C) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    out.gap = (i == n || j == n) ? 0.0 : gmax - gmin;
    if (i == n || j == n || out.gap < opt.tol) {
      out.converged = true;
      break;
    }
    if (out.iterations >= cap) break;
    ++out.iterations;

    const double ai = a[i], aj = a[j];
    if (y[i] != y[j]) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-g[i] - g[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) { a[j] = 0.0; a[i] = diff; }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = -diff;
      }
      if (diff > 0.0) {
        if (a[i] > C) { a[i] = C; a[j] = C - diff; }
      } else if (a[j] > C) {
        a[j] = C;
        a[i] = C + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (g[i] - g[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > C) {
        if (a[i] > C) { a[i] = C; a[j] = sum - C; }
      } else if (a[j] < 0.0) {
        a[j] = 0.0;
        a[i] = sum;
      }
      if (sum > C) {
        if (a[j] > C) { a[j] = C; a[i] = sum - C; }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = sum;
      }
    }
    const double di = a[i] - ai, dj = a[j] - aj;
    for (std::size_t t = 0; t < n; ++t) g[t] += q(t, i) * di + q(t, j) * dj;
  }

  // rho: mean of y_i g_i over free variables, else midpoint of the feasible interval
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * g[t];
    if (a[t] >= C) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  double rho;
  if (n_free) rho = sum_free / static_cast<double>(n_free);
  else if (std::isfinite(ub) && std::isfinite(lb)) rho = 0.5 * (ub + lb);
  else rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);

  out.bias = -rho;
  out.alpha_y.resize(n);
  for (std::size_t t = 0; t < n; ++t) out.alpha_y[t] = a[t] * y[t];
  return out;
}

/// One binary machine per class (targets +1 for the class, -1 otherwise).
/// `classes` lists the expected labels; empty means "the distinct labels seen".
inline SvmModel svm_train(const KernelMatrix& k, const std::vector<std::uint16_t>& labels, const SmoOptions& opt = {},
                          std::vector<std::uint16_t> classes = {}) {
  const std::size_t n = labels.size();
  if (k.rows() != n || k.cols() != n) fail(Errc::ShapeMismatch, "kernel is not n x n for n labels");
  if (k.row_ids != k.col_ids) fail(Errc::IdMismatch, "training kernel rows and columns differ");
  if (k.max_asymmetry() > 1e-10) fail(Errc::NotSymmetric, "training kernel is not symmetric");
  if (!(opt.C > 0.0)) fail(Errc::InvalidArgument, "C must be positive");
  if (classes.empty()) {
    classes = labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  }
  if (classes.size() < 2) fail(Errc::DegenerateLabels, "need at least two classes");
  for (auto c : classes)
    if (std::find(labels.begin(), labels.end(), c) == labels.end())
      fail(Errc::DegenerateLabels, "class " + std::to_string(c) + " has no training members");
  for (auto l : labels)
    if (std::find(classes.begin(), classes.end(), l) == classes.end())
      fail(Errc::DegenerateLabels, "label " + std::to_string(l) + " is not in the class list");

  SvmModel m;
  m.classes = classes;
  m.train_ids = k.row_ids;
  m.C = opt.C;
  m.tol = opt.tol;
  m.channels = k.channels;
  m.normalizers = k.normalizers;
  m.machines.resize(classes.size());
  parallel_chunks(classes.size(), opt.threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] == classes[c] ? 1.0 : -1.0;
      m.machines[c] = smo_solve(k.values, y, opt);
    }
  });
  return m;
}

struct Prediction {
  std::uint16_t label = kUnlabeled;
  Vec scores;
};

/// score_c(v) = sum_i (alpha y)_ic K(v, i) + b_c; ties go to the lowest class index.
inline std::vector<Prediction> svm_predict(const SvmModel& m, const KernelMatrix& k) {
  if (k.col_ids != m.train_ids) fail(Errc::IdMismatch, "kernel columns do not match the training videos");
  std::vector<Prediction> out(k.rows());
  for (std::size_t v = 0; v < k.rows(); ++v) {
    auto& p = out[v];
    p.scores.resize(m.classes.size());
    std::size_t best = 0;
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
      const auto& mc = m.machines[c];
      double s = mc.bias;
      for (std::size_t i = 0; i < k.cols(); ++i) s += mc.alpha_y[i] * k.values(v, i);
      p.scores[c] = s;
      if (s > p.scores[best]) best = c;
    }
    p.label = m.classes[best];
  }
  return out;
}

/// Fraction of predictions equal to the truth.
inline double accuracy(const std::vector<Prediction>& preds, const std::vector<std::uint16_t>& truth) {
  if (preds.size() != truth.size() || preds.empty()) fail(Errc::LengthMismatch, "prediction / label count mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i].label == truth[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

struct DualCertificate {
  double max_bound_violation = 0.0;  // distance of alpha outside [0, C]
  double max_equality = 0.0;         // |sum alpha_i y_i|
  double max_kkt_violation = 0.0;    // per-point KKT violation given the stored bias
  bool ok(double tol) const { return max_bound_violation == 0.0 && max_equality <= 1e-8 && max_kkt_violation <= tol; }
};

/// Recomputes feasibility and KKT conditions for every binary machine.
inline DualCertificate certify(const SvmModel& m, const KernelMatrix& k, const std::vector<std::uint16_t>& labels) {
  DualCertificate cert;
  const std::size_t n = labels.size();
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    const auto& mc = m.machines[c];
    double eq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = labels[i] == m.classes[c] ? 1.0 : -1.0;
      const double a = mc.alpha_y[i] * y;
      cert.max_bound_violation = std::max({cert.max_bound_violation, -a, a - m.C});
      eq += mc.alpha_y[i];
      double f = mc.bias;
      for (std::size_t j = 0; j < n; ++j) f += mc.alpha_y[j] * k.values(i, j);
      // y f >= 1 at a = 0, y f <= 1 at a = C, y f = 1 in between
      const double margin = y * f - 1.0;
      double viol = 0.0;
      if (a <= 0.0) viol = std::max(0.0, -margin);
      else if (a >= m.C) viol = std::max(0.0, margin);
      else viol = std::abs(margin);
      cert.max_kkt_violation = std::max(cert.max_kkt_violation, viol);
    }
    cert.max_equality = std::max(cert.max_equality, std::abs(eq));
  }
  return cert;
}

// ---- files ----------------------------------------------------------------

/// CSV: optional "#key=value" lines, then "video_id,<col ids...>" and one row per row id.
inline void save_kernel_csv(const KernelMatrix& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::IoFailure, "cannot open " + path);
  out << "#channels=";
  for (std::size_t i = 0; i < k.channels.size(); ++i) out << (i ? "+" : "") << k.channels[i];
  out << "\n#A=";
  char buf[40];
  for (std::size_t i = 0; i < k.normalizers.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", k.normalizers[i]);
    out << (i ? "+" : "") << buf;
  }
  out << "\nvideo_id";
  for (auto id : k.col_ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < k.rows(); ++i) {
    out << k.row_ids[i];
    for (std::size_t j = 0; j < k.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", k.values(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) fail(Errc::IoFailure, "short write to " + path);
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(Errc::InvalidData, "not a number: '" + s + "'");
  }
  if (used != s.size()) fail(Errc::InvalidData, "not a number: '" + s + "'");
  return v;
}

inline std::uint32_t parse_id(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    fail(Errc::InvalidData, "bad video id '" + s + "'");
  return static_cast<std::uint32_t>(std::stoul(s));
}

}  // namespace detail

inline KernelMatrix load_kernel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "cannot open " + path);
  KernelMatrix k;
  std::string line;
  bool header = false;
  std::vector<Vec> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(1, eq - 1), val = line.substr(eq + 1);
      if (key == "channels") k.channels = detail::split(val, '+');
      if (key == "A")
        for (const auto& s : detail::split(val, '+')) k.normalizers.push_back(detail::parse_double(s));
      continue;
    }
    const auto f = detail::split(line, ',');
    if (!header) {
      for (std::size_t i = 1; i < f.size(); ++i) k.col_ids.push_back(detail::parse_id(f[i]));
      header = true;
      continue;
    }
    if (f.size() != k.col_ids.size() + 1) fail(Errc::InvalidData, "kernel row has the wrong number of fields");
    k.row_ids.push_back(detail::parse_id(f[0]));
    Vec r(k.col_ids.size());
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] = detail::parse_double(f[j + 1]);
      if (!std::isfinite(r[j])) fail(Errc::NonFiniteValue, "non-finite kernel entry");
    }
    rows.push_back(std::move(r));
  }
  if (!header) fail(Errc::TruncatedFile, "kernel file has no header");
  k.values = Mat(rows.size(), k.col_ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) k.values(i, j) = rows[i][j];
  return k;
}

inline void save_model(const SvmModel& m, const std::string& path) {
  io::Writer w;
  w.magic("BWSM");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.classes.size()));
  w.u32(static_cast<std::uint32_t>(m.train_ids.size()));
  w.f64(m.C);
  w.f64(m.tol);
  w.u32(static_cast<std::uint32_t>(m.normalizers.size()));
  for (std::size_t i = 0; i < m.normalizers.size(); ++i) {
    w.tag(i < m.channels.size() ? m.channels[i] : "");
    w.f64(m.normalizers[i]);
  }
  for (auto id : m.train_ids) w.u32(id);
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    w.u16(m.classes[c]);
    w.f64(m.machines[c].bias);
    for (double v : m.machines[c].alpha_y) w.f64(v);
  }
  w.save(path);
}

inline SvmModel load_model(const std::string& path) {
  auto in = io::Reader::open(path);
  in.expect_magic("BWSM");
  in.expect_version(1);
  SvmModel m;
  const std::uint32_t nc = in.u32(), n = in.u32();
  m.C = in.f64();
  m.tol = in.f64();
  const std::uint32_t na = in.u32();
  for (std::uint32_t i = 0; i < na; ++i) {
    m.channels.push_back(in.tag());
    m.normalizers.push_back(in.f64());
  }
  if (in.remaining() / 4 < n) fail(Errc::TruncatedFile, "model training ids");
  for (std::uint32_t i = 0; i < n; ++i) m.train_ids.push_back(in.u32());
  if (in.remaining() / (10 + 8ull * n) < nc) fail(Errc::TruncatedFile, "model machines");
  m.machines.resize(nc);
  for (std::uint32_t c = 0; c < nc; ++c) {
    m.classes.push_back(in.u16());
    m.machines[c].bias = in.f64();
    m.machines[c].alpha_y.resize(n);
    for (auto& v : m.machines[c].alpha_y) v = in.f64();
  }
  return m;
}

}  // namespace bowkit
