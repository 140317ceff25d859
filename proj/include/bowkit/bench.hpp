#pragma once

// Experiment harness: dictionary x encoder accuracy grid, dictionary-size
// sweep, learning / encoding cost timing, and CSV / Markdown reports.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#if defined(__unix__) || defined(__APPLE__)
#include <sys/utsname.h>
#endif

#include "bowkit/aggregation.hpp"
#include "bowkit/classify.hpp"
#include "bowkit/data.hpp"
#include "bowkit/dictionary.hpp"
#include "bowkit/encoding.hpp"
#include "bowkit/error.hpp"
#include "bowkit/numerics.hpp"

namespace bowkit {

// ---- configuration --------------------------------------------------------

struct ConfigKey {
  const char* name;
  const char* help;
};

/// Every key accepted by the flat key=value config format.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"descriptors", "comma-separated BWDS files, one per channel (overrides synth.*)"},
      {"split", "BWSP split file; required with 'descriptors'"},
      {"synth.classes", "synthetic classes (5)"},
      {"synth.videos_per_class", "synthetic videos per class (40)"},
      {"synth.descriptors_per_video", "synthetic descriptors per video (100)"},
      {"synth.dim", "synthetic descriptor dimension (32)"},
      {"synth.clusters_per_class", "mixture components per class (4)"},
      {"synth.cluster_spread", "per-video jitter of each component center (0.1)"},
      {"synth.noise_sigma", "per-descriptor noise (0.2)"},
      {"synth.channels", "number of channels (2)"},
      {"synth.seed", "synthetic data seed (7)"},
      {"dictionaries", "dictionary methods: RW, RE, K-means, OMP-<k>, SC"},
      {"encoders", "encoders: VQ, SA-<k>, OMP-<k>, SC, LLC-<k>, LLC-FULL"},
      {"K", "dictionary size (64; 4000 with paper_scale)"},
      {"samples", "descriptors sampled from training videos for learning (10000; 100000 with paper_scale)"},
      {"paper_scale", "true: K=4000, samples=100000 unless set explicitly"},
      {"alpha", "Power+L2 exponent (0.5)"},
      {"C", "SVM regularization (100)"},
      {"svm.tol", "SMO stopping tolerance (0.001)"},
      {"beta", "SA smoothing (1)"},
      {"lambda", "SC l1 weight and LLC locality weight (0.15)"},
      {"sigma", "LLC-FULL locality bandwidth (1)"},
      {"sa.knn_denominator", "SA normalizes over the k nearest atoms only (false)"},
      {"learn.iterations", "K-means / K-SVD / SC iterations (50)"},
      {"learn.tol", "learner stopping tolerance (1e-6)"},
      {"seed", "master seed for sampling and learning (1)"},
      {"threads", "worker threads for encoding and kernels, 0 = all cores (0)"},
      {"out", "output directory (out)"},
      {"sizes", "size-sweep dictionary sizes, ascending (16,64,256)"},
      {"pairs", "size-sweep rows as encoder/dictionary pairs"},
      {"bench.K", "cost benchmark dictionary size (512)"},
      {"bench.samples", "cost benchmark learning set size (20000)"},
      {"bench.iterations", "fixed learner iterations in bench-learn (5)"},
      {"bench.encodes", "encodes per method in bench-encode (10000)"},
      {"bench.learners", "methods timed by bench-learn"},
      {"bench.encoders", "methods timed by bench-encode"},
  };
  return keys;
}

using ConfigMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  for (auto& part : split(s, sep)) {
    auto t = trim(part);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail

/// Parses "key = value" lines; '#' starts a comment line.
inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail(Errc::ConfigInvalid, "line " + std::to_string(no) + ": expected key=value");
    m[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
  }
  return m;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::ConfigInvalid, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

struct PairSpec {
  std::string encoder;
  std::string dictionary;
  std::string label() const { return encoder + "/" + dictionary; }
};

struct GridConfig {
  std::vector<std::string> descriptor_paths;
  std::string split_path;
  SynthSpec synth;
  std::vector<std::string> dictionaries = {"RE", "K-means", "OMP-2", "SC"};
  std::vector<std::string> encoders = {"VQ", "SA-5", "OMP-5", "LLC-5", "SC"};
  std::size_t K = 64;
  std::size_t samples = 10000;
  bool paper_scale = false;
  double alpha = 0.5;
  SmoOptions svm;
  EncodeParams encode;  // beta / lambda / sigma / sa denominator
  std::size_t learn_iterations = 50;
  double learn_tol = 1e-6;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  std::string out = "out";
  std::vector<std::size_t> sizes = {16, 64, 256};
  std::vector<PairSpec> pairs = {{"VQ", "RE"},  {"VQ", "K-means"},     {"SC", "RE"},   {"SC", "K-means"},
                                 {"SC", "SC"},  {"SA-5", "K-means"},   {"OMP-5", "OMP-5"}};
  std::size_t bench_K = 512;
  std::size_t bench_samples = 20000;
  std::size_t bench_iterations = 5;
  std::size_t bench_encodes = 10000;
  std::vector<std::string> bench_learners = {"RW", "RE", "K-means", "OMP-2", "OMP-5", "OMP-10", "SC"};
  std::vector<std::string> bench_encoders = {"VQ", "SA-5", "LLC-5", "OMP-2", "OMP-5", "OMP-10", "SC"};

  void validate() const {
    if (dictionaries.empty() || encoders.empty()) fail(Errc::ConfigInvalid, "method lists must be non-empty");
    for (const auto& d : dictionaries) parse_learner(d);
    for (const auto& e : encoders) parse_encoder(e, encode);
    if (K < 1 || samples < 1) fail(Errc::ConfigInvalid, "K and samples must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) fail(Errc::ConfigInvalid, "alpha must lie in (0, 1]");
    if (!(svm.C > 0.0) || !(svm.tol > 0.0)) fail(Errc::ConfigInvalid, "C and svm.tol must be > 0");
    if (!descriptor_paths.empty() && split_path.empty()) fail(Errc::ConfigInvalid, "'descriptors' needs 'split'");
    for (const auto& p : descriptor_paths)
      if (!std::ifstream(p)) fail(Errc::ConfigInvalid, "descriptor file not found: " + p);
    if (!split_path.empty() && !std::ifstream(split_path)) fail(Errc::ConfigInvalid, "split file not found: " + split_path);
    if (descriptor_paths.empty()) synth.validate();
  }
};

namespace detail {

inline std::size_t to_size(const std::string& k, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    fail(Errc::ConfigInvalid, k + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(std::stoull(v));
}

inline double to_real(const std::string& k, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    fail(Errc::ConfigInvalid, k + ": expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& k, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(Errc::ConfigInvalid, k + ": expected true/false, got '" + v + "'");
}

}  // namespace detail

/// Sizes must be strictly ascending; duplicates are a config error.
inline void validate_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) fail(Errc::ConfigInvalid, "sizes must be non-empty");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1) fail(Errc::ConfigInvalid, "sizes must be >= 1");
    for (std::size_t j = 0; j < i; ++j)
      if (sizes[j] == sizes[i]) fail(Errc::ConfigInvalid, "duplicate size " + std::to_string(sizes[i]));
    if (i && sizes[i] < sizes[i - 1]) fail(Errc::ConfigInvalid, "sizes must be ascending");
  }
}

/// Builds a GridConfig from defaults overlaid with `m`. Unknown keys are errors.
inline GridConfig make_config(const ConfigMap& m) {
  GridConfig c;
  bool k_set = false, samples_set = false;
  for (const auto& [k, v] : m) {
    using namespace detail;
    if (k == "descriptors") c.descriptor_paths = split_list(v);
    else if (k == "split") c.split_path = v;
    else if (k == "synth.classes") c.synth.classes = to_size(k, v);
    else if (k == "synth.videos_per_class") c.synth.videos_per_class = to_size(k, v);
    else if (k == "synth.descriptors_per_video") c.synth.descriptors_per_video = to_size(k, v);
    else if (k == "synth.dim") c.synth.dim = to_size(k, v);
    else if (k == "synth.clusters_per_class") c.synth.clusters_per_class = to_size(k, v);
    else if (k == "synth.cluster_spread") c.synth.cluster_spread = to_real(k, v);
    else if (k == "synth.noise_sigma") c.synth.noise_sigma = to_real(k, v);
    else if (k == "synth.channels") c.synth.channels = to_size(k, v);
    else if (k == "synth.seed") c.synth.seed = to_size(k, v);
    else if (k == "dictionaries") c.dictionaries = split_list(v);
    else if (k == "encoders") c.encoders = split_list(v);
    else if (k == "K") { c.K = to_size(k, v); k_set = true; }
    else if (k == "samples") { c.samples = to_size(k, v); samples_set = true; }
    else if (k == "paper_scale") c.paper_scale = to_bool(k, v);
    else if (k == "alpha") c.alpha = to_real(k, v);
    else if (k == "C") c.svm.C = to_real(k, v);
    else if (k == "svm.tol") c.svm.tol = to_real(k, v);
    else if (k == "beta") c.encode.beta = to_real(k, v);
    else if (k == "lambda") c.encode.lambda = to_real(k, v);
    else if (k == "sigma") c.encode.sigma = to_real(k, v);
    else if (k == "sa.knn_denominator") c.encode.sa_knn_denominator = to_bool(k, v);
    else if (k == "learn.iterations") c.learn_iterations = to_size(k, v);
    else if (k == "learn.tol") c.learn_tol = to_real(k, v);
    else if (k == "seed") c.seed = to_size(k, v);
    else if (k == "threads") c.threads = to_size(k, v);
    else if (k == "out") c.out = v;
    else if (k == "sizes") {
      c.sizes.clear();
      for (const auto& s : split_list(v)) c.sizes.push_back(to_size(k, s));
    } else if (k == "pairs") {
      c.pairs.clear();
      for (const auto& s : split_list(v)) {
        const auto slash = s.find('/');
        if (slash == std::string::npos) fail(Errc::ConfigInvalid, "pairs: expected encoder/dictionary, got '" + s + "'");
        c.pairs.push_back({trim(s.substr(0, slash)), trim(s.substr(slash + 1))});
      }
    } else if (k == "bench.K") c.bench_K = to_size(k, v);
    else if (k == "bench.samples") c.bench_samples = to_size(k, v);
    else if (k == "bench.iterations") c.bench_iterations = to_size(k, v);
    else if (k == "bench.encodes") c.bench_encodes = to_size(k, v);
    else if (k == "bench.learners") c.bench_learners = split_list(v);
    else if (k == "bench.encoders") c.bench_encoders = split_list(v);
    else fail(Errc::ConfigInvalid, "unknown config key '" + k + "'");
  }
  if (c.paper_scale) {
    if (!k_set) c.K = 4000;
    if (!samples_set) c.samples = 100000;
  }
  c.encode.threads = c.threads;
  c.svm.threads = c.threads;
  return c;
}

// ---- datasets -------------------------------------------------------------

struct Dataset {
  std::vector<DescriptorSet> channels;
  SplitSpec split;
  std::string description;
};

inline Dataset load_dataset(const GridConfig& c) {
  Dataset ds;
  if (c.descriptor_paths.empty()) {
    auto syn = generate_synthetic(c.synth);
    ds.channels = std::move(syn.channels);
    ds.split = std::move(syn.split);
    const auto& s = c.synth;
    ds.description = "synthetic classes=" + std::to_string(s.classes) + " videos_per_class=" +
                     std::to_string(s.videos_per_class) + " descriptors_per_video=" +
                     std::to_string(s.descriptors_per_video) + " dim=" + std::to_string(s.dim) +
                     " clusters_per_class=" + std::to_string(s.clusters_per_class) + " cluster_spread=" +
                     detail::fmt_real(s.cluster_spread) + " noise_sigma=" + detail::fmt_real(s.noise_sigma) +
                     " channels=" + std::to_string(s.channels) + " seed=" + std::to_string(s.seed);
  } else {
    for (const auto& p : c.descriptor_paths) ds.channels.push_back(load_descriptors(p));
    ds.split = load_split(c.split_path);
    ds.description = "files";
    for (const auto& p : c.descriptor_paths) ds.description += " " + p;
    ds.description += " split=" + c.split_path;
  }
  for (const auto& ch : ds.channels) {
    ch.validate();
    for (auto v : ds.split.train)
      if (!ch.video_class.count(v)) fail(Errc::ConfigInvalid, "split references unknown video " + std::to_string(v));
    for (auto v : ds.split.test)
      if (!ch.video_class.count(v)) fail(Errc::ConfigInvalid, "split references unknown video " + std::to_string(v));
  }
  return ds;
}

// ---- result tables --------------------------------------------------------

struct Cell {
  bool ok = false;
  double value = 0.0;
  std::string message;
  std::vector<std::pair<std::string, double>> diagnostics;
};

struct ResultTable {
  std::string title;
  std::string corner = "Methods";
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<Cell>> cells;  // [row][col]
  std::vector<std::pair<std::string, std::string>> metadata;
  int precision = 2;        // digits after the point for accuracy tables; <0 means %.6g
  std::string run_info;     // non-deterministic details (timestamps, host); never rendered in reports

  void resize(std::vector<std::string> rows, std::vector<std::string> cols) {
    row_labels = std::move(rows);
    col_labels = std::move(cols);
    cells.assign(row_labels.size(), std::vector<Cell>(col_labels.size()));
  }
  Cell& at(std::size_t r, std::size_t c) { return cells.at(r).at(c); }
  const Cell& at(std::size_t r, std::size_t c) const { return cells.at(r).at(c); }
  bool complete() const {
    if (cells.size() != row_labels.size()) return false;
    for (const auto& r : cells)
      if (r.size() != col_labels.size()) return false;
    return true;
  }
};

enum class ReportFormat { Csv, Markdown };

namespace detail {

inline std::string format_cell(const ResultTable& t, const Cell& c) {
  if (!c.ok) return "ERR";
  char buf[48];
  if (t.precision >= 0) std::snprintf(buf, sizeof buf, "%.*f", t.precision, c.value);
  else std::snprintf(buf, sizeof buf, "%.6g", c.value);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

inline std::string render_report(const ResultTable& t, ReportFormat f) {
  if (!t.complete()) fail(Errc::InvalidArgument, "result table is not rectangular");
  std::ostringstream o;
  if (f == ReportFormat::Csv) {
    o << detail::csv_field(t.corner);
    for (const auto& c : t.col_labels) o << ',' << detail::csv_field(c);
    o << '\n';
    for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
      o << detail::csv_field(t.row_labels[r]);
      for (std::size_t c = 0; c < t.col_labels.size(); ++c) o << ',' << detail::format_cell(t, t.at(r, c));
      o << '\n';
    }
    return o.str();
  }
  if (!t.title.empty()) o << "### " << t.title << "\n\n";
  o << "| " << t.corner << " |";
  for (const auto& c : t.col_labels) o << ' ' << c << " |";
  o << "\n|---|";
  for (std::size_t c = 0; c < t.col_labels.size(); ++c) o << "---:|";
  o << '\n';
  for (std::size_t r = 0; r < t.row_labels.size(); ++r) {
    o << "| " << t.row_labels[r] << " |";
    for (std::size_t c = 0; c < t.col_labels.size(); ++c) o << ' ' << detail::format_cell(t, t.at(r, c)) << " |";
    o << '\n';
  }
  if (!t.metadata.empty()) {
    o << '\n';
    for (const auto& [k, v] : t.metadata) o << "- " << k << ": " << v << '\n';
  }
  return o.str();
}

inline void emit_report(const ResultTable& t, ReportFormat f, const std::string& path) {
  const std::string text = render_report(t, f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot open " + path);
  out << text;
  if (!out) fail(Errc::IoFailure, "short write to " + path);
}

/// Reads back the first pipe table of a Markdown report. Failed cells come
/// back with ok == false.
inline ResultTable parse_markdown_table(const std::string& text) {
  ResultTable t;
  std::istringstream in(text);
  std::string line;
  int state = 0;  // 0 before header, 1 after header, 2 in body
  auto cells_of = [](const std::string& l) {
    std::vector<std::string> out;
    auto parts = detail::split(l, '|');
    for (std::size_t i = 1; i + 1 < parts.size(); ++i) out.push_back(detail::trim(parts[i]));
    return out;
  };
  while (std::getline(in, line)) {
    if (line.rfind("|", 0) != 0) {
      if (state == 2) break;
      continue;
    }
    auto f = cells_of(line);
    if (state == 0) {
      t.corner = f.empty() ? "" : f[0];
      t.col_labels.assign(f.begin() + (f.empty() ? 0 : 1), f.end());
      state = 1;
    } else if (state == 1) {
      state = 2;  // separator row
    } else {
      if (f.size() != t.col_labels.size() + 1) fail(Errc::InvalidData, "ragged markdown row");
      t.row_labels.push_back(f[0]);
      std::vector<Cell> row;
      for (std::size_t i = 1; i < f.size(); ++i) {
        Cell c;
        if (f[i] != "ERR") {
          c.ok = true;
          c.value = detail::parse_double(f[i]);
        }
        row.push_back(std::move(c));
      }
      t.cells.push_back(std::move(row));
    }
  }
  return t;
}

// ---- evaluation -----------------------------------------------------------

namespace detail {

struct LearnedDictionary {
  std::vector<Dictionary> per_channel;
  std::optional<std::string> error;
};

inline LearnParams learn_params_for(const GridConfig& c, const std::string& label, std::size_t K,
                                    const std::string& channel) {
  LearnParams p = parse_learner(label);
  p.K = K;
  p.iterations = c.learn_iterations;
  p.tol = c.learn_tol;
  p.lambda = c.encode.lambda;
  p.threads = c.threads;
  p.seed = derive_seed(c.seed, "learn/" + p.label() + "/K=" + std::to_string(K) + "/" + channel);
  return p;
}

/// Training-video descriptors sampled once per channel; every learner sees the same sample.
inline std::vector<Mat> learning_samples(const Dataset& ds, std::size_t count, std::uint64_t seed) {
  std::vector<Mat> out;
  for (const auto& ch : ds.channels) {
    Rng rng(derive_seed(seed, "sample/" + ch.channel));
    out.push_back(sample_features(select_videos(ch, ds.split.train), count, rng));
  }
  return out;
}

inline LearnedDictionary learn_all(const GridConfig& c, const std::vector<Mat>& samples, const Dataset& ds,
                                   const std::string& label, std::size_t K) {
  LearnedDictionary out;
  try {
    for (std::size_t ch = 0; ch < ds.channels.size(); ++ch)
      out.per_channel.push_back(learn_dictionary(samples[ch], learn_params_for(c, label, K, ds.channels[ch].channel)));
  } catch (const Error& e) {
    out.error = std::string(errc_name(e.code())) + ": " + e.what();
  }
  return out;
}

/// The atoms an encoder actually sees. OMP assumes unit-norm atoms, so it
/// gets a column-normalized copy of dictionaries that are not unit-norm.
inline Mat atoms_for(const Dictionary& d, const EncodeParams& e, bool* normalized = nullptr) {
  const bool need = e.method == Encoder::OMP && !Codebook(d.atoms).unit_norm();
  if (normalized) *normalized = need;
  return need ? normalized_columns(d.atoms) : d.atoms;
}

inline std::vector<std::uint16_t> labels_of(const std::vector<VideoHistogram>& hs) {
  std::vector<std::uint16_t> out;
  for (const auto& h : hs) out.push_back(h.class_id);
  return out;
}

}  // namespace detail

/// Trains on the split's training videos and scores the test videos for one
/// (dictionary, encoder) combination. Returns percent accuracy.
inline Cell evaluate_cell(const GridConfig& c, const Dataset& ds, const std::vector<Dictionary>& dicts,
                          const EncodeParams& ep) {
  Cell cell;
  try {
    std::vector<KernelMatrix> ktr, kte;
    std::vector<std::uint16_t> ytr, yte;
    std::size_t zero_hist = 0;
    bool normalized = false;
    for (std::size_t ch = 0; ch < ds.channels.size(); ++ch) {
      const Mat atoms = detail::atoms_for(dicts[ch], ep, &normalized);
      const auto tr = build_histograms(select_videos(ds.channels[ch], ds.split.train), atoms, ep, c.alpha);
      const auto te = build_histograms(select_videos(ds.channels[ch], ds.split.test), atoms, ep, c.alpha);
      for (const auto& h : tr) zero_hist += h.zero;
      for (const auto& h : te) zero_hist += h.zero;
      const double A = mean_chi2(tr);
      ktr.push_back(rbf_chi2_kernel(tr, tr, A, c.threads));
      kte.push_back(rbf_chi2_kernel(te, tr, A, c.threads));
      if (ch == 0) {
        ytr = detail::labels_of(tr);
        yte = detail::labels_of(te);
      }
    }
    const KernelMatrix k_train = average_kernels(ktr);
    const KernelMatrix k_test = average_kernels(kte);
    const SvmModel model = svm_train(k_train, ytr, c.svm);
    const double acc = accuracy(svm_predict(model, k_test), yte);
    const DualCertificate cert = certify(model, k_train, ytr);
    std::size_t unconverged = 0;
    for (const auto& m : model.machines) unconverged += !m.converged;
    cell.ok = true;
    cell.value = 100.0 * acc;
    cell.diagnostics = {{"kkt_violation", cert.max_kkt_violation},
                        {"bound_violation", cert.max_bound_violation},
                        {"equality_residual", cert.max_equality},
                        {"svm_tol", c.svm.tol},
                        {"unconverged_machines", static_cast<double>(unconverged)},
                        {"zero_histograms", static_cast<double>(zero_hist)},
                        {"omp_normalized_copy", normalized ? 1.0 : 0.0}};
  } catch (const Error& e) {
    cell.ok = false;
    cell.message = std::string(errc_name(e.code())) + ": " + e.what();
  }
  return cell;
}

namespace detail {

inline void common_metadata(ResultTable& t, const GridConfig& c, const Dataset& ds) {
  t.metadata.emplace_back("dataset", ds.description);
  t.metadata.emplace_back("train/test videos",
                          std::to_string(ds.split.train.size()) + "/" + std::to_string(ds.split.test.size()));
  std::string dims;
  for (const auto& ch : ds.channels) dims += (dims.empty() ? "" : " ") + ch.channel + "=" + std::to_string(ch.dim());
  t.metadata.emplace_back("descriptor dims", dims);
  t.metadata.emplace_back("seed", std::to_string(c.seed));
  t.metadata.emplace_back("samples", std::to_string(c.samples));
  t.metadata.emplace_back("learn iterations", std::to_string(c.learn_iterations));
  t.metadata.emplace_back("alpha", fmt_real(c.alpha));
  t.metadata.emplace_back("C", fmt_real(c.svm.C));
  t.metadata.emplace_back("beta/lambda/sigma", fmt_real(c.encode.beta) + "/" + fmt_real(c.encode.lambda) + "/" +
                                                   fmt_real(c.encode.sigma));
}

inline void note_failures(ResultTable& t) {
  for (std::size_t r = 0; r < t.row_labels.size(); ++r)
    for (std::size_t col = 0; col < t.col_labels.size(); ++col)
      if (!t.at(r, col).ok)
        t.metadata.emplace_back("failed " + t.row_labels[r] + " x " + t.col_labels[col], t.at(r, col).message);
}

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
  return buf;
}

}  // namespace detail

/// Accuracy (%) for every encoder (row) x dictionary (column). Each
/// dictionary is learned once per channel; a failure in one cell is recorded
/// and the sweep continues.
inline ResultTable run_grid(const GridConfig& c) {
  c.validate();
  const Dataset ds = load_dataset(c);
  const auto samples = detail::learning_samples(ds, c.samples, c.seed);
  ResultTable t;
  t.title = "Accuracy (%) by dictionary and encoder";
  t.resize(c.encoders, c.dictionaries);
  const std::string started = detail::timestamp();
  for (std::size_t col = 0; col < c.dictionaries.size(); ++col) {
    const auto learned = detail::learn_all(c, samples, ds, c.dictionaries[col], c.K);
    for (std::size_t r = 0; r < c.encoders.size(); ++r) {
      if (learned.error) {
        t.at(r, col).message = "dictionary: " + *learned.error;
        continue;
      }
      t.at(r, col) = evaluate_cell(c, ds, learned.per_channel, parse_encoder(c.encoders[r], c.encode));
    }
  }
  detail::common_metadata(t, c, ds);
  t.metadata.emplace_back("K", std::to_string(c.K));
  detail::note_failures(t);
  t.run_info = "started " + started + "\nfinished " + detail::timestamp() + "\n";
  return t;
}

/// Rows are (encoder, dictionary) pairs, columns are dictionary sizes.
inline ResultTable run_size_sweep(const GridConfig& c, const std::vector<std::size_t>& sizes) {
  validate_sizes(sizes);
  if (c.pairs.empty()) fail(Errc::ConfigInvalid, "pairs must be non-empty");
  for (const auto& p : c.pairs) {
    parse_encoder(p.encoder, c.encode);
    parse_learner(p.dictionary);
  }
  c.validate();
  const Dataset ds = load_dataset(c);
  const auto samples = detail::learning_samples(ds, c.samples, c.seed);
  ResultTable t;
  t.title = "Accuracy (%) by dictionary size";
  t.corner = "Encoder/Dictionary";
  std::vector<std::string> rows, cols;
  for (const auto& p : c.pairs) rows.push_back(p.label());
  for (auto s : sizes) cols.push_back(std::to_string(s));
  t.resize(rows, cols);
  const std::string started = detail::timestamp();
  for (std::size_t col = 0; col < sizes.size(); ++col) {
    std::map<std::string, detail::LearnedDictionary> cache;
    for (std::size_t r = 0; r < c.pairs.size(); ++r) {
      const std::string key = parse_learner(c.pairs[r].dictionary).label();
      auto it = cache.find(key);
      if (it == cache.end()) it = cache.emplace(key, detail::learn_all(c, samples, ds, c.pairs[r].dictionary, sizes[col])).first;
      if (it->second.error) {
        t.at(r, col).message = "dictionary: " + *it->second.error;
        continue;
      }
      t.at(r, col) = evaluate_cell(c, ds, it->second.per_channel, parse_encoder(c.pairs[r].encoder, c.encode));
    }
  }
  detail::common_metadata(t, c, ds);
  detail::note_failures(t);
  t.run_info = "started " + started + "\nfinished " + detail::timestamp() + "\n";
  return t;
}

// ---- timing ---------------------------------------------------------------

inline std::string host_description() {
  std::string s;
#if defined(__unix__) || defined(__APPLE__)
  utsname u{};
  if (uname(&u) == 0) s = std::string(u.sysname) + " " + u.release + " " + u.machine;
#endif
  if (s.empty()) s = "unknown-os";
  s += "; hardware threads=" + std::to_string(std::thread::hardware_concurrency());
#if defined(__clang__)
  s += "; clang " __clang_version__;
#elif defined(__GNUC__)
  s += "; gcc " __VERSION__;
#endif
  s += "; single-threaded timing";
  return s;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Synthetic data used by the cost benchmarks: `samples` descriptors per channel.
inline Dataset bench_dataset(const GridConfig& c) {
  GridConfig g = c;
  if (g.descriptor_paths.empty()) {
    const std::size_t videos = g.synth.classes * g.synth.videos_per_class;
    g.synth.descriptors_per_video = std::max<std::size_t>(1, (g.bench_samples + videos - 1) / videos);
  }
  return load_dataset(g);
}

}  // namespace detail

/// Wall-clock seconds to learn each dictionary (rows) per channel (columns)
/// with K = bench.K, N = bench.samples and a fixed iteration count.
inline ResultTable bench_learning_cost(const GridConfig& c) {
  if (c.bench_learners.empty()) fail(Errc::ConfigInvalid, "bench.learners must be non-empty");
  for (const auto& l : c.bench_learners) parse_learner(l);
  const Dataset ds = detail::bench_dataset(c);
  ResultTable t;
  t.title = "Dictionary learning cost (seconds)";
  t.precision = -1;
  std::vector<std::string> cols;
  for (const auto& ch : ds.channels) cols.push_back(ch.channel);
  t.resize(c.bench_learners, cols);
  for (std::size_t col = 0; col < ds.channels.size(); ++col) {
    Rng rng(derive_seed(c.seed, "bench/sample/" + ds.channels[col].channel));
    const Mat x = sample_features(ds.channels[col], c.bench_samples, rng);
    for (std::size_t r = 0; r < c.bench_learners.size(); ++r) {
      LearnParams p = parse_learner(c.bench_learners[r]);
      p.K = c.bench_K;
      p.iterations = c.bench_iterations;
      p.tol = 0.0;
      p.lambda = c.encode.lambda;
      p.threads = 1;
      p.seed = derive_seed(c.seed, "bench/learn/" + p.label());
      Cell& cell = t.at(r, col);
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const Dictionary d = learn_dictionary(x, p);
        cell.value = detail::seconds_since(t0);
        cell.ok = true;
        cell.diagnostics = {{"iterations_run", static_cast<double>(d.iterations_run)}};
      } catch (const Error& e) {
        cell.message = std::string(errc_name(e.code())) + ": " + e.what();
      }
    }
  }
  t.metadata.emplace_back("host", host_description());
  t.metadata.emplace_back("K", std::to_string(c.bench_K));
  t.metadata.emplace_back("N", std::to_string(c.bench_samples));
  t.metadata.emplace_back("iterations", std::to_string(c.bench_iterations));
  std::string dims;
  for (const auto& ch : ds.channels) dims += (dims.empty() ? "" : " ") + ch.channel + "=" + std::to_string(ch.dim());
  t.metadata.emplace_back("descriptor dims", dims);
  detail::note_failures(t);
  t.run_info = "finished " + detail::timestamp() + "\n";
  return t;
}

/// Mean seconds per single-descriptor encode for each encoder (rows) per
/// channel (columns), against a K-means dictionary with K = bench.K.
/// The dictionary is column-normalized so every encoder sees the same atoms.
inline ResultTable bench_encoding_cost(const GridConfig& c) {
  if (c.bench_encoders.empty()) fail(Errc::ConfigInvalid, "bench.encoders must be non-empty");
  std::vector<EncodeParams> eps;
  for (const auto& e : c.bench_encoders) eps.push_back(parse_encoder(e, c.encode));
  const std::size_t n_enc = std::max<std::size_t>(c.bench_encodes, 10000);
  const Dataset ds = detail::bench_dataset(c);
  ResultTable t;
  t.title = "Encoding cost per descriptor (seconds)";
  t.precision = -1;
  std::vector<std::string> cols;
  for (const auto& ch : ds.channels) cols.push_back(ch.channel);
  t.resize(c.bench_encoders, cols);
  for (std::size_t col = 0; col < ds.channels.size(); ++col) {
    Rng rng(derive_seed(c.seed, "bench/sample/" + ds.channels[col].channel));
    const Mat x = sample_features(ds.channels[col], c.bench_samples, rng);
    LearnParams lp;
    lp.method = Learner::KMeans;
    lp.K = std::min(c.bench_K, x.cols());
    lp.iterations = c.bench_iterations;
    lp.seed = derive_seed(c.seed, "bench/encode-dictionary");
    const Codebook cb(normalized_columns(learn_dictionary(x, lp).atoms));
    const Mat xt = x.transpose();
    for (std::size_t r = 0; r < eps.size(); ++r) {
      Cell& cell = t.at(r, col);
      try {
        volatile std::size_t sink = 0;
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < n_enc; ++i) sink = sink + encode(xt.row(i % xt.rows()), cb, eps[r]).support.size();
        cell.value = detail::seconds_since(t0) / static_cast<double>(n_enc);
        cell.ok = true;
      } catch (const Error& e) {
        cell.message = std::string(errc_name(e.code())) + ": " + e.what();
      }
    }
  }
  t.metadata.emplace_back("host", host_description());
  t.metadata.emplace_back("dictionary", "K-means, K=" + std::to_string(c.bench_K) + ", unit-normalized columns");
  t.metadata.emplace_back("encodes per method", std::to_string(n_enc));
  std::string dims;
  for (const auto& ch : ds.channels) dims += (dims.empty() ? "" : " ") + ch.channel + "=" + std::to_string(ch.dim());
  t.metadata.emplace_back("descriptor dims", dims);
  detail::note_failures(t);
  t.run_info = "finished " + detail::timestamp() + "\n";
  return t;
}

}  // namespace bowkit
