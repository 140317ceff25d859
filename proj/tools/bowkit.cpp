// bowkit command-line front end.
//
// Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "bowkit/bowkit.hpp"

namespace fs = std::filesystem;
using namespace bowkit;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  bool paper_scale = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "key=value config file");
  sub->add_option("--set", c.sets, "override one config key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--out", c.out, "output directory or file");
  sub->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  sub->add_flag("--paper-scale", c.paper_scale, "K=4000 and 100000 learning samples");
}

ConfigMap merged_map(const Common& c) {
  ConfigMap m;
  if (!c.config.empty()) m = load_config(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(Errc::ConfigInvalid, "--set expects key=value, got '" + s + "'");
    m[detail::trim(s.substr(0, eq))] = detail::trim(s.substr(eq + 1));
  }
  if (c.seed) m["seed"] = std::to_string(*c.seed);
  if (c.out) m["out"] = *c.out;
  if (c.threads) m["threads"] = std::to_string(*c.threads);
  if (c.paper_scale) m["paper_scale"] = "true";
  return m;
}

GridConfig config_from(const Common& c) { return make_config(merged_map(c)); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::IoFailure, "cannot create directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoFailure, "cannot open " + path);
  out << text;
  if (!out) fail(Errc::IoFailure, "short write to " + path);
}

std::string diagnostics_csv(const ResultTable& t) {
  std::string s = "row,column,status,key,value\n";
  char buf[48];
  for (std::size_t r = 0; r < t.row_labels.size(); ++r)
    for (std::size_t c = 0; c < t.col_labels.size(); ++c) {
      const Cell& cell = t.at(r, c);
      const std::string head = t.row_labels[r] + "," + t.col_labels[c] + "," + (cell.ok ? "ok" : "failed");
      if (!cell.ok) s += head + ",message," + detail::csv_field(cell.message) + "\n";
      for (const auto& [k, v] : cell.diagnostics) {
        std::snprintf(buf, sizeof buf, "%.6g", v);
        s += head + "," + k + "," + buf + "\n";
      }
    }
  return s;
}

void write_reports(const ResultTable& t, const std::string& dir, const std::string& stem, bool with_diagnostics) {
  ensure_dir(dir);
  const std::string base = (fs::path(dir) / stem).string();
  emit_report(t, ReportFormat::Csv, base + ".csv");
  emit_report(t, ReportFormat::Markdown, base + ".md");
  if (with_diagnostics) write_text(base + "_diagnostics.csv", diagnostics_csv(t));
  write_text(base + "_run_info.txt", t.run_info);
  std::cout << render_report(t, ReportFormat::Markdown);
  std::cout << "wrote " << base << ".csv and " << base << ".md\n";
}

std::vector<std::uint16_t> labels_from(const std::string& path, const std::vector<std::uint32_t>& ids) {
  std::map<std::uint32_t, std::uint16_t> cls;
  std::ifstream probe(path, std::ios::binary);
  char magic[4] = {};
  probe.read(magic, 4);
  if (std::string(magic, 4) == "BWHS") {
    for (const auto& h : load_histograms(path)) cls[h.video_id] = h.class_id;
  } else {
    cls = load_descriptors(path).video_class;
  }
  std::vector<std::uint16_t> out;
  for (auto id : ids) {
    auto it = cls.find(id);
    if (it == cls.end()) fail(Errc::IdMismatch, "no label for video " + std::to_string(id));
    if (it->second == kUnlabeled) fail(Errc::InvalidData, "video " + std::to_string(id) + " is unlabeled");
    out.push_back(it->second);
  }
  return out;
}

std::vector<VideoHistogram> pick(const std::vector<VideoHistogram>& hs, const std::vector<std::uint32_t>& ids) {
  std::map<std::uint32_t, const VideoHistogram*> by_id;
  for (const auto& h : hs) by_id[h.video_id] = &h;
  std::vector<VideoHistogram> out;
  for (auto id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(Errc::IdMismatch, "histogram file has no video " + std::to_string(id));
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bowkit: bag-of-words dictionary learning and encoding toolkit"};
  app.require_subcommand(1);

  Common synth_c, learn_c, enc_c, grid_c, sweep_c, bl_c, be_c;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset (BWDS per channel + BWSP split)");
  add_common(synth, synth_c);

  auto* learn = app.add_subcommand("learn", "learn a dictionary from a BWDS file");
  add_common(learn, learn_c);
  std::string learn_in, learn_method = "K-means", learn_split;
  learn->add_option("--descriptors", learn_in, "input BWDS")->required();
  learn->add_option("--method", learn_method, "RW, RE, K-means, OMP-<k>, SC");
  learn->add_option("--split", learn_split, "BWSP; sample only from its training videos");

  auto* encpool = app.add_subcommand("encode-pool", "encode descriptors and pool them into per-video histograms");
  add_common(encpool, enc_c);
  std::string enc_in, enc_dict, enc_method = "VQ", enc_codes;
  encpool->add_option("--descriptors", enc_in, "input BWDS")->required();
  encpool->add_option("--dictionary", enc_dict, "input BWDC")->required();
  encpool->add_option("--encoder", enc_method, "VQ, SA-<k>, OMP-<k>, SC, LLC-<k>, LLC-FULL");
  encpool->add_option("--codes-csv", enc_codes, "also dump raw codes as CSV");

  auto* kernel = app.add_subcommand("kernel", "chi-square RBF kernels from histograms (one BWHS per channel)");
  std::vector<std::string> k_hist;
  std::string k_split, k_out = "out";
  kernel->add_option("--hist", k_hist, "BWHS file per channel")->required();
  kernel->add_option("--split", k_split, "BWSP split")->required();
  kernel->add_option("--out", k_out, "output directory");

  auto* train = app.add_subcommand("train-eval", "train the SVM on a kernel and score the test kernel");
  std::string t_train, t_test, t_labels, t_out = "out";
  double t_c = 100.0;
  train->add_option("--train-kernel", t_train, "train x train kernel CSV")->required();
  train->add_option("--test-kernel", t_test, "test x train kernel CSV")->required();
  train->add_option("--labels", t_labels, "BWHS or BWDS file carrying class labels")->required();
  train->add_option("--C", t_c, "SVM regularization");
  train->add_option("--out", t_out, "output directory");

  auto* grid = app.add_subcommand("grid", "dictionary x encoder accuracy grid");
  add_common(grid, grid_c);
  auto* sweep = app.add_subcommand("size-sweep", "accuracy against dictionary size");
  add_common(sweep, sweep_c);
  auto* bl = app.add_subcommand("bench-learn", "time dictionary learning");
  add_common(bl, bl_c);
  auto* be = app.add_subcommand("bench-encode", "time single-descriptor encoding");
  add_common(be, be_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      const GridConfig c = config_from(synth_c);
      const SynthData d = generate_synthetic(c.synth);
      ensure_dir(c.out);
      for (const auto& ch : d.channels) {
        const auto p = (fs::path(c.out) / (ch.channel + ".bwds")).string();
        save_descriptors(ch, p);
        std::cout << "wrote " << p << " (" << ch.size() << " descriptors, d=" << ch.dim() << ")\n";
      }
      const auto sp = (fs::path(c.out) / "split.bwsp").string();
      save_split(d.split, sp);
      std::cout << "wrote " << sp << " (" << d.split.train.size() << " train, " << d.split.test.size() << " test)\n";
    } else if (learn->parsed()) {
      ConfigMap m = merged_map(learn_c);
      const GridConfig c = make_config(m);
      DescriptorSet set = load_descriptors(learn_in);
      if (!learn_split.empty()) set = select_videos(set, load_split(learn_split).train);
      Rng rng(derive_seed(c.seed, "sample/" + set.channel));
      const Mat x = sample_features(set, std::min(c.samples, set.size()), rng);
      LearnParams p = parse_learner(learn_method);
      p.K = c.K;
      p.iterations = c.learn_iterations;
      p.tol = c.learn_tol;
      p.lambda = c.encode.lambda;
      p.threads = c.threads;
      p.seed = c.seed;
      const Dictionary d = learn_dictionary(x, p);
      const std::string out = m.count("out") ? c.out : set.channel + ".bwdc";
      save_dictionary(d, out);
      std::cout << "wrote " << out << " (" << d.method << ", " << d.iterations_run << " iterations, " << d.stop_reason
                << ")\n";
      if (!d.objective_trace.empty())
        std::cout << "objective " << d.objective_trace.front() << " -> " << d.objective_trace.back() << "\n";
    } else if (encpool->parsed()) {
      ConfigMap m = merged_map(enc_c);
      const GridConfig c = make_config(m);
      const DescriptorSet set = load_descriptors(enc_in);
      const Dictionary d = load_dictionary(enc_dict);
      const EncodeParams ep = parse_encoder(enc_method, c.encode);
      bool normalized = false;
      const Mat atoms = detail::atoms_for(d, ep, &normalized);
      if (normalized) std::cerr << "note: OMP uses a unit-normalized copy of the dictionary\n";
      if (!enc_codes.empty()) write_codes_csv(encode_batch(set.descriptors, Codebook(atoms), ep), enc_codes);
      const auto hs = build_histograms(set, atoms, ep, c.alpha);
      const std::string out = m.count("out") ? c.out : set.channel + ".bwhs";
      save_histograms(hs, out);
      std::size_t zero = 0;
      for (const auto& h : hs) zero += h.zero;
      std::cout << "wrote " << out << " (" << hs.size() << " videos, K=" << d.size() << ", " << zero
                << " all-zero)\n";
    } else if (kernel->parsed()) {
      const SplitSpec split = load_split(k_split);
      std::vector<KernelMatrix> ktr, kte;
      for (const auto& path : k_hist) {
        const auto hs = load_histograms(path);
        const auto tr = pick(hs, split.train), te = pick(hs, split.test);
        const double A = mean_chi2(tr);
        ktr.push_back(rbf_chi2_kernel(tr, tr, A));
        kte.push_back(rbf_chi2_kernel(te, tr, A));
      }
      ensure_dir(k_out);
      const auto ptr = (fs::path(k_out) / "train_kernel.csv").string();
      const auto pte = (fs::path(k_out) / "test_kernel.csv").string();
      save_kernel_csv(average_kernels(ktr), ptr);
      save_kernel_csv(average_kernels(kte), pte);
      std::cout << "wrote " << ptr << " and " << pte << "\n";
    } else if (train->parsed()) {
      const KernelMatrix ktr = load_kernel_csv(t_train), kte = load_kernel_csv(t_test);
      SmoOptions opt;
      opt.C = t_c;
      const auto ytr = labels_from(t_labels, ktr.row_ids);
      const auto yte = labels_from(t_labels, kte.row_ids);
      const SvmModel model = svm_train(ktr, ytr, opt);
      const auto preds = svm_predict(model, kte);
      const DualCertificate cert = certify(model, ktr, ytr);
      ensure_dir(t_out);
      save_model(model, (fs::path(t_out) / "model.bin").string());
      std::string csv = "video_id,true,predicted\n";
      for (std::size_t i = 0; i < preds.size(); ++i)
        csv += std::to_string(kte.row_ids[i]) + "," + std::to_string(yte[i]) + "," + std::to_string(preds[i].label) + "\n";
      write_text((fs::path(t_out) / "predictions.csv").string(), csv);
      std::printf("accuracy %.2f%% (%zu test videos)\n", 100.0 * accuracy(preds, yte), preds.size());
      std::printf("max KKT violation %.3g, |sum alpha y| %.3g\n", cert.max_kkt_violation, cert.max_equality);
    } else if (grid->parsed()) {
      const GridConfig c = config_from(grid_c);
      write_reports(run_grid(c), c.out, "grid", true);
    } else if (sweep->parsed()) {
      const GridConfig c = config_from(sweep_c);
      write_reports(run_size_sweep(c, c.sizes), c.out, "size_sweep", true);
    } else if (bl->parsed()) {
      const GridConfig c = config_from(bl_c);
      write_reports(bench_learning_cost(c), c.out, "bench_learn", false);
    } else if (be->parsed()) {
      const GridConfig c = config_from(be_c);
      write_reports(bench_encoding_cost(c), c.out, "bench_encode", false);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << errc_name(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(classify_error(e.code()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
