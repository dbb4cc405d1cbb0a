// Copyright 2026 The MSFQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command line front end for the multi-stage feature quantization
// toolkit.
//
//   msfq synth        --out DIR [--utterances N --frames T --clusters K
//                     --dim D --std S --seed N --sine]
//   msfq train        --corpus DIR --out DIR [--config FILE --seed N
//                     --reseed-dead --teacher-forcing 0|1]
//   msfq encode       --artifacts DIR --in PATH --out DIR [--config FILE]
//   msfq decode       --artifacts DIR --in PATH --out DIR
//   msfq compress     --artifacts DIR --in PATH --out DIR
//   msfq reconstruct  --artifacts DIR --in PATH --out DIR [--config FILE
//                     --ref DIR --teacher-forcing 0|1]
//   msfq eval fd      --a PATH --b PATH [--scale X]
//   msfq eval er      --ref FILE --hyp FILE [--mode cer|per]
//   msfq eval mcd     --a PATH --b PATH
//   msfq stats        --artifacts DIR --in PATH
//   msfq melspec      --in PATH --out PATH [--config FILE --linear]
//   msfq gradcheck    [--seed N --points N --step H --tolerance TOL]
//
// PATH arguments accept a single file or a directory; directories are
// processed in sorted filename order. Metrics go to stdout as
// "name<TAB>value" lines. Exit codes: 0 success, 2 configuration or
// usage error, 3 artifact fingerprint mismatch, 4 numeric failure,
// 1 any other error.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msfq/associate.hpp"
#include "msfq/common.hpp"
#include "msfq/config.hpp"
#include "msfq/dsp.hpp"
#include "msfq/gradcheck.hpp"
#include "msfq/io.hpp"
#include "msfq/metrics.hpp"
#include "msfq/mhvq.hpp"
#include "msfq/msmc.hpp"
#include "msfq/pipeline.hpp"
#include "msfq/synthetic.hpp"
#include "msfq/wav.hpp"

namespace fs = std::filesystem;
using namespace msfq;

namespace {

void print_metric(const std::string& name, double value) {
  std::printf("%s\t%.6f\n", name.c_str(), value);
}

void print_metric_exp(const std::string& name, double value) {
  std::printf("%s\t%.6e\n", name.c_str(), value);
}

// Expands PATH to a sorted file list: a file stands alone, a directory
// contributes every regular file with the given extension.
std::vector<fs::path> expand_inputs(const std::string& path,
                                    const std::string& ext) {
  fs::path p(path);
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) {
    throw IoError("no such file or directory: " + path);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(p)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw IoError("no " + ext + " files under " + path);
  }
  return files;
}

config::PipelineConfig load_cfg(const std::string& path) {
  if (path.empty()) return config::PipelineConfig{};
  return config::load_config(path);
}

std::vector<mhvq::MultiHeadCodebook> load_stage_books(
    const std::string& dir) {
  std::vector<mhvq::MultiHeadCodebook> books;
  for (int i = 0;; ++i) {
    const fs::path p =
        fs::path(dir) / ("stage_" + std::to_string(i) + ".mscb");
    if (!fs::is_regular_file(p)) break;
    books.push_back(io::read_codebook(p.string()));
  }
  if (books.empty()) {
    throw IoError("no stage_<i>.mscb codebooks under " + dir);
  }
  return books;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

int run_synth(const std::string& out_dir, const config::PipelineConfig& cfg,
              synthetic::SyntheticSpec spec) {
  spec.frame_shift_ms = cfg.stft.frame_shift_ms;
  const synthetic::SyntheticCorpus corpus = synthetic::gen_synthetic(spec);
  ensure_dir(out_dir);
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    char name[32];
    std::snprintf(name, sizeof(name), "utt_%04zu.msfq", u);
    io::write_feature_file((fs::path(out_dir) / name).string(),
                           corpus.utterances[u]);
  }
  // Ground truth lands in meta/ so corpus globs over out_dir skip it.
  if (corpus.centers.rows() > 0) {
    const fs::path meta = fs::path(out_dir) / "meta";
    ensure_dir(meta.string());
    FeatureSequence centers(corpus.centers, spec.frame_shift_ms,
                            FeatureKind::kEmbedding);
    io::write_feature_file((meta / "centers.msfq").string(), centers);
    std::ofstream labels((meta / "labels.txt").string());
    for (const auto& utt : corpus.labels) {
      for (std::size_t t = 0; t < utt.size(); ++t) {
        labels << (t > 0 ? " " : "") << utt[t];
      }
      labels << "\n";
    }
  }
  print_metric("utterances",
               static_cast<double>(corpus.utterances.size()));
  return 0;
}

int run_train(const std::string& corpus_dir, const std::string& out_dir,
              const config::PipelineConfig& cfg) {
  std::vector<FeatureSequence> corpus;
  for (const fs::path& p : expand_inputs(corpus_dir, ".msfq")) {
    corpus.push_back(io::read_feature_file(p.string()));
  }
  const pipeline::TrainArtifacts art = pipeline::train(cfg, corpus);
  ensure_dir(out_dir);
  for (std::size_t i = 0; i < art.stage_books.size(); ++i) {
    io::write_codebook(
        (fs::path(out_dir) / ("stage_" + std::to_string(i) + ".mscb"))
            .string(),
        art.stage_books[i]);
  }
  io::write_decoder((fs::path(out_dir) / "decoder.msdc").string(),
                    art.decoder);
  io::write_associate_model((fs::path(out_dir) / "associate.msam").string(),
                            art.assoc, art.decoder.books_fingerprint);
  {
    std::ofstream os((fs::path(out_dir) / "report.json").string());
    os << art.report.dump(2) << "\n";
  }
  print_metric("bits_per_frame", art.report["bits_per_frame"]);
  print_metric("loss/vq", art.report["losses"]["vq"]);
  print_metric("loss/ms", art.report["losses"]["ms"]);
  print_metric("loss/frame", art.report["losses"]["frame"]);
  print_metric("loss/mel_l1", art.report["losses"]["mel_l1"]);
  print_metric("associate/total", art.report["associate"]["total"]);
  print_metric("associate/compression_ratio",
               art.report["associate"]["compression_ratio"]);
  return 0;
}

int run_encode(const std::string& in, const std::string& out_dir,
               const std::string& artifacts,
               const config::PipelineConfig& cfg) {
  const auto books = load_stage_books(artifacts);
  const uint64_t books_fp = mhvq::books_fingerprint(books);
  ensure_dir(out_dir);
  for (const fs::path& p : expand_inputs(in, ".msfq")) {
    const FeatureSequence seq = io::read_feature_file(p.string());
    const msmc::Msmcr m = msmc::encode(seq, cfg.stages, books);
    const fs::path out = fs::path(out_dir) / (p.stem().string() + ".msmr");
    io::write_msmcr(out.string(), m, books_fp);
  }
  return 0;
}

int run_decode(const std::string& in, const std::string& out_dir,
               const std::string& artifacts) {
  const auto books = load_stage_books(artifacts);
  const io::Decoder dec =
      io::read_decoder((fs::path(artifacts) / "decoder.msdc").string());
  if (dec.books_fingerprint != mhvq::books_fingerprint(books)) {
    throw MismatchError("decoder was trained against different stage "
                        "codebooks");
  }
  ensure_dir(out_dir);
  for (const fs::path& p : expand_inputs(in, ".msmr")) {
    const msmc::Msmcr m = io::read_msmcr(p.string(), books);
    const FeatureSequence seq = msmc::decode(m, dec.predictors, dec.head);
    const fs::path out = fs::path(out_dir) / (p.stem().string() + ".msfq");
    io::write_feature_file(out.string(), seq);
  }
  return 0;
}

int run_compress(const std::string& in, const std::string& out_dir,
                 const std::string& artifacts) {
  const auto books = load_stage_books(artifacts);
  const io::AssociateArtifact assoc = io::read_associate_model(
      (fs::path(artifacts) / "associate.msam").string());
  if (assoc.stage_books_fingerprint != mhvq::books_fingerprint(books)) {
    throw MismatchError("associate model was trained against different "
                        "stage codebooks");
  }
  ensure_dir(out_dir);
  double msmcr_bits = 0.0;
  double code_bits = 0.0;
  for (const fs::path& p : expand_inputs(in, ".msmr")) {
    const msmc::Msmcr m = io::read_msmcr(p.string(), books);
    const associate::CompactCode code =
        associate::compress(m, assoc.model);
    const fs::path out = fs::path(out_dir) / (p.stem().string() + ".mscc");
    io::write_compact_code(out.string(), code);
    const associate::CompressionReport r =
        associate::compression_report(m, code);
    msmcr_bits += r.msmcr_bits;
    code_bits += r.code_bits;
  }
  print_metric("msmcr_bits", msmcr_bits);
  print_metric("code_bits", code_bits);
  print_metric("compression_ratio",
               code_bits > 0.0 ? msmcr_bits / code_bits : 0.0);
  return 0;
}

int run_reconstruct(const std::string& in, const std::string& out_dir,
                    const std::string& artifacts,
                    const config::PipelineConfig& cfg,
                    const std::string& ref_dir, bool teacher_forcing) {
  const auto books = load_stage_books(artifacts);
  const io::AssociateArtifact assoc = io::read_associate_model(
      (fs::path(artifacts) / "associate.msam").string());
  if (assoc.stage_books_fingerprint != mhvq::books_fingerprint(books)) {
    throw MismatchError("associate model was trained against different "
                        "stage codebooks");
  }
  if (teacher_forcing && ref_dir.empty()) {
    throw ConfigError("--teacher-forcing 1 requires --ref");
  }
  const uint64_t books_fp = mhvq::books_fingerprint(books);
  ensure_dir(out_dir);
  for (const fs::path& p : expand_inputs(in, ".mscc")) {
    const associate::CompactCode code = io::read_compact_code(p.string());
    msmc::Msmcr ref;
    bool have_ref = false;
    if (!ref_dir.empty()) {
      const fs::path rp = fs::path(ref_dir) / (p.stem().string() + ".msmr");
      ref = io::read_msmcr(rp.string(), books);
      have_ref = true;
    }
    const msmc::Msmcr recon = associate::reconstruct(
        code, assoc.model, cfg.stages, books,
        teacher_forcing && have_ref ? &ref : nullptr);
    const fs::path out = fs::path(out_dir) / (p.stem().string() + ".msmr");
    io::write_msmcr(out.string(), recon, books_fp);
    if (have_ref) {
      const FeatureSequence pre_q = msmc::align_concat(ref);
      const associate::AssociateLoss loss = associate::associate_loss(
          pre_q, code, assoc.model, recon, ref, cfg.weights.rec);
      print_metric_exp("vq/" + p.stem().string(), loss.vq);
      print_metric_exp("rec/" + p.stem().string(), loss.rec);
      print_metric_exp("total/" + p.stem().string(), loss.total);
    }
  }
  return 0;
}

int run_eval_fd(const std::string& a_path, const std::string& b_path,
                double scale) {
  const auto pool = [](const std::string& path) {
    Eigen::Index rows = 0;
    std::vector<FeatureSequence> seqs;
    for (const fs::path& p : expand_inputs(path, ".msfq")) {
      seqs.push_back(io::read_feature_file(p.string()));
      rows += seqs.back().num_frames();
    }
    MatrixXd all(rows, seqs[0].dim());
    Eigen::Index at = 0;
    for (const FeatureSequence& s : seqs) {
      if (s.dim() != all.cols()) {
        throw InvalidInputError("eval fd: inconsistent dims in " + path);
      }
      all.middleRows(at, s.num_frames()) = s.frames;
      at += s.num_frames();
    }
    return all;
  };
  const metrics::GaussianStats sa = metrics::gaussian_stats(pool(a_path));
  const metrics::GaussianStats sb = metrics::gaussian_stats(pool(b_path));
  metrics::FrechetDiagnostics diag;
  const double fd = metrics::frechet_distance(sa, sb, scale, &diag);
  if (diag.clamped_fraction > 1e-6) {
    std::fprintf(stderr,
                 "warning: clamped %.3e of eigenvalue mass to zero\n",
                 diag.clamped_fraction);
  }
  print_metric("fd", fd);
  return 0;
}

int run_eval_er(const std::string& ref_path, const std::string& hyp_path,
                const std::string& mode) {
  const std::vector<std::string> ref_lines = read_lines(ref_path);
  const std::vector<std::string> hyp_lines = read_lines(hyp_path);
  if (ref_lines.size() != hyp_lines.size()) {
    throw InvalidInputError("eval er: ref has " +
                            std::to_string(ref_lines.size()) +
                            " lines, hyp has " +
                            std::to_string(hyp_lines.size()));
  }
  std::vector<std::pair<metrics::TokenSequence, metrics::TokenSequence>>
      pairs;
  pairs.reserve(ref_lines.size());
  for (std::size_t i = 0; i < ref_lines.size(); ++i) {
    if (mode == "cer") {
      pairs.emplace_back(metrics::character_tokens(ref_lines[i]),
                         metrics::character_tokens(hyp_lines[i]));
    } else {
      pairs.emplace_back(metrics::whitespace_tokens(ref_lines[i]),
                         metrics::whitespace_tokens(hyp_lines[i]));
    }
  }
  print_metric(mode, metrics::corpus_error_rate(pairs));
  return 0;
}

int run_eval_mcd(const std::string& a_path, const std::string& b_path) {
  const std::vector<fs::path> a_files = expand_inputs(a_path, ".msfq");
  const std::vector<fs::path> b_files = expand_inputs(b_path, ".msfq");
  if (a_files.size() != b_files.size()) {
    throw InvalidInputError("eval mcd: side a has " +
                            std::to_string(a_files.size()) +
                            " files, side b has " +
                            std::to_string(b_files.size()));
  }
  double weighted = 0.0;
  int64_t frames = 0;
  for (std::size_t i = 0; i < a_files.size(); ++i) {
    const FeatureSequence a = io::read_feature_file(a_files[i].string());
    const FeatureSequence b = io::read_feature_file(b_files[i].string());
    const double d = dsp::mel_cepstral_distortion(a, b);
    weighted += d * static_cast<double>(a.num_frames());
    frames += a.num_frames();
  }
  print_metric("mcd", frames > 0 ? weighted / static_cast<double>(frames)
                                 : 0.0);
  return 0;
}

int run_stats(const std::string& in, const std::string& artifacts) {
  const auto books = load_stage_books(artifacts);
  const std::vector<fs::path> files = expand_inputs(in, ".msmr");
  std::vector<std::vector<Eigen::MatrixXi>> tokens(books.size());
  int64_t base_frames = 0;
  std::vector<int> rates(books.size(), 0);
  for (const fs::path& p : files) {
    const msmc::Msmcr m = io::read_msmcr(p.string(), books);
    if (m.stages.size() != books.size()) {
      throw MismatchError("stats: stage count mismatch in " + p.string());
    }
    base_frames += m.base_frames();
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
      tokens[i].push_back(m.stages[i].tokens);
      rates[i] = m.stages[i].rate;
    }
  }
  double bits = 0.0;
  for (std::size_t i = 0; i < books.size(); ++i) {
    Eigen::Index rows = 0;
    for (const Eigen::MatrixXi& t : tokens[i]) rows += t.rows();
    Eigen::MatrixXi all(rows, books[i].heads);
    Eigen::Index at = 0;
    for (const Eigen::MatrixXi& t : tokens[i]) {
      all.middleRows(at, t.rows()) = t;
      at += t.rows();
    }
    const mhvq::CodebookStats st =
        mhvq::codebook_stats(all, books[i].codewords);
    for (int h = 0; h < books[i].heads; ++h) {
      print_metric("stage" + std::to_string(i) + ".head" +
                       std::to_string(h) + ".perplexity",
                   st.perplexity[static_cast<std::size_t>(h)]);
    }
    bits += static_cast<double>(books[i].heads) *
            std::log2(static_cast<double>(books[i].codewords)) /
            static_cast<double>(rates[i]);
  }
  print_metric("frames", static_cast<double>(base_frames));
  print_metric("bits_per_frame", bits);
  return 0;
}

int run_melspec(const std::string& in, const std::string& out,
                const config::PipelineConfig& cfg, bool linear) {
  const std::vector<fs::path> files = expand_inputs(in, ".wav");
  const bool out_is_file = files.size() == 1 && !fs::is_directory(out) &&
                           fs::path(out).extension() == ".msfq";
  if (!out_is_file) ensure_dir(out);
  for (const fs::path& p : files) {
    const WaveformBuffer pcm = wav::read_wav(p.string());
    const FeatureSequence mel =
        linear ? dsp::mel_spectrogram(pcm, cfg.stft)
               : dsp::log_mel_spectrogram(pcm, cfg.stft);
    const fs::path dst = out_is_file
                             ? fs::path(out)
                             : fs::path(out) / (p.stem().string() + ".msfq");
    io::write_feature_file(dst.string(), mel);
  }
  return 0;
}

int run_gradcheck(uint64_t seed, int points, double step, double tol) {
  const std::vector<gradcheck::SuiteEntry> suite =
      gradcheck::run_suite(seed, points, step);
  double worst = 0.0;
  for (const gradcheck::SuiteEntry& e : suite) {
    print_metric_exp(e.name, e.max_rel_error);
    worst = std::max(worst, e.max_rel_error);
  }
  if (!std::isfinite(worst) || worst >= tol) {
    throw NumericError("gradient check failed: worst relative error " +
                       std::to_string(worst));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage feature quantization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::string artifacts;
  std::string corpus_dir;
  std::string ref_path;
  std::string hyp_path;
  std::string a_path;
  std::string b_path;
  std::string er_mode = "cer";
  uint64_t seed = 1;
  bool have_seed = false;
  double scale = 1.0;
  bool reseed_dead = false;
  int teacher_forcing = -1;
  bool linear = false;
  bool sine = false;
  int points = 100;
  double step = 1e-4;
  double tolerance = 1e-5;
  synthetic::SyntheticSpec spec;

  CLI::App* synth = app.add_subcommand("synth", "Generate synthetic data");
  synth->add_option("--out", out_path, "Output directory")->required();
  synth->add_option("--config", config_path, "Pipeline config JSON");
  synth->add_option("--utterances", spec.num_utterances, "Utterance count");
  synth->add_option("--frames", spec.frames_per_utterance,
                    "Frames per utterance");
  synth->add_option("--clusters", spec.num_clusters, "Cluster count");
  synth->add_option("--dim", spec.dim, "Feature dimension");
  synth->add_option("--std", spec.cluster_std, "Cluster standard deviation");
  synth->add_option("--seed", spec.seed, "Random seed");
  synth->add_flag("--sine", sine, "Smooth sine trajectories");

  CLI::App* train = app.add_subcommand("train", "Train pipeline artifacts");
  train->add_option("--corpus", corpus_dir, "Feature file directory")
      ->required();
  train->add_option("--out", out_path, "Artifact output directory")
      ->required();
  train->add_option("--config", config_path, "Pipeline config JSON");
  train->add_option("--seed", seed, "Override config seed");
  train->add_flag("--reseed-dead", reseed_dead,
                  "Reseed unused codewords during training");
  train->add_option("--teacher-forcing", teacher_forcing,
                    "Override associate cascade teacher forcing (0 or 1)")
      ->check(CLI::Range(0, 1));
  train->callback([&] { have_seed = train->count("--seed") > 0; });

  CLI::App* encode = app.add_subcommand("encode", "Quantize feature files");
  encode->add_option("--artifacts", artifacts, "Artifact directory")
      ->required();
  encode->add_option("--in", in_path, "Feature file or directory")
      ->required();
  encode->add_option("--out", out_path, "Output directory")->required();
  encode->add_option("--config", config_path, "Pipeline config JSON");

  CLI::App* decode = app.add_subcommand("decode", "Decode token files");
  decode->add_option("--artifacts", artifacts, "Artifact directory")
      ->required();
  decode->add_option("--in", in_path, "Token file or directory")->required();
  decode->add_option("--out", out_path, "Output directory")->required();

  CLI::App* compress =
      app.add_subcommand("compress", "Compress token files");
  compress->add_option("--artifacts", artifacts, "Artifact directory")
      ->required();
  compress->add_option("--in", in_path, "Token file or directory")
      ->required();
  compress->add_option("--out", out_path, "Output directory")->required();

  CLI::App* reconstruct =
      app.add_subcommand("reconstruct", "Reconstruct tokens from codes");
  reconstruct->add_option("--artifacts", artifacts, "Artifact directory")
      ->required();
  reconstruct->add_option("--in", in_path, "Code file or directory")
      ->required();
  reconstruct->add_option("--out", out_path, "Output directory")->required();
  reconstruct->add_option("--config", config_path, "Pipeline config JSON");
  reconstruct->add_option("--ref", ref_path,
                          "Reference token directory for loss reporting");
  reconstruct->add_option("--teacher-forcing", teacher_forcing,
                          "Use reference upper stages in the cascade (0 "
                          "or 1)")
      ->check(CLI::Range(0, 1));

  CLI::App* eval = app.add_subcommand("eval", "Objective metrics");
  eval->require_subcommand(1);
  CLI::App* eval_fd =
      eval->add_subcommand("fd", "Distribution distance between corpora");
  eval_fd->add_option("--a", a_path, "Feature file or directory")
      ->required();
  eval_fd->add_option("--b", b_path, "Feature file or directory")
      ->required();
  eval_fd->add_option("--scale", scale, "Distance scale factor");
  CLI::App* eval_er = eval->add_subcommand("er", "Token error rate");
  eval_er->add_option("--ref", ref_path, "Reference transcript file")
      ->required();
  eval_er->add_option("--hyp", hyp_path, "Hypothesis transcript file")
      ->required();
  eval_er->add_option("--mode", er_mode, "cer or per")
      ->check(CLI::IsMember({"cer", "per"}));
  CLI::App* eval_mcd =
      eval->add_subcommand("mcd", "Mel cepstral distortion");
  eval_mcd->add_option("--a", a_path, "Feature file or directory")
      ->required();
  eval_mcd->add_option("--b", b_path, "Feature file or directory")
      ->required();

  CLI::App* stats = app.add_subcommand("stats", "Codeword usage statistics");
  stats->add_option("--artifacts", artifacts, "Artifact directory")
      ->required();
  stats->add_option("--in", in_path, "Token file or directory")->required();

  CLI::App* melspec =
      app.add_subcommand("melspec", "Mel spectrogram front end");
  melspec->add_option("--in", in_path, "WAV file or directory")->required();
  melspec->add_option("--out", out_path, "Output file or directory")
      ->required();
  melspec->add_option("--config", config_path, "Pipeline config JSON");
  melspec->add_flag("--linear", linear, "Skip the log compression");

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Validate analytic gradients");
  gradcheck_cmd->add_option("--seed", seed, "Random seed");
  gradcheck_cmd->add_option("--points", points, "Probe points per loss")
      ->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--step", step, "Central difference step");
  gradcheck_cmd->add_option("--tolerance", tolerance,
                            "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*synth) {
      config::PipelineConfig cfg = load_cfg(config_path);
      spec.sine_mode = sine;
      return run_synth(out_path, cfg, spec);
    }
    if (*train) {
      config::PipelineConfig cfg = load_cfg(config_path);
      if (have_seed) cfg.seed = seed;
      if (reseed_dead) cfg.reseed_dead = true;
      if (teacher_forcing >= 0) cfg.teacher_forcing = teacher_forcing != 0;
      return run_train(corpus_dir, out_path, cfg);
    }
    if (*encode) {
      return run_encode(in_path, out_path, artifacts,
                        load_cfg(config_path));
    }
    if (*decode) return run_decode(in_path, out_path, artifacts);
    if (*compress) return run_compress(in_path, out_path, artifacts);
    if (*reconstruct) {
      return run_reconstruct(in_path, out_path, artifacts,
                             load_cfg(config_path), ref_path,
                             teacher_forcing == 1);
    }
    if (*eval_fd) return run_eval_fd(a_path, b_path, scale);
    if (*eval_er) return run_eval_er(ref_path, hyp_path, er_mode);
    if (*eval_mcd) return run_eval_mcd(a_path, b_path);
    if (*stats) return run_stats(in_path, artifacts);
    if (*melspec) {
      return run_melspec(in_path, out_path, load_cfg(config_path), linear);
    }
    if (*gradcheck_cmd) return run_gradcheck(seed, points, step, tolerance);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const MismatchError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
