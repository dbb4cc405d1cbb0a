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

#ifndef MSFQ_PIPELINE_HPP_
#define MSFQ_PIPELINE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msfq/associate.hpp"
#include "msfq/common.hpp"
#include "msfq/config.hpp"
#include "msfq/io.hpp"
#include "msfq/mhvq.hpp"
#include "msfq/msmc.hpp"

namespace msfq {
namespace pipeline {

// Everything `train` produces. Corpus-level losses are pooled over frames
// (total squared error over total frames), which is exactly the objective
// the ridge fits minimize, so fitted-beats-zero-predictor holds for any
// corpus, balanced or not.
struct TrainArtifacts {
  std::vector<mhvq::MultiHeadCodebook> stage_books;
  io::Decoder decoder;
  associate::AssociateModel assoc;
  std::vector<mhvq::TrainReport> stage_reports;
  nlohmann::json report;
};

namespace internal {

inline uint64_t stage_seed(uint64_t seed, int stage) {
  return Rng(seed).derive(0x53544700ULL + static_cast<uint64_t>(stage))
      .next_u64();
}

inline uint64_t associate_seed(uint64_t seed) {
  return Rng(seed).derive(0x4153534fULL).next_u64();
}

// Pooled mean squared frame distance: sum of squared row distances over
// all pairs, divided by total rows.
struct PooledSq {
  double total = 0.0;
  int64_t rows = 0;

  void add(const MatrixXd& a, const MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw InvalidInputError("pooled loss: shape mismatch");
    }
    total += (a - b).squaredNorm();
    rows += a.rows();
  }
  double mean() const {
    return rows == 0 ? 0.0 : total / static_cast<double>(rows);
  }
};

}  // namespace internal

inline void check_corpus(const std::vector<FeatureSequence>& corpus) {
  if (corpus.empty()) {
    throw InsufficientDataError("train: empty corpus");
  }
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    if (corpus[u].num_frames() == 0) {
      throw InsufficientDataError("train: utterance " + std::to_string(u) +
                                  " has no frames");
    }
    if (corpus[u].dim() != corpus[0].dim()) {
      throw InvalidInputError("train: utterance " + std::to_string(u) +
                              " dimension differs from the first");
    }
    require_finite(corpus[u].frames, "train: utterance " +
                                          std::to_string(u));
  }
}

// Fits stage codebooks, inter-stage predictors, the decode head, and the
// associate model; fills a machine-readable report. Deterministic given
// (config, corpus order).
inline TrainArtifacts train(const config::PipelineConfig& cfg,
                            const std::vector<FeatureSequence>& corpus) {
  config::validate(cfg);
  check_corpus(corpus);
  const int s = cfg.stages.num_stages();
  const Eigen::Index dim = corpus[0].dim();
  for (int i = 0; i < s; ++i) {
    if (dim % cfg.stages.stages[static_cast<std::size_t>(i)].heads != 0) {
      throw ConfigError("stages[" + std::to_string(i) +
                        "].heads: feature dim " + std::to_string(dim) +
                        " not divisible");
    }
  }

  TrainArtifacts art;
  nlohmann::json& report = art.report;

  // Stage codebooks on pooled downsampled frames.
  mhvq::TrainOptions train_opts;
  train_opts.decay = cfg.ema_decay;
  train_opts.smoothing_eps = cfg.ema_smoothing_eps;
  train_opts.reseed_dead = cfg.reseed_dead;
  for (int i = 0; i < s; ++i) {
    const std::size_t is = static_cast<std::size_t>(i);
    const msmc::StageSpec& spec = cfg.stages.stages[is];
    Eigen::Index rows = 0;
    std::vector<FeatureSequence> pooled_seqs;
    pooled_seqs.reserve(corpus.size());
    for (const FeatureSequence& utt : corpus) {
      pooled_seqs.push_back(msmc::downsample_avg(utt, spec.rate));
      rows += pooled_seqs.back().num_frames();
    }
    MatrixXd data(rows, dim);
    Eigen::Index at = 0;
    for (const FeatureSequence& p : pooled_seqs) {
      data.middleRows(at, p.num_frames()) = p.frames;
      at += p.num_frames();
    }
    auto [book, train_report] = mhvq::train_codebook(
        data, spec.heads, spec.codewords, cfg.train_epochs, train_opts,
        internal::stage_seed(cfg.seed, i));
    art.stage_books.push_back(std::move(book));
    art.stage_reports.push_back(train_report);

    nlohmann::json stage_json;
    stage_json["initial_mean_sq_error"] = train_report.initial_mean_sq_error;
    stage_json["epoch_mean_sq_error"] = train_report.epoch_mean_sq_error;
    stage_json["final_mean_sq_error"] = train_report.final_mean_sq_error;
    stage_json["best_epoch"] = train_report.best_epoch;
    stage_json["usage_entropy"] = train_report.usage_entropy;
    stage_json["reseeded_codewords"] = train_report.reseeded_codewords;
    report["stages"].push_back(stage_json);
  }
  const uint64_t books_fp = mhvq::books_fingerprint(art.stage_books);
  art.decoder.books_fingerprint = books_fp;

  // Encode the corpus once; everything downstream consumes the tokens.
  std::vector<msmc::Msmcr> encoded;
  encoded.reserve(corpus.size());
  for (const FeatureSequence& utt : corpus) {
    encoded.push_back(msmc::encode(utt, cfg.stages, art.stage_books));
  }

  // Inter-stage predictors: upsampled stage j+1 -> stage j, pooled.
  for (int j = 0; j + 1 < s; ++j) {
    const std::size_t js = static_cast<std::size_t>(j);
    Eigen::Index rows = 0;
    for (const msmc::Msmcr& m : encoded) {
      rows += m.stages[js].quantized.num_frames();
    }
    MatrixXd inputs(rows, dim);
    MatrixXd targets(rows, dim);
    Eigen::Index at = 0;
    for (const msmc::Msmcr& m : encoded) {
      const int ratio = m.stages[js + 1].rate / m.stages[js].rate;
      const FeatureSequence up = msmc::upsample_repeat(
          m.stages[js + 1].quantized, ratio,
          m.stages[js].quantized.num_frames());
      inputs.middleRows(at, up.num_frames()) = up.frames;
      targets.middleRows(at, up.num_frames()) =
          m.stages[js].quantized.frames;
      at += up.num_frames();
    }
    art.decoder.predictors.push_back(
        msmc::fit_stage_predictor(inputs, targets, cfg.ridge_lambda));
  }

  // Decode head: aligned stages -> original features, pooled.
  {
    Eigen::Index rows = 0;
    for (const FeatureSequence& utt : corpus) rows += utt.num_frames();
    MatrixXd inputs(rows, dim * s);
    MatrixXd targets(rows, dim);
    Eigen::Index at = 0;
    for (std::size_t u = 0; u < corpus.size(); ++u) {
      const FeatureSequence aligned = msmc::align_concat(encoded[u]);
      inputs.middleRows(at, aligned.num_frames()) = aligned.frames;
      targets.middleRows(at, aligned.num_frames()) = corpus[u].frames;
      at += aligned.num_frames();
    }
    art.decoder.head =
        msmc::fit_stage_predictor(inputs, targets, cfg.ridge_lambda);
  }

  // Pooled corpus losses. The zero predictor is the best bias-only map
  // (pooled target mean), the baseline the fitted one must not lose to.
  {
    std::vector<internal::PooledSq> vq_by_stage(
        static_cast<std::size_t>(s));
    for (std::size_t u = 0; u < corpus.size(); ++u) {
      const std::vector<FeatureSequence> pre =
          msmc::stage_inputs(corpus[u], cfg.stages);
      for (int i = 0; i < s; ++i) {
        const std::size_t is = static_cast<std::size_t>(i);
        vq_by_stage[is].add(pre[is].frames,
                            encoded[u].stages[is].quantized.frames);
      }
    }
    double vq_total = 0.0;
    for (const internal::PooledSq& p : vq_by_stage) vq_total += p.mean();
    report["losses"]["vq"] = vq_total / s;

    if (s > 1) {
      std::vector<internal::PooledSq> ms_fit(
          static_cast<std::size_t>(s - 1));
      std::vector<internal::PooledSq> ms_zero(
          static_cast<std::size_t>(s - 1));
      // Zero-predictor bias: pooled mean of each low stage.
      std::vector<VectorXd> stage_means(static_cast<std::size_t>(s - 1));
      for (int j = 0; j + 1 < s; ++j) {
        const std::size_t js = static_cast<std::size_t>(j);
        VectorXd sum = VectorXd::Zero(dim);
        int64_t rows = 0;
        for (const msmc::Msmcr& m : encoded) {
          sum += m.stages[js].quantized.frames.colwise().sum().transpose();
          rows += m.stages[js].quantized.num_frames();
        }
        stage_means[js] = sum / static_cast<double>(rows);
      }
      for (const msmc::Msmcr& m : encoded) {
        const std::vector<FeatureSequence> preds =
            msmc::predict_lower_stages(m, art.decoder.predictors);
        for (int j = 0; j + 1 < s; ++j) {
          const std::size_t js = static_cast<std::size_t>(j);
          const MatrixXd& actual = m.stages[js].quantized.frames;
          ms_fit[js].add(preds[js].frames, actual);
          const MatrixXd zero_pred =
              MatrixXd::Ones(actual.rows(), 1) * stage_means[js].transpose();
          ms_zero[js].add(zero_pred, actual);
        }
      }
      double fit_total = 0.0;
      double zero_total = 0.0;
      for (int j = 0; j + 1 < s; ++j) {
        fit_total += ms_fit[static_cast<std::size_t>(j)].mean();
        zero_total += ms_zero[static_cast<std::size_t>(j)].mean();
      }
      report["losses"]["ms"] = fit_total / (s - 1);
      report["losses"]["ms_zero_predictor"] = zero_total / (s - 1);
    } else {
      report["losses"]["ms"] = 0.0;
      report["losses"]["ms_zero_predictor"] = 0.0;
      report["losses"]["ms_degenerate"] = true;
    }

    internal::PooledSq frame_pool;
    double l1_total = 0.0;
    int64_t elements = 0;
    for (std::size_t u = 0; u < corpus.size(); ++u) {
      const FeatureSequence decoded =
          msmc::decode(encoded[u], art.decoder.predictors, art.decoder.head);
      frame_pool.add(decoded.frames, corpus[u].frames);
      l1_total += (decoded.frames - corpus[u].frames).cwiseAbs().sum();
      elements += corpus[u].frames.size();
    }
    report["losses"]["frame"] =
        frame_pool.rows == 0
            ? 0.0
            : frame_pool.total / static_cast<double>(elements);
    report["losses"]["mel_l1"] =
        elements == 0 ? 0.0 : l1_total / static_cast<double>(elements);
  }

  // Associate model.
  associate::FitOptions assoc_opts;
  assoc_opts.codewords = cfg.associate_codewords;
  assoc_opts.epochs = cfg.associate_epochs;
  assoc_opts.ridge_lambda = cfg.ridge_lambda;
  assoc_opts.teacher_forcing = cfg.teacher_forcing;
  assoc_opts.codebook = train_opts;
  assoc_opts.seed = internal::associate_seed(cfg.seed);
  art.assoc = associate::fit(encoded, cfg.stages, art.stage_books,
                             assoc_opts);

  {
    double vq_total = 0.0;
    int64_t vq_rows = 0;
    std::vector<internal::PooledSq> rec_by_stage(
        static_cast<std::size_t>(s));
    std::vector<double> per_utt_rec;
    per_utt_rec.reserve(corpus.size());
    double total_msmcr_bits = 0.0;
    double total_code_bits = 0.0;
    for (const msmc::Msmcr& m : encoded) {
      const FeatureSequence aligned = associate::align_concat(m);
      const associate::CompactCode code = associate::compress(m, art.assoc);
      const msmc::Msmcr recon = associate::reconstruct(
          code, art.assoc, cfg.stages, art.stage_books);
      const associate::AssociateLoss loss = associate::associate_loss(
          aligned, code, art.assoc, recon, m, cfg.weights.rec);
      per_utt_rec.push_back(loss.rec);
      for (int i = 0; i < s; ++i) {
        const std::size_t is = static_cast<std::size_t>(i);
        rec_by_stage[is].add(recon.stages[is].quantized.frames,
                             m.stages[is].quantized.frames);
      }
      for (Eigen::Index t = 0; t < aligned.num_frames(); ++t) {
        const VectorXd cw = mhvq::dequantize({code.tokens(t)},
                                             art.assoc.codebook);
        vq_total += (aligned.frames.row(t).transpose() - cw).squaredNorm();
      }
      vq_rows += aligned.num_frames();
      const associate::CompressionReport comp =
          associate::compression_report(m, code);
      total_msmcr_bits += comp.msmcr_bits;
      total_code_bits += comp.code_bits;
    }
    const double l_vq =
        vq_rows == 0 ? 0.0 : vq_total / static_cast<double>(vq_rows);
    double l_rec = 0.0;
    for (const internal::PooledSq& p : rec_by_stage) l_rec += p.mean();
    l_rec /= s;
    report["associate"]["vq"] = l_vq;
    report["associate"]["rec"] = l_rec;
    report["associate"]["lambda_rec"] = cfg.weights.rec;
    report["associate"]["total"] = l_vq + cfg.weights.rec * l_rec;
    report["associate"]["per_utterance_rec"] = per_utt_rec;
    report["associate"]["msmcr_bits"] = total_msmcr_bits;
    report["associate"]["code_bits"] = total_code_bits;
    report["associate"]["compression_ratio"] =
        total_code_bits > 0.0 ? total_msmcr_bits / total_code_bits : 0.0;
  }

  report["bits_per_frame"] = msmc::bits_per_frame(cfg.stages);
  report["fingerprints"]["stage_books"] = books_fp;
  report["fingerprints"]["associate_codebook"] =
      mhvq::codebook_fingerprint(art.assoc.codebook);
  report["num_utterances"] = corpus.size();
  return art;
}

}  // namespace pipeline
}  // namespace msfq

#endif  // MSFQ_PIPELINE_HPP_
