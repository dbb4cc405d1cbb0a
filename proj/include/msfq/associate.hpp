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

#ifndef MSFQ_ASSOCIATE_HPP_
#define MSFQ_ASSOCIATE_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "msfq/common.hpp"
#include "msfq/mhvq.hpp"
#include "msfq/msmc.hpp"

namespace msfq {
namespace associate {

using msmc::align_concat;

// Compressed form of a multi-stage representation: one token per base
// frame plus one utterance-level embedding.
struct CompactCode {
  Eigen::VectorXi tokens;          // Length T_1, each in [0, K_a).
  int codewords = 0;               // K_a, for bit accounting.
  uint64_t codebook_fingerprint = 0;
  VectorXd global_embedding;
  double frame_shift_ms = 0.0;
};

// Single-head concat codebook plus the linear reconstruction cascade.
// stage_predictors[j] rebuilds stage j: the top stage (j = S-1) sees only
// the pooled base sequence; each lower stage additionally sees the
// upsampled quantized stage above it.
struct AssociateModel {
  mhvq::MultiHeadCodebook codebook;            // H = 1.
  msmc::LinearPredictor embedding_projector;   // 2*D_cat -> D_cat.
  std::vector<msmc::LinearPredictor> stage_predictors;
  int embedding_dim = 0;
};

struct AssociateLoss {
  double vq = 0.0;
  double rec = 0.0;
  double total = 0.0;
};

struct CompressionReport {
  double msmcr_bits = 0.0;
  double code_bits = 0.0;
  double ratio = 0.0;  // msmcr_bits / code_bits.
  double msmcr_bits_per_second = 0.0;
  double code_bits_per_second = 0.0;
};

inline void validate(const AssociateModel& model, int num_stages) {
  if (model.codebook.heads != 1) {
    throw ConfigError("associate codebook: must have exactly one head");
  }
  mhvq::validate(model.codebook);
  if (static_cast<int>(model.stage_predictors.size()) != num_stages) {
    throw ConfigError("associate model: expected " +
                      std::to_string(num_stages) + " stage predictors, got " +
                      std::to_string(model.stage_predictors.size()));
  }
  if (model.embedding_dim != 2 * model.codebook.head_dim) {
    throw ConfigError("associate model: embedding dim must be twice the "
                      "codeword dim");
  }
}

// Statistics pooling over aligned stage rows: concatenated per-dimension
// mean and population standard deviation.
inline VectorXd global_embedding(const msmc::Msmcr& m) {
  const FeatureSequence aligned = align_concat(m);
  const Eigen::Index t = aligned.num_frames();
  if (t == 0) {
    throw InsufficientDataError("global_embedding: empty representation");
  }
  const VectorXd mean = aligned.frames.colwise().mean().transpose();
  const MatrixXd centered = aligned.frames.rowwise() - mean.transpose();
  const VectorXd variance =
      centered.array().square().colwise().mean().transpose();
  VectorXd out(2 * aligned.dim());
  out.head(aligned.dim()) = mean;
  out.tail(aligned.dim()) = variance.array().sqrt();
  return out;
}

inline CompactCode compress(const msmc::Msmcr& m,
                            const AssociateModel& model) {
  validate(model, m.num_stages());
  const FeatureSequence aligned = align_concat(m);
  if (aligned.dim() != model.codebook.total_dim()) {
    throw ConfigError("compress: aligned dim " +
                      std::to_string(aligned.dim()) + " != codebook dim " +
                      std::to_string(model.codebook.total_dim()));
  }
  const mhvq::SequenceQuantization q =
      mhvq::quantize_sequence(aligned, model.codebook);
  CompactCode code;
  code.tokens = q.tokens.col(0);
  code.codewords = model.codebook.codewords;
  code.codebook_fingerprint = mhvq::codebook_fingerprint(model.codebook);
  code.global_embedding = global_embedding(m);
  code.frame_shift_ms = m.frame_shift_ms;
  return code;
}

// Base sequence the cascade decodes from: dequantized tokens with the
// projected global embedding broadcast-added to every frame.
inline FeatureSequence decode_base(const CompactCode& code,
                                   const AssociateModel& model) {
  if (code.codebook_fingerprint !=
      mhvq::codebook_fingerprint(model.codebook)) {
    throw MismatchError("decode_base: code was produced by a different "
                        "codebook");
  }
  const Eigen::Index t = code.tokens.size();
  FeatureSequence base;
  base.frame_shift_ms = code.frame_shift_ms;
  base.kind = FeatureKind::kStage;
  base.frames.resize(t, model.codebook.total_dim());
  for (Eigen::Index i = 0; i < t; ++i) {
    base.frames.row(i) =
        mhvq::dequantize({code.tokens(i)}, model.codebook).transpose();
  }
  const VectorXd shift =
      model.embedding_projector.apply(code.global_embedding.transpose())
          .row(0)
          .transpose();
  base.frames.rowwise() += shift.transpose();
  return base;
}

// Rebuilds the multi-stage representation from high to low stages. Stage
// S-1 is predicted from the pooled base alone; each lower stage j from the
// pooled base concatenated with the upsampled quantized stage j+1. With
// `teacher` set, that upper-stage input is taken from the ground-truth
// representation instead of the cascade's own output (used at fit time).
inline msmc::Msmcr reconstruct(const CompactCode& code,
                               const AssociateModel& model,
                               const msmc::StageConfig& cfg,
                               const std::vector<mhvq::MultiHeadCodebook>&
                                   stage_books,
                               const msmc::Msmcr* teacher = nullptr) {
  msmc::validate(cfg);
  validate(model, cfg.num_stages());
  if (stage_books.size() != cfg.stages.size()) {
    throw ConfigError("reconstruct: expected " +
                      std::to_string(cfg.stages.size()) +
                      " stage codebooks, got " +
                      std::to_string(stage_books.size()));
  }
  if (teacher != nullptr &&
      static_cast<int>(teacher->stages.size()) != cfg.num_stages()) {
    throw InvalidInputError("reconstruct: teacher stage count mismatch");
  }
  const FeatureSequence base = decode_base(code, model);
  const int s = cfg.num_stages();
  msmc::Msmcr out;
  out.frame_shift_ms = code.frame_shift_ms;
  out.stages.resize(static_cast<std::size_t>(s));
  for (int j = s - 1; j >= 0; --j) {
    const std::size_t js = static_cast<std::size_t>(j);
    const FeatureSequence pooled =
        msmc::downsample_avg(base, cfg.stages[js].rate);
    MatrixXd inputs;
    if (j == s - 1) {
      inputs = pooled.frames;
    } else {
      const msmc::Stage& upper = teacher != nullptr
                                     ? teacher->stages[js + 1]
                                     : out.stages[js + 1];
      const int ratio = cfg.stages[js + 1].rate / cfg.stages[js].rate;
      const FeatureSequence up = msmc::upsample_repeat(
          upper.quantized, ratio, pooled.num_frames());
      inputs.resize(pooled.num_frames(), pooled.dim() + up.dim());
      inputs.leftCols(pooled.dim()) = pooled.frames;
      inputs.rightCols(up.dim()) = up.frames;
    }
    FeatureSequence predicted;
    predicted.frames = model.stage_predictors[js].apply(inputs);
    predicted.frame_shift_ms = pooled.frame_shift_ms;
    predicted.kind = FeatureKind::kStage;
    mhvq::SequenceQuantization q =
        mhvq::quantize_sequence(predicted, stage_books[js]);
    out.stages[js].tokens = std::move(q.tokens);
    out.stages[js].quantized = std::move(q.quantized);
    out.stages[js].rate = cfg.stages[js].rate;
    out.stages[js].codewords = cfg.stages[js].codewords;
  }
  msmc::validate_msmcr(out);
  return out;
}

// L_vq: mean squared frame distance between the pre-quantization aligned
// sequence and its codeword sequence (the quantized branch is a constant).
// L_rec: (1/S) * sum over stages of the mean squared frame distance between
// the reconstruction and the target. L_a = L_vq + lambda_rec * L_rec.
inline AssociateLoss associate_loss(const FeatureSequence& pre_q,
                                    const CompactCode& code,
                                    const AssociateModel& model,
                                    const msmc::Msmcr& recon,
                                    const msmc::Msmcr& target,
                                    double lambda_rec) {
  if (!(lambda_rec >= 0.0) || !std::isfinite(lambda_rec)) {
    throw ConfigError("lambda_rec: must be finite and >= 0");
  }
  if (pre_q.num_frames() != code.tokens.size()) {
    throw InvalidInputError("associate_loss: token count != frame count");
  }
  if (pre_q.dim() != model.codebook.total_dim()) {
    throw InvalidInputError("associate_loss: dim != codebook dim");
  }
  AssociateLoss out;
  if (pre_q.num_frames() > 0) {
    double sq = 0.0;
    for (Eigen::Index t = 0; t < pre_q.num_frames(); ++t) {
      const VectorXd cw =
          mhvq::dequantize({code.tokens(t)}, model.codebook);
      sq += (pre_q.frames.row(t).transpose() - cw).squaredNorm();
    }
    out.vq = sq / static_cast<double>(pre_q.num_frames());
  }
  if (recon.stages.size() != target.stages.size() || recon.stages.empty()) {
    throw InvalidInputError("associate_loss: stage count mismatch");
  }
  double rec = 0.0;
  for (std::size_t i = 0; i < recon.stages.size(); ++i) {
    const MatrixXd& a = recon.stages[i].quantized.frames;
    const MatrixXd& b = target.stages[i].quantized.frames;
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw InvalidInputError("associate_loss: stage " + std::to_string(i) +
                              " shape mismatch");
    }
    if (a.rows() > 0) {
      rec += (a - b).squaredNorm() / static_cast<double>(a.rows());
    }
  }
  out.rec = rec / static_cast<double>(recon.stages.size());
  out.total = out.vq + lambda_rec * out.rec;
  return out;
}

inline CompressionReport compression_report(const msmc::Msmcr& m,
                                            const CompactCode& code) {
  if (!m.stages.empty() && m.base_frames() != code.tokens.size()) {
    throw InvalidInputError("compression_report: length mismatch");
  }
  CompressionReport r;
  r.msmcr_bits = m.stages.empty() ? 0.0 : msmc::msmcr_bits(m);
  r.code_bits = code.tokens.size() == 0
                    ? 0.0
                    : static_cast<double>(code.tokens.size()) *
                          std::log2(static_cast<double>(code.codewords));
  r.ratio = r.code_bits > 0.0 ? r.msmcr_bits / r.code_bits : 0.0;
  const double seconds = static_cast<double>(code.tokens.size()) *
                         code.frame_shift_ms / 1000.0;
  if (seconds > 0.0) {
    r.msmcr_bits_per_second = r.msmcr_bits / seconds;
    r.code_bits_per_second = r.code_bits / seconds;
  }
  return r;
}

struct FitOptions {
  int codewords = 64;          // K_a.
  int epochs = 20;
  double ridge_lambda = 1e-6;
  bool teacher_forcing = true;
  mhvq::TrainOptions codebook;
  uint64_t seed = 1;
};

// Fits the concat codebook, the embedding projector, and the cascade
// predictors on a corpus of multi-stage representations. The projector is
// trained to explain the per-utterance mean quantization residual, so the
// broadcast-added embedding restores what the single-codebook quantization
// lost at utterance level. Cascade predictors are fitted high to low; with
// teacher forcing the lower-stage fits consume ground-truth upper stages,
// otherwise the cascade's own quantized predictions.
inline AssociateModel fit(const std::vector<msmc::Msmcr>& corpus,
                          const msmc::StageConfig& cfg,
                          const std::vector<mhvq::MultiHeadCodebook>&
                              stage_books,
                          const FitOptions& opts) {
  msmc::validate(cfg);
  if (corpus.empty()) {
    throw InsufficientDataError("associate fit: empty corpus");
  }
  const int s = cfg.num_stages();

  // Pool aligned rows across the corpus for codebook training.
  Eigen::Index total_rows = 0;
  std::vector<FeatureSequence> aligned(corpus.size());
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    aligned[u] = align_concat(corpus[u]);
    total_rows += aligned[u].num_frames();
  }
  if (total_rows < opts.codewords) {
    throw InsufficientDataError("associate fit: fewer aligned frames than "
                                "codewords");
  }
  const Eigen::Index d_cat = aligned[0].dim();
  MatrixXd rows(total_rows, d_cat);
  Eigen::Index at = 0;
  for (const FeatureSequence& a : aligned) {
    rows.middleRows(at, a.num_frames()) = a.frames;
    at += a.num_frames();
  }

  AssociateModel model;
  model.codebook = mhvq::train_codebook(rows, 1, opts.codewords, opts.epochs,
                                        opts.codebook, opts.seed)
                       .first;
  model.embedding_dim = static_cast<int>(2 * d_cat);

  // Embedding projector: global embedding -> mean aligned-minus-codeword
  // residual of the utterance.
  MatrixXd emb_in(static_cast<Eigen::Index>(corpus.size()), 2 * d_cat);
  MatrixXd emb_out(static_cast<Eigen::Index>(corpus.size()), d_cat);
  std::vector<mhvq::SequenceQuantization> quant(corpus.size());
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    quant[u] = mhvq::quantize_sequence(aligned[u], model.codebook);
    emb_in.row(static_cast<Eigen::Index>(u)) =
        global_embedding(corpus[u]).transpose();
    emb_out.row(static_cast<Eigen::Index>(u)) =
        (aligned[u].frames - quant[u].quantized.frames).colwise().mean();
  }
  model.embedding_projector =
      msmc::fit_stage_predictor(emb_in, emb_out, opts.ridge_lambda);

  // Base sequences under the fitted codebook and projector.
  std::vector<FeatureSequence> bases(corpus.size());
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    CompactCode code;
    code.tokens = quant[u].tokens.col(0);
    code.codewords = model.codebook.codewords;
    code.codebook_fingerprint = mhvq::codebook_fingerprint(model.codebook);
    code.global_embedding = emb_in.row(static_cast<Eigen::Index>(u));
    code.frame_shift_ms = corpus[u].frame_shift_ms;
    bases[u] = decode_base(code, model);
  }

  // Cascade, high stage first. `upper[u]` holds the quantized stage j+1
  // sequence each utterance feeds to the stage-j fit.
  model.stage_predictors.resize(static_cast<std::size_t>(s));
  std::vector<FeatureSequence> upper(corpus.size());
  for (int j = s - 1; j >= 0; --j) {
    const std::size_t js = static_cast<std::size_t>(j);
    Eigen::Index n = 0;
    for (const msmc::Msmcr& m : corpus) {
      n += m.stages[js].quantized.num_frames();
    }
    const Eigen::Index d_stage = corpus[0].stages[js].quantized.dim();
    const Eigen::Index d_in =
        j == s - 1 ? d_cat
                   : d_cat + corpus[0].stages[js + 1].quantized.dim();
    MatrixXd inputs(n, d_in);
    MatrixXd targets(n, d_stage);
    Eigen::Index row = 0;
    for (std::size_t u = 0; u < corpus.size(); ++u) {
      const FeatureSequence pooled =
          msmc::downsample_avg(bases[u], cfg.stages[js].rate);
      const Eigen::Index t = pooled.num_frames();
      inputs.block(row, 0, t, d_cat) = pooled.frames;
      if (j < s - 1) {
        const int ratio = cfg.stages[js + 1].rate / cfg.stages[js].rate;
        const FeatureSequence& src =
            opts.teacher_forcing ? corpus[u].stages[js + 1].quantized
                                 : upper[u];
        const FeatureSequence up = msmc::upsample_repeat(src, ratio, t);
        inputs.block(row, d_cat, t, d_in - d_cat) = up.frames;
      }
      targets.middleRows(row, t) = corpus[u].stages[js].quantized.frames;
      row += t;
    }
    model.stage_predictors[js] =
        msmc::fit_stage_predictor(inputs, targets, opts.ridge_lambda);
    if (j > 0 && !opts.teacher_forcing) {
      for (std::size_t u = 0; u < corpus.size(); ++u) {
        const FeatureSequence pooled =
            msmc::downsample_avg(bases[u], cfg.stages[js].rate);
        MatrixXd in_u;
        if (j == s - 1) {
          in_u = pooled.frames;
        } else {
          const int ratio = cfg.stages[js + 1].rate / cfg.stages[js].rate;
          const FeatureSequence up =
              msmc::upsample_repeat(upper[u], ratio, pooled.num_frames());
          in_u.resize(pooled.num_frames(), d_in);
          in_u.leftCols(d_cat) = pooled.frames;
          in_u.rightCols(d_in - d_cat) = up.frames;
        }
        FeatureSequence predicted;
        predicted.frames = model.stage_predictors[js].apply(in_u);
        predicted.frame_shift_ms = pooled.frame_shift_ms;
        upper[u] = mhvq::quantize_sequence(predicted, stage_books[js])
                       .quantized;
      }
    }
  }
  validate(model, s);
  return model;
}

}  // namespace associate
}  // namespace msfq

#endif  // MSFQ_ASSOCIATE_HPP_
