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

#ifndef MSFQ_MSMC_HPP_
#define MSFQ_MSMC_HPP_

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "msfq/common.hpp"
#include "msfq/mhvq.hpp"

namespace msfq {
namespace msmc {

struct StageSpec {
  int rate = 1;       // Cumulative downsample rate; stage 1 must be 1.
  int heads = 4;
  int codewords = 64;
};

struct StageConfig {
  std::vector<StageSpec> stages;

  int num_stages() const { return static_cast<int>(stages.size()); }
};

inline void validate(const StageConfig& cfg) {
  if (cfg.stages.empty()) {
    throw ConfigError("stages: need at least one stage");
  }
  if (cfg.stages[0].rate != 1) {
    throw ConfigError("stages[0].rate: must be 1");
  }
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageSpec& s = cfg.stages[i];
    const std::string at = "stages[" + std::to_string(i) + "]";
    if (s.rate < 1) throw ConfigError(at + ".rate: must be >= 1");
    if (s.heads < 1) throw ConfigError(at + ".heads: must be >= 1");
    if (s.codewords < 1) throw ConfigError(at + ".codewords: must be >= 1");
    if (i > 0) {
      const int prev = cfg.stages[i - 1].rate;
      if (s.rate <= prev) {
        throw ConfigError(at + ".rate: must exceed the previous stage");
      }
      if (s.rate % prev != 0) {
        throw ConfigError(at + ".rate: must be a multiple of the previous " +
                          "stage rate");
      }
    }
  }
}

// One quantized stage of a multi-stage representation. `codewords` is the
// per-head codebook size, kept here so bit accounting needs no config.
struct Stage {
  Eigen::MatrixXi tokens;    // T_i x H_i.
  FeatureSequence quantized; // T_i x D.
  int rate = 1;
  int codewords = 0;
};

struct Msmcr {
  std::vector<Stage> stages;   // Stage 1 (full rate) first.
  double frame_shift_ms = 0.0; // Shift of stage 1.

  int num_stages() const { return static_cast<int>(stages.size()); }
  Eigen::Index base_frames() const {
    return stages.empty() ? 0 : stages[0].quantized.num_frames();
  }
};

struct LinearPredictor {
  MatrixXd weight;  // D_out x D_in.
  VectorXd bias;    // D_out.
  double ridge_lambda = 0.0;

  MatrixXd apply(const MatrixXd& inputs) const {
    if (inputs.cols() != weight.cols()) {
      throw InvalidInputError("predictor: input dim " +
                              std::to_string(inputs.cols()) + " != " +
                              std::to_string(weight.cols()));
    }
    return (inputs * weight.transpose()).rowwise() + bias.transpose();
  }
};

// T_out = ceil(T / r); the tail window is filled by repeating the final
// frame, which keeps the shape law exact for every T.
inline FeatureSequence downsample_avg(const FeatureSequence& seq, int r) {
  if (r < 1) throw InvalidInputError("downsample_avg: rate must be >= 1");
  FeatureSequence out;
  out.frame_shift_ms = seq.frame_shift_ms * r;
  out.kind = seq.kind;
  const Eigen::Index t_in = seq.num_frames();
  const Eigen::Index t_out = (t_in + r - 1) / r;
  out.frames.resize(t_out, seq.dim());
  for (Eigen::Index t = 0; t < t_out; ++t) {
    VectorXd acc = VectorXd::Zero(seq.dim());
    for (int j = 0; j < r; ++j) {
      Eigen::Index src = t * r + j;
      if (src >= t_in) src = t_in - 1;
      acc += seq.frames.row(src).transpose();
    }
    out.frames.row(t) = acc.transpose() / r;
  }
  return out;
}

inline FeatureSequence upsample_repeat(const FeatureSequence& seq, int r,
                                       Eigen::Index target_len) {
  if (r < 1) throw InvalidInputError("upsample_repeat: rate must be >= 1");
  if (target_len < 0 || target_len > seq.num_frames() * r) {
    throw InvalidInputError("upsample_repeat: target length " +
                            std::to_string(target_len) + " exceeds " +
                            std::to_string(seq.num_frames() * r));
  }
  FeatureSequence out;
  out.frame_shift_ms = seq.frame_shift_ms / r;
  out.kind = seq.kind;
  out.frames.resize(target_len, seq.dim());
  for (Eigen::Index t = 0; t < target_len; ++t) {
    out.frames.row(t) = seq.frames.row(t / r);
  }
  return out;
}

// Nearest-neighbor resampling on frame-center times (i + 0.5) * shift.
// Output length follows the duration: T_out = ceil(T * in_shift / out_shift).
// A center tie picks the earlier input frame.
inline FeatureSequence resample_nearest(const FeatureSequence& seq,
                                        double target_shift_ms) {
  if (!(seq.frame_shift_ms > 0.0) || !(target_shift_ms > 0.0)) {
    throw InvalidInputError("resample_nearest: frame shifts must be positive");
  }
  FeatureSequence out;
  out.frame_shift_ms = target_shift_ms;
  out.kind = seq.kind;
  const Eigen::Index t_in = seq.num_frames();
  const Eigen::Index t_out = static_cast<Eigen::Index>(
      std::ceil(static_cast<double>(t_in) * seq.frame_shift_ms /
                target_shift_ms));
  out.frames.resize(t_out, seq.dim());
  for (Eigen::Index t = 0; t < t_out; ++t) {
    const double x =
        (static_cast<double>(t) + 0.5) * target_shift_ms / seq.frame_shift_ms -
        0.5;
    double lo = std::floor(x);
    Eigen::Index idx = static_cast<Eigen::Index>(lo);
    if (x - lo > 0.5) ++idx;
    if (idx < 0) idx = 0;
    if (idx >= t_in) idx = t_in - 1;
    out.frames.row(t) = seq.frames.row(idx);
  }
  return out;
}

// Ridge least squares with an unpenalized bias: inputs and targets are
// centered, (Xc'Xc + lambda I) W' = Xc'Yc is solved by LDLT, and the bias
// absorbs the means. The fitted residual never exceeds the bias-only
// predictor's residual.
inline LinearPredictor fit_stage_predictor(const MatrixXd& inputs,
                                           const MatrixXd& targets,
                                           double ridge_lambda) {
  if (inputs.rows() != targets.rows()) {
    throw InvalidInputError("fit_stage_predictor: row mismatch " +
                            std::to_string(inputs.rows()) + " vs " +
                            std::to_string(targets.rows()));
  }
  if (inputs.rows() == 0) {
    throw InsufficientDataError("fit_stage_predictor: no training rows");
  }
  if (ridge_lambda < 0.0) {
    throw ConfigError("ridge_lambda: must be >= 0");
  }
  require_finite(inputs, "fit_stage_predictor: inputs");
  require_finite(targets, "fit_stage_predictor: targets");

  const VectorXd in_mean = inputs.colwise().mean().transpose();
  const VectorXd out_mean = targets.colwise().mean().transpose();
  const MatrixXd xc = inputs.rowwise() - in_mean.transpose();
  const MatrixXd yc = targets.rowwise() - out_mean.transpose();
  MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += ridge_lambda;
  const MatrixXd wt = gram.ldlt().solve(xc.transpose() * yc);

  LinearPredictor p;
  p.weight = wt.transpose();
  p.bias = out_mean - p.weight * in_mean;
  p.ridge_lambda = ridge_lambda;
  require_finite(p.weight, "fit_stage_predictor: weight");
  require_finite(p.bias, "fit_stage_predictor: bias");
  return p;
}

inline void check_stage_books(
    const StageConfig& cfg,
    const std::vector<mhvq::MultiHeadCodebook>& books, Eigen::Index dim) {
  validate(cfg);
  if (books.size() != cfg.stages.size()) {
    throw ConfigError("stage codebooks: expected " +
                      std::to_string(cfg.stages.size()) + ", got " +
                      std::to_string(books.size()));
  }
  for (std::size_t i = 0; i < books.size(); ++i) {
    const std::string at = "stages[" + std::to_string(i) + "]";
    if (books[i].heads != cfg.stages[i].heads ||
        books[i].codewords != cfg.stages[i].codewords) {
      throw ConfigError(at + ": codebook geometry differs from config");
    }
    if (books[i].total_dim() != dim) {
      throw ConfigError(at + ": codebook dim " +
                        std::to_string(books[i].total_dim()) +
                        " != feature dim " + std::to_string(dim));
    }
  }
}

// Per stage: average-pool the input to the stage rate, then quantize with
// the stage codebook. Stages are independent given the input.
inline Msmcr encode(const FeatureSequence& seq, const StageConfig& cfg,
                    const std::vector<mhvq::MultiHeadCodebook>& books) {
  check_stage_books(cfg, books, seq.dim());
  Msmcr m;
  m.frame_shift_ms = seq.frame_shift_ms;
  m.stages.resize(cfg.stages.size());
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const FeatureSequence pooled =
        downsample_avg(seq, cfg.stages[i].rate);
    mhvq::SequenceQuantization q = mhvq::quantize_sequence(pooled, books[i]);
    m.stages[i].tokens = std::move(q.tokens);
    m.stages[i].quantized = std::move(q.quantized);
    m.stages[i].rate = cfg.stages[i].rate;
    m.stages[i].codewords = cfg.stages[i].codewords;
  }
  return m;
}

// Pre-quantization stage inputs (the encoder side of the straight-through
// pair); stage i is the input pooled to rate r_i.
inline std::vector<FeatureSequence> stage_inputs(const FeatureSequence& seq,
                                                 const StageConfig& cfg) {
  validate(cfg);
  std::vector<FeatureSequence> out;
  out.reserve(cfg.stages.size());
  for (const StageSpec& s : cfg.stages) {
    out.push_back(downsample_avg(seq, s.rate));
  }
  return out;
}

inline void validate_msmcr(const Msmcr& m) {
  if (m.stages.empty()) throw InvalidInputError("msmcr: no stages");
  const Eigen::Index t1 = m.base_frames();
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    const Stage& s = m.stages[i];
    const Eigen::Index want = (t1 + s.rate - 1) / s.rate;
    if (s.quantized.num_frames() != want ||
        s.tokens.rows() != s.quantized.num_frames()) {
      throw InvalidInputError("msmcr: stage " + std::to_string(i) +
                              " length breaks the ceil(T1/r) law");
    }
    require_finite(s.quantized.frames, "msmcr: stage " + std::to_string(i));
  }
}

// Every stage upsampled by repetition to the stage-1 length and
// concatenated along the feature axis, stage 1 first.
inline FeatureSequence align_concat(const Msmcr& m) {
  validate_msmcr(m);
  const Eigen::Index t1 = m.base_frames();
  Eigen::Index total_dim = 0;
  for (const Stage& s : m.stages) total_dim += s.quantized.dim();
  FeatureSequence out;
  out.frame_shift_ms = m.frame_shift_ms;
  out.kind = FeatureKind::kStage;
  out.frames.resize(t1, total_dim);
  Eigen::Index col = 0;
  for (const Stage& s : m.stages) {
    const FeatureSequence up = upsample_repeat(s.quantized, s.rate, t1);
    out.frames.middleCols(col, s.quantized.dim()) = up.frames;
    col += s.quantized.dim();
  }
  return out;
}

// Aligned stages through the fitted output head. The inter-stage predictors
// are part of the decoder artifact and must be present (one per adjacent
// stage pair) even though only the head touches the feature path here; they
// carry the cross-stage prediction used at fitting time.
inline FeatureSequence decode(const Msmcr& m,
                              const std::vector<LinearPredictor>& predictors,
                              const LinearPredictor& head) {
  validate_msmcr(m);
  if (static_cast<int>(predictors.size()) != m.num_stages() - 1) {
    throw ConfigError("decode: expected " +
                      std::to_string(m.num_stages() - 1) +
                      " inter-stage predictors, got " +
                      std::to_string(predictors.size()));
  }
  const FeatureSequence aligned = align_concat(m);
  if (head.weight.size() == 0 || head.weight.cols() != aligned.dim()) {
    throw ConfigError("decode: head expects dim " +
                      std::to_string(head.weight.cols()) + ", stages give " +
                      std::to_string(aligned.dim()));
  }
  FeatureSequence out;
  out.frame_shift_ms = m.frame_shift_ms;
  out.kind = FeatureKind::kMel;
  out.frames = head.apply(aligned.frames);
  return out;
}

namespace internal {

inline double mean_row_sq_norm(const MatrixXd& delta) {
  if (delta.rows() == 0) return 0.0;
  return delta.squaredNorm() / static_cast<double>(delta.rows());
}

}  // namespace internal

// (1/S) * sum over stages of the mean squared frame distance between the
// pre-quantization sequence and its quantization. The quantized branch is a
// constant for differentiation; grads (optional) receives d/d pre_quant.
inline double vq_loss(const std::vector<FeatureSequence>& pre_quant,
                      const Msmcr& post_quant,
                      std::vector<MatrixXd>* grads = nullptr) {
  const std::size_t s = pre_quant.size();
  if (s == 0 || s != post_quant.stages.size()) {
    throw InvalidInputError("vq_loss: stage count mismatch");
  }
  if (grads != nullptr) grads->assign(s, MatrixXd());
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    const MatrixXd& a = pre_quant[i].frames;
    const MatrixXd& b = post_quant.stages[i].quantized.frames;
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw InvalidInputError("vq_loss: stage " + std::to_string(i) +
                              " shape mismatch");
    }
    const MatrixXd delta = a - b;
    total += internal::mean_row_sq_norm(delta);
    if (grads != nullptr) {
      (*grads)[i] = a.rows() == 0
                        ? MatrixXd::Zero(a.rows(), a.cols())
                        : MatrixXd(2.0 * delta /
                                   (static_cast<double>(s) *
                                    static_cast<double>(a.rows())));
    }
  }
  return total / static_cast<double>(s);
}

// (1/(S-1)) * sum over adjacent-stage predictions of the mean squared frame
// distance to the actual stage. Stage sequences of `actual` are constants;
// grads receives d/d predicted. S = 1 has no adjacent pairs: returns 0 and
// sets *degenerate.
inline double ms_loss(const std::vector<FeatureSequence>& predicted,
                      const Msmcr& actual,
                      std::vector<MatrixXd>* grads = nullptr,
                      bool* degenerate = nullptr) {
  const std::size_t pairs = actual.stages.size() - 1;
  if (degenerate != nullptr) *degenerate = pairs == 0;
  if (grads != nullptr) grads->assign(predicted.size(), MatrixXd());
  if (pairs == 0) {
    if (!predicted.empty()) {
      throw InvalidInputError("ms_loss: predictions given for a single-stage "
                              "representation");
    }
    return 0.0;
  }
  if (predicted.size() != pairs) {
    throw InvalidInputError("ms_loss: expected " + std::to_string(pairs) +
                            " predictions, got " +
                            std::to_string(predicted.size()));
  }
  double total = 0.0;
  for (std::size_t j = 0; j < pairs; ++j) {
    const MatrixXd& a = predicted[j].frames;
    const MatrixXd& b = actual.stages[j].quantized.frames;
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw InvalidInputError("ms_loss: prediction " + std::to_string(j) +
                              " shape mismatch");
    }
    const MatrixXd delta = a - b;
    total += internal::mean_row_sq_norm(delta);
    if (grads != nullptr) {
      (*grads)[j] = a.rows() == 0
                        ? MatrixXd::Zero(a.rows(), a.cols())
                        : MatrixXd(2.0 * delta /
                                   (static_cast<double>(pairs) *
                                    static_cast<double>(a.rows())));
    }
  }
  return total / static_cast<double>(pairs);
}

// Prediction of each lower stage from its upper neighbor: stage j is
// predicted from stage j+1 upsampled by the rate ratio to length T_j.
inline std::vector<FeatureSequence> predict_lower_stages(
    const Msmcr& m, const std::vector<LinearPredictor>& predictors) {
  validate_msmcr(m);
  const std::size_t pairs =
      static_cast<std::size_t>(m.num_stages() > 0 ? m.num_stages() - 1 : 0);
  if (predictors.size() != pairs) {
    throw ConfigError("predict_lower_stages: expected " +
                      std::to_string(pairs) + " predictors, got " +
                      std::to_string(predictors.size()));
  }
  std::vector<FeatureSequence> out(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    const Stage& low = m.stages[j];
    const Stage& high = m.stages[j + 1];
    const int ratio = high.rate / low.rate;
    const FeatureSequence up = upsample_repeat(high.quantized, ratio,
                                               low.quantized.num_frames());
    out[j].frames = predictors[j].apply(up.frames);
    out[j].frame_shift_ms = low.quantized.frame_shift_ms;
    out[j].kind = FeatureKind::kStage;
  }
  return out;
}

// Token payload sizes. bits_per_frame is normalized to stage-1 frames:
// sum_i H_i * log2(K_i) / r_i.
inline double bits_per_frame(const StageConfig& cfg) {
  validate(cfg);
  double bits = 0.0;
  for (const StageSpec& s : cfg.stages) {
    bits += s.heads * std::log2(static_cast<double>(s.codewords)) / s.rate;
  }
  return bits;
}

inline double msmcr_bits(const Msmcr& m) {
  double bits = 0.0;
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    if (m.stages[i].codewords < 1) {
      throw InvalidInputError("msmcr_bits: stage " + std::to_string(i) +
                              " has no codebook size");
    }
    bits += static_cast<double>(m.stages[i].tokens.rows()) *
            static_cast<double>(m.stages[i].tokens.cols()) *
            std::log2(static_cast<double>(m.stages[i].codewords));
  }
  return bits;
}

}  // namespace msmc
}  // namespace msfq

#endif  // MSFQ_MSMC_HPP_
