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

#ifndef MSFQ_MHVQ_HPP_
#define MSFQ_MHVQ_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "msfq/common.hpp"

namespace msfq {
namespace mhvq {

// Multi-head (product) codebook: the input vector is chunked into `heads`
// contiguous sub-vectors of `head_dim` dimensions and each chunk is
// quantized against its own K x d sub-codebook.
struct MultiHeadCodebook {
  int heads = 0;
  int codewords = 0;
  int head_dim = 0;
  std::vector<MatrixXd> books;  // heads entries, each codewords x head_dim.
  // Training hyperparameters carried as metadata for serialization.
  double decay = 0.99;
  double smoothing_eps = 1e-5;

  int total_dim() const { return heads * head_dim; }
};

struct EmaState {
  std::vector<VectorXd> cluster_count;  // heads entries, length codewords.
  std::vector<MatrixXd> cluster_sum;    // heads entries, codewords x head_dim.
  double decay = 0.99;
  double smoothing_eps = 1e-5;
};

struct QuantizationResult {
  std::vector<int> indices;  // One per head, each in [0, codewords).
  VectorXd quantized;        // Concatenated selected codewords.
  VectorXd head_sq_errors;   // Per-head squared L2 error; sums to the total.
};

struct SequenceQuantization {
  Eigen::MatrixXi tokens;    // T x heads.
  FeatureSequence quantized;
  double total_sq_error = 0.0;
};

struct CodebookStats {
  std::vector<std::vector<int64_t>> usage;  // Per head, length K.
  std::vector<double> perplexity;           // Per head, in [1, K].
  bool zero_support = false;                // No tokens were observed.
};

struct TrainOptions {
  double decay = 0.99;
  double smoothing_eps = 1e-5;
  bool reseed_dead = false;
  // A codeword whose share of the per-head EMA count mass falls below this
  // is reinitialized to a random data chunk when reseed_dead is set.
  double dead_usage_threshold = 1e-4;
};

struct TrainReport {
  double initial_mean_sq_error = 0.0;
  std::vector<double> epoch_mean_sq_error;  // After each epoch's update.
  double final_mean_sq_error = 0.0;
  int best_epoch = 0;                  // 0 keeps the seeding output.
  std::vector<double> usage_entropy;   // Per head, nats, final codebook.
  int reseeded_codewords = 0;
};

inline void validate(const MultiHeadCodebook& cb) {
  if (cb.heads < 1 || cb.codewords < 1 || cb.head_dim < 1) {
    throw ConfigError("codebook: heads, codewords, head_dim must be >= 1");
  }
  if (static_cast<int>(cb.books.size()) != cb.heads) {
    throw InvalidInputError("codebook: sub-codebook count != heads");
  }
  for (const MatrixXd& book : cb.books) {
    if (book.rows() != cb.codewords || book.cols() != cb.head_dim) {
      throw InvalidInputError("codebook: sub-codebook shape mismatch");
    }
    require_finite(book, "codebook");
  }
}

// Content fingerprint over geometry and codeword bits; artifacts that
// reference a codebook embed this so consumers can refuse mismatches.
inline uint64_t codebook_fingerprint(const MultiHeadCodebook& cb) {
  const uint32_t geom[3] = {static_cast<uint32_t>(cb.heads),
                            static_cast<uint32_t>(cb.codewords),
                            static_cast<uint32_t>(cb.head_dim)};
  uint64_t h = fnv1a64(geom, sizeof(geom));
  for (const MatrixXd& book : cb.books) {
    for (Eigen::Index r = 0; r < book.rows(); ++r) {
      for (Eigen::Index c = 0; c < book.cols(); ++c) {
        const double v = book(r, c);
        h = fnv1a64(&v, sizeof(v), h);
      }
    }
  }
  return h;
}

// Order-sensitive combined fingerprint of a codebook set.
inline uint64_t books_fingerprint(
    const std::vector<MultiHeadCodebook>& books) {
  uint64_t h = fnv1a64("BOOKSET", 7);
  for (const MultiHeadCodebook& cb : books) {
    const uint64_t f = codebook_fingerprint(cb);
    h = fnv1a64(&f, sizeof(f), h);
  }
  return h;
}

inline EmaState make_ema_state(const MultiHeadCodebook& cb, double decay,
                               double smoothing_eps) {
  if (!(decay > 0.0 && decay < 1.0)) {
    throw ConfigError("ema.decay: must be in (0, 1)");
  }
  if (!(smoothing_eps > 0.0)) {
    throw ConfigError("ema.smoothing_eps: must be positive");
  }
  EmaState st;
  st.decay = decay;
  st.smoothing_eps = smoothing_eps;
  st.cluster_count.reserve(static_cast<std::size_t>(cb.heads));
  st.cluster_sum.reserve(static_cast<std::size_t>(cb.heads));
  for (int h = 0; h < cb.heads; ++h) {
    // Unit counts with sums equal to the codewords keep sum/count at the
    // codeword itself, so unassigned codewords only drift through the
    // Laplace smoothing term.
    st.cluster_count.push_back(VectorXd::Ones(cb.codewords));
    st.cluster_sum.push_back(cb.books[static_cast<std::size_t>(h)]);
  }
  return st;
}

namespace internal {

// Argmin by squared L2 over the rows of `book`; ties resolve to the lowest
// index because strict < is required to displace the incumbent.
inline int nearest_codeword(const MatrixXd& book,
                            const Eigen::Ref<const VectorXd>& chunk,
                            double* sq_error) {
  int best = 0;
  double best_d = (book.row(0).transpose() - chunk).squaredNorm();
  for (Eigen::Index k = 1; k < book.rows(); ++k) {
    const double d = (book.row(k).transpose() - chunk).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  if (sq_error != nullptr) *sq_error = best_d;
  return best;
}

// k-means++ seeding on the rows of `chunks`. Already-selected rows carry
// zero weight, so duplicates only appear once the distinct rows run out;
// a zero-mass draw falls back to the lowest unused row index.
inline MatrixXd kmeanspp(const MatrixXd& chunks, int k, Rng& rng) {
  const Eigen::Index n = chunks.rows();
  std::vector<Eigen::Index> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  VectorXd dist2 = VectorXd::Constant(n, std::numeric_limits<double>::max());

  Eigen::Index first = static_cast<Eigen::Index>(
      rng.uniform_int(static_cast<uint64_t>(n)));
  chosen.push_back(first);
  used[static_cast<std::size_t>(first)] = true;
  for (int c = 1; c < k; ++c) {
    const Eigen::Index last = chosen.back();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (chunks.row(i) - chunks.row(last)).squaredNorm();
      if (d < dist2(i)) dist2(i) = d;
    }
    const double total = dist2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double accum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        accum += dist2(i);
        if (accum > u) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;  // Guards rounding in the final sum.
    }
    if (pick < 0 || used[static_cast<std::size_t>(pick)]) {
      pick = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!used[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = 0;  // n >= k was validated; unreachable.
    }
    chosen.push_back(pick);
    used[static_cast<std::size_t>(pick)] = true;
  }
  MatrixXd out(k, chunks.cols());
  for (int c = 0; c < k; ++c) {
    out.row(c) = chunks.row(chosen[static_cast<std::size_t>(c)]);
  }
  return out;
}

}  // namespace internal

// Seeds one sub-codebook per head from the matching d-dim chunks of `data`
// (rows are D-vectors). Deterministic given the seed.
inline MultiHeadCodebook init_codebook(const MatrixXd& data, int heads,
                                       int codewords, uint64_t seed) {
  if (heads < 1 || codewords < 1) {
    throw ConfigError("init_codebook: heads and codewords must be >= 1");
  }
  if (data.cols() < 1 || data.cols() % heads != 0) {
    throw ConfigError("init_codebook: data dimension " +
                      std::to_string(data.cols()) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (data.rows() < codewords) {
    throw InsufficientDataError("init_codebook: need at least " +
                                std::to_string(codewords) + " vectors, got " +
                                std::to_string(data.rows()));
  }
  require_finite(data, "init_codebook: data");
  MultiHeadCodebook cb;
  cb.heads = heads;
  cb.codewords = codewords;
  cb.head_dim = static_cast<int>(data.cols()) / heads;
  cb.books.reserve(static_cast<std::size_t>(heads));
  Rng root(seed);
  for (int h = 0; h < heads; ++h) {
    Rng head_rng = root.derive(static_cast<uint64_t>(h));
    const MatrixXd chunks =
        data.middleCols(static_cast<Eigen::Index>(h) * cb.head_dim,
                        cb.head_dim);
    cb.books.push_back(internal::kmeanspp(chunks, codewords, head_rng));
  }
  return cb;
}

inline QuantizationResult quantize(const Eigen::Ref<const VectorXd>& x,
                                   const MultiHeadCodebook& cb) {
  if (x.size() != cb.total_dim()) {
    throw InvalidInputError("quantize: input dim " + std::to_string(x.size()) +
                            " != codebook dim " +
                            std::to_string(cb.total_dim()));
  }
  QuantizationResult r;
  r.indices.resize(static_cast<std::size_t>(cb.heads));
  r.quantized.resize(x.size());
  r.head_sq_errors.resize(cb.heads);
  for (int h = 0; h < cb.heads; ++h) {
    const Eigen::Index off = static_cast<Eigen::Index>(h) * cb.head_dim;
    double err = 0.0;
    const int idx = internal::nearest_codeword(
        cb.books[static_cast<std::size_t>(h)], x.segment(off, cb.head_dim),
        &err);
    r.indices[static_cast<std::size_t>(h)] = idx;
    r.head_sq_errors(h) = err;
    r.quantized.segment(off, cb.head_dim) =
        cb.books[static_cast<std::size_t>(h)].row(idx).transpose();
  }
  return r;
}

inline VectorXd dequantize(const std::vector<int>& indices,
                           const MultiHeadCodebook& cb) {
  if (static_cast<int>(indices.size()) != cb.heads) {
    throw InvalidInputError("dequantize: expected " +
                            std::to_string(cb.heads) + " indices, got " +
                            std::to_string(indices.size()));
  }
  VectorXd out(cb.total_dim());
  for (int h = 0; h < cb.heads; ++h) {
    const int idx = indices[static_cast<std::size_t>(h)];
    if (idx < 0 || idx >= cb.codewords) {
      throw InvalidIndexError("dequantize: index " + std::to_string(idx) +
                              " out of range [0, " +
                              std::to_string(cb.codewords) + ") in head " +
                              std::to_string(h));
    }
    out.segment(static_cast<Eigen::Index>(h) * cb.head_dim, cb.head_dim) =
        cb.books[static_cast<std::size_t>(h)].row(idx).transpose();
  }
  return out;
}

inline SequenceQuantization quantize_sequence(const FeatureSequence& seq,
                                              const MultiHeadCodebook& cb) {
  if (seq.dim() != cb.total_dim() && seq.num_frames() > 0) {
    throw InvalidInputError("quantize_sequence: feature dim " +
                            std::to_string(seq.dim()) + " != codebook dim " +
                            std::to_string(cb.total_dim()));
  }
  SequenceQuantization out;
  out.tokens.resize(seq.num_frames(), cb.heads);
  out.quantized.frames.resize(seq.num_frames(), cb.total_dim());
  out.quantized.frame_shift_ms = seq.frame_shift_ms;
  out.quantized.kind = seq.kind;
  for (Eigen::Index t = 0; t < seq.num_frames(); ++t) {
    const QuantizationResult r = quantize(seq.frames.row(t).transpose(), cb);
    for (int h = 0; h < cb.heads; ++h) {
      out.tokens(t, h) = r.indices[static_cast<std::size_t>(h)];
    }
    out.quantized.frames.row(t) = r.quantized.transpose();
    out.total_sq_error += r.head_sq_errors.sum();
  }
  return out;
}

// One decayed-statistics update. Assignments use the pre-update codebook;
// the batch is folded in input order. Codeword i becomes
// sum_i / n'_i with n'_i = (count_i + eps) * N / (N + K * eps), N the
// per-head count mass, which redistributes eps of mass to empty codewords
// while keeping the per-head total at N.
inline std::pair<MultiHeadCodebook, EmaState> ema_update(
    const MultiHeadCodebook& cb, const EmaState& st, const MatrixXd& batch) {
  validate(cb);
  if (static_cast<int>(st.cluster_count.size()) != cb.heads ||
      static_cast<int>(st.cluster_sum.size()) != cb.heads) {
    throw InvalidInputError("ema_update: state/codebook head mismatch");
  }
  if (batch.rows() == 0) return {cb, st};
  if (batch.cols() != cb.total_dim()) {
    throw InvalidInputError("ema_update: batch dim " +
                            std::to_string(batch.cols()) +
                            " != codebook dim " +
                            std::to_string(cb.total_dim()));
  }
  require_finite(batch, "ema_update: batch");

  const double gamma = st.decay;
  const double eps = st.smoothing_eps;
  MultiHeadCodebook new_cb = cb;
  EmaState new_st = st;
  for (int h = 0; h < cb.heads; ++h) {
    const std::size_t hs = static_cast<std::size_t>(h);
    const Eigen::Index off = static_cast<Eigen::Index>(h) * cb.head_dim;
    VectorXd batch_count = VectorXd::Zero(cb.codewords);
    MatrixXd batch_sum = MatrixXd::Zero(cb.codewords, cb.head_dim);
    for (Eigen::Index t = 0; t < batch.rows(); ++t) {
      const int idx = internal::nearest_codeword(
          cb.books[hs], batch.row(t).segment(off, cb.head_dim).transpose(),
          nullptr);
      batch_count(idx) += 1.0;
      batch_sum.row(idx) += batch.row(t).segment(off, cb.head_dim);
    }
    new_st.cluster_count[hs] =
        gamma * st.cluster_count[hs] + (1.0 - gamma) * batch_count;
    new_st.cluster_sum[hs] =
        gamma * st.cluster_sum[hs] + (1.0 - gamma) * batch_sum;
    const double mass = new_st.cluster_count[hs].sum();
    const VectorXd smoothed =
        (new_st.cluster_count[hs].array() + eps).matrix() *
        (mass / (mass + cb.codewords * eps));
    for (int k = 0; k < cb.codewords; ++k) {
      new_cb.books[hs].row(k) = new_st.cluster_sum[hs].row(k) / smoothed(k);
    }
    require_finite(new_cb.books[hs], "ema_update: codebook");
  }
  return {new_cb, new_st};
}

// Mean over rows of the full-vector squared quantization error.
inline double mean_sq_error(const MatrixXd& data,
                            const MultiHeadCodebook& cb) {
  if (data.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index t = 0; t < data.rows(); ++t) {
    total += quantize(data.row(t).transpose(), cb).head_sq_errors.sum();
  }
  return total / static_cast<double>(data.rows());
}

inline CodebookStats codebook_stats(const Eigen::MatrixXi& tokens, int k) {
  if (k < 1) throw ConfigError("codebook_stats: k must be >= 1");
  CodebookStats s;
  const int heads = static_cast<int>(tokens.cols());
  s.usage.assign(static_cast<std::size_t>(heads),
                 std::vector<int64_t>(static_cast<std::size_t>(k), 0));
  s.perplexity.assign(static_cast<std::size_t>(heads), 1.0);
  s.zero_support = tokens.rows() == 0;
  if (s.zero_support) return s;
  for (int h = 0; h < heads; ++h) {
    for (Eigen::Index t = 0; t < tokens.rows(); ++t) {
      const int tok = tokens(t, h);
      if (tok < 0 || tok >= k) {
        throw InvalidIndexError("codebook_stats: token " +
                                std::to_string(tok) + " out of range [0, " +
                                std::to_string(k) + ")");
      }
      ++s.usage[static_cast<std::size_t>(h)][static_cast<std::size_t>(tok)];
    }
    double entropy = 0.0;
    const double n = static_cast<double>(tokens.rows());
    for (int64_t c : s.usage[static_cast<std::size_t>(h)]) {
      if (c > 0) {
        const double p = static_cast<double>(c) / n;
        entropy -= p * std::log(p);
      }
    }
    s.perplexity[static_cast<std::size_t>(h)] = std::exp(entropy);
  }
  return s;
}

// Seeds with k-means++, then runs one full-data EMA update per epoch.
// The best epoch by mean squared quantization error wins (the seeding
// output counts as epoch 0), so the final error never exceeds the initial
// one regardless of the data.
inline std::pair<MultiHeadCodebook, TrainReport> train_codebook(
    const MatrixXd& data, int heads, int codewords, int epochs,
    const TrainOptions& opts, uint64_t seed) {
  if (epochs < 0) throw ConfigError("train_codebook: epochs must be >= 0");
  MultiHeadCodebook cb = init_codebook(data, heads, codewords, seed);
  cb.decay = opts.decay;
  cb.smoothing_eps = opts.smoothing_eps;
  EmaState st = make_ema_state(cb, opts.decay, opts.smoothing_eps);
  TrainReport report;
  report.initial_mean_sq_error = mean_sq_error(data, cb);

  MultiHeadCodebook best = cb;
  double best_err = report.initial_mean_sq_error;
  report.best_epoch = 0;
  Rng reseed_rng = Rng(seed).derive(0x72657365ULL);  // Reseeding stream.
  for (int e = 1; e <= epochs; ++e) {
    std::tie(cb, st) = ema_update(cb, st, data);
    if (opts.reseed_dead) {
      for (int h = 0; h < heads; ++h) {
        const std::size_t hs = static_cast<std::size_t>(h);
        const double mass = st.cluster_count[hs].sum();
        const double mean_count = mass / codewords;
        for (int k = 0; k < codewords; ++k) {
          if (st.cluster_count[hs](k) / mass < opts.dead_usage_threshold) {
            const Eigen::Index row = static_cast<Eigen::Index>(
                reseed_rng.uniform_int(static_cast<uint64_t>(data.rows())));
            cb.books[hs].row(k) = data.row(row).segment(
                static_cast<Eigen::Index>(h) * cb.head_dim, cb.head_dim);
            // Mean-mass stats keep the fresh codeword from being flagged
            // dead again on the next epoch.
            st.cluster_count[hs](k) = mean_count;
            st.cluster_sum[hs].row(k) = mean_count * cb.books[hs].row(k);
            ++report.reseeded_codewords;
          }
        }
      }
    }
    const double err = mean_sq_error(data, cb);
    report.epoch_mean_sq_error.push_back(err);
    if (err < best_err) {
      best_err = err;
      best = cb;
      report.best_epoch = e;
    }
  }
  report.final_mean_sq_error = best_err;

  FeatureSequence seq;
  seq.frames = data;
  const SequenceQuantization sq = quantize_sequence(seq, best);
  const CodebookStats stats = codebook_stats(sq.tokens, codewords);
  report.usage_entropy.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    report.usage_entropy[static_cast<std::size_t>(h)] =
        std::log(stats.perplexity[static_cast<std::size_t>(h)]);
  }
  return {best, report};
}

}  // namespace mhvq
}  // namespace msfq

#endif  // MSFQ_MHVQ_HPP_
