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

#ifndef MSFQ_METRICS_HPP_
#define MSFQ_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "msfq/common.hpp"

namespace msfq {
namespace metrics {

struct GaussianStats {
  VectorXd mean;
  MatrixXd cov;           // Symmetric, numerically PSD.
  int64_t count = 0;
  bool degenerate = false;  // Zero covariance (all points identical).
};

struct EditOps {
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;

  int64_t total() const { return substitutions + deletions + insertions; }
};

struct FrechetDiagnostics {
  // Negative eigenvalue mass clamped to zero, as a fraction of the trace,
  // for each square root taken. Worth a warning above 1e-6.
  double clamped_fraction = 0.0;
};

inline GaussianStats gaussian_stats(const MatrixXd& embeddings) {
  if (embeddings.rows() < 2) {
    throw InsufficientDataError("gaussian_stats: need at least 2 vectors, "
                                "got " + std::to_string(embeddings.rows()));
  }
  require_finite(embeddings, "gaussian_stats");
  GaussianStats s;
  s.count = embeddings.rows();
  s.mean = embeddings.colwise().mean().transpose();
  const MatrixXd centered = embeddings.rowwise() - s.mean.transpose();
  // Unbiased (n-1) covariance, symmetrized against accumulation order.
  MatrixXd cov = centered.transpose() * centered /
                 static_cast<double>(embeddings.rows() - 1);
  s.cov = 0.5 * (cov + cov.transpose());
  s.degenerate = s.cov.cwiseAbs().maxCoeff() <=
                 1e-20 * std::max(1.0, s.mean.squaredNorm());
  return s;
}

namespace internal {

// Symmetric PSD square root with negative eigenvalues clamped to zero.
// Returns the clamped mass as a fraction of the absolute trace.
inline MatrixXd psd_sqrt(const MatrixXd& sym, double* clamped_fraction) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericError("frechet_distance: eigendecomposition failed");
  }
  VectorXd vals = eig.eigenvalues();
  double clamped = 0.0;
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    if (vals(i) < 0.0) {
      clamped += -vals(i);
      vals(i) = 0.0;
    }
  }
  if (clamped_fraction != nullptr) {
    const double denom = std::max(vals.sum() + clamped, 1e-300);
    *clamped_fraction = std::max(*clamped_fraction, clamped / denom);
  }
  return eig.eigenvectors() * vals.array().sqrt().matrix().asDiagonal() *
         eig.eigenvectors().transpose();
}

inline void check_stats(const GaussianStats& s, const char* who) {
  if (s.mean.size() == 0 || s.cov.rows() != s.mean.size() ||
      s.cov.cols() != s.mean.size()) {
    throw InvalidInputError(std::string("frechet_distance: ") + who +
                            " has inconsistent shapes");
  }
  require_finite(s.mean, std::string("frechet_distance: ") + who + " mean");
  require_finite(s.cov, std::string("frechet_distance: ") + who + " cov");
  const double asym = (s.cov - s.cov.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, s.cov.cwiseAbs().maxCoeff());
  if (asym > 1e-10 * scale) {
    throw InvalidInputError(std::string("frechet_distance: ") + who +
                            " covariance is not symmetric");
  }
}

}  // namespace internal

// scale * (||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})).
// The symmetrized inner product is trace-equal to sqrt(S_a S_b) and keeps
// every decomposition on a symmetric matrix.
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b,
                               double scale = 1.0,
                               FrechetDiagnostics* diag = nullptr) {
  internal::check_stats(a, "a");
  internal::check_stats(b, "b");
  if (a.mean.size() != b.mean.size()) {
    throw InvalidInputError("frechet_distance: dimension mismatch " +
                            std::to_string(a.mean.size()) + " vs " +
                            std::to_string(b.mean.size()));
  }
  if (!std::isfinite(scale)) {
    throw InvalidInputError("frechet_distance: non-finite scale");
  }
  double clamped = 0.0;
  const MatrixXd root_a = internal::psd_sqrt(a.cov, &clamped);
  MatrixXd inner = root_a * b.cov * root_a;
  inner = 0.5 * (inner + inner.transpose());
  const MatrixXd cross = internal::psd_sqrt(inner, &clamped);
  if (diag != nullptr) diag->clamped_fraction = clamped;
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double trace_term = a.cov.trace() + b.cov.trace() -
                            2.0 * cross.trace();
  return scale * (mean_term + trace_term);
}

using TokenSequence = std::vector<std::string>;

// Levenshtein with unit costs. When several op sequences tie, the
// backtrace prefers substitution over deletion over insertion; only the
// counts are contractual.
inline EditOps edit_distance(const TokenSequence& ref,
                             const TokenSequence& hyp) {
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::vector<int64_t>> d(n + 1,
                                      std::vector<int64_t>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int64_t>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int64_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int64_t sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int64_t del = d[i - 1][j] + 1;
      const int64_t ins = d[i][j - 1] + 1;
      d[i][j] = std::min({sub, del, ins});
    }
  }
  EditOps ops;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++ops.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++ops.deletions;
      --i;
    } else {
      ++ops.insertions;
      --j;
    }
  }
  return ops;
}

inline double error_rate(const TokenSequence& ref, const TokenSequence& hyp) {
  if (ref.empty()) {
    throw InsufficientDataError("error_rate: empty reference");
  }
  return static_cast<double>(edit_distance(ref, hyp).total()) /
         static_cast<double>(ref.size());
}

// Pooled rate: total edit operations over total reference tokens. Not the
// mean of per-utterance rates.
inline double corpus_error_rate(
    const std::vector<std::pair<TokenSequence, TokenSequence>>& pairs) {
  int64_t ops = 0;
  int64_t ref_tokens = 0;
  for (const auto& [ref, hyp] : pairs) {
    ops += edit_distance(ref, hyp).total();
    ref_tokens += static_cast<int64_t>(ref.size());
  }
  if (ref_tokens == 0) {
    throw InsufficientDataError("corpus_error_rate: no reference tokens");
  }
  return static_cast<double>(ops) / static_cast<double>(ref_tokens);
}

// Character tokens: one UTF-8 code point per token. A malformed lead or
// continuation byte becomes a single-byte token rather than an error.
inline TokenSequence character_tokens(const std::string& text) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xf0) {
      len = 4;
    } else if (lead >= 0xe0) {
      len = 3;
    } else if (lead >= 0xc0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// Phoneme/word tokens: whitespace-separated fields.
inline TokenSequence whitespace_tokens(const std::string& text) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(
                                  text[i]))) {
      ++i;
    }
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(
                                   text[i]))) {
      ++i;
    }
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

}  // namespace metrics
}  // namespace msfq

#endif  // MSFQ_METRICS_HPP_
