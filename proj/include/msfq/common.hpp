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

#ifndef MSFQ_COMMON_HPP_
#define MSFQ_COMMON_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msfq {

// Error taxonomy. The CLI maps these onto process exit codes
// (config -> 2, artifact mismatch -> 3, numeric -> 4, anything else -> 1).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Bad values or shapes handed to an operation.
struct InvalidInputError : Error {
  using Error::Error;
};
// Inconsistent configuration (geometry, missing model parts, bad params).
struct ConfigError : Error {
  using Error::Error;
};
// Not enough data to perform the operation.
struct InsufficientDataError : Error {
  using Error::Error;
};
// Token or codeword index out of range.
struct InvalidIndexError : Error {
  using Error::Error;
};
// Artifact fingerprints disagree.
struct MismatchError : Error {
  using Error::Error;
};
// Numerical failure (solver breakdown, non-finite evaluation).
struct NumericError : Error {
  using Error::Error;
};
// File level problems; subtypes are distinct so callers can react.
struct IoError : Error {
  using Error::Error;
};
struct BadMagicError : IoError {
  using IoError::IoError;
};
struct TruncatedPayloadError : IoError {
  using IoError::IoError;
};
struct VersionMismatchError : IoError {
  using IoError::IoError;
};

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

enum class FeatureKind : std::uint8_t {
  kMel = 0,
  kUpstream = 1,
  kStage = 2,
  kEmbedding = 3,
};

inline const char* feature_kind_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMel:
      return "mel";
    case FeatureKind::kUpstream:
      return "upstream";
    case FeatureKind::kStage:
      return "stage";
    case FeatureKind::kEmbedding:
      return "embedding";
  }
  return "unknown";
}

inline FeatureKind feature_kind_from_code(std::uint8_t code) {
  if (code > 3) {
    throw InvalidInputError("unknown feature kind code " +
                            std::to_string(code));
  }
  return static_cast<FeatureKind>(code);
}

// A T x D matrix of frames plus the hop between frames. The one carrier
// used for mel spectrograms, upstream features, stage sequences and
// embedding sets alike.
struct FeatureSequence {
  MatrixXd frames;  // T rows, D columns
  double frame_shift_ms = 0.0;
  FeatureKind kind = FeatureKind::kMel;

  FeatureSequence() = default;
  FeatureSequence(MatrixXd f, double shift_ms,
                  FeatureKind k = FeatureKind::kMel)
      : frames(std::move(f)), frame_shift_ms(shift_ms), kind(k) {}

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
  bool empty() const { return frames.rows() == 0; }
};

// Mono waveform with samples nominally in [-1, 1].
struct WaveformBuffer {
  std::vector<double> samples;
  int sample_rate_hz = 0;
};

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }

template <typename Derived>
inline void require_finite(const Eigen::MatrixBase<Derived>& m,
                           const std::string& what) {
  if (!m.allFinite()) {
    throw InvalidInputError(what + ": non-finite entries");
  }
}

inline void require_finite(const WaveformBuffer& w) {
  for (double s : w.samples) {
    if (!std::isfinite(s)) {
      throw InvalidInputError("waveform: non-finite sample");
    }
  }
  if (w.sample_rate_hz <= 0) {
    throw InvalidInputError("waveform: sample_rate_hz must be positive");
  }
}

// FNV-1a 64-bit over a byte range. Pass the previous digest as `h` to
// chain ranges into one fingerprint.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic pseudo-random source built on splitmix64. Value derivations
// avoid std::*_distribution so streams are reproducible across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller, one cached spare.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream; tag keeps sibling streams decorrelated.
  Rng derive(std::uint64_t tag) const {
    Rng child(state_ ^ (0xd1342543de82ef95ULL * (tag + 1)));
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace msfq

#endif  // MSFQ_COMMON_HPP_
