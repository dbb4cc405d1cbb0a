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

#ifndef MSFQ_SYNTHETIC_HPP_
#define MSFQ_SYNTHETIC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "msfq/common.hpp"

namespace msfq {
namespace synthetic {

struct SyntheticSpec {
  int num_clusters = 8;
  double cluster_std = 0.01;
  int dim = 16;
  int frames_per_utterance = 400;
  int num_utterances = 50;
  double frame_shift_ms = 12.5;
  uint64_t seed = 1;
  // Cluster centers are redrawn until every pair is at least this far
  // apart, so center-recovery oracles are unambiguous.
  double min_center_separation = 1.0;

  // Sine mode replaces the cluster draw with smooth deterministic
  // trajectories; frequencies/amplitudes cycle over dimensions.
  bool sine_mode = false;
  std::vector<double> frequencies_hz = {1.0, 2.5, 4.0};
  std::vector<double> amplitudes = {1.0, 0.5, 0.25};
};

struct SyntheticCorpus {
  std::vector<FeatureSequence> utterances;
  MatrixXd centers;                      // num_clusters x dim (GMM mode).
  std::vector<std::vector<int>> labels;  // Per utterance, per frame.
};

inline void validate(const SyntheticSpec& spec) {
  if (spec.num_clusters < 1) {
    throw ConfigError("synthetic.num_clusters: must be >= 1");
  }
  if (spec.cluster_std < 0.0) {
    throw ConfigError("synthetic.cluster_std: must be >= 0");
  }
  if (spec.dim < 1) throw ConfigError("synthetic.dim: must be >= 1");
  if (spec.frames_per_utterance < 1) {
    throw ConfigError("synthetic.frames_per_utterance: must be >= 1");
  }
  if (spec.num_utterances < 1) {
    throw ConfigError("synthetic.num_utterances: must be >= 1");
  }
  if (!(spec.frame_shift_ms > 0.0)) {
    throw ConfigError("synthetic.frame_shift_ms: must be positive");
  }
  if (spec.sine_mode &&
      (spec.frequencies_hz.empty() || spec.amplitudes.empty())) {
    throw ConfigError("synthetic.frequencies_hz: sine mode needs at least "
                      "one frequency and amplitude");
  }
}

namespace internal {

inline MatrixXd draw_centers(const SyntheticSpec& spec, Rng& rng) {
  // Uniform cube draws, rejected until pairwise separation holds. The cube
  // is widened with the cluster count so the rejection loop terminates.
  const double half = spec.min_center_separation *
                      std::max(2.0, std::cbrt(
                          static_cast<double>(spec.num_clusters)) * 2.0);
  MatrixXd centers(spec.num_clusters, spec.dim);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    for (int k = 0; k < spec.num_clusters; ++k) {
      for (int d = 0; d < spec.dim; ++d) {
        centers(k, d) = rng.uniform(-half, half);
      }
    }
    double min_dist = std::numeric_limits<double>::max();
    for (int a = 0; a < spec.num_clusters; ++a) {
      for (int b = a + 1; b < spec.num_clusters; ++b) {
        min_dist = std::min(min_dist,
                            (centers.row(a) - centers.row(b)).norm());
      }
    }
    if (spec.num_clusters == 1 || min_dist >= spec.min_center_separation) {
      return centers;
    }
  }
  throw NumericError("synthetic: could not separate cluster centers; "
                     "reduce num_clusters or min_center_separation");
}

}  // namespace internal

// GMM mode: frames drawn from isotropic Gaussians around well-separated
// centers, labels recorded; the centers are the recovery oracle. Sine
// mode: deterministic smooth per-dimension sinusoids with a random phase
// per utterance. Both are reproducible from the seed alone.
inline SyntheticCorpus gen_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticCorpus corpus;
  Rng root(spec.seed);
  if (!spec.sine_mode) {
    Rng center_rng = root.derive(0x43454e54ULL);
    corpus.centers = internal::draw_centers(spec, center_rng);
  }
  corpus.utterances.resize(static_cast<std::size_t>(spec.num_utterances));
  corpus.labels.resize(static_cast<std::size_t>(spec.num_utterances));
  for (int u = 0; u < spec.num_utterances; ++u) {
    Rng rng = root.derive(static_cast<uint64_t>(u) + 1);
    FeatureSequence& seq = corpus.utterances[static_cast<std::size_t>(u)];
    seq.frames.resize(spec.frames_per_utterance, spec.dim);
    seq.frame_shift_ms = spec.frame_shift_ms;
    seq.kind = FeatureKind::kMel;
    if (spec.sine_mode) {
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      for (int t = 0; t < spec.frames_per_utterance; ++t) {
        const double time_s = t * spec.frame_shift_ms / 1000.0;
        for (int d = 0; d < spec.dim; ++d) {
          const std::size_t slot =
              static_cast<std::size_t>(d) % spec.frequencies_hz.size();
          const std::size_t amp_slot =
              static_cast<std::size_t>(d) % spec.amplitudes.size();
          seq.frames(t, d) =
              spec.amplitudes[amp_slot] *
              std::sin(2.0 * M_PI * spec.frequencies_hz[slot] * time_s +
                       phase + 0.37 * d);
        }
      }
    } else {
      std::vector<int>& labels = corpus.labels[static_cast<std::size_t>(u)];
      labels.resize(static_cast<std::size_t>(spec.frames_per_utterance));
      for (int t = 0; t < spec.frames_per_utterance; ++t) {
        const int k = static_cast<int>(
            rng.uniform_int(static_cast<uint64_t>(spec.num_clusters)));
        labels[static_cast<std::size_t>(t)] = k;
        for (int d = 0; d < spec.dim; ++d) {
          seq.frames(t, d) = corpus.centers(k, d) +
                             spec.cluster_std * rng.gaussian();
        }
      }
    }
  }
  return corpus;
}

}  // namespace synthetic
}  // namespace msfq

#endif  // MSFQ_SYNTHETIC_HPP_
