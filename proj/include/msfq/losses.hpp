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

#ifndef MSFQ_LOSSES_HPP_
#define MSFQ_LOSSES_HPP_

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msfq/common.hpp"

namespace msfq {
namespace losses {

// Outputs of one sub-discriminator: a flattened score vector plus the
// per-layer feature vectors used by feature matching.
struct SubDiscriminatorOutput {
  VectorXd scores;
  std::vector<VectorXd> layers;
};

struct DiscriminatorOutputs {
  std::vector<SubDiscriminatorOutput> subs;

  int num_subs() const { return static_cast<int>(subs.size()); }
};

struct LossWeights {
  double fm = 2.0;
  double mel = 45.0;
  double vq = 10.0;
  double ms = 1.0;
  double frame = 450.0;
  double rec = 1.0;
  double dur = 0.1;
};

inline void validate(const LossWeights& w) {
  const double all[] = {w.fm, w.mel, w.vq, w.ms, w.frame, w.rec, w.dur};
  for (double v : all) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError("loss weights: must be finite and >= 0");
    }
  }
}

struct GeneratorParts {
  double adv = 0.0;
  double fm = 0.0;
  double mel = 0.0;
  double vq = 0.0;
  double ms = 0.0;
  double frame = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  Eigen::Index argmax_coord = 0;
  double step = 0.0;
};

namespace internal {

inline void check_scores(const DiscriminatorOutputs& d, const char* who) {
  if (d.subs.empty()) {
    throw InvalidInputError(std::string(who) + ": no sub-discriminators");
  }
  for (const SubDiscriminatorOutput& s : d.subs) {
    if (s.scores.size() == 0) {
      throw InvalidInputError(std::string(who) + ": empty score vector");
    }
    require_finite(s.scores, std::string(who) + ": scores");
  }
}

}  // namespace internal

// LSGAN discriminator objective: real scores pulled to 1, fake to 0, each
// term averaged over its score elements and the K sub-discriminators.
// fake_grads (optional) receives d/d fake-scores, one vector per sub.
inline double discriminator_loss(const DiscriminatorOutputs& real,
                                 const DiscriminatorOutputs& fake,
                                 std::vector<VectorXd>* fake_grads = nullptr) {
  internal::check_scores(real, "discriminator_loss: real");
  internal::check_scores(fake, "discriminator_loss: fake");
  if (real.num_subs() != fake.num_subs()) {
    throw InvalidInputError("discriminator_loss: sub-discriminator count " +
                            std::to_string(real.num_subs()) + " vs " +
                            std::to_string(fake.num_subs()));
  }
  const double k = static_cast<double>(real.num_subs());
  if (fake_grads != nullptr) fake_grads->assign(fake.subs.size(), VectorXd());
  double total = 0.0;
  for (std::size_t i = 0; i < fake.subs.size(); ++i) {
    const VectorXd& rs = real.subs[i].scores;
    const VectorXd& fs = fake.subs[i].scores;
    total += (rs.array() - 1.0).square().mean() + fs.array().square().mean();
    if (fake_grads != nullptr) {
      (*fake_grads)[i] =
          2.0 * fs / (k * static_cast<double>(fs.size()));
    }
  }
  return total / k;
}

// LSGAN generator objective: fake scores pulled to 1.
inline double adversarial_loss(const DiscriminatorOutputs& fake,
                               std::vector<VectorXd>* fake_grads = nullptr) {
  internal::check_scores(fake, "adversarial_loss: fake");
  const double k = static_cast<double>(fake.num_subs());
  if (fake_grads != nullptr) fake_grads->assign(fake.subs.size(), VectorXd());
  double total = 0.0;
  for (std::size_t i = 0; i < fake.subs.size(); ++i) {
    const VectorXd& fs = fake.subs[i].scores;
    total += (fs.array() - 1.0).square().mean();
    if (fake_grads != nullptr) {
      (*fake_grads)[i] = 2.0 * (fs.array() - 1.0).matrix() /
                         (k * static_cast<double>(fs.size()));
    }
  }
  return total / k;
}

// Mean absolute elementwise difference. The subgradient at zero is 0.
// grad (optional) receives d/d prediction.
inline double mel_loss(const FeatureSequence& target,
                       const FeatureSequence& prediction,
                       MatrixXd* grad = nullptr) {
  if (target.num_frames() != prediction.num_frames() ||
      target.dim() != prediction.dim()) {
    throw InvalidInputError("mel_loss: shape mismatch");
  }
  require_finite(target.frames, "mel_loss: target");
  require_finite(prediction.frames, "mel_loss: prediction");
  const double n = static_cast<double>(target.frames.size());
  if (grad != nullptr) {
    *grad = MatrixXd::Zero(target.num_frames(), target.dim());
  }
  if (n == 0) return 0.0;
  const MatrixXd delta = prediction.frames - target.frames;
  if (grad != nullptr) {
    *grad = delta.array().sign().matrix() / n;
  }
  return delta.array().abs().mean();
}

// Mean absolute difference between real and fake features, averaged over
// layer elements, layers, and sub-discriminators. fake_grads receives
// d/d fake-features per sub and layer.
inline double feature_matching_loss(
    const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake,
    std::vector<std::vector<VectorXd>>* fake_grads = nullptr) {
  if (real.subs.empty() || real.num_subs() != fake.num_subs()) {
    throw InvalidInputError("feature_matching_loss: sub-discriminator "
                            "count mismatch");
  }
  const double k = static_cast<double>(real.num_subs());
  if (fake_grads != nullptr) {
    fake_grads->assign(fake.subs.size(), std::vector<VectorXd>());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < fake.subs.size(); ++i) {
    const std::vector<VectorXd>& rl = real.subs[i].layers;
    const std::vector<VectorXd>& fl = fake.subs[i].layers;
    if (rl.empty() || rl.size() != fl.size()) {
      throw InvalidInputError("feature_matching_loss: layer count mismatch "
                              "in sub " + std::to_string(i));
    }
    const double nk = static_cast<double>(rl.size());
    if (fake_grads != nullptr) (*fake_grads)[i].resize(fl.size());
    double sub_total = 0.0;
    for (std::size_t l = 0; l < rl.size(); ++l) {
      if (rl[l].size() != fl[l].size() || rl[l].size() == 0) {
        throw InvalidInputError("feature_matching_loss: layer " +
                                std::to_string(l) + " shape mismatch in sub " +
                                std::to_string(i));
      }
      require_finite(rl[l], "feature_matching_loss: real layer");
      require_finite(fl[l], "feature_matching_loss: fake layer");
      const VectorXd delta = fl[l] - rl[l];
      sub_total += delta.array().abs().mean() / nk;
      if (fake_grads != nullptr) {
        (*fake_grads)[i][l] =
            delta.array().sign().matrix() /
            (k * nk * static_cast<double>(delta.size()));
      }
    }
    total += sub_total;
  }
  return total / k;
}

// Mean squared elementwise difference. grad receives d/d prediction.
inline double frame_loss(const FeatureSequence& target,
                         const FeatureSequence& prediction,
                         MatrixXd* grad = nullptr) {
  if (target.num_frames() != prediction.num_frames() ||
      target.dim() != prediction.dim()) {
    throw InvalidInputError("frame_loss: shape mismatch");
  }
  require_finite(target.frames, "frame_loss: target");
  require_finite(prediction.frames, "frame_loss: prediction");
  const double n = static_cast<double>(target.frames.size());
  if (grad != nullptr) {
    *grad = MatrixXd::Zero(target.num_frames(), target.dim());
  }
  if (n == 0) return 0.0;
  const MatrixXd delta = prediction.frames - target.frames;
  if (grad != nullptr) *grad = 2.0 * delta / n;
  return delta.squaredNorm() / n;
}

inline double generator_total(const GeneratorParts& parts,
                              const LossWeights& w) {
  validate(w);
  const double all[] = {parts.adv, parts.fm,  parts.mel,
                        parts.vq,  parts.ms,  parts.frame};
  for (double v : all) {
    if (!std::isfinite(v)) {
      throw InvalidInputError("generator_total: non-finite part");
    }
  }
  return parts.adv + w.fm * parts.fm + w.mel * parts.mel + w.vq * parts.vq +
         w.ms * parts.ms + w.frame * parts.frame;
}

// Mean squared difference between duration vectors (frames, nonnegative).
inline double duration_loss(const VectorXd& target, const VectorXd& predicted,
                            VectorXd* grad = nullptr) {
  if (target.size() != predicted.size()) {
    throw InvalidInputError("duration_loss: length mismatch");
  }
  if (target.size() == 0) {
    throw InvalidInputError("duration_loss: empty durations");
  }
  if ((target.array() < 0.0).any() || (predicted.array() < 0.0).any()) {
    throw InvalidInputError("duration_loss: durations must be >= 0");
  }
  require_finite(target, "duration_loss: target");
  require_finite(predicted, "duration_loss: predicted");
  const double n = static_cast<double>(target.size());
  const VectorXd delta = predicted - target;
  if (grad != nullptr) *grad = 2.0 * delta / n;
  return delta.squaredNorm() / n;
}

inline double am_total(double l_rec, double l_dur, double lambda_dur) {
  if (!std::isfinite(l_rec) || !std::isfinite(l_dur) ||
      !std::isfinite(lambda_dur)) {
    throw InvalidInputError("am_total: non-finite input");
  }
  return l_rec + lambda_dur * l_dur;
}

// Central-difference check of an analytic gradient. `f` evaluates the loss
// at a point and, when the second argument is non-null, writes the analytic
// gradient. Relative error is |analytic - numeric| / max(1, |numeric|).
inline GradCheckReport grad_check(
    const std::function<double(const VectorXd&, VectorXd*)>& f,
    const VectorXd& point, double h) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step must be positive");
  VectorXd analytic;
  const double base = f(point, &analytic);
  if (!std::isfinite(base)) {
    throw NumericError("grad_check: non-finite loss at the base point");
  }
  if (analytic.size() != point.size()) {
    throw InvalidInputError("grad_check: gradient size mismatch");
  }
  GradCheckReport report;
  report.step = h;
  VectorXd x = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    x(i) = point(i) + h;
    const double up = f(x, nullptr);
    x(i) = point(i) - h;
    const double down = f(x, nullptr);
    x(i) = point(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: non-finite loss at a probe point");
    }
    const double numeric = (up - down) / (2.0 * h);
    const double rel = std::abs(analytic(i) - numeric) /
                       std::max(1.0, std::abs(numeric));
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.argmax_coord = i;
    }
  }
  return report;
}

}  // namespace losses
}  // namespace msfq

#endif  // MSFQ_LOSSES_HPP_
