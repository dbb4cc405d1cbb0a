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
// Finite-difference validation of every analytic gradient in the loss
// suite. Each loss is probed at `points` random locations; L1 losses are
// sampled with all coordinates at least 0.2 from their kinks so a central
// difference at h = 1e-4 stays on one side.

#ifndef MSFQ_GRADCHECK_HPP_
#define MSFQ_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "msfq/common.hpp"
#include "msfq/losses.hpp"
#include "msfq/msmc.hpp"

namespace msfq {
namespace gradcheck {

struct SuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  int points = 0;
};

namespace internal {

inline VectorXd random_vector(Rng& rng, Eigen::Index n, double lo,
                              double hi) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

// Offsets with |offset| in [0.3, 1.0]: kink-free margin for L1 losses.
inline VectorXd random_offsets(Rng& rng, Eigen::Index n) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mag = rng.uniform(0.3, 1.0);
    v(i) = rng.uniform() < 0.5 ? -mag : mag;
  }
  return v;
}

inline losses::DiscriminatorOutputs unflatten_scores(
    const VectorXd& flat, const std::vector<Eigen::Index>& sizes) {
  losses::DiscriminatorOutputs d;
  Eigen::Index at = 0;
  for (Eigen::Index n : sizes) {
    losses::SubDiscriminatorOutput sub;
    sub.scores = flat.segment(at, n);
    sub.layers.push_back(VectorXd::Zero(1));  // Unused by score losses.
    at += n;
    d.subs.push_back(sub);
  }
  return d;
}

}  // namespace internal

// Runs every loss's gradient through losses::grad_check at `points`
// random locations. Names are stable identifiers for report lines.
inline std::vector<SuiteEntry> run_suite(uint64_t seed, int points = 100,
                                         double h = 1e-4) {
  std::vector<SuiteEntry> out;
  Rng root(seed);

  const std::vector<Eigen::Index> score_sizes = {4, 5, 6};
  Eigen::Index score_total = 0;
  for (Eigen::Index n : score_sizes) score_total += n;

  // Discriminator loss, gradient wrt fake scores.
  {
    SuiteEntry e{"discriminator_loss", 0.0, points};
    Rng rng = root.derive(1);
    for (int p = 0; p < points; ++p) {
      const losses::DiscriminatorOutputs real = internal::unflatten_scores(
          internal::random_vector(rng, score_total, -1.0, 2.0), score_sizes);
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        const losses::DiscriminatorOutputs fake =
            internal::unflatten_scores(x, score_sizes);
        std::vector<VectorXd> grads;
        const double v = losses::discriminator_loss(
            real, fake, grad != nullptr ? &grads : nullptr);
        if (grad != nullptr) {
          grad->resize(x.size());
          Eigen::Index at = 0;
          for (const VectorXd& g : grads) {
            grad->segment(at, g.size()) = g;
            at += g.size();
          }
        }
        return v;
      };
      const VectorXd point =
          internal::random_vector(rng, score_total, -1.0, 2.0);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Adversarial loss, gradient wrt fake scores.
  {
    SuiteEntry e{"adversarial_loss", 0.0, points};
    Rng rng = root.derive(2);
    for (int p = 0; p < points; ++p) {
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        const losses::DiscriminatorOutputs fake =
            internal::unflatten_scores(x, score_sizes);
        std::vector<VectorXd> grads;
        const double v = losses::adversarial_loss(
            fake, grad != nullptr ? &grads : nullptr);
        if (grad != nullptr) {
          grad->resize(x.size());
          Eigen::Index at = 0;
          for (const VectorXd& g : grads) {
            grad->segment(at, g.size()) = g;
            at += g.size();
          }
        }
        return v;
      };
      const VectorXd point =
          internal::random_vector(rng, score_total, -1.0, 2.0);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Mel (L1) loss, gradient wrt the prediction, away from kinks.
  {
    SuiteEntry e{"mel_loss", 0.0, points};
    Rng rng = root.derive(3);
    const Eigen::Index t = 5;
    const Eigen::Index d = 4;
    for (int p = 0; p < points; ++p) {
      FeatureSequence target;
      target.frames = Eigen::Map<const MatrixXd>(
          internal::random_vector(rng, t * d, -1.0, 1.0).data(), t, d);
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        FeatureSequence pred;
        pred.frames = Eigen::Map<const MatrixXd>(x.data(), t, d);
        MatrixXd g;
        const double v =
            losses::mel_loss(target, pred, grad != nullptr ? &g : nullptr);
        if (grad != nullptr) {
          *grad = Eigen::Map<const VectorXd>(g.data(), g.size());
        }
        return v;
      };
      const VectorXd point =
          Eigen::Map<const VectorXd>(target.frames.data(),
                                     target.frames.size()) +
          internal::random_offsets(rng, t * d);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Feature matching (L1 over layer stacks), gradient wrt fake layers.
  {
    SuiteEntry e{"feature_matching_loss", 0.0, points};
    Rng rng = root.derive(4);
    const std::vector<std::vector<Eigen::Index>> layer_sizes = {{3, 4},
                                                                {5, 2, 3}};
    Eigen::Index total = 0;
    for (const auto& sub : layer_sizes) {
      for (Eigen::Index n : sub) total += n;
    }
    for (int p = 0; p < points; ++p) {
      losses::DiscriminatorOutputs real;
      for (const auto& sub_sizes : layer_sizes) {
        losses::SubDiscriminatorOutput sub;
        sub.scores = VectorXd::Zero(1);
        for (Eigen::Index n : sub_sizes) {
          sub.layers.push_back(internal::random_vector(rng, n, -1.0, 1.0));
        }
        real.subs.push_back(sub);
      }
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        losses::DiscriminatorOutputs fake;
        Eigen::Index at = 0;
        for (const auto& sub_sizes : layer_sizes) {
          losses::SubDiscriminatorOutput sub;
          sub.scores = VectorXd::Zero(1);
          for (Eigen::Index n : sub_sizes) {
            sub.layers.push_back(x.segment(at, n));
            at += n;
          }
          fake.subs.push_back(sub);
        }
        std::vector<std::vector<VectorXd>> grads;
        const double v = losses::feature_matching_loss(
            real, fake, grad != nullptr ? &grads : nullptr);
        if (grad != nullptr) {
          grad->resize(x.size());
          Eigen::Index ga = 0;
          for (const auto& sub : grads) {
            for (const VectorXd& g : sub) {
              grad->segment(ga, g.size()) = g;
              ga += g.size();
            }
          }
        }
        return v;
      };
      VectorXd flat_real(total);
      Eigen::Index at = 0;
      for (const auto& sub : real.subs) {
        for (const VectorXd& layer : sub.layers) {
          flat_real.segment(at, layer.size()) = layer;
          at += layer.size();
        }
      }
      const VectorXd point = flat_real + internal::random_offsets(rng, total);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Frame (MSE) loss, gradient wrt the prediction.
  {
    SuiteEntry e{"frame_loss", 0.0, points};
    Rng rng = root.derive(5);
    const Eigen::Index t = 6;
    const Eigen::Index d = 3;
    for (int p = 0; p < points; ++p) {
      FeatureSequence target;
      target.frames = Eigen::Map<const MatrixXd>(
          internal::random_vector(rng, t * d, -1.0, 1.0).data(), t, d);
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        FeatureSequence pred;
        pred.frames = Eigen::Map<const MatrixXd>(x.data(), t, d);
        MatrixXd g;
        const double v =
            losses::frame_loss(target, pred, grad != nullptr ? &g : nullptr);
        if (grad != nullptr) {
          *grad = Eigen::Map<const VectorXd>(g.data(), g.size());
        }
        return v;
      };
      const VectorXd point = internal::random_vector(rng, t * d, -2.0, 2.0);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Duration (MSE) loss, gradient wrt the prediction; durations stay
  // positive under the probe step.
  {
    SuiteEntry e{"duration_loss", 0.0, points};
    Rng rng = root.derive(6);
    const Eigen::Index n = 8;
    for (int p = 0; p < points; ++p) {
      const VectorXd target = internal::random_vector(rng, n, 1.0, 10.0);
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        return losses::duration_loss(target, x, grad);
      };
      const VectorXd point = internal::random_vector(rng, n, 1.0, 10.0);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Stage VQ loss, gradient wrt the pre-quantization stages (the quantized
  // branch is a constant).
  {
    SuiteEntry e{"vq_loss", 0.0, points};
    Rng rng = root.derive(7);
    const Eigen::Index t1 = 4;
    const Eigen::Index dim = 3;
    for (int p = 0; p < points; ++p) {
      msmc::Msmcr post;
      post.frame_shift_ms = 12.5;
      post.stages.resize(2);
      post.stages[0].rate = 1;
      post.stages[0].codewords = 4;
      post.stages[0].quantized.frames = Eigen::Map<const MatrixXd>(
          internal::random_vector(rng, t1 * dim, -1.0, 1.0).data(), t1, dim);
      post.stages[0].tokens = Eigen::MatrixXi::Zero(t1, 1);
      post.stages[1].rate = 2;
      post.stages[1].codewords = 4;
      post.stages[1].quantized.frames = Eigen::Map<const MatrixXd>(
          internal::random_vector(rng, (t1 / 2) * dim, -1.0, 1.0).data(),
          t1 / 2, dim);
      post.stages[1].tokens = Eigen::MatrixXi::Zero(t1 / 2, 1);
      const Eigen::Index total = t1 * dim + (t1 / 2) * dim;
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        std::vector<FeatureSequence> pre(2);
        pre[0].frames = Eigen::Map<const MatrixXd>(x.data(), t1, dim);
        pre[1].frames =
            Eigen::Map<const MatrixXd>(x.data() + t1 * dim, t1 / 2, dim);
        std::vector<MatrixXd> grads;
        const double v =
            msmc::vq_loss(pre, post, grad != nullptr ? &grads : nullptr);
        if (grad != nullptr) {
          grad->resize(x.size());
          Eigen::Index at = 0;
          for (const MatrixXd& g : grads) {
            grad->segment(at, g.size()) =
                Eigen::Map<const VectorXd>(g.data(), g.size());
            at += g.size();
          }
        }
        return v;
      };
      const VectorXd point = internal::random_vector(rng, total, -2.0, 2.0);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  // Cross-stage prediction loss, gradient wrt the predictions.
  {
    SuiteEntry e{"ms_loss", 0.0, points};
    Rng rng = root.derive(8);
    const Eigen::Index t1 = 6;
    const Eigen::Index dim = 2;
    for (int p = 0; p < points; ++p) {
      msmc::Msmcr actual;
      actual.frame_shift_ms = 12.5;
      actual.stages.resize(3);
      const Eigen::Index lens[3] = {t1, t1 / 2, t1 / 3};
      const int rates[3] = {1, 2, 3};
      for (int i = 0; i < 3; ++i) {
        actual.stages[static_cast<std::size_t>(i)].rate = rates[i];
        actual.stages[static_cast<std::size_t>(i)].codewords = 4;
        actual.stages[static_cast<std::size_t>(i)].quantized.frames =
            Eigen::Map<const MatrixXd>(
                internal::random_vector(rng, lens[i] * dim, -1.0, 1.0)
                    .data(),
                lens[i], dim);
        actual.stages[static_cast<std::size_t>(i)].tokens =
            Eigen::MatrixXi::Zero(lens[i], 1);
      }
      const Eigen::Index total = (lens[0] + lens[1]) * dim;
      auto f = [&](const VectorXd& x, VectorXd* grad) {
        std::vector<FeatureSequence> predicted(2);
        predicted[0].frames =
            Eigen::Map<const MatrixXd>(x.data(), lens[0], dim);
        predicted[1].frames = Eigen::Map<const MatrixXd>(
            x.data() + lens[0] * dim, lens[1], dim);
        std::vector<MatrixXd> grads;
        const double v = msmc::ms_loss(predicted, actual,
                                       grad != nullptr ? &grads : nullptr);
        if (grad != nullptr) {
          grad->resize(x.size());
          Eigen::Index at = 0;
          for (const MatrixXd& g : grads) {
            grad->segment(at, g.size()) =
                Eigen::Map<const VectorXd>(g.data(), g.size());
            at += g.size();
          }
        }
        return v;
      };
      const VectorXd point = internal::random_vector(rng, total, -2.0, 2.0);
      const losses::GradCheckReport r = losses::grad_check(f, point, h);
      e.max_rel_error = std::max(e.max_rel_error, r.max_rel_error);
    }
    out.push_back(e);
  }

  return out;
}

}  // namespace gradcheck
}  // namespace msfq

#endif  // MSFQ_GRADCHECK_HPP_
