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
// Every loss is pinned to hand-computed values on inputs small enough to
// evaluate on paper; analytic gradients are cross-checked both here and
// by the central-difference suite.

#include "msfq/losses.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "msfq/common.hpp"
#include "msfq/gradcheck.hpp"

using namespace msfq;
using losses::DiscriminatorOutputs;
using losses::SubDiscriminatorOutput;

namespace {

DiscriminatorOutputs two_sub_scores(std::vector<std::vector<double>> subs) {
  DiscriminatorOutputs d;
  for (const auto& s : subs) {
    SubDiscriminatorOutput sub;
    sub.scores = Eigen::Map<const VectorXd>(s.data(),
                                            static_cast<Eigen::Index>(s.size()));
    d.subs.push_back(sub);
  }
  return d;
}

FeatureSequence seq(const MatrixXd& m) {
  return FeatureSequence(m, 12.5, FeatureKind::kMel);
}

}  // namespace

TEST_CASE("discriminator loss pulls real to one and fake to zero",
          "[losses]") {
  const DiscriminatorOutputs real = two_sub_scores({{1.0, 1.0}, {0.0}});
  const DiscriminatorOutputs fake = two_sub_scores({{0.5}, {2.0, 0.0}});
  std::vector<VectorXd> grads;
  const double loss = losses::discriminator_loss(real, fake, &grads);
  // Sub 0: 0 + 0.25; sub 1: 1 + 2. Mean over subs: 1.625.
  CHECK(loss == Catch::Approx(1.625).epsilon(1e-15));
  REQUIRE(grads.size() == 2);
  CHECK(grads[0](0) == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(grads[1](0) == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(grads[1](1) == 0.0);

  // Perfect discrimination scores zero.
  const DiscriminatorOutputs perfect_fake = two_sub_scores({{0.0}, {0.0, 0.0}});
  CHECK(losses::discriminator_loss(two_sub_scores({{1.0, 1.0}, {1.0}}),
                                   perfect_fake) == 0.0);

  CHECK_THROWS_AS(losses::discriminator_loss(real, two_sub_scores({{0.5}})),
                  InvalidInputError);
  CHECK_THROWS_AS(losses::discriminator_loss(DiscriminatorOutputs{}, fake),
                  InvalidInputError);
  DiscriminatorOutputs bad = fake;
  bad.subs[0].scores = VectorXd();
  CHECK_THROWS_AS(losses::discriminator_loss(real, bad), InvalidInputError);
  bad = fake;
  bad.subs[1].scores(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(losses::discriminator_loss(real, bad), InvalidInputError);
}

TEST_CASE("adversarial loss pulls fake scores to one", "[losses]") {
  const DiscriminatorOutputs fake = two_sub_scores({{0.5}, {2.0, 0.0}});
  std::vector<VectorXd> grads;
  const double loss = losses::adversarial_loss(fake, &grads);
  // Sub 0: 0.25; sub 1: mean(1, 1) = 1. Mean over subs: 0.625.
  CHECK(loss == Catch::Approx(0.625).epsilon(1e-15));
  REQUIRE(grads.size() == 2);
  CHECK(grads[0](0) == Catch::Approx(-0.5).epsilon(1e-15));
  CHECK(grads[1](0) == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(grads[1](1) == Catch::Approx(-0.5).epsilon(1e-15));
  CHECK(losses::adversarial_loss(two_sub_scores({{1.0, 1.0}})) == 0.0);
  CHECK_THROWS_AS(losses::adversarial_loss(DiscriminatorOutputs{}),
                  InvalidInputError);
}

TEST_CASE("mel loss is the mean absolute difference", "[losses]") {
  MatrixXd t(2, 2), p(2, 2);
  t << 0, 1, 2, 3;
  p << 1, 1, 0, 3;
  MatrixXd grad;
  const double loss = losses::mel_loss(seq(t), seq(p), &grad);
  CHECK(loss == Catch::Approx(0.75).epsilon(1e-15));  // (1 + 0 + 2 + 0) / 4.
  REQUIRE(grad.rows() == 2);
  CHECK(grad(0, 0) == 0.25);
  CHECK(grad(0, 1) == 0.0);  // Subgradient at the kink is zero.
  CHECK(grad(1, 0) == -0.25);

  CHECK(losses::mel_loss(seq(MatrixXd(0, 3)), seq(MatrixXd(0, 3)), &grad) ==
        0.0);
  CHECK(grad.rows() == 0);
  CHECK_THROWS_AS(losses::mel_loss(seq(t), seq(MatrixXd::Zero(3, 2))),
                  InvalidInputError);
  p(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(losses::mel_loss(seq(t), seq(p)), InvalidInputError);
}

TEST_CASE("feature matching averages over layers and subs", "[losses]") {
  DiscriminatorOutputs real, fake;
  real.subs.resize(1);
  fake.subs.resize(1);
  real.subs[0].layers = {(VectorXd(2) << 0, 0).finished(),
                         (VectorXd(1) << 3).finished()};
  fake.subs[0].layers = {(VectorXd(2) << 1, -1).finished(),
                         (VectorXd(1) << 5).finished()};
  std::vector<std::vector<VectorXd>> grads;
  const double loss = losses::feature_matching_loss(real, fake, &grads);
  // Layer 0: mean |delta| = 1; layer 1: 2. Each / 2 layers: 1.5 total.
  CHECK(loss == Catch::Approx(1.5).epsilon(1e-15));
  REQUIRE(grads.size() == 1);
  REQUIRE(grads[0].size() == 2);
  CHECK(grads[0][0](0) == Catch::Approx(0.25).epsilon(1e-15));
  CHECK(grads[0][0](1) == Catch::Approx(-0.25).epsilon(1e-15));
  CHECK(grads[0][1](0) == Catch::Approx(0.5).epsilon(1e-15));

  DiscriminatorOutputs bad = fake;
  bad.subs[0].layers.pop_back();
  CHECK_THROWS_AS(losses::feature_matching_loss(real, bad),
                  InvalidInputError);
  bad = fake;
  bad.subs[0].layers[0] = VectorXd::Zero(3);
  CHECK_THROWS_AS(losses::feature_matching_loss(real, bad),
                  InvalidInputError);
  CHECK_THROWS_AS(
      losses::feature_matching_loss(DiscriminatorOutputs{}, fake),
      InvalidInputError);
}

TEST_CASE("frame loss is the mean squared difference", "[losses]") {
  MatrixXd t(2, 2), p(2, 2);
  t << 0, 1, 2, 3;
  p << 1, 1, 0, 3;
  MatrixXd grad;
  const double loss = losses::frame_loss(seq(t), seq(p), &grad);
  CHECK(loss == Catch::Approx(1.25).epsilon(1e-15));  // (1 + 0 + 4 + 0) / 4.
  CHECK(grad(0, 0) == 0.5);
  CHECK(grad(1, 0) == -1.0);
  CHECK(losses::frame_loss(seq(MatrixXd(0, 2)), seq(MatrixXd(0, 2))) == 0.0);
  CHECK_THROWS_AS(losses::frame_loss(seq(t), seq(MatrixXd::Zero(2, 3))),
                  InvalidInputError);
}

TEST_CASE("generator total applies the published weights", "[losses]") {
  losses::GeneratorParts parts;
  parts.adv = 1.0;
  parts.fm = 1.0;
  parts.mel = 1.0;
  parts.vq = 1.0;
  parts.ms = 1.0;
  parts.frame = 1.0;
  const losses::LossWeights w;
  // 1 + 2 + 45 + 10 + 1 + 450.
  CHECK(losses::generator_total(parts, w) == 509.0);

  parts.mel = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(losses::generator_total(parts, w), InvalidInputError);
  losses::LossWeights negative;
  negative.vq = -1.0;
  parts.mel = 1.0;
  CHECK_THROWS_AS(losses::generator_total(parts, negative), ConfigError);
}

TEST_CASE("duration loss is mean squared with nonnegativity checks",
          "[losses]") {
  const VectorXd t = (VectorXd(3) << 1, 2, 3).finished();
  const VectorXd p = (VectorXd(3) << 2, 2, 5).finished();
  VectorXd grad;
  const double loss = losses::duration_loss(t, p, &grad);
  CHECK(loss == Catch::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK(grad(0) == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(grad(1) == 0.0);
  CHECK(grad(2) == Catch::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(losses::duration_loss(t, VectorXd::Zero(2)),
                  InvalidInputError);
  CHECK_THROWS_AS(losses::duration_loss(VectorXd(), VectorXd()),
                  InvalidInputError);
  CHECK_THROWS_AS(
      losses::duration_loss(t, (VectorXd(3) << -1, 2, 3).finished()),
      InvalidInputError);
}

TEST_CASE("am total is the weighted sum of its two parts", "[losses]") {
  CHECK(losses::am_total(1.0, 2.0, 0.1) == Catch::Approx(1.2).epsilon(1e-15));
  CHECK_THROWS_AS(
      losses::am_total(std::numeric_limits<double>::infinity(), 0.0, 0.1),
      InvalidInputError);
}

TEST_CASE("grad check accepts a correct gradient and flags a wrong one",
          "[losses]") {
  const auto quadratic = [](const VectorXd& x, VectorXd* g) {
    if (g != nullptr) *g = 2.0 * x;
    return x.squaredNorm();
  };
  const VectorXd at = (VectorXd(4) << 1.0, -2.0, 0.5, 3.0).finished();
  const losses::GradCheckReport ok = losses::grad_check(quadratic, at, 1e-5);
  CHECK(ok.max_rel_error < 1e-8);
  CHECK(ok.step == 1e-5);

  const auto wrong = [](const VectorXd& x, VectorXd* g) {
    if (g != nullptr) *g = 3.0 * x;
    return x.squaredNorm();
  };
  CHECK(losses::grad_check(wrong, at, 1e-5).max_rel_error > 0.1);

  const auto bad_size = [](const VectorXd& x, VectorXd* g) {
    if (g != nullptr) *g = VectorXd::Zero(x.size() + 1);
    return x.squaredNorm();
  };
  CHECK_THROWS_AS(losses::grad_check(bad_size, at, 1e-5), InvalidInputError);

  const auto nan_loss = [](const VectorXd& x, VectorXd* g) {
    if (g != nullptr) *g = 2.0 * x;
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(losses::grad_check(nan_loss, at, 1e-5), NumericError);
  CHECK_THROWS_AS(losses::grad_check(quadratic, at, 0.0), ConfigError);
}

TEST_CASE("central differences confirm every analytic gradient", "[losses]") {
  // The shared suite runs each loss at randomized points; this is the same
  // machinery the toolchain's self-check verb uses.
  const auto entries = gradcheck::run_suite(17, 25, 1e-4);
  REQUIRE(entries.size() == 8);
  for (const auto& e : entries) {
    INFO(e.name);
    CHECK(e.max_rel_error < 1e-5);
  }
}
