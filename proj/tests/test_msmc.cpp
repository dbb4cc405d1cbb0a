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
// Resampling is validated against scalar reference loops, the ridge fit
// against an explicit normal-equations solve with an augmented bias
// column, and the shape laws against direct ceil arithmetic.

#include "msfq/msmc.hpp"

#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "msfq/common.hpp"
#include "msfq/mhvq.hpp"

using namespace msfq;

namespace {

MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                       double lo = -1.0, double hi = 1.0) {
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  }
  return m;
}

FeatureSequence make_seq(const MatrixXd& frames, double shift = 12.5) {
  return FeatureSequence(frames, shift, FeatureKind::kMel);
}

// Scalar reference for nearest resampling: output frame t copies the
// input frame whose center time is closest to (t + 0.5) * out_shift,
// earlier frame on ties.
Eigen::Index resample_oracle_index(Eigen::Index t, double in_shift,
                                   double out_shift, Eigen::Index t_in) {
  const double center = (static_cast<double>(t) + 0.5) * out_shift;
  Eigen::Index best = 0;
  double best_d = 1e300;
  for (Eigen::Index i = 0; i < t_in; ++i) {
    const double d =
        std::abs((static_cast<double>(i) + 0.5) * in_shift - center);
    if (d < best_d - 1e-12) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

msmc::StageConfig two_stage_config(int r2 = 4, int heads = 4, int k = 64) {
  msmc::StageConfig cfg;
  cfg.stages = {msmc::StageSpec{1, heads, k}, msmc::StageSpec{r2, heads, k}};
  return cfg;
}

std::vector<mhvq::MultiHeadCodebook> books_for(
    const msmc::StageConfig& cfg, const MatrixXd& data, uint64_t seed) {
  std::vector<mhvq::MultiHeadCodebook> books;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    books.push_back(mhvq::init_codebook(data, cfg.stages[i].heads,
                                        cfg.stages[i].codewords,
                                        seed + i));
  }
  return books;
}

}  // namespace

TEST_CASE("downsample averages windows and pads with the last frame",
          "[msmc]") {
  MatrixXd frames(5, 1);
  frames << 1.0, 2.0, 3.0, 4.0, 5.0;
  const FeatureSequence out = msmc::downsample_avg(make_seq(frames, 10.0), 2);
  REQUIRE(out.num_frames() == 3);
  CHECK(out.frames(0, 0) == 1.5);
  CHECK(out.frames(1, 0) == 3.5);
  CHECK(out.frames(2, 0) == 5.0);  // (5 + 5) / 2: repeated last frame.
  CHECK(out.frame_shift_ms == 20.0);

  // Rate 1 is the identity.
  const FeatureSequence id = msmc::downsample_avg(make_seq(frames, 10.0), 1);
  CHECK(id.frames == frames);
  CHECK_THROWS_AS(msmc::downsample_avg(make_seq(frames), 0),
                  InvalidInputError);
}

TEST_CASE("downsample shape law is ceil(T / r)", "[msmc]") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index t = static_cast<Eigen::Index>(rng.uniform_int(40));
    const int r = 1 + static_cast<int>(rng.uniform_int(7));
    const FeatureSequence out =
        msmc::downsample_avg(make_seq(random_matrix(rng, t, 3)), r);
    REQUIRE(out.num_frames() == (t + r - 1) / r);
  }
}

TEST_CASE("upsample repeats frames and truncates to the target", "[msmc]") {
  MatrixXd frames(2, 2);
  frames << 1.0, 2.0, 3.0, 4.0;
  const FeatureSequence out =
      msmc::upsample_repeat(make_seq(frames, 30.0), 3, 5);
  REQUIRE(out.num_frames() == 5);
  for (int t = 0; t < 5; ++t) {
    CHECK(out.frames.row(t) == frames.row(t / 3));
  }
  CHECK(out.frame_shift_ms == 10.0);
  CHECK_THROWS_AS(msmc::upsample_repeat(make_seq(frames), 3, 7),
                  InvalidInputError);
  CHECK(msmc::upsample_repeat(make_seq(frames), 3, 0).num_frames() == 0);
}

TEST_CASE("upsample then downsample is the identity up to rounding",
          "[msmc]") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index t = 1 + static_cast<Eigen::Index>(rng.uniform_int(20));
    const int r = 1 + static_cast<int>(rng.uniform_int(5));
    const MatrixXd x = random_matrix(rng, t, 4);
    const FeatureSequence up =
        msmc::upsample_repeat(make_seq(x), r, t * r);
    const FeatureSequence back = msmc::downsample_avg(up, r);
    REQUIRE(back.num_frames() == t);
    CHECK((back.frames - x).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("nearest resampling matches the scalar oracle", "[msmc]") {
  Rng rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index t = 1 + static_cast<Eigen::Index>(rng.uniform_int(30));
    const double in_shift = rng.uniform(5.0, 20.0);
    const double out_shift = rng.uniform(5.0, 20.0);
    const MatrixXd x = random_matrix(rng, t, 2);
    const FeatureSequence out =
        msmc::resample_nearest(make_seq(x, in_shift), out_shift);
    const Eigen::Index want_len = static_cast<Eigen::Index>(
        std::ceil(static_cast<double>(t) * in_shift / out_shift));
    REQUIRE(out.num_frames() == want_len);
    for (Eigen::Index i = 0; i < want_len; ++i) {
      const Eigen::Index src =
          resample_oracle_index(i, in_shift, out_shift, t);
      REQUIRE(out.frames.row(i) == x.row(src));
    }
  }
}

TEST_CASE("nearest resampling tie picks the earlier frame", "[msmc]") {
  MatrixXd x(4, 1);
  x << 10.0, 20.0, 30.0, 40.0;
  // Output centers at 10, 30 ms sit exactly between input centers
  // (5, 15, 25, 35 ms): the earlier frame wins.
  const FeatureSequence out = msmc::resample_nearest(make_seq(x, 10.0), 20.0);
  REQUIRE(out.num_frames() == 2);
  CHECK(out.frames(0, 0) == 10.0);
  CHECK(out.frames(1, 0) == 30.0);
  // Equal shifts reproduce the input bit for bit.
  const FeatureSequence same = msmc::resample_nearest(make_seq(x, 10.0), 10.0);
  CHECK(same.frames == x);
  CHECK_THROWS_AS(msmc::resample_nearest(make_seq(x, 0.0), 10.0),
                  InvalidInputError);
}

TEST_CASE("stage config validation names the failing field", "[msmc]") {
  msmc::StageConfig cfg = two_stage_config();
  CHECK_NOTHROW(msmc::validate(cfg));
  cfg.stages[0].rate = 2;
  CHECK_THROWS_WITH(msmc::validate(cfg),
                    Catch::Matchers::ContainsSubstring("stages[0].rate"));
  cfg = two_stage_config();
  cfg.stages[1].rate = 1;  // Not strictly increasing.
  CHECK_THROWS_WITH(msmc::validate(cfg),
                    Catch::Matchers::ContainsSubstring("stages[1].rate"));
  cfg = two_stage_config();
  cfg.stages.push_back(msmc::StageSpec{6, 4, 64});  // 6 % 4 != 0.
  CHECK_THROWS_WITH(msmc::validate(cfg),
                    Catch::Matchers::ContainsSubstring("stages[2].rate"));
  cfg = two_stage_config();
  cfg.stages[1].heads = 0;
  CHECK_THROWS_WITH(msmc::validate(cfg),
                    Catch::Matchers::ContainsSubstring("stages[1].heads"));
  cfg = two_stage_config();
  cfg.stages.clear();
  CHECK_THROWS_AS(msmc::validate(cfg), ConfigError);
}

TEST_CASE("ridge fit recovers an exact linear map", "[msmc]") {
  Rng rng(44);
  const MatrixXd x = random_matrix(rng, 80, 5);
  const MatrixXd w_true = random_matrix(rng, 3, 5);
  const VectorXd b_true = random_matrix(rng, 3, 1).col(0);
  const MatrixXd y =
      (x * w_true.transpose()).rowwise() + b_true.transpose();
  const msmc::LinearPredictor p = msmc::fit_stage_predictor(x, y, 0.0);
  CHECK((p.weight - w_true).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((p.bias - b_true).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((p.apply(x) - y).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ridge fit agrees with augmented normal equations", "[msmc]") {
  Rng rng(45);
  const MatrixXd x = random_matrix(rng, 60, 4);
  const MatrixXd y = random_matrix(rng, 60, 2);
  const double lambda = 0.37;
  const msmc::LinearPredictor p = msmc::fit_stage_predictor(x, y, lambda);

  // Oracle: [X 1] with the ridge applied to the weight block only.
  MatrixXd z(60, 5);
  z.leftCols(4) = x;
  z.col(4).setOnes();
  MatrixXd gram = z.transpose() * z;
  for (int i = 0; i < 4; ++i) gram(i, i) += lambda;
  const MatrixXd beta = gram.ldlt().solve(z.transpose() * y);
  const MatrixXd w_ref = beta.topRows(4).transpose();
  const VectorXd b_ref = beta.row(4).transpose();
  CHECK((p.weight - w_ref).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((p.bias - b_ref).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("ridge fit never loses to the bias-only predictor", "[msmc]") {
  Rng rng(46);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd x = random_matrix(rng, 50, 3);
    const MatrixXd y = random_matrix(rng, 50, 2);
    const msmc::LinearPredictor p = msmc::fit_stage_predictor(x, y, 1e-6);
    const double fitted = (p.apply(x) - y).squaredNorm();
    const VectorXd mean = y.colwise().mean().transpose();
    const double bias_only =
        (y.rowwise() - mean.transpose()).squaredNorm();
    CHECK(fitted <= bias_only + 1e-9);
  }
  CHECK_THROWS_AS(
      msmc::fit_stage_predictor(MatrixXd(0, 3), MatrixXd(0, 2), 0.1),
      InsufficientDataError);
  CHECK_THROWS_AS(
      msmc::fit_stage_predictor(MatrixXd::Zero(3, 2), MatrixXd::Zero(4, 2),
                                0.1),
      InvalidInputError);
  CHECK_THROWS_AS(
      msmc::fit_stage_predictor(MatrixXd::Zero(3, 2), MatrixXd::Zero(3, 2),
                                -1.0),
      ConfigError);
}

TEST_CASE("encode obeys the per-stage shape law", "[msmc]") {
  Rng rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index t =
        1 + static_cast<Eigen::Index>(rng.uniform_int(200));
    msmc::StageConfig cfg;
    cfg.stages = {msmc::StageSpec{1, 2, 8}};
    int rate = 1;
    const int extra = static_cast<int>(rng.uniform_int(3));
    for (int i = 0; i < extra; ++i) {
      rate *= 2 + static_cast<int>(rng.uniform_int(3));
      cfg.stages.push_back(msmc::StageSpec{rate, 2, 8});
    }
    const MatrixXd data = random_matrix(rng, std::max<Eigen::Index>(t, 16), 6);
    const auto books = books_for(cfg, data, 7);
    const msmc::Msmcr m =
        msmc::encode(make_seq(data.topRows(t)), cfg, books);
    REQUIRE(m.stages.size() == cfg.stages.size());
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
      const int r = cfg.stages[i].rate;
      REQUIRE(m.stages[i].quantized.num_frames() == (t + r - 1) / r);
      REQUIRE(m.stages[i].tokens.rows() ==
              m.stages[i].quantized.num_frames());
      REQUIRE(m.stages[i].tokens.cols() == 2);
      REQUIRE(m.stages[i].codewords == 8);
      REQUIRE(m.stages[i].tokens.minCoeff() >= 0);
      REQUIRE(m.stages[i].tokens.maxCoeff() < 8);
    }
    CHECK_NOTHROW(msmc::validate_msmcr(m));
  }
}

TEST_CASE("encoded stages dequantize to their token codewords exactly",
          "[msmc]") {
  Rng rng(48);
  const msmc::StageConfig cfg = two_stage_config(4, 2, 8);
  const MatrixXd data = random_matrix(rng, 40, 6);
  const auto books = books_for(cfg, data, 9);
  const msmc::Msmcr m = msmc::encode(make_seq(data), cfg, books);
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    for (Eigen::Index t = 0; t < m.stages[i].tokens.rows(); ++t) {
      std::vector<int> idx;
      for (int h = 0; h < books[i].heads; ++h) {
        idx.push_back(m.stages[i].tokens(t, h));
      }
      REQUIRE(m.stages[i].quantized.frames.row(t).transpose() ==
              mhvq::dequantize(idx, books[i]));
    }
  }
  // Stage 0 pools at rate 1, so its pre-quantization input is the raw data.
  const auto inputs = msmc::stage_inputs(make_seq(data), cfg);
  REQUIRE(inputs.size() == 2);
  CHECK(inputs[0].frames == data);
  CHECK(inputs[1].num_frames() == 10);
}

TEST_CASE("encode validates codebook geometry against the config",
          "[msmc]") {
  Rng rng(49);
  const msmc::StageConfig cfg = two_stage_config(4, 2, 8);
  const MatrixXd data = random_matrix(rng, 40, 6);
  auto books = books_for(cfg, data, 9);
  books.pop_back();
  CHECK_THROWS_AS(msmc::encode(make_seq(data), cfg, books), ConfigError);
  books = books_for(cfg, data, 9);
  books[1].codewords = 4;
  CHECK_THROWS_AS(msmc::encode(make_seq(data), cfg, books), ConfigError);
}

TEST_CASE("align_concat stacks upsampled stages, base stage first",
          "[msmc]") {
  msmc::Msmcr m;
  m.frame_shift_ms = 10.0;
  m.stages.resize(2);
  m.stages[0].rate = 1;
  m.stages[0].codewords = 4;
  m.stages[0].quantized = make_seq((MatrixXd(4, 1) << 1, 2, 3, 4).finished(),
                                   10.0);
  m.stages[0].tokens = Eigen::MatrixXi::Zero(4, 1);
  m.stages[1].rate = 2;
  m.stages[1].codewords = 4;
  m.stages[1].quantized =
      make_seq((MatrixXd(2, 1) << 10, 20).finished(), 20.0);
  m.stages[1].tokens = Eigen::MatrixXi::Zero(2, 1);
  const FeatureSequence cat = msmc::align_concat(m);
  REQUIRE(cat.num_frames() == 4);
  REQUIRE(cat.dim() == 2);
  MatrixXd want(4, 2);
  want << 1, 10, 2, 10, 3, 20, 4, 20;
  CHECK(cat.frames == want);
  CHECK(cat.kind == FeatureKind::kStage);

  // Breaking the ceil law must be caught.
  m.stages[1].quantized = make_seq(MatrixXd::Zero(3, 1), 20.0);
  m.stages[1].tokens = Eigen::MatrixXi::Zero(3, 1);
  CHECK_THROWS_AS(msmc::align_concat(m), InvalidInputError);
}

TEST_CASE("decode with an identity head returns the base stage", "[msmc]") {
  Rng rng(50);
  msmc::StageConfig cfg;
  cfg.stages = {msmc::StageSpec{1, 2, 8}};
  const MatrixXd data = random_matrix(rng, 30, 6);
  const auto books = books_for(cfg, data, 3);
  const msmc::Msmcr m = msmc::encode(make_seq(data), cfg, books);
  msmc::LinearPredictor head;
  head.weight = MatrixXd::Identity(6, 6);
  head.bias = VectorXd::Zero(6);
  const FeatureSequence out = msmc::decode(m, {}, head);
  CHECK(out.frames == m.stages[0].quantized.frames);
  // A missing inter-stage predictor is an artifact error.
  const msmc::StageConfig cfg2 = two_stage_config(2, 2, 8);
  const auto books2 = books_for(cfg2, data, 3);
  const msmc::Msmcr m2 = msmc::encode(make_seq(data), cfg2, books2);
  CHECK_THROWS_AS(msmc::decode(m2, {}, head), ConfigError);
}

TEST_CASE("vq loss averages stage mean squared errors", "[msmc]") {
  msmc::Msmcr post;
  post.frame_shift_ms = 10.0;
  post.stages.resize(2);
  post.stages[0].rate = 1;
  post.stages[0].quantized = make_seq(MatrixXd::Zero(2, 2), 10.0);
  post.stages[0].tokens = Eigen::MatrixXi::Zero(2, 1);
  post.stages[1].rate = 2;
  post.stages[1].quantized = make_seq(MatrixXd::Zero(1, 2), 20.0);
  post.stages[1].tokens = Eigen::MatrixXi::Zero(1, 1);

  std::vector<FeatureSequence> pre(2);
  pre[0] = make_seq((MatrixXd(2, 2) << 1, 0, 0, 1).finished(), 10.0);
  pre[1] = make_seq((MatrixXd(1, 2) << 2, 0).finished(), 20.0);
  // Stage 0 mean: (1 + 1) / 2 = 1; stage 1 mean: 4. Loss: (1 + 4) / 2.
  std::vector<MatrixXd> grads;
  const double loss = msmc::vq_loss(pre, post, &grads);
  CHECK(loss == Catch::Approx(2.5).epsilon(1e-15));
  REQUIRE(grads.size() == 2);
  // d/d pre = 2 delta / (S * T_i).
  CHECK(grads[0](0, 0) == Catch::Approx(2.0 * 1.0 / (2 * 2)).epsilon(1e-15));
  CHECK(grads[1](0, 0) == Catch::Approx(2.0 * 2.0 / (2 * 1)).epsilon(1e-15));
  // Zero when the branches agree.
  std::vector<FeatureSequence> same(2);
  same[0] = post.stages[0].quantized;
  same[1] = post.stages[1].quantized;
  CHECK(msmc::vq_loss(same, post) == 0.0);
  // Shape mismatch rejected.
  pre[1] = make_seq(MatrixXd::Zero(2, 2), 20.0);
  CHECK_THROWS_AS(msmc::vq_loss(pre, post), InvalidInputError);
}

TEST_CASE("ms loss covers adjacent pairs and flags the degenerate case",
          "[msmc]") {
  msmc::Msmcr actual;
  actual.frame_shift_ms = 10.0;
  actual.stages.resize(1);
  actual.stages[0].rate = 1;
  actual.stages[0].quantized = make_seq(MatrixXd::Zero(3, 2), 10.0);
  actual.stages[0].tokens = Eigen::MatrixXi::Zero(3, 1);
  bool degenerate = false;
  CHECK(msmc::ms_loss({}, actual, nullptr, &degenerate) == 0.0);
  CHECK(degenerate);
  std::vector<FeatureSequence> bogus(1);
  bogus[0] = make_seq(MatrixXd::Zero(3, 2), 10.0);
  CHECK_THROWS_AS(msmc::ms_loss(bogus, actual, nullptr, &degenerate),
                  InvalidInputError);

  actual.stages.resize(3);
  actual.stages[1].rate = 2;
  actual.stages[1].quantized = make_seq(MatrixXd::Zero(2, 2), 20.0);
  actual.stages[1].tokens = Eigen::MatrixXi::Zero(2, 1);
  actual.stages[2].rate = 4;
  actual.stages[2].quantized = make_seq(MatrixXd::Zero(1, 2), 40.0);
  actual.stages[2].tokens = Eigen::MatrixXi::Zero(1, 1);
  std::vector<FeatureSequence> predicted(2);
  predicted[0] = make_seq(MatrixXd::Constant(3, 2, 1.0), 10.0);
  predicted[1] = make_seq(MatrixXd::Constant(2, 2, 2.0), 20.0);
  std::vector<MatrixXd> grads;
  const double loss = msmc::ms_loss(predicted, actual, &grads, &degenerate);
  CHECK_FALSE(degenerate);
  // Pair 0 mean: 2, pair 1 mean: 8; loss (2 + 8) / 2 = 5.
  CHECK(loss == Catch::Approx(5.0).epsilon(1e-15));
  REQUIRE(grads.size() == 2);
  CHECK(grads[0](0, 0) == Catch::Approx(2.0 * 1.0 / (2 * 3)).epsilon(1e-15));
  CHECK(grads[1](1, 1) == Catch::Approx(2.0 * 2.0 / (2 * 2)).epsilon(1e-15));
}

TEST_CASE("predict_lower_stages with identity predictors upsamples",
          "[msmc]") {
  Rng rng(51);
  const msmc::StageConfig cfg = two_stage_config(2, 2, 8);
  const MatrixXd data = random_matrix(rng, 21, 6);
  const auto books = books_for(cfg, data, 5);
  const msmc::Msmcr m = msmc::encode(make_seq(data), cfg, books);
  msmc::LinearPredictor identity;
  identity.weight = MatrixXd::Identity(6, 6);
  identity.bias = VectorXd::Zero(6);
  const auto preds = msmc::predict_lower_stages(m, {identity});
  REQUIRE(preds.size() == 1);
  const FeatureSequence up = msmc::upsample_repeat(
      m.stages[1].quantized, 2, m.stages[0].quantized.num_frames());
  CHECK(preds[0].frames == up.frames);
  CHECK_THROWS_AS(msmc::predict_lower_stages(m, {}), ConfigError);
}

TEST_CASE("bit accounting normalizes to stage-1 frames", "[msmc]") {
  // Default geometry: 4 heads x log2(64) bits at rate 1 plus the same at
  // rate 4 comes to 24 + 6 bits per base frame.
  const msmc::StageConfig cfg = two_stage_config();
  CHECK(msmc::bits_per_frame(cfg) == 30.0);

  msmc::StageConfig other;
  other.stages = {msmc::StageSpec{1, 2, 16}, msmc::StageSpec{8, 1, 256}};
  CHECK(msmc::bits_per_frame(other) == Catch::Approx(9.0).epsilon(1e-15));

  msmc::Msmcr m;
  m.frame_shift_ms = 10.0;
  m.stages.resize(2);
  m.stages[0].rate = 1;
  m.stages[0].codewords = 64;
  m.stages[0].quantized = make_seq(MatrixXd::Zero(80, 4), 10.0);
  m.stages[0].tokens = Eigen::MatrixXi::Zero(80, 4);
  m.stages[1].rate = 4;
  m.stages[1].codewords = 64;
  m.stages[1].quantized = make_seq(MatrixXd::Zero(20, 4), 40.0);
  m.stages[1].tokens = Eigen::MatrixXi::Zero(20, 4);
  // 80 * 4 * 6 + 20 * 4 * 6 bits of payload.
  CHECK(msmc::msmcr_bits(m) == 2400.0);
}
