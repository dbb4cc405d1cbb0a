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
// The embedding pooling and the loss identity are checked against hand
// arithmetic on tiny representations; the fit path is exercised end to
// end on an encoded corpus.

#include "msfq/associate.hpp"

#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "msfq/common.hpp"
#include "msfq/mhvq.hpp"
#include "msfq/msmc.hpp"

using namespace msfq;

namespace {

MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
  }
  return m;
}

// One-stage representation wrapping the given frames verbatim.
msmc::Msmcr wrap_stage(const MatrixXd& frames, double shift = 10.0) {
  msmc::Msmcr m;
  m.frame_shift_ms = shift;
  m.stages.resize(1);
  m.stages[0].rate = 1;
  m.stages[0].codewords = 4;
  m.stages[0].quantized = FeatureSequence(frames, shift, FeatureKind::kStage);
  m.stages[0].tokens = Eigen::MatrixXi::Zero(frames.rows(), 1);
  return m;
}

mhvq::MultiHeadCodebook tiny_codebook() {
  mhvq::MultiHeadCodebook book;
  book.heads = 1;
  book.head_dim = 2;
  book.codewords = 2;
  book.books.resize(1);
  book.books[0] = (MatrixXd(2, 2) << 0.0, 0.0, 10.0, 10.0).finished();
  return book;
}

struct Fitted {
  msmc::StageConfig cfg;
  std::vector<mhvq::MultiHeadCodebook> books;
  std::vector<msmc::Msmcr> corpus;
  associate::AssociateModel model;
};

Fitted fit_small(uint64_t seed, bool teacher_forcing = true) {
  Rng rng(seed);
  Fitted f;
  f.cfg.stages = {msmc::StageSpec{1, 2, 8}, msmc::StageSpec{2, 2, 8}};
  const MatrixXd pool = random_matrix(rng, 64, 6);
  for (std::size_t i = 0; i < f.cfg.stages.size(); ++i) {
    f.books.push_back(mhvq::init_codebook(pool, 2, 8, seed + i));
  }
  for (int u = 0; u < 4; ++u) {
    const MatrixXd frames = random_matrix(rng, 24, 6);
    f.corpus.push_back(msmc::encode(
        FeatureSequence(frames, 12.5, FeatureKind::kMel), f.cfg, f.books));
  }
  associate::FitOptions opts;
  opts.codewords = 16;
  opts.epochs = 5;
  opts.teacher_forcing = teacher_forcing;
  opts.seed = seed;
  f.model = associate::fit(f.corpus, f.cfg, f.books, opts);
  return f;
}

}  // namespace

TEST_CASE("global embedding concatenates mean and population sigma",
          "[associate]") {
  MatrixXd frames(2, 2);
  frames << 1.0, 2.0, 3.0, 6.0;
  const VectorXd e = associate::global_embedding(wrap_stage(frames));
  REQUIRE(e.size() == 4);
  CHECK(e(0) == Catch::Approx(2.0).epsilon(1e-15));
  CHECK(e(1) == Catch::Approx(4.0).epsilon(1e-15));
  CHECK(e(2) == Catch::Approx(1.0).epsilon(1e-15));  // Population, not n-1.
  CHECK(e(3) == Catch::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(associate::global_embedding(wrap_stage(MatrixXd(0, 2))),
                  InsufficientDataError);
}

TEST_CASE("decode_base adds the projected embedding to every codeword",
          "[associate]") {
  associate::AssociateModel model;
  model.codebook = tiny_codebook();
  model.embedding_dim = 4;
  model.embedding_projector.weight = (MatrixXd(2, 4) << 1, 0, 0, 0,
                                                        0, 1, 0, 0).finished();
  model.embedding_projector.bias = (VectorXd(2) << 0.5, -0.5).finished();
  model.stage_predictors.resize(1);

  associate::CompactCode code;
  code.tokens = (Eigen::VectorXi(3) << 1, 0, 1).finished();
  code.codewords = 2;
  code.codebook_fingerprint = mhvq::codebook_fingerprint(model.codebook);
  code.global_embedding = (VectorXd(4) << 2.0, 3.0, 9.0, 9.0).finished();
  code.frame_shift_ms = 12.5;

  const FeatureSequence base = associate::decode_base(code, model);
  REQUIRE(base.num_frames() == 3);
  REQUIRE(base.dim() == 2);
  // Shift = W e + b = (2.5, 2.5).
  MatrixXd want(3, 2);
  want << 12.5, 12.5, 2.5, 2.5, 12.5, 12.5;
  CHECK(base.frames == want);
  CHECK(base.frame_shift_ms == 12.5);

  code.codebook_fingerprint ^= 1;
  CHECK_THROWS_AS(associate::decode_base(code, model), MismatchError);
}

TEST_CASE("model validation names the offending piece", "[associate]") {
  associate::AssociateModel model;
  model.codebook = tiny_codebook();
  model.embedding_dim = 4;
  model.stage_predictors.resize(2);
  CHECK_NOTHROW(associate::validate(model, 2));
  CHECK_THROWS_AS(associate::validate(model, 3), ConfigError);
  model.embedding_dim = 3;
  CHECK_THROWS_AS(associate::validate(model, 2), ConfigError);
  model.embedding_dim = 4;
  model.codebook.heads = 2;
  CHECK_THROWS_AS(associate::validate(model, 2), ConfigError);
}

TEST_CASE("compress emits one token per base frame", "[associate]") {
  const Fitted f = fit_small(11);
  for (const msmc::Msmcr& m : f.corpus) {
    const associate::CompactCode code = associate::compress(m, f.model);
    REQUIRE(code.tokens.size() == m.base_frames());
    CHECK(code.tokens.minCoeff() >= 0);
    CHECK(code.tokens.maxCoeff() < f.model.codebook.codewords);
    CHECK(code.codewords == 16);
    CHECK(code.codebook_fingerprint ==
          mhvq::codebook_fingerprint(f.model.codebook));
    CHECK(code.frame_shift_ms == m.frame_shift_ms);
    CHECK(code.global_embedding == associate::global_embedding(m));
  }
}

TEST_CASE("reconstruct rebuilds every stage at its own rate", "[associate]") {
  const Fitted f = fit_small(12);
  const msmc::Msmcr& target = f.corpus[0];
  const associate::CompactCode code = associate::compress(target, f.model);
  const msmc::Msmcr out =
      associate::reconstruct(code, f.model, f.cfg, f.books);
  REQUIRE(out.stages.size() == target.stages.size());
  for (std::size_t i = 0; i < out.stages.size(); ++i) {
    CHECK(out.stages[i].quantized.num_frames() ==
          target.stages[i].quantized.num_frames());
    CHECK(out.stages[i].tokens.rows() == target.stages[i].tokens.rows());
    CHECK(out.stages[i].rate == f.cfg.stages[i].rate);
    CHECK(out.stages[i].tokens.minCoeff() >= 0);
    CHECK(out.stages[i].tokens.maxCoeff() < 8);
  }
  CHECK_NOTHROW(msmc::validate_msmcr(out));

  // Deterministic: a second pass yields the same tokens.
  const msmc::Msmcr again =
      associate::reconstruct(code, f.model, f.cfg, f.books);
  for (std::size_t i = 0; i < out.stages.size(); ++i) {
    CHECK(out.stages[i].tokens == again.stages[i].tokens);
  }

  // Teacher forcing feeds ground-truth upper stages to lower fits; the top
  // stage is unaffected by construction.
  const msmc::Msmcr forced =
      associate::reconstruct(code, f.model, f.cfg, f.books, &target);
  CHECK(forced.stages[1].tokens == out.stages[1].tokens);

  msmc::Msmcr bad_teacher = target;
  bad_teacher.stages.pop_back();
  CHECK_THROWS_AS(
      associate::reconstruct(code, f.model, f.cfg, f.books, &bad_teacher),
      InvalidInputError);
  std::vector<mhvq::MultiHeadCodebook> short_books(f.books.begin(),
                                                   f.books.end() - 1);
  CHECK_THROWS_AS(associate::reconstruct(code, f.model, f.cfg, short_books),
                  ConfigError);
}

TEST_CASE("associate loss satisfies the weighted identity", "[associate]") {
  associate::AssociateModel model;
  model.codebook = tiny_codebook();
  model.codebook.books[0] = (MatrixXd(2, 2) << 1.0, 1.0, 3.0, 5.0).finished();
  model.embedding_dim = 4;
  model.stage_predictors.resize(1);

  FeatureSequence pre_q(
      (MatrixXd(2, 2) << 1.0, 2.0, 3.0, 6.0).finished(), 10.0,
      FeatureKind::kStage);
  associate::CompactCode code;
  code.tokens = (Eigen::VectorXi(2) << 0, 1).finished();
  code.codewords = 2;

  const msmc::Msmcr recon = wrap_stage(MatrixXd::Zero(1, 2));
  const msmc::Msmcr target =
      wrap_stage((MatrixXd(1, 2) << 2.0, 1.0).finished());
  const associate::AssociateLoss loss =
      associate::associate_loss(pre_q, code, model, recon, target, 0.5);
  // vq: (|(1,2)-(1,1)|^2 + |(3,6)-(3,5)|^2) / 2 = 1.
  CHECK(loss.vq == Catch::Approx(1.0).epsilon(1e-15));
  // rec: (4 + 1) / 1 frame / 1 stage = 5.
  CHECK(loss.rec == Catch::Approx(5.0).epsilon(1e-15));
  CHECK(loss.total == Catch::Approx(loss.vq + 0.5 * loss.rec).epsilon(1e-15));

  CHECK_THROWS_AS(
      associate::associate_loss(pre_q, code, model, recon, target, -1.0),
      ConfigError);
  associate::CompactCode short_code = code;
  short_code.tokens = Eigen::VectorXi::Zero(1);
  CHECK_THROWS_AS(associate::associate_loss(pre_q, short_code, model,
                                            recon, target, 0.5),
                  InvalidInputError);
  const msmc::Msmcr wide = wrap_stage(MatrixXd::Zero(1, 3));
  CHECK_THROWS_AS(
      associate::associate_loss(pre_q, code, model, recon, wide, 0.5),
      InvalidInputError);
}

TEST_CASE("compression report for the default geometry is 5x",
          "[associate]") {
  msmc::Msmcr m;
  m.frame_shift_ms = 12.5;
  m.stages.resize(2);
  m.stages[0].rate = 1;
  m.stages[0].codewords = 64;
  m.stages[0].quantized =
      FeatureSequence(MatrixXd::Zero(80, 4), 12.5, FeatureKind::kStage);
  m.stages[0].tokens = Eigen::MatrixXi::Zero(80, 4);
  m.stages[1].rate = 4;
  m.stages[1].codewords = 64;
  m.stages[1].quantized =
      FeatureSequence(MatrixXd::Zero(20, 4), 50.0, FeatureKind::kStage);
  m.stages[1].tokens = Eigen::MatrixXi::Zero(20, 4);

  associate::CompactCode code;
  code.tokens = Eigen::VectorXi::Zero(80);
  code.codewords = 64;
  code.frame_shift_ms = 12.5;

  const associate::CompressionReport r = associate::compression_report(m, code);
  CHECK(r.msmcr_bits == 2400.0);
  CHECK(r.code_bits == 480.0);
  CHECK(r.ratio == 5.0);
  // 80 frames at 12.5 ms is exactly one second.
  CHECK(r.msmcr_bits_per_second == Catch::Approx(2400.0).epsilon(1e-15));
  CHECK(r.code_bits_per_second == Catch::Approx(480.0).epsilon(1e-15));

  code.tokens = Eigen::VectorXi::Zero(79);
  CHECK_THROWS_AS(associate::compression_report(m, code), InvalidInputError);
}

TEST_CASE("fit produces a valid deterministic model", "[associate]") {
  const Fitted a = fit_small(21);
  const Fitted b = fit_small(21);
  CHECK(mhvq::codebook_fingerprint(a.model.codebook) ==
        mhvq::codebook_fingerprint(b.model.codebook));
  CHECK(a.model.codebook.heads == 1);
  CHECK(a.model.codebook.codewords == 16);
  CHECK(a.model.embedding_dim == 2 * a.model.codebook.head_dim);
  REQUIRE(a.model.stage_predictors.size() == 2);
  CHECK_NOTHROW(associate::validate(a.model, 2));

  // The full loop closes: compress, reconstruct, score. All finite.
  const msmc::Msmcr& target = a.corpus[1];
  const associate::CompactCode code = associate::compress(target, a.model);
  const msmc::Msmcr recon =
      associate::reconstruct(code, a.model, a.cfg, a.books);
  const FeatureSequence aligned = msmc::align_concat(target);
  const associate::AssociateLoss loss = associate::associate_loss(
      aligned, code, a.model, recon, target, 1.0);
  CHECK(std::isfinite(loss.vq));
  CHECK(std::isfinite(loss.rec));
  CHECK(loss.total == loss.vq + loss.rec);

  // The free-running fit path must also converge to a usable model.
  const Fitted fr = fit_small(22, false);
  CHECK_NOTHROW(associate::validate(fr.model, 2));

  CHECK_THROWS_AS(
      associate::fit({}, a.cfg, a.books, associate::FitOptions{}),
      InsufficientDataError);
  associate::FitOptions greedy;
  greedy.codewords = 4096;
  CHECK_THROWS_AS(associate::fit(a.corpus, a.cfg, a.books, greedy),
                  InsufficientDataError);
}
