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
// Binary artifact formats. Every file is little-endian with a 4-byte magic
// and a u32 format version, validated before any payload read:
//   MSFQ  feature sequence   (f32 payload; features are bulk data)
//   MSCB  multi-head codebook (f64 payload; artifacts keep full precision)
//   MSMR  multi-stage token file (references its codebook set by fingerprint)
//   MSCC  compact code + global embedding
//   MSDC  decoder (inter-stage predictors + output head)
//   MSAM  associate model (concat codebook, projector, cascade)

#ifndef MSFQ_IO_HPP_
#define MSFQ_IO_HPP_

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "msfq/associate.hpp"
#include "msfq/common.hpp"
#include "msfq/mhvq.hpp"
#include "msfq/msmc.hpp"

namespace msfq {
namespace io {

inline constexpr uint32_t kFormatVersion = 1;

namespace internal {

class ByteWriter {
 public:
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back((v >> (8 * i)) & 0xff);
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back((v >> (8 * i)) & 0xff);
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back((v >> (8 * i)) & 0xff);
  }
  void f32(float v) {
    uint32_t u;
    std::memcpy(&u, &v, sizeof(u));
    u32(u);
  }
  void f64(double v) {
    uint64_t u;
    std::memcpy(&u, &v, sizeof(u));
    u64(u);
  }
  void magic(const char* m) {
    bytes_.insert(bytes_.end(), m, m + 4);
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(reinterpret_cast<const char*>(bytes_.data()),
             static_cast<std::streamsize>(bytes_.size()));
    if (!os) throw IoError("write failed: " + path);
  }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) {
      v = static_cast<uint16_t>(v | (static_cast<uint16_t>(bytes_[pos_ + i])
                                     << (8 * i)));
    }
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  float f32() {
    const uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, sizeof(v));
    return v;
  }
  double f64() {
    const uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, sizeof(v));
    return v;
  }

  // Magic and version gate every reader before any payload access.
  void expect_magic(const char* m) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
      throw BadMagicError("expected " + std::string(m, 4) + " file: " +
                          path_);
    }
    pos_ += 4;
  }
  void expect_version() {
    const uint32_t v = u32();
    if (v != kFormatVersion) {
      throw VersionMismatchError("format version " + std::to_string(v) +
                                 " != " + std::to_string(kFormatVersion) +
                                 ": " + path_);
    }
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw IoError("payload longer than declared: " + path_);
    }
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw TruncatedPayloadError("unexpected end of file: " + path_);
    }
  }

  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline ByteReader open(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return ByteReader(std::move(bytes), path);
}

inline uint32_t shift_us(double shift_ms) {
  if (!(shift_ms >= 0.0) || shift_ms > 4294967.0) {
    throw InvalidInputError("frame shift out of range: " +
                            std::to_string(shift_ms) + " ms");
  }
  return static_cast<uint32_t>(std::llround(shift_ms * 1000.0));
}

inline void write_predictor(ByteWriter& w, const msmc::LinearPredictor& p) {
  w.u32(static_cast<uint32_t>(p.weight.rows()));
  w.u32(static_cast<uint32_t>(p.weight.cols()));
  w.f64(p.ridge_lambda);
  for (Eigen::Index r = 0; r < p.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c) {
      w.f64(p.weight(r, c));
    }
  }
  for (Eigen::Index r = 0; r < p.bias.size(); ++r) w.f64(p.bias(r));
}

inline msmc::LinearPredictor read_predictor(ByteReader& r) {
  msmc::LinearPredictor p;
  const uint32_t rows = r.u32();
  const uint32_t cols = r.u32();
  p.ridge_lambda = r.f64();
  p.weight.resize(rows, cols);
  for (uint32_t i = 0; i < rows; ++i) {
    for (uint32_t j = 0; j < cols; ++j) p.weight(i, j) = r.f64();
  }
  p.bias.resize(rows);
  for (uint32_t i = 0; i < rows; ++i) p.bias(i) = r.f64();
  return p;
}

inline void write_codebook_body(ByteWriter& w,
                                const mhvq::MultiHeadCodebook& cb) {
  w.u32(static_cast<uint32_t>(cb.heads));
  w.u32(static_cast<uint32_t>(cb.codewords));
  w.u32(static_cast<uint32_t>(cb.head_dim));
  w.f64(cb.decay);
  w.f64(cb.smoothing_eps);
  for (const MatrixXd& book : cb.books) {
    for (Eigen::Index r = 0; r < book.rows(); ++r) {
      for (Eigen::Index c = 0; c < book.cols(); ++c) w.f64(book(r, c));
    }
  }
}

inline mhvq::MultiHeadCodebook read_codebook_body(ByteReader& r) {
  mhvq::MultiHeadCodebook cb;
  cb.heads = static_cast<int>(r.u32());
  cb.codewords = static_cast<int>(r.u32());
  cb.head_dim = static_cast<int>(r.u32());
  cb.decay = r.f64();
  cb.smoothing_eps = r.f64();
  if (cb.heads < 1 || cb.codewords < 1 || cb.head_dim < 1) {
    throw IoError("codebook header has non-positive geometry");
  }
  cb.books.resize(static_cast<std::size_t>(cb.heads));
  for (MatrixXd& book : cb.books) {
    book.resize(cb.codewords, cb.head_dim);
    for (Eigen::Index i = 0; i < book.rows(); ++i) {
      for (Eigen::Index j = 0; j < book.cols(); ++j) book(i, j) = r.f64();
    }
  }
  return cb;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Feature sequences: "MSFQ", kind u8, T u32, D u32, frame_shift_us u32,
// then T*D row-major f32 values.

inline void write_feature_file(const std::string& path,
                               const FeatureSequence& seq) {
  internal::ByteWriter w;
  w.magic("MSFQ");
  w.u32(kFormatVersion);
  w.u8(static_cast<uint8_t>(seq.kind));
  w.u32(static_cast<uint32_t>(seq.num_frames()));
  w.u32(static_cast<uint32_t>(seq.dim()));
  w.u32(internal::shift_us(seq.frame_shift_ms));
  for (Eigen::Index t = 0; t < seq.num_frames(); ++t) {
    for (Eigen::Index d = 0; d < seq.dim(); ++d) {
      w.f32(static_cast<float>(seq.frames(t, d)));
    }
  }
  w.save(path);
}

inline FeatureSequence read_feature_file(const std::string& path) {
  internal::ByteReader r = internal::open(path);
  r.expect_magic("MSFQ");
  r.expect_version();
  const uint8_t kind_code = r.u8();
  const uint32_t t = r.u32();
  const uint32_t d = r.u32();
  const uint32_t shift = r.u32();
  FeatureSequence seq;
  try {
    seq.kind = feature_kind_from_code(kind_code);
  } catch (const InvalidInputError& e) {
    throw IoError(std::string(e.what()) + ": " + path);
  }
  seq.frame_shift_ms = static_cast<double>(shift) / 1000.0;
  seq.frames.resize(t, d);
  for (uint32_t i = 0; i < t; ++i) {
    for (uint32_t j = 0; j < d; ++j) {
      seq.frames(i, j) = static_cast<double>(r.f32());
    }
  }
  r.expect_end();
  return seq;
}

// ---------------------------------------------------------------------------
// Codebooks: "MSCB" with (H, K, d, decay, eps) header and f64 codewords.

inline void write_codebook(const std::string& path,
                           const mhvq::MultiHeadCodebook& cb) {
  mhvq::validate(cb);
  internal::ByteWriter w;
  w.magic("MSCB");
  w.u32(kFormatVersion);
  internal::write_codebook_body(w, cb);
  w.save(path);
}

inline mhvq::MultiHeadCodebook read_codebook(const std::string& path) {
  internal::ByteReader r = internal::open(path);
  r.expect_magic("MSCB");
  r.expect_version();
  mhvq::MultiHeadCodebook cb = internal::read_codebook_body(r);
  r.expect_end();
  mhvq::validate(cb);
  return cb;
}

// ---------------------------------------------------------------------------
// Multi-stage token files: "MSMR". Tokens only; quantized sequences are
// rebuilt from the codebook set, which must match the stored fingerprint.

inline void write_msmcr(const std::string& path, const msmc::Msmcr& m,
                        uint64_t books_fp) {
  internal::ByteWriter w;
  w.magic("MSMR");
  w.u32(kFormatVersion);
  w.u64(books_fp);
  w.u32(internal::shift_us(m.frame_shift_ms));
  w.u32(static_cast<uint32_t>(m.stages.size()));
  for (const msmc::Stage& s : m.stages) {
    w.u32(static_cast<uint32_t>(s.rate));
    w.u32(static_cast<uint32_t>(s.tokens.cols()));
    w.u32(static_cast<uint32_t>(s.codewords));
    w.u32(static_cast<uint32_t>(s.tokens.rows()));
    for (Eigen::Index t = 0; t < s.tokens.rows(); ++t) {
      for (Eigen::Index h = 0; h < s.tokens.cols(); ++h) {
        w.u32(static_cast<uint32_t>(s.tokens(t, h)));
      }
    }
  }
  w.save(path);
}

inline msmc::Msmcr read_msmcr(const std::string& path,
                              const std::vector<mhvq::MultiHeadCodebook>&
                                  books) {
  internal::ByteReader r = internal::open(path);
  r.expect_magic("MSMR");
  r.expect_version();
  const uint64_t fp = r.u64();
  if (fp != mhvq::books_fingerprint(books)) {
    throw MismatchError("token file was produced by different codebooks: " +
                        path);
  }
  msmc::Msmcr m;
  m.frame_shift_ms = static_cast<double>(r.u32()) / 1000.0;
  const uint32_t num_stages = r.u32();
  if (num_stages != books.size()) {
    throw MismatchError("token file has " + std::to_string(num_stages) +
                        " stages, codebook set has " +
                        std::to_string(books.size()) + ": " + path);
  }
  m.stages.resize(num_stages);
  for (uint32_t i = 0; i < num_stages; ++i) {
    msmc::Stage& s = m.stages[i];
    s.rate = static_cast<int>(r.u32());
    const uint32_t heads = r.u32();
    s.codewords = static_cast<int>(r.u32());
    const uint32_t t = r.u32();
    if (static_cast<int>(heads) != books[i].heads ||
        s.codewords != books[i].codewords) {
      throw MismatchError("stage " + std::to_string(i) +
                          " geometry differs from its codebook: " + path);
    }
    s.tokens.resize(t, heads);
    s.quantized.frames.resize(t, books[i].total_dim());
    s.quantized.frame_shift_ms = m.frame_shift_ms * s.rate;
    s.quantized.kind = FeatureKind::kStage;
    std::vector<int> idx(heads);
    for (uint32_t row = 0; row < t; ++row) {
      for (uint32_t h = 0; h < heads; ++h) {
        const uint32_t tok = r.u32();
        if (tok >= static_cast<uint32_t>(books[i].codewords)) {
          throw IoError("token out of range in stage " + std::to_string(i) +
                        ": " + path);
        }
        s.tokens(row, h) = static_cast<int>(tok);
        idx[h] = static_cast<int>(tok);
      }
      s.quantized.frames.row(row) =
          mhvq::dequantize(idx, books[i]).transpose();
    }
  }
  r.expect_end();
  msmc::validate_msmcr(m);
  return m;
}

// ---------------------------------------------------------------------------
// Compact codes: "MSCC".

inline void write_compact_code(const std::string& path,
                               const associate::CompactCode& code) {
  internal::ByteWriter w;
  w.magic("MSCC");
  w.u32(kFormatVersion);
  w.u64(code.codebook_fingerprint);
  w.u32(static_cast<uint32_t>(code.codewords));
  w.u32(internal::shift_us(code.frame_shift_ms));
  w.u32(static_cast<uint32_t>(code.tokens.size()));
  w.u32(static_cast<uint32_t>(code.global_embedding.size()));
  for (Eigen::Index i = 0; i < code.tokens.size(); ++i) {
    w.u32(static_cast<uint32_t>(code.tokens(i)));
  }
  for (Eigen::Index i = 0; i < code.global_embedding.size(); ++i) {
    w.f64(code.global_embedding(i));
  }
  w.save(path);
}

inline associate::CompactCode read_compact_code(const std::string& path) {
  internal::ByteReader r = internal::open(path);
  r.expect_magic("MSCC");
  r.expect_version();
  associate::CompactCode code;
  code.codebook_fingerprint = r.u64();
  code.codewords = static_cast<int>(r.u32());
  code.frame_shift_ms = static_cast<double>(r.u32()) / 1000.0;
  const uint32_t t = r.u32();
  const uint32_t e = r.u32();
  code.tokens.resize(t);
  for (uint32_t i = 0; i < t; ++i) {
    const uint32_t tok = r.u32();
    if (code.codewords > 0 &&
        tok >= static_cast<uint32_t>(code.codewords)) {
      throw IoError("compact token out of range: " + path);
    }
    code.tokens(i) = static_cast<int>(tok);
  }
  code.global_embedding.resize(e);
  for (uint32_t i = 0; i < e; ++i) code.global_embedding(i) = r.f64();
  r.expect_end();
  return code;
}

// ---------------------------------------------------------------------------
// Decoder: "MSDC". Inter-stage predictors then the output head, tied to a
// codebook set by fingerprint.

struct Decoder {
  std::vector<msmc::LinearPredictor> predictors;  // S-1 entries.
  msmc::LinearPredictor head;
  uint64_t books_fingerprint = 0;
};

inline void write_decoder(const std::string& path, const Decoder& dec) {
  internal::ByteWriter w;
  w.magic("MSDC");
  w.u32(kFormatVersion);
  w.u64(dec.books_fingerprint);
  w.u32(static_cast<uint32_t>(dec.predictors.size()));
  for (const msmc::LinearPredictor& p : dec.predictors) {
    internal::write_predictor(w, p);
  }
  internal::write_predictor(w, dec.head);
  w.save(path);
}

inline Decoder read_decoder(const std::string& path) {
  internal::ByteReader r = internal::open(path);
  r.expect_magic("MSDC");
  r.expect_version();
  Decoder dec;
  dec.books_fingerprint = r.u64();
  const uint32_t n = r.u32();
  dec.predictors.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    dec.predictors[i] = internal::read_predictor(r);
  }
  dec.head = internal::read_predictor(r);
  r.expect_end();
  return dec;
}

// ---------------------------------------------------------------------------
// Associate model: "MSAM".

inline void write_associate_model(const std::string& path,
                                  const associate::AssociateModel& model,
                                  uint64_t stage_books_fp) {
  internal::ByteWriter w;
  w.magic("MSAM");
  w.u32(kFormatVersion);
  w.u64(stage_books_fp);
  w.u32(static_cast<uint32_t>(model.embedding_dim));
  internal::write_codebook_body(w, model.codebook);
  internal::write_predictor(w, model.embedding_projector);
  w.u32(static_cast<uint32_t>(model.stage_predictors.size()));
  for (const msmc::LinearPredictor& p : model.stage_predictors) {
    internal::write_predictor(w, p);
  }
  w.save(path);
}

struct AssociateArtifact {
  associate::AssociateModel model;
  uint64_t stage_books_fingerprint = 0;
};

inline AssociateArtifact read_associate_model(const std::string& path) {
  internal::ByteReader r = internal::open(path);
  r.expect_magic("MSAM");
  r.expect_version();
  AssociateArtifact art;
  art.stage_books_fingerprint = r.u64();
  art.model.embedding_dim = static_cast<int>(r.u32());
  art.model.codebook = internal::read_codebook_body(r);
  art.model.embedding_projector = internal::read_predictor(r);
  const uint32_t n = r.u32();
  art.model.stage_predictors.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    art.model.stage_predictors[i] = internal::read_predictor(r);
  }
  r.expect_end();
  return art;
}

}  // namespace io
}  // namespace msfq

#endif  // MSFQ_IO_HPP_
