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

#ifndef MSFQ_WAV_HPP_
#define MSFQ_WAV_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "msfq/common.hpp"

namespace msfq {
namespace wav {

namespace internal {

inline uint32_t read_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16le(const unsigned char* p) {
  return static_cast<uint16_t>(static_cast<uint16_t>(p[0]) |
                               (static_cast<uint16_t>(p[1]) << 8));
}

inline void write_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u16le(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace internal

// Reads a mono RIFF/WAVE file holding PCM16 or IEEE float32 samples.
// Multichannel input is rejected rather than silently downmixed.
inline WaveformBuffer read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw BadMagicError("read_wav: not a RIFF/WAVE file: " + path);
  }
  uint16_t format = 0;
  uint16_t channels = 0;
  uint16_t bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const uint32_t chunk_len = internal::read_u32le(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) {
      throw TruncatedPayloadError("read_wav: chunk overruns file: " + path);
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) {
        throw TruncatedPayloadError("read_wav: short fmt chunk: " + path);
      }
      format = internal::read_u16le(bytes.data() + body);
      channels = internal::read_u16le(bytes.data() + body + 2);
      sample_rate = internal::read_u32le(bytes.data() + body + 4);
      bits = internal::read_u16le(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // Chunks are word-aligned.
  }
  if (!have_fmt || data_off == 0) {
    throw TruncatedPayloadError("read_wav: missing fmt or data chunk: " +
                                path);
  }
  if (channels != 1) {
    throw InvalidInputError("read_wav: only mono supported, got " +
                            std::to_string(channels) + " channels: " + path);
  }

  WaveformBuffer out;
  out.sample_rate_hz = static_cast<int>(sample_rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = data_len / 2;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int16_t s = static_cast<int16_t>(
          internal::read_u16le(bytes.data() + data_off + 2 * i));
      out.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_len / 4;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const uint32_t u = internal::read_u32le(bytes.data() + data_off + 4 * i);
      float f;
      std::memcpy(&f, &u, sizeof(f));
      out.samples[i] = static_cast<double>(f);
    }
  } else {
    throw InvalidInputError("read_wav: unsupported encoding (format " +
                            std::to_string(format) + ", " +
                            std::to_string(bits) + " bit): " + path);
  }
  require_finite(out);
  return out;
}

// Writes mono PCM16 with round-half-away rounding and clipping at full scale.
inline void write_wav(const std::string& path, const WaveformBuffer& w) {
  require_finite(w);
  if (w.sample_rate_hz <= 0) {
    throw InvalidInputError("write_wav: sample_rate_hz must be positive");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_wav: cannot open " + path);
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  internal::write_u32le(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  internal::write_u32le(os, 16);
  internal::write_u16le(os, 1);  // PCM.
  internal::write_u16le(os, 1);  // Mono.
  internal::write_u32le(os, static_cast<uint32_t>(w.sample_rate_hz));
  internal::write_u32le(os, static_cast<uint32_t>(w.sample_rate_hz) * 2);
  internal::write_u16le(os, 2);
  internal::write_u16le(os, 16);
  os.write("data", 4);
  internal::write_u32le(os, data_len);
  for (double s : w.samples) {
    double scaled = s * 32768.0;
    if (scaled > 32767.0) scaled = 32767.0;
    if (scaled < -32768.0) scaled = -32768.0;
    const int16_t q = static_cast<int16_t>(std::lround(scaled));
    internal::write_u16le(os, static_cast<uint16_t>(q));
  }
  if (!os) throw IoError("write_wav: write failed: " + path);
}

}  // namespace wav
}  // namespace msfq

#endif  // MSFQ_WAV_HPP_
