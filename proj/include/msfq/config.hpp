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

#ifndef MSFQ_CONFIG_HPP_
#define MSFQ_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msfq/common.hpp"
#include "msfq/dsp.hpp"
#include "msfq/losses.hpp"
#include "msfq/msmc.hpp"

namespace msfq {
namespace config {

// Whole-pipeline configuration. Defaults give a 16 kHz front end with
// 50 ms / 12.5 ms framing and an 80-band mel spectrogram, two stages with
// the second at rate 4, 4-head 64-codeword books, and a 64-codeword
// associate stage.
struct PipelineConfig {
  int sample_rate_hz = 16000;
  dsp::StftParams stft;
  msmc::StageConfig stages;

  int train_epochs = 20;
  double ema_decay = 0.99;
  double ema_smoothing_eps = 1e-5;
  double ridge_lambda = 1e-6;
  bool reseed_dead = false;

  losses::LossWeights weights;

  int associate_codewords = 64;
  int associate_epochs = 20;
  bool teacher_forcing = true;

  uint64_t seed = 1;

  PipelineConfig() {
    stages.stages = {msmc::StageSpec{1, 4, 64}, msmc::StageSpec{4, 4, 64}};
  }
};

// Semantic validation; every failure names the offending field.
inline void validate(const PipelineConfig& c) {
  if (c.sample_rate_hz <= 0) {
    throw ConfigError("sample_rate_hz: must be positive");
  }
  dsp::validate(c.stft, c.sample_rate_hz);
  msmc::validate(c.stages);
  if (c.train_epochs < 0) {
    throw ConfigError("train.epochs: must be >= 0");
  }
  if (!(c.ema_decay > 0.0 && c.ema_decay < 1.0)) {
    throw ConfigError("train.ema_decay: must be in (0, 1)");
  }
  if (!(c.ema_smoothing_eps > 0.0)) {
    throw ConfigError("train.ema_smoothing_eps: must be positive");
  }
  if (!(c.ridge_lambda >= 0.0)) {
    throw ConfigError("train.ridge_lambda: must be >= 0");
  }
  const struct {
    const char* name;
    double value;
  } weight_fields[] = {
      {"weights.fm", c.weights.fm},     {"weights.mel", c.weights.mel},
      {"weights.vq", c.weights.vq},     {"weights.ms", c.weights.ms},
      {"weights.frame", c.weights.frame}, {"weights.rec", c.weights.rec},
      {"weights.dur", c.weights.dur},
  };
  for (const auto& f : weight_fields) {
    if (!std::isfinite(f.value) || f.value < 0.0) {
      throw ConfigError(std::string(f.name) + ": must be finite and >= 0");
    }
  }
  if (c.associate_codewords < 1) {
    throw ConfigError("associate.codewords: must be >= 1");
  }
  if (c.associate_epochs < 0) {
    throw ConfigError("associate.epochs: must be >= 0");
  }
}

namespace internal {

using nlohmann::json;

inline void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) {
    throw ConfigError(path + ": must be an object");
  }
}

inline void reject_unknown(const json& j, const std::string& path,
                           const std::vector<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const std::string& k : known) {
      if (it.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError(path.empty() ? "unknown field: " + it.key()
                                     : "unknown field: " + path + "." +
                                           it.key());
    }
  }
}

inline double get_number(const json& j, const char* key,
                         const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) {
    throw ConfigError(path + ": must be a number");
  }
  return v.get<double>();
}

inline int get_int(const json& j, const char* key, const std::string& path,
                   int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError(path + ": must be an integer");
  }
  const int64_t raw = v.get<int64_t>();
  if (raw < -2147483648LL || raw > 2147483647LL) {
    throw ConfigError(path + ": out of range");
  }
  return static_cast<int>(raw);
}

inline bool get_bool(const json& j, const char* key, const std::string& path,
                     bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) {
    throw ConfigError(path + ": must be a boolean");
  }
  return v.get<bool>();
}

inline uint64_t get_u64(const json& j, const char* key,
                        const std::string& path, uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() &&
                                   v.get<int64_t>() >= 0)) {
    throw ConfigError(path + ": must be a nonnegative integer");
  }
  return v.get<uint64_t>();
}

}  // namespace internal

// Parses a JSON configuration. Missing fields take defaults; unknown
// fields, wrong types, and out-of-range values are rejected with the field
// path in the message.
inline PipelineConfig parse_config(const nlohmann::json& root) {
  using internal::expect_object;
  using internal::get_bool;
  using internal::get_int;
  using internal::get_number;
  using internal::get_u64;
  using internal::reject_unknown;

  expect_object(root, "config");
  reject_unknown(root, "", {"sample_rate_hz", "stft", "stages", "train",
                            "weights", "associate", "seed"});
  PipelineConfig c;
  c.sample_rate_hz =
      get_int(root, "sample_rate_hz", "sample_rate_hz", c.sample_rate_hz);

  if (root.contains("stft")) {
    const nlohmann::json& j = root.at("stft");
    expect_object(j, "stft");
    reject_unknown(j, "stft",
                   {"window_length_ms", "frame_shift_ms", "fft_size",
                    "pre_emphasis", "n_mels", "fmin_hz", "fmax_hz"});
    c.stft.window_length_ms = get_number(j, "window_length_ms",
                                         "stft.window_length_ms",
                                         c.stft.window_length_ms);
    c.stft.frame_shift_ms = get_number(j, "frame_shift_ms",
                                       "stft.frame_shift_ms",
                                       c.stft.frame_shift_ms);
    c.stft.fft_size = get_int(j, "fft_size", "stft.fft_size",
                              c.stft.fft_size);
    c.stft.pre_emphasis = get_number(j, "pre_emphasis", "stft.pre_emphasis",
                                     c.stft.pre_emphasis);
    c.stft.n_mels = get_int(j, "n_mels", "stft.n_mels", c.stft.n_mels);
    c.stft.fmin_hz = get_number(j, "fmin_hz", "stft.fmin_hz",
                                c.stft.fmin_hz);
    c.stft.fmax_hz = get_number(j, "fmax_hz", "stft.fmax_hz",
                                c.stft.fmax_hz);
  }

  if (root.contains("stages")) {
    const nlohmann::json& j = root.at("stages");
    if (!j.is_array() || j.empty()) {
      throw ConfigError("stages: must be a non-empty array");
    }
    c.stages.stages.clear();
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string path = "stages[" + std::to_string(i) + "]";
      expect_object(j[i], path);
      reject_unknown(j[i], path, {"rate", "heads", "codewords"});
      msmc::StageSpec s;
      s.rate = get_int(j[i], "rate", path + ".rate", s.rate);
      s.heads = get_int(j[i], "heads", path + ".heads", s.heads);
      s.codewords =
          get_int(j[i], "codewords", path + ".codewords", s.codewords);
      c.stages.stages.push_back(s);
    }
  }

  if (root.contains("train")) {
    const nlohmann::json& j = root.at("train");
    expect_object(j, "train");
    reject_unknown(j, "train", {"epochs", "ema_decay", "ema_smoothing_eps",
                                "ridge_lambda", "reseed_dead"});
    c.train_epochs = get_int(j, "epochs", "train.epochs", c.train_epochs);
    c.ema_decay = get_number(j, "ema_decay", "train.ema_decay", c.ema_decay);
    c.ema_smoothing_eps = get_number(j, "ema_smoothing_eps",
                                     "train.ema_smoothing_eps",
                                     c.ema_smoothing_eps);
    c.ridge_lambda = get_number(j, "ridge_lambda", "train.ridge_lambda",
                                c.ridge_lambda);
    c.reseed_dead = get_bool(j, "reseed_dead", "train.reseed_dead",
                             c.reseed_dead);
  }

  if (root.contains("weights")) {
    const nlohmann::json& j = root.at("weights");
    expect_object(j, "weights");
    reject_unknown(j, "weights",
                   {"fm", "mel", "vq", "ms", "frame", "rec", "dur"});
    c.weights.fm = get_number(j, "fm", "weights.fm", c.weights.fm);
    c.weights.mel = get_number(j, "mel", "weights.mel", c.weights.mel);
    c.weights.vq = get_number(j, "vq", "weights.vq", c.weights.vq);
    c.weights.ms = get_number(j, "ms", "weights.ms", c.weights.ms);
    c.weights.frame = get_number(j, "frame", "weights.frame",
                                 c.weights.frame);
    c.weights.rec = get_number(j, "rec", "weights.rec", c.weights.rec);
    c.weights.dur = get_number(j, "dur", "weights.dur", c.weights.dur);
  }

  if (root.contains("associate")) {
    const nlohmann::json& j = root.at("associate");
    expect_object(j, "associate");
    reject_unknown(j, "associate",
                   {"codewords", "epochs", "teacher_forcing"});
    c.associate_codewords = get_int(j, "codewords", "associate.codewords",
                                    c.associate_codewords);
    c.associate_epochs = get_int(j, "epochs", "associate.epochs",
                                 c.associate_epochs);
    c.teacher_forcing = get_bool(j, "teacher_forcing",
                                 "associate.teacher_forcing",
                                 c.teacher_forcing);
  }

  c.seed = get_u64(root, "seed", "seed", c.seed);
  validate(c);
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return parse_config(root);
}

}  // namespace config
}  // namespace msfq

#endif  // MSFQ_CONFIG_HPP_
