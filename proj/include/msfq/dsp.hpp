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

#ifndef MSFQ_DSP_HPP_
#define MSFQ_DSP_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "msfq/common.hpp"

namespace msfq {
namespace dsp {

// Mel energies are clamped here before the natural log so silence maps to
// log(kLogMelFloor) instead of -inf.
inline constexpr double kLogMelFloor = 1e-10;

struct StftParams {
  double window_length_ms = 50.0;
  double frame_shift_ms = 12.5;
  int fft_size = 2048;
  double pre_emphasis = 0.97;
  int n_mels = 80;
  double fmin_hz = 40.0;
  double fmax_hz = 8000.0;

  int window_samples(int sample_rate_hz) const {
    return static_cast<int>(std::lround(window_length_ms * sample_rate_hz /
                                        1000.0));
  }
  int hop_samples(int sample_rate_hz) const {
    return static_cast<int>(std::lround(frame_shift_ms * sample_rate_hz /
                                        1000.0));
  }
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Throws ConfigError naming the offending field.
inline void validate(const StftParams& p, int sample_rate_hz) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("stft." + field + ": " + why);
  };
  if (!(p.window_length_ms > 0)) fail("window_length_ms", "must be positive");
  if (!(p.frame_shift_ms > 0)) fail("frame_shift_ms", "must be positive");
  if (p.window_length_ms < p.frame_shift_ms)
    fail("window_length_ms", "must be >= frame_shift_ms");
  if (!is_power_of_two(p.fft_size))
    fail("fft_size", "must be a positive power of two");
  if (!(p.pre_emphasis >= 0.0 && p.pre_emphasis < 1.0))
    fail("pre_emphasis", "must be in [0, 1)");
  if (p.n_mels < 1) fail("n_mels", "must be >= 1");
  if (sample_rate_hz > 0) {
    if (p.fft_size < p.window_samples(sample_rate_hz))
      fail("fft_size", "must cover the analysis window");
    if (!(p.fmin_hz > 0 && p.fmin_hz < p.fmax_hz &&
          p.fmax_hz <= sample_rate_hz / 2.0))
      fail("fmin_hz", "need 0 < fmin_hz < fmax_hz <= sample_rate/2");
  }
}

// y[0] = x[0]; y[t] = x[t] - coeff * x[t-1].
inline WaveformBuffer pre_emphasize(const WaveformBuffer& w, double coeff) {
  if (!(coeff >= 0.0 && coeff < 1.0)) {
    throw InvalidInputError("pre_emphasize: coeff must be in [0, 1)");
  }
  require_finite(w);
  WaveformBuffer out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(w.samples.size());
  if (!w.samples.empty()) {
    out.samples[0] = w.samples[0];
    for (std::size_t t = 1; t < w.samples.size(); ++t) {
      out.samples[t] = w.samples[t] - coeff * w.samples[t - 1];
    }
  }
  return out;
}

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if ((n & (n - 1)) != 0) {
    throw InvalidInputError("fft: size must be a power of two, got " +
                            std::to_string(n));
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Periodic Hann window of length n.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n));
  }
  return w;
}

// Index fold for reflect padding (no edge repeat).
inline std::size_t reflect_index(long long i, std::size_t len) {
  if (len == 1) return 0;
  const long long period = 2 * (static_cast<long long>(len) - 1);
  long long j = ((i % period) + period) % period;
  if (j >= static_cast<long long>(len)) j = period - j;
  return static_cast<std::size_t>(j);
}

// Frame count law shared by everything downstream: a waveform shorter than
// one window yields zero frames; otherwise T = ceil(len / hop).
inline Eigen::Index stft_num_frames(std::size_t len, int window, int hop) {
  if (window <= 0 || hop <= 0 || len < static_cast<std::size_t>(window)) {
    return 0;
  }
  return static_cast<Eigen::Index>((len + static_cast<std::size_t>(hop) - 1) /
                                   static_cast<std::size_t>(hop));
}

// Magnitude STFT. Pre-emphasis from `p` is applied first. Frame t covers
// padded samples [t*hop, t*hop + window) where the signal is reflect-padded
// by window/2 on the left and whatever the last frame needs on the right,
// so frame t is centered on original sample t*hop + window%2/2. Returns a
// T x (fft_size/2 + 1) matrix.
inline MatrixXd stft_magnitudes(const WaveformBuffer& w, const StftParams& p) {
  validate(p, w.sample_rate_hz);
  require_finite(w);
  const WaveformBuffer pre = p.pre_emphasis > 0.0
                                 ? pre_emphasize(w, p.pre_emphasis)
                                 : w;
  const int window = p.window_samples(w.sample_rate_hz);
  const int hop = p.hop_samples(w.sample_rate_hz);
  if (hop < 1 || window < 1) {
    throw ConfigError("stft.frame_shift_ms: too small for the sample rate");
  }
  const std::size_t len = pre.samples.size();
  const Eigen::Index num_frames = stft_num_frames(len, window, hop);
  const int bins = p.fft_size / 2 + 1;
  MatrixXd mags(num_frames, bins);
  if (num_frames == 0) return mags;

  const int pad_left = window / 2;
  const std::vector<double> win = hann_window(window);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(p.fft_size));
  for (Eigen::Index t = 0; t < num_frames; ++t) {
    const long long start = static_cast<long long>(t) * hop - pad_left;
    for (int i = 0; i < window; ++i) {
      const double s = pre.samples[reflect_index(start + i, len)];
      buf[static_cast<std::size_t>(i)] = s * win[static_cast<std::size_t>(i)];
    }
    std::fill(buf.begin() + window, buf.end(), std::complex<double>(0.0));
    fft_inplace(buf);
    for (int k = 0; k < bins; ++k) {
      mags(t, k) = std::abs(buf[static_cast<std::size_t>(k)]);
    }
  }
  return mags;
}

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular filterbank on the HTK mel scale, n_mels x (fft/2 + 1),
// no area normalization.
inline MatrixXd mel_filterbank(const StftParams& p, int sample_rate_hz) {
  const int bins = p.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(p.fmin_hz);
  const double mel_hi = hz_to_mel(p.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(p.n_mels) + 2);
  for (int m = 0; m < p.n_mels + 2; ++m) {
    edges[static_cast<std::size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (p.n_mels + 1));
  }
  MatrixXd fb = MatrixXd::Zero(p.n_mels, bins);
  for (int m = 0; m < p.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate_hz / p.fft_size;
      double weight = 0.0;
      if (f > lo && f < mid) {
        weight = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        weight = (hi - f) / (hi - mid);
      }
      fb(m, k) = weight;
    }
  }
  return fb;
}

// Linear mel energies (no log): magnitude STFT projected through the
// triangular filterbank.
inline FeatureSequence mel_spectrogram(const WaveformBuffer& w,
                                       const StftParams& p) {
  const MatrixXd mags = stft_magnitudes(w, p);
  const MatrixXd fb = mel_filterbank(p, w.sample_rate_hz);
  FeatureSequence out;
  out.frames = mags * fb.transpose();
  out.frame_shift_ms = p.frame_shift_ms;
  out.kind = FeatureKind::kMel;
  return out;
}

inline FeatureSequence log_mel_spectrogram(const WaveformBuffer& w,
                                           const StftParams& p) {
  FeatureSequence out = mel_spectrogram(w, p);
  out.frames = out.frames.cwiseMax(kLogMelFloor).array().log().matrix();
  return out;
}

// Mel-cepstral distortion in dB between aligned cepstra: mean over frames of
// (10/ln 10) * sqrt(2 * sum_d (a_td - b_td)^2), dimension 0 excluded.
inline double mel_cepstral_distortion(const FeatureSequence& a,
                                      const FeatureSequence& b) {
  if (a.num_frames() != b.num_frames() || a.dim() != b.dim()) {
    throw InvalidInputError("mel_cepstral_distortion: shape mismatch");
  }
  require_finite(a.frames, "mel_cepstral_distortion: a");
  require_finite(b.frames, "mel_cepstral_distortion: b");
  const Eigen::Index frames = a.num_frames();
  const Eigen::Index dims = a.dim();
  if (frames == 0 || dims <= 1) return 0.0;
  const double scale = 10.0 / std::log(10.0);
  double total = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    double sq = 0.0;
    for (Eigen::Index d = 1; d < dims; ++d) {
      const double delta = a.frames(t, d) - b.frames(t, d);
      sq += delta * delta;
    }
    total += scale * std::sqrt(2.0 * sq);
  }
  return total / static_cast<double>(frames);
}

}  // namespace dsp
}  // namespace msfq

#endif  // MSFQ_DSP_HPP_
