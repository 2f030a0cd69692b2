#pragma once

#include "svs/audio.hpp"
#include "svs/mel.hpp"

#include <cmath>

namespace svs::testutil {

inline AudioClip make_sine(double freq, double dur, double amp = 0.5, int sr = kSampleRate) {
  const Index n = static_cast<Index>(dur * sr);
  Vecf x(n);
  for (Index i = 0; i < n; ++i)
    x(i) = static_cast<float>(amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / sr));
  return AudioClip{std::move(x), sr};
}

inline AudioClip make_saw(double freq, double dur, double amp = 0.4, int sr = kSampleRate) {
  const Index n = static_cast<Index>(dur * sr);
  Vecf x(n);
  for (Index i = 0; i < n; ++i) {
    const double phase = std::fmod(freq * i / sr, 1.0);
    x(i) = static_cast<float>(amp * (2.0 * phase - 1.0));
  }
  return AudioClip{std::move(x), sr};
}

// FFT-oracle estimate of the dominant frequency around the clip's middle
inline double dominant_freq(const AudioClip& clip, int fft = 1024) {
  const Index start = std::max<Index>(0, clip.samples.size() / 2 - fft / 2);
  Vecd frame = clip.samples.segment(start, fft).cast<double>();
  const Vecd mag = fft_magnitude(frame);
  Index best = 0;
  mag.maxCoeff(&best);
  return static_cast<double>(best) * clip.sample_rate / fft;
}

}  // namespace svs::testutil
