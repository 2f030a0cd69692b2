#pragma once

#include "svs/common.hpp"

#include <string>
#include <vector>

namespace svs {

inline constexpr int kSampleRate = 24000;

struct AudioClip {
  Vecf samples;  // mono, in [-1, 1]
  int sample_rate = kSampleRate;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

enum class WavEncoding { Pcm16, Float32 };

// Reads a PCM WAV (16-bit int or 32-bit float, mono or downmixed stereo) and
// resamples to target_rate. Peak-normalizes only if |sample| > 1.
AudioClip load_audio(const std::string& path, int target_rate = kSampleRate);

void save_audio(const std::string& path, const AudioClip& clip,
                WavEncoding enc = WavEncoding::Pcm16);

// Windowed-sinc resampler; pass-through when rates already match.
AudioClip resample(const AudioClip& clip, int target_rate);

struct ChunkOptions {
  double min_len = 2.5;
  double max_len = 12.0;
  double silence_db = -40.0;  // dBFS gate on short-term RMS
  double min_silence = 0.3;   // seconds a region must stay silent to allow a cut
};

struct AudioChunk {
  AudioClip clip;
  Index start_sample = 0;    // offset into the source clip
  bool oversized = false;    // a voiced span exceeded max_len (no valid split existed)
  bool undersized = false;   // below min_len (degenerate or trailing input)
};

// Splits on sustained silence. Chunks are disjoint contiguous sample ranges
// of the input; the gaps between them are the removed silences, so chunk
// samples + removed samples always account for the whole input.
std::vector<AudioChunk> chunk_audio(const AudioClip& clip, const ChunkOptions& opt = {});

// Short-term RMS in dBFS at the given position, window in samples.
double rms_db_at(const AudioClip& clip, Index center, Index window);

}  // namespace svs
