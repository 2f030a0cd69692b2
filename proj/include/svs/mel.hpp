#pragma once

#include "svs/audio.hpp"
#include "svs/common.hpp"

#include <complex>
#include <string>

namespace svs {

inline constexpr int kMelBins = 80;
inline constexpr int kFftSize = 1024;
inline constexpr int kHopSize = 120;  // 5 ms at 24 kHz, two mel frames per 10 ms label frame

struct MelConfig {
  int fft_size = kFftSize;
  int hop = kHopSize;
  int mel_bins = kMelBins;
  double fmin = 0.0;
  double fmax = 12000.0;
  double amp_floor = 1e-5;  // added before the amplitude log
  double db_floor = -100.0;
  double db_ceil = 0.0;
};

// 80-bin, dB-compressed, [0,1]-normalized time-frequency matrix.
struct MelSpectrogram {
  Matf frames;  // T x mel_bins, values in [0,1]
  int frame_hop = kHopSize;
  double frame_rate = 200.0;  // frames per second
};

// Frames are left-aligned (no center padding): frame t covers samples
// [t*hop, t*hop + fft_size). Exact count for n >= fft_size.
Index mel_frame_count(Index n_samples, const MelConfig& cfg = {});

// magnitude STFT -> mel filterbank -> 20*log10(.+amp_floor) -> clamp
// [db_floor, db_ceil] -> affine map to [0,1]
MelSpectrogram melspectrogram(const AudioClip& clip, const MelConfig& cfg = {});

// NNLS pseudo-inverse of the filterbank + Griffin-Lim phase recovery.
AudioClip invert_mel(const MelSpectrogram& mel, int iterations = 60, const MelConfig& cfg = {});

// Linear mel magnitudes (no dB compression); shared with the cepstral metric.
Matd mel_magnitude(const AudioClip& clip, const MelConfig& cfg = {});

// HTK-style triangular filterbank, (mel_bins x fft/2+1), unit peak per band.
Matd mel_filterbank(const MelConfig& cfg = {});

double db_to_unit(double db, const MelConfig& cfg = {});
double unit_to_db(double unit, const MelConfig& cfg = {});

// "MELS" little-endian cache format: magic, u32 version, u32 T, u32 bins,
// f32 row-major data.
void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path);

// Magnitude spectrum of one Hann-windowed frame (test oracle + pitch checks
// use this too).
Vecd fft_magnitude(const Vecd& frame);

}  // namespace svs
