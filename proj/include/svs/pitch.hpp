#pragma once

#include "svs/audio.hpp"
#include "svs/common.hpp"

#include <string>
#include <vector>

namespace svs {

inline constexpr int kRestToken = 0;
inline constexpr int kMidiMin = 36;
inline constexpr int kMidiMax = 96;
inline constexpr int kPitchVocab = kMidiMax + 1;  // tokens 0..96, REST plus clamped MIDI range

// Per-frame F0 with voicing decision, on the mel frame clock.
struct PitchContour {
  Vecd f0_hz;                 // 0 where unvoiced
  std::vector<bool> voiced;   // f0_hz > 0 iff voiced
  double frame_rate = 200.0;

  Index frames() const { return f0_hz.size(); }
};

struct PitchOptions {
  double fmin = 50.0;
  double fmax = 1200.0;
  double periodicity_threshold = 0.5;  // voiced iff periodicity above this
  double rms_gate_db = -50.0;          // and frame RMS above this
  double search_threshold = 0.15;      // CMNDF dip depth that ends the lag search;
                                       // strict so strong formants cannot win over
                                       // the true period (global min as fallback)
  int window = 1024;                   // analysis window, matches the STFT frame
  int median_width = 5;
};

// YIN-style difference-function estimator with parabolic interpolation and a
// median filter over voiced runs. Stands in for the Harvest tracker with the
// same F0 + voicing output contract.
PitchContour estimate_f0(const AudioClip& clip, double frame_rate = 200.0,
                         const PitchOptions& opt = {});

// 69 + 12*log2(f0/440)
double hz_to_midi(double f0_hz);
double midi_to_hz(double midi);

// Per-downsampled-frame melody token: REST(0) or MIDI note in [36, 96].
struct PitchTokenSeq {
  std::vector<int> tokens;
};

// Blocks of D frames; a block is voiced only when a strict majority of its
// source frames are voiced (ties break to unvoiced). Token = rounded MIDI of
// the median voiced F0, clamped to [36, 96].
PitchTokenSeq quantize_contour(const PitchContour& contour, Index downsample);

// Same majority rule; consumed by the unvoice penalty.
std::vector<bool> voiced_mask(const PitchContour& contour, Index downsample);

// "F0C1" cache: magic, u32 T, f32 f0 array, u8 voiced array.
void save_contour(const std::string& path, const PitchContour& contour);
PitchContour load_contour(const std::string& path);

}  // namespace svs
