#pragma once

#include "svs/audio.hpp"
#include "svs/classifier.hpp"
#include "svs/pitch.hpp"
#include "svs/score.hpp"

#include <string>
#include <vector>

namespace svs {

// c1..c13 mel-cepstra per frame: DCT-II of the natural-log mel magnitudes,
// c0 excluded so the metric ignores gain
Matd mel_cepstra(const AudioClip& clip, int n_coeffs = 13);

// mean over frames of (10*sqrt(2)/ln10) * ||c - c'||; the shorter sequence
// sets the frame count
double mcd_from_cepstra(const Matd& ref, const Matd& syn);
double mcd(const AudioClip& reference, const AudioClip& synthesized);

struct F0RmseResult {
  double hz = 0.0;
  double cents = 0.0;
  double voiced_overlap_ratio = 0.0;  // |both voiced| / |either voiced|
};

// RMSE over frames voiced in BOTH contours; NoVoicedOverlap when disjoint.
F0RmseResult f0_rmse(const PitchContour& ref, const PitchContour& syn);

// Phoneme error rate within a syllable: predicted segments are assigned to
// notes by midpoint, collapsed, and compared by edit distance.
double pers(const std::vector<AlignSegment>& segments, const Score& score,
            double frame_rate_ds = kLabelFrameRate);

Index levenshtein(const std::vector<int>& a, const std::vector<int>& b);

struct ClipEval {
  std::string id;
  double mcd_db = 0.0;
  double f0_rmse_hz = 0.0;
  double f0_rmse_cents = 0.0;
  double pers_percent = 0.0;
  double voiced_overlap_ratio = 0.0;
};

struct EvalReport {
  std::vector<ClipEval> clips;

  ClipEval aggregate() const;  // clip-count-weighted means
  void save_json(const std::string& path) const;
  void save_csv(const std::string& path) const;
};

}  // namespace svs
