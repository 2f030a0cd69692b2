#pragma once

#include "svs/mel.hpp"
#include "svs/pitch.hpp"
#include "svs/score.hpp"

#include <string>
#include <vector>

namespace svs {

// One prepared training unit: cached features plus both label views.
struct TrainClip {
  std::string id;
  Matf mel;                      // T x 80, T trimmed to a multiple of D
  std::vector<int> targets;      // CTC targets from the lyrics
  std::vector<int> pseudo_pitch; // T/D melody tokens quantized from F0
  std::vector<bool> voiced;      // T/D unvoice-penalty mask

  bool has_score = false;
  Score score;
  std::vector<int> label_phonemes;  // frame labels from the score, T/D clock
  std::vector<int> label_pitch;

  Index frames() const { return mel.rows(); }
};

struct PrepareStats {
  int computed = 0;
  int reused = 0;
  int chunk_warnings = 0;  // clips whose silence analysis wanted a split
  double total_seconds = 0.0;
};

// Extracts mel + F0 features (through the cache when cache_dir is set) and
// expands score labels onto the downsampled grid. Deterministic.
std::vector<TrainClip> prepare_clips(const Dataset& dataset, const std::string& cache_dir = "",
                                     Index subsample = 2, PrepareStats* stats = nullptr);

TrainClip prepare_clip(const ManifestEntry& entry, const PhonemeInventory& inv,
                       const std::string& cache_dir = "", Index subsample = 2,
                       PrepareStats* stats = nullptr);

}  // namespace svs
