#pragma once

#include "svs/mel.hpp"
#include "svs/model.hpp"
#include "svs/score.hpp"

namespace svs {

struct InferenceResult {
  Matf coarse;         // decoder output, T_ds x 80
  MelSpectrogram mel;  // supersampled, clamped to [0, 1]
  AudioClip audio;     // Griffin-Lim rendering
};

// Hard-path synthesis: expand the score, run the generator, invert the mel.
InferenceResult synthesize(const SvsModel<float>& model, const Score& score,
                           const PhonemeInventory& inv, int gl_iterations = 60);

// Classifier probabilities for a mel input (inference mode, batch of one).
Matf classify_probs(const SvsModel<float>& model, const Matf& mel);

}  // namespace svs
