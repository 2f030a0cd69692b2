#include "svs/infer.hpp"

#include <algorithm>

namespace svs {

InferenceResult synthesize(const SvsModel<float>& model, const Score& score,
                           const PhonemeInventory& inv, int gl_iterations) {
  require(inv.size() == model.config.vocab, Err::BadConfig,
          "synthesize: inventory size " + std::to_string(inv.size()) +
              " does not match the model vocabulary " + std::to_string(model.config.vocab));
  const FrameLabels labels = expand_score(score, inv, kLabelFrameRate);

  Graph<float> g;
  auto pair = model.generator->forward_hard(g, labels.phoneme_ids, labels.pitch_tokens);

  InferenceResult out;
  out.coarse = pair.coarse.value();
  out.mel.frames = pair.full.value().cwiseMax(0.0f).cwiseMin(1.0f);
  out.mel.frame_hop = kHopSize;
  out.mel.frame_rate = static_cast<double>(kSampleRate) / kHopSize;
  out.audio = invert_mel(out.mel, gl_iterations);
  return out;
}

Matf classify_probs(const SvsModel<float>& model, const Matf& mel) {
  Graph<float> g;
  const Index T = (mel.rows() / model.config.subsample) * model.config.subsample;
  require(T >= model.config.subsample, Err::TooShort, "classify_probs: input too short");
  auto out = model.classifier->forward(g, g.input(mel.topRows(T)));
  return out.probs.value();
}

}  // namespace svs
