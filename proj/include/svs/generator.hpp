#pragma once

#include "svs/pitch.hpp"
#include "svs/transformer.hpp"

#include <string>
#include <vector>

namespace svs {

struct GeneratorConfig {
  Index d_model = 128;
  Index n_enc_layers = 3;
  Index n_dec_layers = 3;
  Index n_heads = 4;
  Index subsample = 2;  // shared with the classifier
  Index highway_blocks = 2;
  Index ff_mult = 4;
  double dropout = 0.1;
};

// Singing voice generator: identical phoneme and pitch transformer encoders
// (own embeddings and positions), a non-autoregressive decoder over their
// sum emitting the coarse mel, and a time-wise supersampler restoring the
// full frame rate with local conditioning.
template <typename Scalar>
class SingingVoiceGenerator {
 public:
  SingingVoiceGenerator(ParamStore<Scalar>& store, const GeneratorConfig& cfg, int vocab,
                        Index mel_bins, Rng& rng)
      : cfg_(cfg), vocab_(vocab), mel_bins_(mel_bins) {
    require(cfg.subsample == 2 || cfg.subsample == 4, Err::BadConfig,
            "generator: subsample factor must be 2 or 4");
    require(cfg.d_model % cfg.n_heads == 0, Err::BadConfig,
            "generator: d_model must be divisible by n_heads");
    phoneme_embedding_ = &store.add_trunc_normal("gen.phoneme_embed", vocab, cfg.d_model, rng);
    pitch_embedding_ = &store.add_trunc_normal("gen.pitch_embed", kPitchVocab, cfg.d_model, rng);
    phoneme_enc_.init(store, "gen.phoneme_enc", cfg.n_enc_layers, cfg.d_model, cfg.n_heads,
                      cfg.ff_mult * cfg.d_model, cfg.dropout, rng);
    pitch_enc_.init(store, "gen.pitch_enc", cfg.n_enc_layers, cfg.d_model, cfg.n_heads,
                    cfg.ff_mult * cfg.d_model, cfg.dropout, rng);
    decoder_.init(store, "gen.dec", cfg.n_dec_layers, cfg.d_model, cfg.n_heads,
                  cfg.ff_mult * cfg.d_model, cfg.dropout, rng);
    mel_head_.init(store, "gen.mel_head", cfg.d_model, mel_bins, rng);

    const Index stages = cfg.subsample == 2 ? 1 : 2;
    stages_.resize(static_cast<size_t>(stages));
    for (Index s = 0; s < stages; ++s) {
      Stage& st = stages_[static_cast<size_t>(s)];
      const std::string p = "gen.super" + std::to_string(s);
      st.cond.init(store, p + ".cond", cfg.d_model, mel_bins, rng);
      st.tconv_w = &store.add_trunc_normal(p + ".up.w", 4 * mel_bins, mel_bins, rng);
      st.tconv_b = &store.add(p + ".up.b", 1, mel_bins);
      st.highway.resize(static_cast<size_t>(cfg.highway_blocks));
      for (Index h = 0; h < cfg.highway_blocks; ++h) {
        Highway& hw = st.highway[static_cast<size_t>(h)];
        const std::string hp = p + ".hw" + std::to_string(h);
        hw.gate_w = &store.add_trunc_normal(hp + ".gate.w", 3 * mel_bins, mel_bins, rng);
        // carry-biased gates keep early training close to the identity
        hw.gate_b = &store.add_constant(hp + ".gate.b", 1, mel_bins, Scalar(-1));
        hw.cand_w = &store.add_trunc_normal(hp + ".cand.w", 3 * mel_bins, mel_bins, rng);
        hw.cand_b = &store.add(hp + ".cand.b", 1, mel_bins);
      }
    }
  }

  const GeneratorConfig& config() const { return cfg_; }

  // probs (T_ds x V) times the embedding table; gradients reach both the
  // classifier (through probs) and the table
  Tensor<Scalar> embed_soft_phonemes(Graph<Scalar>& g, Tensor<Scalar> probs) const {
    require(probs.cols() == vocab_, Err::ShapeMismatch,
            "embed_soft_phonemes: " + std::to_string(probs.cols()) + " columns, vocabulary is " +
                std::to_string(vocab_));
    return matmul(probs, g.param(*phoneme_embedding_));
  }

  Tensor<Scalar> encode_phonemes_hard(Graph<Scalar>& g, const std::vector<int>& ids,
                                      bool training = false, Rng* dropout_rng = nullptr) const {
    require(!ids.empty(), Err::EmptyScore, "encode_phonemes: empty sequence");
    auto emb = embedding_lookup(g.param(*phoneme_embedding_), ids);
    return encode_with(g, phoneme_enc_, emb, training, dropout_rng);
  }

  Tensor<Scalar> encode_phonemes_soft(Graph<Scalar>& g, Tensor<Scalar> probs,
                                      bool training = false, Rng* dropout_rng = nullptr) const {
    return encode_with(g, phoneme_enc_, embed_soft_phonemes(g, probs), training, dropout_rng);
  }

  Tensor<Scalar> encode_pitch(Graph<Scalar>& g, const std::vector<int>& tokens,
                              bool training = false, Rng* dropout_rng = nullptr) const {
    require(!tokens.empty(), Err::EmptyScore, "encode_pitch: empty sequence");
    for (int t : tokens)
      require(t >= 0 && t < kPitchVocab, Err::TokenOutOfRange,
              "encode_pitch: token " + std::to_string(t) + " outside [0, 96]");
    auto emb = embedding_lookup(g.param(*pitch_embedding_), tokens);
    return encode_with(g, pitch_enc_, emb, training, dropout_rng);
  }

  // sum of the encoders -> self-attention decoder -> coarse mel (T_ds x 80)
  Tensor<Scalar> decode(Graph<Scalar>& g, Tensor<Scalar> phoneme_hidden,
                        Tensor<Scalar> pitch_hidden, bool training = false,
                        Rng* dropout_rng = nullptr) const {
    require(phoneme_hidden.rows() == pitch_hidden.rows(), Err::LengthMismatch,
            "decode: phoneme length " + std::to_string(phoneme_hidden.rows()) +
                " != pitch length " + std::to_string(pitch_hidden.rows()));
    auto h = decoder_.forward(g, add(phoneme_hidden, pitch_hidden), training, dropout_rng);
    return mel_head_(g, h);
  }

  // log2(D) stages of transposed conv + conditioned highway blocks; output
  // length is exactly D times the coarse length, bins unchanged
  Tensor<Scalar> supersample(Graph<Scalar>& g, Tensor<Scalar> coarse,
                             Tensor<Scalar> phoneme_hidden, Tensor<Scalar> pitch_hidden,
                             bool training = false, Rng* dropout_rng = nullptr) const {
    (void)training;
    (void)dropout_rng;
    auto cond_base = add(phoneme_hidden, pitch_hidden);
    Tensor<Scalar> x = coarse;
    Index factor = 1;
    for (const Stage& st : stages_) {
      factor *= 2;
      x = transposed_conv1d(x, g.param(*st.tconv_w), g.param(*st.tconv_b), 4, 2, 1);
      auto cond = repeat_rows(st.cond(g, cond_base), factor);
      x = add(x, cond);
      for (const Highway& hw : st.highway) {
        auto gate = sigmoid(conv1d(x, g.param(*hw.gate_w), g.param(*hw.gate_b), 3, 1, 1));
        auto cand = tanh(conv1d(x, g.param(*hw.cand_w), g.param(*hw.cand_b), 3, 1, 1));
        auto ones = g.constant(Mat<Scalar>::Ones(x.rows(), x.cols()));
        x = add(mul(gate, cand), mul(sub(ones, gate), x));
      }
    }
    return x;
  }

  struct MelPair {
    Tensor<Scalar> coarse;  // M_D hat
    Tensor<Scalar> full;    // M hat
  };

  MelPair forward_soft(Graph<Scalar>& g, Tensor<Scalar> probs, const std::vector<int>& pitch,
                       bool training = false, Rng* dropout_rng = nullptr) const {
    auto ph = encode_phonemes_soft(g, probs, training, dropout_rng);
    auto pt = encode_pitch(g, pitch, training, dropout_rng);
    auto coarse = decode(g, ph, pt, training, dropout_rng);
    return MelPair{coarse, supersample(g, coarse, ph, pt, training, dropout_rng)};
  }

  MelPair forward_hard(Graph<Scalar>& g, const std::vector<int>& phonemes,
                       const std::vector<int>& pitch, bool training = false,
                       Rng* dropout_rng = nullptr) const {
    auto ph = encode_phonemes_hard(g, phonemes, training, dropout_rng);
    auto pt = encode_pitch(g, pitch, training, dropout_rng);
    auto coarse = decode(g, ph, pt, training, dropout_rng);
    return MelPair{coarse, supersample(g, coarse, ph, pt, training, dropout_rng)};
  }

 private:
  struct Highway {
    Param<Scalar>*gate_w = nullptr, *gate_b = nullptr;
    Param<Scalar>*cand_w = nullptr, *cand_b = nullptr;
  };
  struct Stage {
    Dense<Scalar> cond;
    Param<Scalar>*tconv_w = nullptr, *tconv_b = nullptr;
    std::vector<Highway> highway;
  };

  Tensor<Scalar> encode_with(Graph<Scalar>& g, const TransformerStack<Scalar>& stack,
                             Tensor<Scalar> emb, bool training, Rng* dropout_rng) const {
    auto x = add(emb, g.constant(sinusoidal_positional_encoding<Scalar>(emb.rows(), cfg_.d_model)));
    return stack.forward(g, x, training, dropout_rng);
  }

  GeneratorConfig cfg_;
  int vocab_;
  Index mel_bins_;
  Param<Scalar>* phoneme_embedding_ = nullptr;
  Param<Scalar>* pitch_embedding_ = nullptr;
  TransformerStack<Scalar> phoneme_enc_, pitch_enc_, decoder_;
  Dense<Scalar> mel_head_;
  std::vector<Stage> stages_;
};

template <typename Scalar>
struct GeneratorLoss {
  Tensor<Scalar> coarse_l1;
  Tensor<Scalar> full_l1;
  Tensor<Scalar> total;
};

// mean-pool of complete D-frame blocks; ground truth for the coarse branch
template <typename Scalar>
Mat<Scalar> mean_pool_rows(const Mat<Scalar>& m, Index factor) {
  const Index blocks = m.rows() / factor;
  Mat<Scalar> out(blocks, m.cols());
  for (Index b = 0; b < blocks; ++b)
    out.row(b) = m.middleRows(b * factor, factor).colwise().mean();
  return out;
}

// L_G = L1(coarse, pool(M)) + L1(full, M); tolerates up to D frames of
// trim between prediction and target
template <typename Scalar>
GeneratorLoss<Scalar> generator_loss(Graph<Scalar>& g,
                                     typename SingingVoiceGenerator<Scalar>::MelPair pred,
                                     const Mat<Scalar>& target, Index subsample) {
  const Mat<Scalar> target_coarse = mean_pool_rows(target, subsample);
  auto align = [&g, subsample](Tensor<Scalar> p, const Mat<Scalar>& t, const char* what) {
    const Index common = std::min(p.rows(), t.rows());
    require(std::max(p.rows(), t.rows()) - common <= subsample, Err::LengthMismatch,
            std::string("generator_loss: ") + what + " prediction " + std::to_string(p.rows()) +
                " vs target " + std::to_string(t.rows()));
    Tensor<Scalar> ps = p.rows() == common ? p : slice_rows(p, 0, common);
    return mean(abs(sub(ps, g.constant(Mat<Scalar>(t.topRows(common))))));
  };
  GeneratorLoss<Scalar> loss;
  loss.coarse_l1 = align(pred.coarse, target_coarse, "coarse");
  loss.full_l1 = align(pred.full, target, "full");
  loss.total = add(loss.coarse_l1, loss.full_l1);
  return loss;
}

}  // namespace svs
