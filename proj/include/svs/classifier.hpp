#pragma once

#include "svs/transformer.hpp"

#include <string>
#include <vector>

namespace svs {

struct ClassifierConfig {
  Index d_model = 128;
  Index n_layers = 4;
  Index n_heads = 4;
  Index subsample = 2;  // D, 2 or 4
  Index ff_mult = 4;
  double dropout = 0.1;
};

// Phoneme classifier: strided conv subsampling over the mel input, a
// transformer encoder, and a V-way softmax head (blank at index 0).
template <typename Scalar>
class PhonemeClassifier {
 public:
  PhonemeClassifier(ParamStore<Scalar>& store, const ClassifierConfig& cfg, int vocab,
                    Index mel_bins, Rng& rng)
      : cfg_(cfg), vocab_(vocab) {
    require(cfg.subsample == 2 || cfg.subsample == 4, Err::BadConfig,
            "classifier: subsample factor must be 2 or 4");
    require(cfg.d_model % cfg.n_heads == 0, Err::BadConfig,
            "classifier: d_model must be divisible by n_heads");
    Index in = mel_bins;
    for (Index s = 0; s * 2 < cfg.subsample; ++s) {
      ConvParams conv;
      conv.weight = &store.add_trunc_normal("cls.conv" + std::to_string(s) + ".w", 3 * in,
                                            cfg.d_model, rng);
      conv.bias = &store.add("cls.conv" + std::to_string(s) + ".b", 1, cfg.d_model);
      convs_.push_back(conv);
      in = cfg.d_model;
    }
    proj_.init(store, "cls.proj", cfg.d_model, cfg.d_model, rng);
    stack_.init(store, "cls.enc", cfg.n_layers, cfg.d_model, cfg.n_heads,
                cfg.ff_mult * cfg.d_model, cfg.dropout, rng);
    head_.init(store, "cls.head", cfg.d_model, vocab, rng);
  }

  const ClassifierConfig& config() const { return cfg_; }
  int vocab() const { return vocab_; }

  // mel (T x 80) -> features (ceil(T/D) x d_model), conv stack + projection.
  // No positional encoding here: the classifier must stay position-agnostic
  // so CTC alignments come from acoustics, not from memorized frame indices
  // (the conv stack already encodes local order).
  Tensor<Scalar> subsample(Graph<Scalar>& g, Tensor<Scalar> mel) const {
    require(mel.rows() >= cfg_.subsample, Err::TooShort,
            "classifier: input of " + std::to_string(mel.rows()) + " frames is shorter than D");
    Tensor<Scalar> x = mel;
    for (const ConvParams& conv : convs_)
      x = relu(conv1d(x, g.param(*conv.weight), g.param(*conv.bias), 3, 2, 1));
    return proj_(g, x);
  }

  struct Output {
    Tensor<Scalar> probs;      // rows sum to 1
    Tensor<Scalar> log_probs;  // same logits through log_softmax
  };

  Output classify(Graph<Scalar>& g, Tensor<Scalar> features, bool training = false,
                  Rng* dropout_rng = nullptr) const {
    auto h = stack_.forward(g, features, training, dropout_rng);
    auto logits = head_(g, h);
    return Output{softmax(logits), log_softmax(logits)};
  }

  Output forward(Graph<Scalar>& g, Tensor<Scalar> mel, bool training = false,
                 Rng* dropout_rng = nullptr) const {
    return classify(g, subsample(g, mel), training, dropout_rng);
  }

 private:
  struct ConvParams {
    Param<Scalar>* weight = nullptr;
    Param<Scalar>* bias = nullptr;
  };

  ClassifierConfig cfg_;
  int vocab_;
  std::vector<ConvParams> convs_;
  Dense<Scalar> proj_;
  TransformerStack<Scalar> stack_;
  Dense<Scalar> head_;
};

// Minimum frame count CTC needs: targets plus a blank between equal neighbors.
inline Index ctc_min_frames(const std::vector<int>& targets) {
  Index needed = static_cast<Index>(targets.size());
  for (size_t i = 1; i < targets.size(); ++i)
    if (targets[i] == targets[i - 1]) ++needed;
  return needed;
}

// CTC negative log likelihood over all blank-augmented alignments, computed
// with the log-domain forward recursion; the backward pass fills the exact
// posterior gradient w.r.t. log_probs.
template <typename Scalar>
Tensor<Scalar> ctc_loss(Tensor<Scalar> log_probs, const std::vector<int>& targets) {
  auto& g = log_probs.graph();
  const Mat<Scalar>& lp = g.value(log_probs);
  const Index T = lp.rows();
  const Index V = lp.cols();
  require(!targets.empty(), Err::EmptyScore, "ctc_loss: empty target sequence");
  for (int id : targets)
    require(id > 0 && id < V, Err::UnknownSymbolId,
            "ctc_loss: target id " + std::to_string(id) + " outside vocabulary");
  require(T >= ctc_min_frames(targets), Err::InfeasibleTarget,
          "ctc_loss: " + std::to_string(T) + " frames cannot align " +
              std::to_string(targets.size()) + " targets");

  const Index L = static_cast<Index>(targets.size());
  const Index U = 2 * L + 1;
  auto label = [&](Index u) -> Index {
    return u % 2 == 0 ? 0 : targets[static_cast<size_t>(u / 2)];
  };
  auto can_skip = [&](Index u) {  // into state u from u-2
    return u >= 2 && u % 2 == 1 && label(u) != label(u - 2);
  };
  const Scalar ninf = neg_inf<Scalar>();
  auto lse2 = [ninf](Scalar a, Scalar b) {
    if (a == ninf) return b;
    if (b == ninf) return a;
    const Scalar m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  };

  Mat<Scalar> alpha = Mat<Scalar>::Constant(T, U, ninf);
  alpha(0, 0) = lp(0, 0);
  if (U > 1) alpha(0, 1) = lp(0, label(1));
  for (Index t = 1; t < T; ++t) {
    for (Index u = 0; u < U; ++u) {
      Scalar acc = alpha(t - 1, u);
      if (u >= 1) acc = lse2(acc, alpha(t - 1, u - 1));
      if (can_skip(u)) acc = lse2(acc, alpha(t - 1, u - 2));
      if (acc != ninf) alpha(t, u) = acc + lp(t, label(u));
    }
  }
  Scalar log_p = alpha(T - 1, U - 1);
  if (U > 1) log_p = lse2(log_p, alpha(T - 1, U - 2));
  require(log_p != ninf, Err::InfeasibleTarget, "ctc_loss: no feasible alignment");

  Mat<Scalar> out(1, 1);
  out(0, 0) = -log_p;
  return g.make(std::move(out), g.needs_grad(log_probs),
                [log_probs, targets, alpha = std::move(alpha), log_p, U, lse2, ninf](
                    Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(log_probs)) return;
    const Mat<Scalar>& lp = g.value(log_probs);
    const Index T = lp.rows();
    auto label = [&](Index u) -> Index {
      return u % 2 == 0 ? 0 : targets[static_cast<size_t>(u / 2)];
    };
    auto can_skip_from = [&](Index u, Index u2) {  // u -> u2 = u + 2
      return u2 < U && u2 % 2 == 1 && label(u2) != label(u);
    };
    Mat<Scalar> beta = Mat<Scalar>::Constant(T, U, ninf);
    beta(T - 1, U - 1) = 0;
    if (U > 1) beta(T - 1, U - 2) = 0;
    for (Index t = T - 2; t >= 0; --t) {
      for (Index u = 0; u < U; ++u) {
        Scalar acc = beta(t + 1, u) == ninf ? ninf : beta(t + 1, u) + lp(t + 1, label(u));
        if (u + 1 < U && beta(t + 1, u + 1) != ninf)
          acc = lse2(acc, beta(t + 1, u + 1) + lp(t + 1, label(u + 1)));
        if (can_skip_from(u, u + 2) && beta(t + 1, u + 2) != ninf)
          acc = lse2(acc, beta(t + 1, u + 2) + lp(t + 1, label(u + 2)));
        beta(t, u) = acc;
      }
    }
    const Scalar upstream = g.grad_of(self)(0, 0);
    Mat<Scalar>& grad = g.grad(log_probs);
    for (Index t = 0; t < T; ++t) {
      for (Index u = 0; u < U; ++u) {
        if (alpha(t, u) == ninf || beta(t, u) == ninf) continue;
        const Scalar posterior = std::exp(alpha(t, u) + beta(t, u) - log_p);
        grad(t, label(u)) -= upstream * posterior;
      }
    }
  });
}

// Mean blank probability over voiced frames; zero when nothing is voiced.
template <typename Scalar>
Tensor<Scalar> unvoice_penalty(Tensor<Scalar> probs, const std::vector<bool>& voiced) {
  auto& g = probs.graph();
  const Index T = probs.rows();
  const Index V = probs.cols();
  require(static_cast<Index>(voiced.size()) == T, Err::LengthMismatch,
          "unvoice_penalty: mask length " + std::to_string(voiced.size()) + " != frames " +
              std::to_string(T));
  Index n_voiced = 0;
  Mat<Scalar> mask = Mat<Scalar>::Zero(T, V);
  for (Index t = 0; t < T; ++t) {
    if (voiced[static_cast<size_t>(t)]) {
      mask(t, 0) = Scalar(1);
      ++n_voiced;
    }
  }
  if (n_voiced == 0) return g.constant(Mat<Scalar>::Zero(1, 1));
  const Scalar rescale = static_cast<Scalar>(T * V) / static_cast<Scalar>(n_voiced);
  return scale(mean(mul(probs, g.constant(std::move(mask)))), rescale);
}

// A maximal run of frames where one non-blank symbol stays above threshold.
struct AlignSegment {
  int symbol = 0;
  Index begin = 0;  // inclusive, downsampled frames
  Index end = 0;    // inclusive
};

template <typename Scalar>
std::vector<AlignSegment> greedy_align(const Mat<Scalar>& probs, double threshold = 0.5) {
  require(threshold > 0.0 && threshold < 1.0, Err::BadConfig,
          "greedy_align: threshold must be in (0, 1)");
  std::vector<AlignSegment> segments;
  int current = -1;
  for (Index t = 0; t < probs.rows(); ++t) {
    Index best = 0;
    probs.row(t).maxCoeff(&best);
    const bool hit = best != 0 && probs(t, best) > static_cast<Scalar>(threshold);
    if (hit && static_cast<int>(best) == current) {
      segments.back().end = t;
    } else if (hit) {
      segments.push_back(AlignSegment{static_cast<int>(best), t, t});
      current = static_cast<int>(best);
    } else {
      current = -1;
    }
  }
  return segments;
}

}  // namespace svs
