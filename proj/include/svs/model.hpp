#pragma once

#include "svs/classifier.hpp"
#include "svs/generator.hpp"

#include <memory>
#include <string>

namespace svs {

struct ModelConfig {
  Index d_model = 128;
  Index n_heads = 4;
  Index cls_layers = 4;
  Index enc_layers = 3;
  Index dec_layers = 3;
  Index highway_blocks = 2;
  Index subsample = 2;  // D: classifier subsampling, label grid, supersampler
  Index ff_mult = 4;
  double dropout = 0.1;
  int vocab = 0;  // inventory size including blank
  Index mel_bins = 80;

  // laptop-scale preset used by the smoke runs
  static ModelConfig desk() {
    ModelConfig cfg;
    cfg.d_model = 64;
    cfg.n_heads = 2;
    cfg.cls_layers = 2;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.highway_blocks = 1;
    cfg.ff_mult = 2;
    cfg.dropout = 0.0;
    return cfg;
  }

  ClassifierConfig classifier() const {
    ClassifierConfig c;
    c.d_model = d_model;
    c.n_layers = cls_layers;
    c.n_heads = n_heads;
    c.subsample = subsample;
    c.ff_mult = ff_mult;
    c.dropout = dropout;
    return c;
  }

  GeneratorConfig generator() const {
    GeneratorConfig g;
    g.d_model = d_model;
    g.n_enc_layers = enc_layers;
    g.n_dec_layers = dec_layers;
    g.n_heads = n_heads;
    g.subsample = subsample;
    g.highway_blocks = highway_blocks;
    g.ff_mult = ff_mult;
    g.dropout = dropout;
    return g;
  }
};

// Classifier + generator over one parameter store. The "cls." / "gen." name
// prefixes define the per-module parameter groups the trainer updates.
template <typename Scalar>
struct SvsModel {
  ModelConfig config;
  ParamStore<Scalar> params;
  std::unique_ptr<PhonemeClassifier<Scalar>> classifier;
  std::unique_ptr<SingingVoiceGenerator<Scalar>> generator;

  SvsModel(const ModelConfig& cfg, uint64_t init_seed) : config(cfg) {
    require(cfg.vocab >= 2, Err::BadConfig, "model: vocabulary must include blank plus symbols");
    Rng rng(init_seed);
    classifier = std::make_unique<PhonemeClassifier<Scalar>>(params, cfg.classifier(), cfg.vocab,
                                                             cfg.mel_bins, rng);
    generator = std::make_unique<SingingVoiceGenerator<Scalar>>(params, cfg.generator(),
                                                                cfg.vocab, cfg.mel_bins, rng);
  }

  std::vector<Param<Scalar>*> classifier_params() const { return params.with_prefix("cls."); }
  std::vector<Param<Scalar>*> generator_params() const { return params.with_prefix("gen."); }
};

}  // namespace svs
