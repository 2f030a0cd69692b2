#pragma once

#include "svs/tensor.hpp"

#include <string>
#include <vector>

namespace svs {

template <typename Scalar>
struct Dense {
  Param<Scalar>* weight = nullptr;
  Param<Scalar>* bias = nullptr;

  void init(ParamStore<Scalar>& store, const std::string& name, Index in, Index out, Rng& rng) {
    weight = &store.add_trunc_normal(name + ".w", in, out, rng);
    bias = &store.add(name + ".b", 1, out);
  }

  Tensor<Scalar> operator()(Graph<Scalar>& g, Tensor<Scalar> x) const {
    return linear(x, g.param(*weight), g.param(*bias));
  }
};

template <typename Scalar>
struct LayerNormParams {
  Param<Scalar>* gain = nullptr;
  Param<Scalar>* bias = nullptr;

  void init(ParamStore<Scalar>& store, const std::string& name, Index d) {
    gain = &store.add_constant(name + ".g", 1, d, Scalar(1));
    bias = &store.add(name + ".b", 1, d);
  }

  Tensor<Scalar> operator()(Graph<Scalar>& g, Tensor<Scalar> x) const {
    return layer_norm(x, g.param(*gain), g.param(*bias));
  }
};

// Pre-norm block: x + attn(LN(x)), then x + ffn(LN(x)).
template <typename Scalar>
struct TransformerBlock {
  Index n_heads = 4;
  double dropout_rate = 0.0;
  LayerNormParams<Scalar> ln1, ln2;
  Dense<Scalar> wq, wk, wv, wo, ff1, ff2;

  void init(ParamStore<Scalar>& store, const std::string& prefix, Index d_model, Index heads,
            Index ff_dim, double dropout, Rng& rng) {
    n_heads = heads;
    dropout_rate = dropout;
    ln1.init(store, prefix + ".ln1", d_model);
    ln2.init(store, prefix + ".ln2", d_model);
    wq.init(store, prefix + ".wq", d_model, d_model, rng);
    wk.init(store, prefix + ".wk", d_model, d_model, rng);
    wv.init(store, prefix + ".wv", d_model, d_model, rng);
    wo.init(store, prefix + ".wo", d_model, d_model, rng);
    ff1.init(store, prefix + ".ff1", d_model, ff_dim, rng);
    ff2.init(store, prefix + ".ff2", ff_dim, d_model, rng);
  }

  Tensor<Scalar> forward(Graph<Scalar>& g, Tensor<Scalar> x, bool training,
                         Rng* dropout_rng) const {
    auto h = ln1(g, x);
    auto attn = scaled_dot_product_attention(wq(g, h), wk(g, h), wv(g, h), n_heads);
    auto o = wo(g, attn);
    if (training && dropout_rng) o = dropout(o, dropout_rate, *dropout_rng);
    x = add(x, o);
    auto f = ff2(g, relu(ff1(g, ln2(g, x))));
    if (training && dropout_rng) f = dropout(f, dropout_rate, *dropout_rng);
    return add(x, f);
  }
};

// Block stack with the usual final norm for pre-norm transformers.
template <typename Scalar>
struct TransformerStack {
  std::vector<TransformerBlock<Scalar>> blocks;
  LayerNormParams<Scalar> final_ln;

  void init(ParamStore<Scalar>& store, const std::string& prefix, Index n_layers, Index d_model,
            Index heads, Index ff_dim, double dropout, Rng& rng) {
    blocks.resize(static_cast<size_t>(n_layers));
    for (Index l = 0; l < n_layers; ++l)
      blocks[static_cast<size_t>(l)].init(store, prefix + ".block" + std::to_string(l), d_model,
                                          heads, ff_dim, dropout, rng);
    final_ln.init(store, prefix + ".ln_out", d_model);
  }

  Tensor<Scalar> forward(Graph<Scalar>& g, Tensor<Scalar> x, bool training,
                         Rng* dropout_rng) const {
    for (const auto& block : blocks) x = block.forward(g, x, training, dropout_rng);
    return final_ln(g, x);
  }
};

}  // namespace svs
