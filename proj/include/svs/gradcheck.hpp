#pragma once

#include "svs/tensor.hpp"

#include <utility>
#include <vector>

namespace svs {

// Central-difference gradient verification, 64-bit only. `build` must
// reconstruct the same scalar loss from the given inputs on every call.
// Returns max over elements of |analytic - numeric| / max(1, |analytic|).
template <typename Build>
double grad_check_fn(Build&& build, std::vector<Matd> inputs, double eps = 1e-5) {
  std::vector<Matd> analytic;
  {
    Graph<double> g;
    std::vector<Tensor<double>> ts;
    ts.reserve(inputs.size());
    for (const Matd& m : inputs) ts.push_back(g.input(m, true));
    Tensor<double> loss = build(g, ts);
    g.backward(loss);
    for (auto& t : ts) analytic.push_back(t.grad());
  }
  auto eval = [&](const std::vector<Matd>& in) {
    Graph<double> g;
    std::vector<Tensor<double>> ts;
    ts.reserve(in.size());
    for (const Matd& m : in) ts.push_back(g.input(m, false));
    return build(g, ts).value()(0, 0);
  };
  double max_rel = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (Index r = 0; r < inputs[i].rows(); ++r) {
      for (Index c = 0; c < inputs[i].cols(); ++c) {
        const double orig = inputs[i](r, c);
        inputs[i](r, c) = orig + eps;
        const double lp = eval(inputs);
        inputs[i](r, c) = orig - eps;
        const double lm = eval(inputs);
        inputs[i](r, c) = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = analytic[i](r, c);
        const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        max_rel = std::max(max_rel, rel);
      }
    }
  }
  return max_rel;
}

namespace detail {

inline Matd random_mat(Index rows, Index cols, Rng& rng, double stddev = 1.0) {
  Matd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal(stddev);
  return m;
}

// values bounded away from 0 so finite differences stay valid at kinks
inline Matd random_mat_away_from_zero(Index rows, Index cols, Rng& rng) {
  Matd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      const double mag = 0.2 + rng.uniform();
      m(i, j) = rng.uniform() < 0.5 ? -mag : mag;
    }
  return m;
}

}  // namespace detail

// Per-op gradient check with generated inputs. `input_shapes[0]` is the
// primary input; op-specific auxiliaries (weights, gain/bias) are generated.
// conv kinds accept an optional second shape read as (C_out, K).
inline double grad_check(OpKind kind, const std::vector<std::pair<Index, Index>>& input_shapes,
                         double eps = 1e-5, uint64_t seed = 42) {
  require(eps >= 1e-6 && eps <= 1e-4, Err::BadConfig, "grad_check: eps outside [1e-6, 1e-4]");
  require(!input_shapes.empty(), Err::BadConfig, "grad_check: need at least one input shape");
  Rng rng(seed);
  const auto [rows0, cols0] = input_shapes[0];

  std::vector<Matd> inputs;
  auto probe_loss = [](Graph<double>& g, Tensor<double> out, Rng& rng) {
    Matd r = detail::random_mat(out.rows(), out.cols(), rng);
    return mean(mul(out, g.constant(std::move(r))));
  };

  switch (kind) {
    case OpKind::Matmul: {
      require(input_shapes.size() >= 2, Err::BadConfig, "matmul check needs two shapes");
      inputs = {detail::random_mat(rows0, cols0, rng),
                detail::random_mat(input_shapes[1].first, input_shapes[1].second, rng)};
      return grad_check_fn(
          [&](Graph<double>& g, const std::vector<Tensor<double>>& t) {
            Rng probe(seed + 1);
            return probe_loss(g, matmul(t[0], t[1]), probe);
          },
          inputs, eps);
    }
    case OpKind::Conv1d:
    case OpKind::TransposedConv1d: {
      const bool transposed = kind == OpKind::TransposedConv1d;
      const Index cout = input_shapes.size() > 1 ? input_shapes[1].first : 3;
      const Index kernel = input_shapes.size() > 1 ? input_shapes[1].second : (transposed ? 4 : 3);
      const Index stride = 2, pad = 1;
      inputs = {detail::random_mat(rows0, cols0, rng),
                detail::random_mat(kernel * cols0, cout, rng),
                detail::random_mat(1, cout, rng)};
      return grad_check_fn(
          [&, kernel, stride, pad, transposed](Graph<double>& g,
                                               const std::vector<Tensor<double>>& t) {
            Tensor<double> out = transposed
                                     ? transposed_conv1d(t[0], t[1], t[2], kernel, stride, pad)
                                     : conv1d(t[0], t[1], t[2], kernel, stride, pad);
            Rng probe(seed + 1);
            return probe_loss(g, out, probe);
          },
          inputs, eps);
    }
    case OpKind::LayerNorm: {
      inputs = {detail::random_mat(rows0, cols0, rng),
                Matd::Ones(1, cols0) + detail::random_mat(1, cols0, rng, 0.1),
                detail::random_mat(1, cols0, rng, 0.1)};
      return grad_check_fn(
          [&](Graph<double>& g, const std::vector<Tensor<double>>& t) {
            Rng probe(seed + 1);
            return probe_loss(g, layer_norm(t[0], t[1], t[2]), probe);
          },
          inputs, eps);
    }
    case OpKind::Add:
    case OpKind::Mul: {
      const auto [r1, c1] =
          input_shapes.size() > 1 ? input_shapes[1] : std::pair<Index, Index>{rows0, cols0};
      inputs = {detail::random_mat(rows0, cols0, rng), detail::random_mat(r1, c1, rng)};
      return grad_check_fn(
          [&](Graph<double>& g, const std::vector<Tensor<double>>& t) {
            Tensor<double> out = kind == OpKind::Add ? add(t[0], t[1]) : mul(t[0], t[1]);
            Rng probe(seed + 1);
            return probe_loss(g, out, probe);
          },
          inputs, eps);
    }
    case OpKind::EmbeddingLookup: {
      inputs = {detail::random_mat(rows0, cols0, rng)};
      std::vector<int> ids;
      for (Index i = 0; i < std::min<Index>(2 * rows0, 6); ++i)
        ids.push_back(static_cast<int>(i % rows0));
      return grad_check_fn(
          [&, ids](Graph<double>& g, const std::vector<Tensor<double>>& t) {
            Rng probe(seed + 1);
            return probe_loss(g, embedding_lookup(t[0], ids), probe);
          },
          inputs, eps);
    }
    case OpKind::ScaledDotProductAttention: {
      const Index heads = cols0 % 2 == 0 ? 2 : 1;
      inputs = {detail::random_mat(rows0, cols0, rng), detail::random_mat(rows0, cols0, rng),
                detail::random_mat(rows0, cols0, rng)};
      return grad_check_fn(
          [&, heads](Graph<double>& g, const std::vector<Tensor<double>>& t) {
            Rng probe(seed + 1);
            return probe_loss(g, scaled_dot_product_attention(t[0], t[1], t[2], heads), probe);
          },
          inputs, eps);
    }
    default: {
      // single-input elementwise / row-wise ops
      const bool kinked = kind == OpKind::Relu || kind == OpKind::Abs;
      inputs = {kinked ? detail::random_mat_away_from_zero(rows0, cols0, rng)
                       : detail::random_mat(rows0, cols0, rng)};
      return grad_check_fn(
          [&](Graph<double>& g, const std::vector<Tensor<double>>& t) {
            Tensor<double> out;
            switch (kind) {
              case OpKind::Softmax: out = softmax(t[0]); break;
              case OpKind::LogSoftmax: out = log_softmax(t[0]); break;
              case OpKind::Relu: out = relu(t[0]); break;
              case OpKind::Sigmoid: out = sigmoid(t[0]); break;
              case OpKind::Tanh: out = tanh(t[0]); break;
              case OpKind::Abs: out = abs(t[0]); break;
              case OpKind::Mean: out = mean(t[0]); break;
              default: fail(Err::BadConfig, "grad_check: unhandled op kind");
            }
            Rng probe(seed + 1);
            return probe_loss(g, out, probe);
          },
          inputs, eps);
    }
  }
}

}  // namespace svs
