#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svs/gradcheck.hpp"
#include "svs/tensor.hpp"

using namespace svs;

namespace {

// independent sliding-window oracle for conv1d
Matd conv1d_oracle(const Matd& x, const Matd& w, const Matd& b, Index K, Index stride,
                   Index pad) {
  const Index T = x.rows(), cin = x.cols(), cout = w.cols();
  const Index tout = (T + 2 * pad - K) / stride + 1;
  Matd out(tout, cout);
  for (Index t = 0; t < tout; ++t) {
    for (Index o = 0; o < cout; ++o) {
      double acc = b(0, o);
      for (Index k = 0; k < K; ++k) {
        const Index idx = stride * t + k - pad;
        if (idx < 0 || idx >= T) continue;
        for (Index c = 0; c < cin; ++c) acc += x(idx, c) * w(k * cin + c, o);
      }
      out(t, o) = acc;
    }
  }
  return out;
}

Matd random_mat(Index r, Index c, uint64_t seed) {
  Rng rng(seed);
  Matd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("softmax of zeros is uniform") {
  Graph<double> g;
  Matd z = Matd::Zero(1, 3);
  auto out = softmax(g.input(z));
  for (Index j = 0; j < 3; ++j) CHECK(out.value()(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("matmul by identity is a no-op") {
  Graph<double> g;
  Matd x = random_mat(3, 5, 1);
  auto out = matmul(g.input(Matd(Matd::Identity(3, 3))), g.input(x));
  CHECK((out.value() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conv1d shape and values match the sliding-window oracle") {
  Graph<double> g;
  Matd x = random_mat(10, 2, 2);
  Matd w = random_mat(3 * 2, 4, 3);
  Matd b = random_mat(1, 4, 4);
  auto out = conv1d(g.input(x), g.input(w), g.input(b), 3, 2, 1);
  CHECK(out.rows() == 5);  // ceil(10/2)
  Matd expect = conv1d_oracle(x, w, b, 3, 2, 1);
  CHECK((out.value() - expect).cwiseAbs().maxCoeff() < 1e-12);

  // ceiling rule for odd lengths
  Matd x11 = random_mat(11, 2, 5);
  auto out11 = conv1d(g.input(x11), g.input(w), g.input(b), 3, 2, 1);
  CHECK(out11.rows() == 6);
}

TEST_CASE("transposed_conv1d doubles the length exactly") {
  for (Index T : {1, 2, 3, 7, 40}) {
    Graph<double> g;
    auto out = transposed_conv1d(g.input(random_mat(T, 3, 10 + T)),
                                 g.input(random_mat(4 * 3, 2, 11)),
                                 g.input(random_mat(1, 2, 12)), 4, 2, 1);
    CHECK(out.rows() == 2 * T);
    CHECK(out.cols() == 2);
  }
}

TEST_CASE("backward through scale: d(mean(2w))/dw = 2") {
  Graph<double> g;
  Matd w0(1, 1);
  w0(0, 0) = 1.7;
  auto w = g.input(w0, true);
  auto loss = mean(scale(w, 2.0));
  g.backward(loss);
  CHECK(w.grad()(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("L1(x, x) has zero subgradient everywhere") {
  Graph<double> g;
  Matd x0 = random_mat(4, 3, 7);
  auto x = g.input(x0, true);
  auto loss = mean(abs(sub(x, x)));
  g.backward(loss);
  CHECK(loss.value()(0, 0) == 0.0);
  CHECK(x.grad().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("composite graph matches central differences") {
  const double err = grad_check_fn(
      [](Graph<double>& g, const std::vector<Tensor<double>>& t) {
        auto h = tanh(matmul(t[0], t[1]));
        auto gain = g.input(Matd(Matd::Ones(1, h.cols())), false);
        auto bias = g.input(Matd(Matd::Zero(1, h.cols())), false);
        auto n = layer_norm(h, gain, bias);
        return mean(abs(softmax(n)));
      },
      {random_mat(4, 3, 21), random_mat(3, 6, 22)}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("grad_check passes for every op kind") {
  const std::vector<std::pair<OpKind, std::vector<std::pair<Index, Index>>>> cases = {
      {OpKind::Matmul, {{4, 3}, {3, 2}}},
      {OpKind::Conv1d, {{9, 2}}},
      {OpKind::TransposedConv1d, {{5, 2}}},
      {OpKind::LayerNorm, {{3, 8}}},
      {OpKind::Softmax, {{3, 5}}},
      {OpKind::LogSoftmax, {{3, 5}}},
      {OpKind::Relu, {{4, 4}}},
      {OpKind::Sigmoid, {{4, 4}}},
      {OpKind::Tanh, {{4, 4}}},
      {OpKind::Add, {{4, 4}}},
      {OpKind::Mul, {{4, 4}}},
      {OpKind::Mean, {{4, 4}}},
      {OpKind::Abs, {{4, 4}}},
      {OpKind::EmbeddingLookup, {{5, 3}}},
      {OpKind::ScaledDotProductAttention, {{5, 4}}},
  };
  for (const auto& [kind, shapes] : cases) {
    const double err = grad_check(kind, shapes, 1e-5);
    INFO(op_kind_name(kind));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("add broadcasts a 1xC bias row") {
  Graph<double> g;
  Matd x0 = random_mat(4, 3, 31);
  Matd b0 = random_mat(1, 3, 32);
  auto x = g.input(x0, true);
  auto b = g.input(b0, true);
  auto out = add(x, b);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j)
      CHECK(out.value()(i, j) == doctest::Approx(x0(i, j) + b0(0, j)));
  g.backward(mean(out));
  CHECK(b.grad()(0, 0) == doctest::Approx(4.0 / 12.0));

  const double err = grad_check(OpKind::Add, {{4, 3}, {1, 3}}, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("single-head attention matches a hand-rolled oracle") {
  Graph<double> g;
  Matd Q = random_mat(3, 2, 41), K = random_mat(3, 2, 42), V = random_mat(3, 2, 43);
  auto out = scaled_dot_product_attention(g.input(Q), g.input(K), g.input(V), 1);
  const double s = 1.0 / std::sqrt(2.0);
  Matd scores = Q * K.transpose() * s;
  Matd expect(3, 2);
  for (Index i = 0; i < 3; ++i) {
    Vecd e = (scores.row(i).array() - scores.row(i).maxCoeff()).exp();
    Vecd a = e / e.sum();
    expect.row(i) = a.transpose() * V;
  }
  CHECK((out.value() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward is deterministic: repeated evaluation is bitwise identical") {
  auto run = [] {
    Graph<double> g;
    auto x = g.input(random_mat(6, 4, 55));
    auto w = g.input(random_mat(4, 4, 56));
    return Matd(softmax(matmul(tanh(x), w)).value());
  };
  Matd a = run(), b = run();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameters not on the loss path get exactly zero gradient") {
  Graph<float> g;
  ParamStore<float> store;
  Rng rng(3);
  auto& used = store.add_trunc_normal("used", 2, 2, rng);
  auto& unused = store.add_trunc_normal("unused", 2, 2, rng);
  auto wu = g.param(used);
  g.param(unused);
  g.backward(mean(wu));
  CHECK(used.grad.cwiseAbs().maxCoeff() > 0.0f);
  CHECK(unused.grad.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("shape and loss errors carry codes") {
  Graph<double> g;
  auto a = g.input(random_mat(2, 3, 61));
  auto b = g.input(random_mat(4, 2, 62));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), Error);
  try {
    matmul(a, b);
  } catch (const Error& e) {
    CHECK(e.code() == Err::ShapeMismatch);
  }

  auto nonscalar = add(a, a);
  CHECK_THROWS_AS(g.backward(nonscalar), Error);
  try {
    g.backward(nonscalar);
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonScalarLoss);
  }

  CHECK_THROWS_AS(embedding_lookup(a, std::vector<int>{0, 5}), Error);
}

TEST_CASE("embedding_lookup gathers rows and scatters gradients") {
  Graph<double> g;
  Matd E0 = random_mat(4, 3, 71);
  auto E = g.input(E0, true);
  auto out = embedding_lookup(E, {2, 2, 0});
  CHECK((out.value().row(0) - E0.row(2)).cwiseAbs().maxCoeff() == 0.0);
  g.backward(mean(out));
  // row 2 used twice, row 0 once, rows 1/3 unused
  CHECK(E.grad().row(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(E.grad()(2, 0) == doctest::Approx(2.0 / 9.0));
  CHECK(E.grad()(0, 0) == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("repeat_rows and slice_rows round-trip with correct gradients") {
  const double err = grad_check_fn(
      [](Graph<double>& g, const std::vector<Tensor<double>>& t) {
        auto up = repeat_rows(t[0], 2);
        auto cut = slice_rows(up, 1, 4);
        return mean(mul(cut, cut));
      },
      {random_mat(3, 2, 81)}, 1e-5);
  CHECK(err < 1e-4);

  Graph<double> g;
  auto x = g.input(random_mat(3, 2, 82));
  auto up = repeat_rows(x, 2);
  CHECK(up.rows() == 6);
  CHECK((up.value().row(0) - up.value().row(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dropout: identity at rate 0, deterministic mask per seed") {
  Graph<float> g;
  Matf x0 = Matf::Ones(4, 4);
  auto x = g.input(x0);
  Rng rng(9);
  auto same = dropout(x, 0.0, rng);
  CHECK(same.id() == x.id());

  Rng r1(9), r2(9);
  Graph<float> g1, g2;
  auto d1 = dropout(g1.input(x0), 0.5, r1);
  auto d2 = dropout(g2.input(x0), 0.5, r2);
  CHECK((d1.value() - d2.value()).cwiseAbs().maxCoeff() == 0.0f);
}
