#pragma once

#include "svs/common.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace svs {

template <typename Scalar>
class Graph;

// Lightweight handle into a Graph. Valid only while its Graph is alive; a
// Graph and its tensors stay on one execution context for the duration of a
// step (distinct graphs may run in parallel).
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return graph_ != nullptr; }
  Graph<Scalar>& graph() const { return *graph_; }
  size_t id() const { return id_; }

  const Mat<Scalar>& value() const;
  const Mat<Scalar>& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  friend class Graph<Scalar>;
  Tensor(Graph<Scalar>* g, size_t id) : graph_(g), id_(id) {}

  Graph<Scalar>* graph_ = nullptr;
  size_t id_ = 0;
};

// A named trainable tensor. Gradient and Adam moments persist across the
// per-step graphs so gradient accumulation works.
template <typename Scalar>
struct Param {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
  Mat<Scalar> m;
  Mat<Scalar> v;

  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
class ParamStore {
 public:
  Param<Scalar>& add(const std::string& name, Index rows, Index cols) {
    require(params_.find(name) == params_.end(), Err::BadConfig,
            "duplicate parameter name: " + name);
    auto p = std::make_unique<Param<Scalar>>();
    p->name = name;
    p->value = Mat<Scalar>::Zero(rows, cols);
    p->grad = Mat<Scalar>::Zero(rows, cols);
    p->m = Mat<Scalar>::Zero(rows, cols);
    p->v = Mat<Scalar>::Zero(rows, cols);
    Param<Scalar>* raw = p.get();
    order_.push_back(raw);
    params_.emplace(name, std::move(p));
    return *raw;
  }

  Param<Scalar>& add_trunc_normal(const std::string& name, Index rows, Index cols, Rng& rng,
                                  double stddev = 0.02) {
    Param<Scalar>& p = add(name, rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) p.value(i, j) = static_cast<Scalar>(rng.trunc_normal(stddev));
    return p;
  }

  Param<Scalar>& add_constant(const std::string& name, Index rows, Index cols, Scalar fill) {
    Param<Scalar>& p = add(name, rows, cols);
    p.value.setConstant(fill);
    return p;
  }

  Param<Scalar>* find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : it->second.get();
  }

  const std::vector<Param<Scalar>*>& all() const { return order_; }

  std::vector<Param<Scalar>*> with_prefix(const std::string& prefix) const {
    std::vector<Param<Scalar>*> out;
    for (Param<Scalar>* p : order_)
      if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
  }

  void zero_grads() {
    for (Param<Scalar>* p : order_) p->zero_grad();
  }

 private:
  std::map<std::string, std::unique_ptr<Param<Scalar>>> params_;
  std::vector<Param<Scalar>*> order_;
};

// Dynamic reverse-mode tape, rebuilt per step. Nodes are recorded in
// execution order, which is already topological; backward sweeps the tape in
// reverse from the loss node.
template <typename Scalar>
class Graph {
 public:
  using Backward = std::function<void(Graph&, size_t self)>;

  Tensor<Scalar> constant(Mat<Scalar> value) { return make(std::move(value), false, nullptr); }

  Tensor<Scalar> input(Mat<Scalar> value, bool needs_grad = false) {
    return make(std::move(value), needs_grad, nullptr);
  }

  Tensor<Scalar> param(Param<Scalar>& p) {
    Tensor<Scalar> t = make(p.value, true, nullptr);
    bound_.emplace_back(t.id(), &p);
    return t;
  }

  // Low-level node constructor used by the op free functions (and by custom
  // ops such as the CTC loss).
  Tensor<Scalar> make(Mat<Scalar> value, bool needs_grad, Backward bw) {
    nodes_.push_back(Node{std::move(value), Mat<Scalar>(), needs_grad, std::move(bw)});
    return Tensor<Scalar>(this, nodes_.size() - 1);
  }

  const Mat<Scalar>& value(const Tensor<Scalar>& t) const { return nodes_[t.id()].value; }
  const Mat<Scalar>& value_of(size_t id) const { return nodes_[id].value; }
  bool needs_grad(const Tensor<Scalar>& t) const { return nodes_[t.id()].needs_grad; }

  // Gradient buffer, allocated as zeros on first touch.
  Mat<Scalar>& grad(const Tensor<Scalar>& t) { return grad_of(t.id()); }
  Mat<Scalar>& grad_of(size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool grad_touched(size_t id) const { return nodes_[id].grad.size() != 0; }

  // Reverse sweep from a scalar loss. Every bound parameter accumulates its
  // gradient contribution; parameters with no path to the loss receive zero.
  void backward(const Tensor<Scalar>& loss) {
    require(loss.valid() && loss.graph_ == this, Err::NonScalarLoss,
            "backward: loss tensor does not belong to this graph");
    const Mat<Scalar>& lv = nodes_[loss.id()].value;
    require(lv.rows() == 1 && lv.cols() == 1, Err::NonScalarLoss,
            "backward: loss must be a 1x1 scalar, got " + shape_str(lv));
    grad_of(loss.id()).setConstant(Scalar(1));
    for (size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.needs_grad || !n.bw || n.grad.size() == 0) continue;
      n.bw(*this, id);
    }
    for (auto& [id, p] : bound_) {
      if (nodes_[id].grad.size() != 0) p->grad += nodes_[id].grad;
    }
  }

  size_t size() const { return nodes_.size(); }

  static std::string shape_str(const Mat<Scalar>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

 private:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    bool needs_grad = false;
    Backward bw;
  };

  std::deque<Node> nodes_;
  std::vector<std::pair<size_t, Param<Scalar>*>> bound_;
};

template <typename Scalar>
const Mat<Scalar>& Tensor<Scalar>::value() const {
  return graph_->value(*this);
}

template <typename Scalar>
const Mat<Scalar>& Tensor<Scalar>::grad() const {
  return graph_->grad(*this);
}

namespace detail {

template <typename Scalar>
Graph<Scalar>& same_graph(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require(&a.graph() == &b.graph(), Err::ShapeMismatch, "operands belong to different graphs");
  return a.graph();
}

template <typename Scalar>
void check_same_shape(const char* op, const Mat<Scalar>& a, const Mat<Scalar>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Err::ShapeMismatch,
          std::string(op) + ": expected " + Graph<Scalar>::shape_str(a) + ", got " +
              Graph<Scalar>::shape_str(b));
}

// Rows r0, r0+stride, ... of a row-major matrix as an Eigen view.
template <typename MatT>
auto strided_rows(MatT& m, Index r0, Index n, Index stride) {
  using S = typename MatT::Scalar;
  using Plain = Mat<std::remove_const_t<S>>;
  using MapT = std::conditional_t<std::is_const_v<MatT>,
                                  Eigen::Map<const Plain, Eigen::Unaligned, Eigen::OuterStride<>>,
                                  Eigen::Map<Plain, Eigen::Unaligned, Eigen::OuterStride<>>>;
  return MapT(m.data() + r0 * m.cols(), n, m.cols(), Eigen::OuterStride<>(stride * m.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// op set
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(Tensor<Scalar> a, Tensor<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  require(A.cols() == B.rows(), Err::ShapeMismatch,
          "matmul: " + Graph<Scalar>::shape_str(A) + " * " + Graph<Scalar>::shape_str(B));
  Mat<Scalar> out = A * B;
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return g.make(std::move(out), needs, [a, b](Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    if (g.needs_grad(a)) g.grad(a).noalias() += go * g.value(b).transpose();
    if (g.needs_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * go;
  });
}

// add supports equal shapes and broadcasting a 1xC row (bias) over rows
template <typename Scalar>
Tensor<Scalar> add(Tensor<Scalar> a, Tensor<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  const bool row_bcast = B.rows() == 1 && A.rows() != 1 && A.cols() == B.cols();
  if (!row_bcast) detail::check_same_shape("add", A, B);
  Mat<Scalar> out = row_bcast ? Mat<Scalar>(A.rowwise() + B.row(0)) : Mat<Scalar>(A + B);
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return g.make(std::move(out), needs, [a, b, row_bcast](Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    if (g.needs_grad(a)) g.grad(a) += go;
    if (g.needs_grad(b)) {
      if (row_bcast)
        g.grad(b) += go.colwise().sum();
      else
        g.grad(b) += go;
    }
  });
}

template <typename Scalar>
Tensor<Scalar> sub(Tensor<Scalar> a, Tensor<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  detail::check_same_shape("sub", A, B);
  Mat<Scalar> out = A - B;
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return g.make(std::move(out), needs, [a, b](Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    if (g.needs_grad(a)) g.grad(a) += go;
    if (g.needs_grad(b)) g.grad(b) -= go;
  });
}

template <typename Scalar>
Tensor<Scalar> mul(Tensor<Scalar> a, Tensor<Scalar> b) {
  auto& g = detail::same_graph(a, b);
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  detail::check_same_shape("mul", A, B);
  Mat<Scalar> out = A.cwiseProduct(B);
  const bool needs = g.needs_grad(a) || g.needs_grad(b);
  return g.make(std::move(out), needs, [a, b](Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    if (g.needs_grad(a)) g.grad(a) += go.cwiseProduct(g.value(b));
    if (g.needs_grad(b)) g.grad(b) += go.cwiseProduct(g.value(a));
  });
}

template <typename Scalar>
Tensor<Scalar> scale(Tensor<Scalar> a, Scalar c) {
  auto& g = a.graph();
  Mat<Scalar> out = g.value(a) * c;
  return g.make(std::move(out), g.needs_grad(a), [a, c](Graph<Scalar>& g, size_t self) {
    if (g.needs_grad(a)) g.grad(a) += g.grad_of(self) * c;
  });
}

template <typename Scalar>
Tensor<Scalar> relu(Tensor<Scalar> a) {
  auto& g = a.graph();
  Mat<Scalar> out = g.value(a).cwiseMax(Scalar(0));
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const Mat<Scalar>& go = g.grad_of(self);
    g.grad(a) += go.cwiseProduct(
        (g.value(a).array() > Scalar(0)).template cast<Scalar>().matrix());
  });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(Tensor<Scalar> a) {
  auto& g = a.graph();
  Mat<Scalar> out = ((-g.value(a).array()).exp() + Scalar(1)).inverse().matrix();
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const auto s = g.value_of(self).array();
    g.grad(a) += (g.grad_of(self).array() * s * (Scalar(1) - s)).matrix();
  });
}

template <typename Scalar>
Tensor<Scalar> tanh(Tensor<Scalar> a) {
  auto& g = a.graph();
  Mat<Scalar> out = g.value(a).array().tanh().matrix();
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const auto t = g.value_of(self).array();
    g.grad(a) += (g.grad_of(self).array() * (Scalar(1) - t * t)).matrix();
  });
}

// |x|; the subgradient at 0 is defined as 0
template <typename Scalar>
Tensor<Scalar> abs(Tensor<Scalar> a) {
  auto& g = a.graph();
  Mat<Scalar> out = g.value(a).cwiseAbs();
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const auto x = g.value(a).array();
    Mat<Scalar> sign = ((x > Scalar(0)).template cast<Scalar>() -
                        (x < Scalar(0)).template cast<Scalar>())
                           .matrix();
    g.grad(a) += g.grad_of(self).cwiseProduct(sign);
  });
}

template <typename Scalar>
Tensor<Scalar> mean(Tensor<Scalar> a) {
  auto& g = a.graph();
  const auto& A = g.value(a);
  require(A.size() > 0, Err::ShapeMismatch, "mean: empty input");
  Mat<Scalar> out(1, 1);
  out(0, 0) = A.sum() / static_cast<Scalar>(A.size());
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const Scalar go = g.grad_of(self)(0, 0);
    Mat<Scalar>& ga = g.grad(a);
    ga.array() += go / static_cast<Scalar>(ga.size());
  });
}

namespace detail {

template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& x) {
  Mat<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> log_softmax_rows(const Mat<Scalar>& x) {
  Mat<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    const Scalar lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> softmax(Tensor<Scalar> a) {
  auto& g = a.graph();
  Mat<Scalar> out = detail::softmax_rows(g.value(a));
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const Mat<Scalar>& s = g.value_of(self);
    const Mat<Scalar>& go = g.grad_of(self);
    Mat<Scalar>& ga = g.grad(a);
    for (Index i = 0; i < s.rows(); ++i) {
      const Scalar dot = go.row(i).dot(s.row(i));
      ga.row(i) += (s.row(i).array() * (go.row(i).array() - dot)).matrix();
    }
  });
}

template <typename Scalar>
Tensor<Scalar> log_softmax(Tensor<Scalar> a) {
  auto& g = a.graph();
  Mat<Scalar> out = detail::log_softmax_rows(g.value(a));
  return g.make(std::move(out), g.needs_grad(a), [a](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(a)) return;
    const Mat<Scalar>& lp = g.value_of(self);
    const Mat<Scalar>& go = g.grad_of(self);
    Mat<Scalar>& ga = g.grad(a);
    for (Index i = 0; i < lp.rows(); ++i) {
      const Scalar gsum = go.row(i).sum();
      ga.row(i) += go.row(i) - (lp.row(i).array().exp() * gsum).matrix();
    }
  });
}

// row-wise layer norm: y = (x - mu) / sqrt(var + eps) .* gain + bias
template <typename Scalar>
Tensor<Scalar> layer_norm(Tensor<Scalar> x, Tensor<Scalar> gain, Tensor<Scalar> bias,
                          Scalar eps = Scalar(1e-5)) {
  auto& g = detail::same_graph(x, gain);
  detail::same_graph(gain, bias);
  const auto& X = g.value(x);
  const auto& G = g.value(gain);
  const auto& B = g.value(bias);
  require(G.rows() == 1 && G.cols() == X.cols() && B.rows() == 1 && B.cols() == X.cols(),
          Err::ShapeMismatch,
          "layer_norm: gain/bias must be 1x" + std::to_string(X.cols()));
  const Index C = X.cols();
  Mat<Scalar> xhat(X.rows(), C);
  Vec<Scalar> inv_std(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    const Scalar mu = X.row(i).mean();
    const Scalar var = (X.row(i).array() - mu).square().sum() / static_cast<Scalar>(C);
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (X.row(i).array() - mu) * inv_std(i);
  }
  Mat<Scalar> out(X.rows(), C);
  for (Index i = 0; i < X.rows(); ++i)
    out.row(i) = (xhat.row(i).array() * G.row(0).array() + B.row(0).array()).matrix();
  const bool needs = g.needs_grad(x) || g.needs_grad(gain) || g.needs_grad(bias);
  return g.make(std::move(out), needs,
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    const auto& G = g.value(gain);
    const Index C = xhat.cols();
    if (g.needs_grad(gain)) g.grad(gain) += go.cwiseProduct(xhat).colwise().sum();
    if (g.needs_grad(bias)) g.grad(bias) += go.colwise().sum();
    if (g.needs_grad(x)) {
      Mat<Scalar>& gx = g.grad(x);
      for (Index i = 0; i < xhat.rows(); ++i) {
        // d/dx of the normalized row, with dxhat = go .* gain
        Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat =
            go.row(i).array() * G.row(0).array();
        const Scalar m1 = dxhat.mean();
        const Scalar m2 = (dxhat * xhat.row(i).array()).mean();
        gx.row(i) +=
            ((dxhat - m1 - xhat.row(i).array() * m2) * inv_std(i)).matrix();
      }
    }
  });
}

// 1-D convolution over time. x is (T x C_in), weight is (K*C_in x C_out) with
// rows grouped by kernel offset, bias is (1 x C_out). Zero padding.
// Output length: floor((T + 2*pad - K) / stride) + 1.
template <typename Scalar>
Tensor<Scalar> conv1d(Tensor<Scalar> x, Tensor<Scalar> weight, Tensor<Scalar> bias, Index kernel,
                      Index stride, Index pad) {
  auto& g = detail::same_graph(x, weight);
  detail::same_graph(weight, bias);
  const auto& X = g.value(x);
  const auto& W = g.value(weight);
  const auto& B = g.value(bias);
  const Index T = X.rows(), cin = X.cols();
  require(W.rows() == kernel * cin, Err::ShapeMismatch,
          "conv1d: weight rows " + std::to_string(W.rows()) + " != kernel*C_in " +
              std::to_string(kernel * cin));
  const Index cout = W.cols();
  require(B.rows() == 1 && B.cols() == cout, Err::ShapeMismatch, "conv1d: bias must be 1xC_out");
  const Index tout = (T + 2 * pad - kernel) / stride + 1;
  require(T + 2 * pad >= kernel, Err::TooShort,
          "conv1d: input length " + std::to_string(T) + " too short for kernel " +
              std::to_string(kernel));

  Mat<Scalar> out = B.replicate(tout, 1);
  for (Index k = 0; k < kernel; ++k) {
    // valid output rows t where the tap s*t + k - pad lands inside the input
    const Index off = k - pad;
    const Index t0 = off < 0 ? (-off + stride - 1) / stride : 0;
    const Index t1 = std::min(tout, off < T ? (T - 1 - off) / stride + 1 : Index(0));
    if (t1 <= t0) continue;
    auto xs = detail::strided_rows(X, t0 * stride + off, t1 - t0, stride);
    out.middleRows(t0, t1 - t0).noalias() += xs * W.middleRows(k * cin, cin);
  }
  const bool needs = g.needs_grad(x) || g.needs_grad(weight) || g.needs_grad(bias);
  return g.make(std::move(out), needs,
                [x, weight, bias, kernel, stride, pad](Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    const auto& X = g.value(x);
    const auto& W = g.value(weight);
    const Index T = X.rows(), cin = X.cols(), tout = go.rows();
    if (g.needs_grad(bias)) g.grad(bias) += go.colwise().sum();
    for (Index k = 0; k < kernel; ++k) {
      const Index off = k - pad;
      const Index t0 = off < 0 ? (-off + stride - 1) / stride : 0;
      const Index t1 = std::min(tout, off < T ? (T - 1 - off) / stride + 1 : Index(0));
      if (t1 <= t0) continue;
      auto gos = go.middleRows(t0, t1 - t0);
      if (g.needs_grad(weight)) {
        auto xs = detail::strided_rows(X, t0 * stride + off, t1 - t0, stride);
        g.grad(weight).middleRows(k * cin, cin).noalias() += xs.transpose() * gos;
      }
      if (g.needs_grad(x)) {
        auto gxs = detail::strided_rows(g.grad(x), t0 * stride + off, t1 - t0, stride);
        gxs.noalias() += gos * W.middleRows(k * cin, cin).transpose();
      }
    }
  });
}

// Transposed 1-D convolution (adjoint of conv1d). x is (T x C_in), weight is
// (K*C_in x C_out). Output length: (T-1)*stride + K - 2*pad; with K = 4,
// stride = 2, pad = 1 this is exactly 2*T.
template <typename Scalar>
Tensor<Scalar> transposed_conv1d(Tensor<Scalar> x, Tensor<Scalar> weight, Tensor<Scalar> bias,
                                 Index kernel, Index stride, Index pad) {
  auto& g = detail::same_graph(x, weight);
  detail::same_graph(weight, bias);
  const auto& X = g.value(x);
  const auto& W = g.value(weight);
  const auto& B = g.value(bias);
  const Index T = X.rows(), cin = X.cols();
  require(W.rows() == kernel * cin, Err::ShapeMismatch,
          "transposed_conv1d: weight rows " + std::to_string(W.rows()) + " != kernel*C_in " +
              std::to_string(kernel * cin));
  const Index cout = W.cols();
  require(B.rows() == 1 && B.cols() == cout, Err::ShapeMismatch,
          "transposed_conv1d: bias must be 1xC_out");
  const Index tout = (T - 1) * stride + kernel - 2 * pad;
  require(tout >= 1, Err::TooShort, "transposed_conv1d: empty output");

  Mat<Scalar> out = B.replicate(tout, 1);
  for (Index k = 0; k < kernel; ++k) {
    // input row t scatters into output row u = stride*t + k - pad
    const Index off = k - pad;
    const Index t0 = off < 0 ? (-off + stride - 1) / stride : 0;
    const Index t1 = std::min(T, off < tout ? (tout - 1 - off) / stride + 1 : Index(0));
    if (t1 <= t0) continue;
    auto os = detail::strided_rows(out, t0 * stride + off, t1 - t0, stride);
    os.noalias() += X.middleRows(t0, t1 - t0) * W.middleRows(k * cin, cin);
  }
  const bool needs = g.needs_grad(x) || g.needs_grad(weight) || g.needs_grad(bias);
  return g.make(std::move(out), needs,
                [x, weight, bias, kernel, stride, pad](Graph<Scalar>& g, size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    const auto& X = g.value(x);
    const auto& W = g.value(weight);
    const Index T = X.rows(), cin = X.cols(), tout = go.rows();
    if (g.needs_grad(bias)) g.grad(bias) += go.colwise().sum();
    for (Index k = 0; k < kernel; ++k) {
      const Index off = k - pad;
      const Index t0 = off < 0 ? (-off + stride - 1) / stride : 0;
      const Index t1 = std::min(T, off < tout ? (tout - 1 - off) / stride + 1 : Index(0));
      if (t1 <= t0) continue;
      auto gos = detail::strided_rows(go, t0 * stride + off, t1 - t0, stride);
      if (g.needs_grad(weight)) {
        g.grad(weight).middleRows(k * cin, cin).noalias() +=
            X.middleRows(t0, t1 - t0).transpose() * gos;
      }
      if (g.needs_grad(x)) {
        g.grad(x).middleRows(t0, t1 - t0).noalias() +=
            gos * W.middleRows(k * cin, cin).transpose();
      }
    }
  });
}

// Row gather from an embedding table (V x d). Gradients scatter back into the
// table rows.
template <typename Scalar>
Tensor<Scalar> embedding_lookup(Tensor<Scalar> table, const std::vector<int>& ids) {
  auto& g = table.graph();
  const auto& E = g.value(table);
  require(!ids.empty(), Err::ShapeMismatch, "embedding_lookup: empty id sequence");
  for (int id : ids)
    require(id >= 0 && id < E.rows(), Err::UnknownSymbolId,
            "embedding_lookup: id " + std::to_string(id) + " outside table of " +
                std::to_string(E.rows()));
  Mat<Scalar> out(static_cast<Index>(ids.size()), E.cols());
  for (size_t t = 0; t < ids.size(); ++t) out.row(static_cast<Index>(t)) = E.row(ids[t]);
  return g.make(std::move(out), g.needs_grad(table), [table, ids](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(table)) return;
    const Mat<Scalar>& go = g.grad_of(self);
    Mat<Scalar>& ge = g.grad(table);
    for (size_t t = 0; t < ids.size(); ++t) ge.row(ids[t]) += go.row(static_cast<Index>(t));
  });
}

// Multi-head scaled dot-product attention without masking. q, k, v are
// (T x d) with d divisible by n_heads; heads are contiguous column slices.
template <typename Scalar>
Tensor<Scalar> scaled_dot_product_attention(Tensor<Scalar> q, Tensor<Scalar> k, Tensor<Scalar> v,
                                            Index n_heads = 1) {
  auto& g = detail::same_graph(q, k);
  detail::same_graph(k, v);
  const auto& Q = g.value(q);
  const auto& K = g.value(k);
  const auto& V = g.value(v);
  detail::check_same_shape("attention", Q, K);
  detail::check_same_shape("attention", K, V);
  require(n_heads >= 1 && Q.cols() % n_heads == 0, Err::ShapeMismatch,
          "attention: d=" + std::to_string(Q.cols()) + " not divisible by heads=" +
              std::to_string(n_heads));
  const Index T = Q.rows();
  const Index dh = Q.cols() / n_heads;
  const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));

  std::vector<Mat<Scalar>> attn(static_cast<size_t>(n_heads));
  Mat<Scalar> out(T, Q.cols());
  for (Index h = 0; h < n_heads; ++h) {
    auto Qh = Q.middleCols(h * dh, dh);
    auto Kh = K.middleCols(h * dh, dh);
    Mat<Scalar> scores = (Qh * Kh.transpose()) * inv_sqrt;
    attn[static_cast<size_t>(h)] = detail::softmax_rows(scores);
    out.middleCols(h * dh, dh).noalias() =
        attn[static_cast<size_t>(h)] * V.middleCols(h * dh, dh);
  }
  const bool needs = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
  return g.make(std::move(out), needs,
                [q, k, v, n_heads, dh, inv_sqrt, attn = std::move(attn)](Graph<Scalar>& g,
                                                                         size_t self) {
    const Mat<Scalar>& go = g.grad_of(self);
    const auto& Q = g.value(q);
    const auto& K = g.value(k);
    const auto& V = g.value(v);
    for (Index h = 0; h < n_heads; ++h) {
      const Mat<Scalar>& A = attn[static_cast<size_t>(h)];
      auto goh = go.middleCols(h * dh, dh);
      if (g.needs_grad(v)) g.grad(v).middleCols(h * dh, dh).noalias() += A.transpose() * goh;
      if (g.needs_grad(q) || g.needs_grad(k)) {
        Mat<Scalar> dA = goh * V.middleCols(h * dh, dh).transpose();
        // softmax backward, row-wise
        Mat<Scalar> dS(A.rows(), A.cols());
        for (Index i = 0; i < A.rows(); ++i) {
          const Scalar dot = dA.row(i).dot(A.row(i));
          dS.row(i) = (A.row(i).array() * (dA.row(i).array() - dot)).matrix();
        }
        dS *= inv_sqrt;
        if (g.needs_grad(q))
          g.grad(q).middleCols(h * dh, dh).noalias() += dS * K.middleCols(h * dh, dh);
        if (g.needs_grad(k))
          g.grad(k).middleCols(h * dh, dh).noalias() += dS.transpose() * Q.middleCols(h * dh, dh);
      }
    }
  });
}

// Nearest-neighbor upsampling over time: each row repeated `factor` times.
template <typename Scalar>
Tensor<Scalar> repeat_rows(Tensor<Scalar> x, Index factor) {
  auto& g = x.graph();
  const auto& X = g.value(x);
  require(factor >= 1, Err::ShapeMismatch, "repeat_rows: factor must be >= 1");
  Mat<Scalar> out(X.rows() * factor, X.cols());
  for (Index i = 0; i < X.rows(); ++i)
    for (Index r = 0; r < factor; ++r) out.row(i * factor + r) = X.row(i);
  return g.make(std::move(out), g.needs_grad(x), [x, factor](Graph<Scalar>& g, size_t self) {
    if (!g.needs_grad(x)) return;
    const Mat<Scalar>& go = g.grad_of(self);
    Mat<Scalar>& gx = g.grad(x);
    for (Index i = 0; i < gx.rows(); ++i)
      for (Index r = 0; r < factor; ++r) gx.row(i) += go.row(i * factor + r);
  });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(Tensor<Scalar> x, Index start, Index len) {
  auto& g = x.graph();
  const auto& X = g.value(x);
  require(start >= 0 && len >= 1 && start + len <= X.rows(), Err::ShapeMismatch,
          "slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + len) +
              ") outside " + std::to_string(X.rows()) + " rows");
  Mat<Scalar> out = X.middleRows(start, len);
  return g.make(std::move(out), g.needs_grad(x), [x, start, len](Graph<Scalar>& g, size_t self) {
    if (g.needs_grad(x)) g.grad(x).middleRows(start, len) += g.grad_of(self);
  });
}

// y = x W + b
template <typename Scalar>
Tensor<Scalar> linear(Tensor<Scalar> x, Tensor<Scalar> weight, Tensor<Scalar> bias) {
  return add(matmul(x, weight), bias);
}

// Inverted dropout as a constant keep mask; identity when rate == 0.
template <typename Scalar>
Tensor<Scalar> dropout(Tensor<Scalar> x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  auto& g = x.graph();
  const auto& X = g.value(x);
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  Mat<Scalar> mask(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = 0; j < X.cols(); ++j)
      mask(i, j) = rng.uniform() < rate ? Scalar(0) : keep_scale;
  return mul(x, g.constant(std::move(mask)));
}

// Fixed sinusoidal positional encoding, added as a constant.
template <typename Scalar>
Mat<Scalar> sinusoidal_positional_encoding(Index length, Index d_model) {
  Mat<Scalar> pe(length, d_model);
  for (Index t = 0; t < length; ++t) {
    for (Index i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe(t, i) = static_cast<Scalar>(std::sin(angle));
      if (i + 1 < d_model) pe(t, i + 1) = static_cast<Scalar>(std::cos(angle));
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// op-kind dispatcher (used by grad_check and shape tests)
// ---------------------------------------------------------------------------

enum class OpKind {
  Matmul,
  Conv1d,
  TransposedConv1d,
  LayerNorm,
  Softmax,
  LogSoftmax,
  Relu,
  Sigmoid,
  Tanh,
  Add,
  Mul,
  Mean,
  Abs,
  EmbeddingLookup,
  ScaledDotProductAttention,
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Matmul: return "matmul";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::TransposedConv1d: return "transposed_conv1d";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Mean: return "mean";
    case OpKind::Abs: return "abs";
    case OpKind::EmbeddingLookup: return "embedding_lookup";
    case OpKind::ScaledDotProductAttention: return "attention";
  }
  return "?";
}

}  // namespace svs
