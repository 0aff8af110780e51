#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tride/errors.hpp"
#include "tride/tensor.hpp"

namespace tride {

// Handle into a Tape; -1 means "no node".
using Var = int;

enum class OpKind {
  kLeaf,
  kMatmul,
  kConv2d,
  kAdd,
  kMul,
  kSub,
  kRelu,
  kSigmoid,
  kTanh,
  kSoftmaxLastDim,
  kConcat,
  kSlice,
  kSum,
  kMean,
  kGlobalAvgPool2d,
  kAdaptiveAvgPool1d,
  kUpsampleNearest2x,
  kLstmCell,
  kL1LossMasked,
  kCrossEntropyLogits,
  kScalarMul,
  kBroadcastSpatial,
  kReshape,
  kTranspose2d,
};

// Reverse-mode tape over dense tensors. Ops run eagerly and append one node
// each; node inputs always have smaller ids, so a single reverse sweep over
// ids is a valid reverse-topological order. Tensors recorded as inputs are
// never mutated afterwards.
template <typename T>
class Tape {
 public:
  struct Node {
    OpKind kind;
    std::vector<Var> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    // op attributes (meaning depends on kind)
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
    T scalar{};
    // saved activations / constant operands
    Tensor<T> aux0, aux1;
  };

  Var leaf(Tensor<T> value, bool requires_grad = false) {
    Node n;
    n.kind = OpKind::kLeaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var scalar_leaf(T v, bool requires_grad = false) {
    return leaf(Tensor<T>({1}, {v}), requires_grad);
  }

  const Tensor<T>& value(Var id) const { return node(id).value; }
  const Shape& shape(Var id) const { return node(id).value.shape; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var id) const { return node(id).requires_grad; }

  // ---- primitives ----

  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.rank() != 2 || B.rank() != 2) {
      throw DimError("matmul expects 2-d operands, got " + shape_str(A.shape) + " and " +
                     shape_str(B.shape));
    }
    if (A.shape[1] != B.shape[0]) {
      throw DimError("matmul inner extents differ: " + shape_str(A.shape) + " x " +
                     shape_str(B.shape));
    }
    const int m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<T> C({m, n});
    for (int i = 0; i < m; ++i) {
      T* crow = &C.data[static_cast<std::size_t>(i) * n];
      const T* arow = &A.data[static_cast<std::size_t>(i) * k];
      for (int t = 0; t < k; ++t) {
        const T av = arow[t];
        const T* brow = &B.data[static_cast<std::size_t>(t) * n];
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return record(OpKind::kMatmul, {a, b}, std::move(C));
  }

  Var conv2d(Var x, Var w, int stride = 1, int pad = 0, int dilation = 1) {
    const auto& X = value(x);
    const auto& W = value(w);
    if (X.rank() != 3 || W.rank() != 4) {
      throw DimError("conv2d expects CxHxW input and OxCxKxK kernel");
    }
    if (W.shape[1] != X.shape[0]) {
      throw DimError("conv2d channel mismatch: input " + shape_str(X.shape) + ", kernel " +
                     shape_str(W.shape));
    }
    if (W.shape[2] != W.shape[3] || W.shape[2] % 2 == 0) {
      throw DimError("conv2d kernel must be square with odd size, got " + shape_str(W.shape));
    }
    if (stride < 1 || pad < 0 || dilation < 1) throw DimError("conv2d bad stride/pad/dilation");
    const int kk = W.shape[2];
    const int ho = conv_out_extent(X.shape[1], kk, stride, pad, dilation);
    const int wo = conv_out_extent(X.shape[2], kk, stride, pad, dilation);
    if (ho <= 0 || wo <= 0) {
      throw DimError("conv2d non-positive output extent for input " + shape_str(X.shape));
    }
    Tensor<T> Y({W.shape[0], ho, wo});
    conv_forward(X, W, Y, stride, pad, dilation);
    Node n;
    n.kind = OpKind::kConv2d;
    n.inputs = {x, w};
    n.value = std::move(Y);
    n.i0 = stride;
    n.i1 = pad;
    n.i2 = dilation;
    return record_node(std::move(n));
  }

  Var add(Var a, Var b) { return elementwise(OpKind::kAdd, a, b); }
  Var mul(Var a, Var b) { return elementwise(OpKind::kMul, a, b); }
  Var sub(Var a, Var b) { return elementwise(OpKind::kSub, a, b); }

  Var relu(Var x) {
    Tensor<T> y = value(x);
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return record(OpKind::kRelu, {x}, std::move(y));
  }

  Var sigmoid(Var x) {
    Tensor<T> y = value(x);
    for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
    return record(OpKind::kSigmoid, {x}, std::move(y));
  }

  Var tanh(Var x) {
    Tensor<T> y = value(x);
    for (auto& v : y.data) v = std::tanh(v);
    return record(OpKind::kTanh, {x}, std::move(y));
  }

  Var softmax_lastdim(Var x) {
    const auto& X = value(x);
    if (X.rank() < 1) throw DimError("softmax_lastdim needs rank >= 1");
    Tensor<T> y = X;
    const int n = X.shape.back();
    const std::size_t rows = X.numel() / static_cast<std::size_t>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      T* row = &y.data[r * n];
      T mx = row[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      T denom = T(0);
      for (int j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        denom += row[j];
      }
      for (int j = 0; j < n; ++j) row[j] /= denom;
    }
    return record(OpKind::kSoftmaxLastDim, {x}, std::move(y));
  }

  Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw DimError("concat of zero tensors");
    const auto& first = value(parts[0]);
    if (axis < 0 || axis >= first.rank()) throw DimError("concat axis out of range");
    Shape out_shape = first.shape;
    out_shape[axis] = 0;
    for (Var p : parts) {
      const auto& s = value(p).shape;
      if (static_cast<int>(s.size()) != first.rank()) throw DimError("concat rank mismatch");
      for (int d = 0; d < first.rank(); ++d) {
        if (d != axis && s[d] != first.shape[d]) {
          throw DimError("concat extent mismatch on axis " + std::to_string(d));
        }
      }
      out_shape[axis] += s[axis];
    }
    Tensor<T> out(out_shape);
    const std::size_t outer = outer_size(out_shape, axis);
    const std::size_t inner = inner_size(out_shape, axis);
    std::size_t offset = 0;
    for (Var p : parts) {
      const auto& src = value(p);
      const std::size_t span = static_cast<std::size_t>(src.shape[axis]) * inner;
      const std::size_t out_span = static_cast<std::size_t>(out_shape[axis]) * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(&src.data[o * span], span, &out.data[o * out_span + offset]);
      }
      offset += span;
    }
    Node n;
    n.kind = OpKind::kConcat;
    n.inputs = parts;
    n.value = std::move(out);
    n.i0 = axis;
    return record_node(std::move(n));
  }

  Var slice(Var x, int axis, int start, int len) {
    const auto& X = value(x);
    if (axis < 0 || axis >= X.rank()) throw DimError("slice axis out of range");
    if (start < 0 || len <= 0 || start + len > X.shape[axis]) {
      throw DimError("slice range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") outside extent " +
                     std::to_string(X.shape[axis]));
    }
    Shape out_shape = X.shape;
    out_shape[axis] = len;
    Tensor<T> out(out_shape);
    const std::size_t outer = outer_size(X.shape, axis);
    const std::size_t inner = inner_size(X.shape, axis);
    const std::size_t in_span = static_cast<std::size_t>(X.shape[axis]) * inner;
    const std::size_t out_span = static_cast<std::size_t>(len) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(&X.data[o * in_span + static_cast<std::size_t>(start) * inner], out_span,
                  &out.data[o * out_span]);
    }
    Node n;
    n.kind = OpKind::kSlice;
    n.inputs = {x};
    n.value = std::move(out);
    n.i0 = axis;
    n.i1 = start;
    n.i2 = len;
    return record_node(std::move(n));
  }

  Var sum(Var x) {
    T acc = T(0);
    for (const auto& v : value(x).data) acc += v;
    return record(OpKind::kSum, {x}, Tensor<T>({1}, {acc}));
  }

  Var mean(Var x) {
    T acc = T(0);
    for (const auto& v : value(x).data) acc += v;
    acc /= static_cast<T>(value(x).numel());
    return record(OpKind::kMean, {x}, Tensor<T>({1}, {acc}));
  }

  Var global_avg_pool_2d(Var x) {
    const auto& X = value(x);
    if (X.rank() != 3) throw DimError("global_avg_pool_2d expects CxHxW");
    const int c = X.shape[0];
    const std::size_t hw = static_cast<std::size_t>(X.shape[1]) * X.shape[2];
    Tensor<T> y({c});
    for (int ch = 0; ch < c; ++ch) {
      T acc = T(0);
      const T* plane = &X.data[ch * hw];
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      y.data[ch] = acc / static_cast<T>(hw);
    }
    return record(OpKind::kGlobalAvgPool2d, {x}, std::move(y));
  }

  // Bucket j averages input indices [floor(j*n/m), ceil((j+1)*n/m)).
  Var adaptive_avg_pool_1d(Var x, int out_len) {
    const auto& X = value(x);
    if (X.rank() != 1) throw DimError("adaptive_avg_pool_1d expects a vector");
    if (out_len <= 0) throw DimError("adaptive_avg_pool_1d non-positive output length");
    const int n = X.shape[0];
    Tensor<T> y({out_len});
    for (int j = 0; j < out_len; ++j) {
      const auto [lo, hi] = pool1d_bucket(n, out_len, j);
      T acc = T(0);
      for (int i = lo; i < hi; ++i) acc += X.data[i];
      y.data[j] = acc / static_cast<T>(hi - lo);
    }
    Node nd;
    nd.kind = OpKind::kAdaptiveAvgPool1d;
    nd.inputs = {x};
    nd.value = std::move(y);
    nd.i0 = out_len;
    return record_node(std::move(nd));
  }

  Var upsample_nearest_2x(Var x) {
    const auto& X = value(x);
    if (X.rank() != 3) throw DimError("upsample_nearest_2x expects CxHxW");
    const int c = X.shape[0], h = X.shape[1], w = X.shape[2];
    Tensor<T> y({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch) {
      for (int r = 0; r < h; ++r) {
        const T* src = &X.data[(static_cast<std::size_t>(ch) * h + r) * w];
        for (int rr = 0; rr < 2; ++rr) {
          T* dst = &y.data[(static_cast<std::size_t>(ch) * 2 * h + 2 * r + rr) * 2 * w];
          for (int cc = 0; cc < w; ++cc) {
            dst[2 * cc] = src[cc];
            dst[2 * cc + 1] = src[cc];
          }
        }
      }
    }
    return record(OpKind::kUpsampleNearest2x, {x}, std::move(y));
  }

  // Single LSTM cell. Pre-activation layout along the 4*Ct axis is
  // (input, forget, output, candidate). Output packs h' and c' as rows of a
  // [2, Ct] tensor; use lstm_h/lstm_c to slice them.
  Var lstm_cell(Var x, Var h, Var c, Var w_ih, Var w_hh, Var b) {
    const auto& X = value(x);
    const auto& H = value(h);
    const auto& C = value(c);
    const auto& Wih = value(w_ih);
    const auto& Whh = value(w_hh);
    const auto& B = value(b);
    if (X.rank() != 1 || H.rank() != 1 || C.rank() != 1) {
      throw DimError("lstm_cell expects vector x, h, c");
    }
    const int cin = X.shape[0];
    const int ct = H.shape[0];
    if (C.shape[0] != ct) throw DimError("lstm_cell h/c size mismatch");
    if (Wih.shape != Shape{4 * ct, cin}) {
      throw DimError("lstm_cell w_ih must be [4*Ct x Cin], got " + shape_str(Wih.shape));
    }
    if (Whh.shape != Shape{4 * ct, ct}) {
      throw DimError("lstm_cell w_hh must be [4*Ct x Ct], got " + shape_str(Whh.shape));
    }
    if (B.shape != Shape{4 * ct}) throw DimError("lstm_cell bias must be [4*Ct]");

    Tensor<T> gates({4 * ct});  // post-activation i,f,o,g
    for (int r = 0; r < 4 * ct; ++r) {
      T acc = B.data[r];
      const T* wi = &Wih.data[static_cast<std::size_t>(r) * cin];
      for (int j = 0; j < cin; ++j) acc += wi[j] * X.data[j];
      const T* wh = &Whh.data[static_cast<std::size_t>(r) * ct];
      for (int j = 0; j < ct; ++j) acc += wh[j] * H.data[j];
      gates.data[r] = acc;
    }
    for (int j = 0; j < 3 * ct; ++j) gates.data[j] = T(1) / (T(1) + std::exp(-gates.data[j]));
    for (int j = 3 * ct; j < 4 * ct; ++j) gates.data[j] = std::tanh(gates.data[j]);

    Tensor<T> out({2, ct});
    Tensor<T> tanh_c({ct});
    for (int j = 0; j < ct; ++j) {
      const T gi = gates.data[j];
      const T gf = gates.data[ct + j];
      const T go = gates.data[2 * ct + j];
      const T gg = gates.data[3 * ct + j];
      const T cn = gf * C.data[j] + gi * gg;
      tanh_c.data[j] = std::tanh(cn);
      out.at2(0, j) = go * tanh_c.data[j];
      out.at2(1, j) = cn;
    }
    Node n;
    n.kind = OpKind::kLstmCell;
    n.inputs = {x, h, c, w_ih, w_hh, b};
    n.value = std::move(out);
    n.aux0 = std::move(gates);
    n.aux1 = std::move(tanh_c);
    return record_node(std::move(n));
  }

  Var lstm_h(Var cell) { return reshape(slice(cell, 0, 0, 1), {value(cell).shape[1]}); }
  Var lstm_c(Var cell) { return reshape(slice(cell, 0, 1, 1), {value(cell).shape[1]}); }

  // Mean absolute error over pixels where mask != 0; zero if the mask is
  // empty. target and mask are plain tensors (no gradient flows to them).
  Var l1_loss_masked(Var pred, Tensor<T> target, Tensor<T> mask) {
    const auto& P = value(pred);
    if (P.shape != target.shape || P.shape != mask.shape) {
      throw DimError("l1_loss_masked shape mismatch: pred " + shape_str(P.shape) + ", target " +
                     shape_str(target.shape) + ", mask " + shape_str(mask.shape));
    }
    std::size_t count = 0;
    T acc = T(0);
    for (std::size_t i = 0; i < P.numel(); ++i) {
      if (mask.data[i] != T(0)) {
        acc += std::abs(P.data[i] - target.data[i]);
        ++count;
      }
    }
    const T loss = count ? acc / static_cast<T>(count) : T(0);
    Node n;
    n.kind = OpKind::kL1LossMasked;
    n.inputs = {pred};
    n.value = Tensor<T>({1}, {loss});
    n.aux0 = std::move(target);
    n.aux1 = std::move(mask);
    n.i0 = static_cast<int>(count);
    return record_node(std::move(n));
  }

  Var cross_entropy_logits(Var logits, int target_class) {
    const auto& L = value(logits);
    if (L.rank() != 1) throw DimError("cross_entropy_logits expects a logit vector");
    if (target_class < 0 || target_class >= L.shape[0]) {
      throw ContractError("cross_entropy_logits class out of range");
    }
    const int n = L.shape[0];
    T mx = L.data[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, L.data[j]);
    T denom = T(0);
    Tensor<T> soft({n});
    for (int j = 0; j < n; ++j) {
      soft.data[j] = std::exp(L.data[j] - mx);
      denom += soft.data[j];
    }
    for (int j = 0; j < n; ++j) soft.data[j] /= denom;
    const T loss = -std::log(soft.data[target_class]);
    Node nd;
    nd.kind = OpKind::kCrossEntropyLogits;
    nd.inputs = {logits};
    nd.value = Tensor<T>({1}, {loss});
    nd.aux0 = std::move(soft);
    nd.i0 = target_class;
    return record_node(std::move(nd));
  }

  Var scalar_mul(Var x, T s) {
    Tensor<T> y = value(x);
    for (auto& v : y.data) v *= s;
    Node n;
    n.kind = OpKind::kScalarMul;
    n.inputs = {x};
    n.value = std::move(y);
    n.scalar = s;
    return record_node(std::move(n));
  }

  // Replicate a length-C vector to every spatial position of a CxHxW map.
  Var broadcast_spatial(Var v, int h, int w) {
    const auto& V = value(v);
    if (V.rank() != 1) throw DimError("broadcast_spatial expects a vector");
    if (h <= 0 || w <= 0) throw DimError("broadcast_spatial non-positive extent");
    const int c = V.shape[0];
    Tensor<T> y({c, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
      std::fill_n(&y.data[ch * hw], hw, V.data[ch]);
    }
    Node n;
    n.kind = OpKind::kBroadcastSpatial;
    n.inputs = {v};
    n.value = std::move(y);
    n.i0 = h;
    n.i1 = w;
    return record_node(std::move(n));
  }

  Var reshape(Var x, Shape new_shape) {
    const auto& X = value(x);
    if (shape_numel(new_shape) != X.numel()) {
      throw DimError("reshape numel mismatch: " + shape_str(X.shape) + " -> " +
                     shape_str(new_shape));
    }
    Tensor<T> y(new_shape, X.data);
    return record(OpKind::kReshape, {x}, std::move(y));
  }

  Var transpose2d(Var x) {
    const auto& X = value(x);
    if (X.rank() != 2) throw DimError("transpose2d expects a matrix");
    const int m = X.shape[0], n = X.shape[1];
    Tensor<T> y({n, m});
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) y.at2(j, i) = X.at2(i, j);
    }
    return record(OpKind::kTranspose2d, {x}, std::move(y));
  }

  // ---- reverse sweep ----

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node with
  // requires_grad on a path to the loss. Fan-out adds contributions.
  void backward(Var loss) {
    const auto& L = value(loss);
    if (!L.is_scalar()) {
      throw ContractError("backward requires a scalar loss, got shape " + shape_str(L.shape));
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    if (!node(loss).requires_grad) return;
    grads_[loss] = Tensor<T>(L.shape);
    grads_[loss].data[0] = T(1);
    for (Var id = loss; id >= 0; --id) {
      const Node& n = nodes_[id];
      if (!n.requires_grad || grads_[id].data.empty()) continue;
      backward_node(id, n);
    }
  }

  // Gradient of the most recent backward() w.r.t. node id (zeros if the node
  // did not participate).
  Tensor<T> grad(Var id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= grads_.size() || grads_[id].data.empty()) {
      return Tensor<T>(node(id).value.shape);
    }
    return grads_[id];
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;

  const Node& node(Var id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw ContractError("invalid tape handle " + std::to_string(id));
    }
    return nodes_[id];
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  Var record(OpKind kind, std::vector<Var> inputs, Tensor<T> value) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    return record_node(std::move(n));
  }

  Var record_node(Node n) {
    for (Var in : n.inputs) {
      if (node(in).requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    return push(std::move(n));
  }

  Var elementwise(OpKind kind, Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.shape != B.shape) {
      throw DimError("elementwise shape mismatch: " + shape_str(A.shape) + " vs " +
                     shape_str(B.shape));
    }
    Tensor<T> y = A;
    switch (kind) {
      case OpKind::kAdd:
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += B.data[i];
        break;
      case OpKind::kMul:
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] *= B.data[i];
        break;
      case OpKind::kSub:
        for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] -= B.data[i];
        break;
      default:
        throw ContractError("not an elementwise op");
    }
    return record(kind, {a, b}, std::move(y));
  }

  static int conv_out_extent(int in, int k, int stride, int pad, int dilation) {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
  }

  static std::size_t outer_size(const Shape& s, int axis) {
    std::size_t n = 1;
    for (int d = 0; d < axis; ++d) n *= static_cast<std::size_t>(s[d]);
    return n;
  }

  static std::size_t inner_size(const Shape& s, int axis) {
    std::size_t n = 1;
    for (int d = axis + 1; d < static_cast<int>(s.size()); ++d) n *= static_cast<std::size_t>(s[d]);
    return n;
  }

  static std::pair<int, int> pool1d_bucket(int n, int m, int j) {
    const int lo = static_cast<int>((static_cast<long long>(j) * n) / m);
    const int hi = static_cast<int>(
        (static_cast<long long>(j + 1) * n + m - 1) / m);  // ceil((j+1)*n/m)
    return {lo, hi};
  }

  static void conv_forward(const Tensor<T>& X, const Tensor<T>& W, Tensor<T>& Y, int stride,
                           int pad, int dilation) {
    const int cin = X.shape[0], hin = X.shape[1], win = X.shape[2];
    const int cout = W.shape[0], k = W.shape[2];
    const int ho = Y.shape[1], wo = Y.shape[2];
    for (int co = 0; co < cout; ++co) {
      T* out_plane = &Y.data[static_cast<std::size_t>(co) * ho * wo];
      for (int ci = 0; ci < cin; ++ci) {
        const T* in_plane = &X.data[static_cast<std::size_t>(ci) * hin * win];
        const T* wbase = &W.data[((static_cast<std::size_t>(co) * cin + ci) * k) * k];
        for (int kh = 0; kh < k; ++kh) {
          for (int kw = 0; kw < k; ++kw) {
            const T wv = wbase[kh * k + kw];
            if (wv == T(0)) continue;
            const int ih_off = kh * dilation - pad;
            const int iw_off = kw * dilation - pad;
            // oh range keeping ih = oh*stride + ih_off inside [0, hin)
            int oh_lo = 0, oh_hi = ho;
            clamp_range(ih_off, stride, hin, oh_lo, oh_hi);
            int ow_lo = 0, ow_hi = wo;
            clamp_range(iw_off, stride, win, ow_lo, ow_hi);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const T* in_row = &in_plane[(oh * stride + ih_off) * win];
              T* out_row = &out_plane[static_cast<std::size_t>(oh) * wo];
              if (stride == 1) {
                const T* in_shift = in_row + iw_off;
                for (int ow = ow_lo; ow < ow_hi; ++ow) out_row[ow] += wv * in_shift[ow];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow) {
                  out_row[ow] += wv * in_row[ow * stride + iw_off];
                }
              }
            }
          }
        }
      }
    }
  }

  // shrink [lo,hi) so that o*stride + off lies in [0, extent)
  static void clamp_range(int off, int stride, int extent, int& lo, int& hi) {
    while (lo < hi && lo * stride + off < 0) ++lo;
    while (hi > lo && (hi - 1) * stride + off >= extent) --hi;
  }

  void accum(Var id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    if (grads_[id].data.empty()) {
      grads_[id] = g;
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) grads_[id].data[i] += g.data[i];
    }
  }

  Tensor<T>& grad_buffer(Var id) {
    if (grads_[id].data.empty()) grads_[id] = Tensor<T>(nodes_[id].value.shape);
    return grads_[id];
  }

  void backward_node(Var id, const Node& n) {
    const Tensor<T>& gy = grads_[id];
    switch (n.kind) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatmul: {
        const auto& A = value(n.inputs[0]);
        const auto& B = value(n.inputs[1]);
        const int m = A.shape[0], k = A.shape[1], nn = B.shape[1];
        if (nodes_[n.inputs[0]].requires_grad) {
          Tensor<T>& ga = grad_buffer(n.inputs[0]);
          for (int i = 0; i < m; ++i) {
            const T* gyrow = &gy.data[static_cast<std::size_t>(i) * nn];
            T* garow = &ga.data[static_cast<std::size_t>(i) * k];
            for (int t = 0; t < k; ++t) {
              const T* brow = &B.data[static_cast<std::size_t>(t) * nn];
              T acc = T(0);
              for (int j = 0; j < nn; ++j) acc += gyrow[j] * brow[j];
              garow[t] += acc;
            }
          }
        }
        if (nodes_[n.inputs[1]].requires_grad) {
          Tensor<T>& gb = grad_buffer(n.inputs[1]);
          for (int t = 0; t < k; ++t) {
            T* gbrow = &gb.data[static_cast<std::size_t>(t) * nn];
            for (int i = 0; i < m; ++i) {
              const T av = A.data[static_cast<std::size_t>(i) * k + t];
              if (av == T(0)) continue;
              const T* gyrow = &gy.data[static_cast<std::size_t>(i) * nn];
              for (int j = 0; j < nn; ++j) gbrow[j] += av * gyrow[j];
            }
          }
        }
        break;
      }
      case OpKind::kConv2d: {
        conv_backward(n, gy);
        break;
      }
      case OpKind::kAdd: {
        if (nodes_[n.inputs[0]].requires_grad) accum(n.inputs[0], gy);
        if (nodes_[n.inputs[1]].requires_grad) accum(n.inputs[1], gy);
        break;
      }
      case OpKind::kSub: {
        if (nodes_[n.inputs[0]].requires_grad) accum(n.inputs[0], gy);
        if (nodes_[n.inputs[1]].requires_grad) {
          Tensor<T>& gb = grad_buffer(n.inputs[1]);
          for (std::size_t i = 0; i < gy.numel(); ++i) gb.data[i] -= gy.data[i];
        }
        break;
      }
      case OpKind::kMul: {
        const auto& A = value(n.inputs[0]);
        const auto& B = value(n.inputs[1]);
        if (nodes_[n.inputs[0]].requires_grad) {
          Tensor<T>& ga = grad_buffer(n.inputs[0]);
          for (std::size_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i] * B.data[i];
        }
        if (nodes_[n.inputs[1]].requires_grad) {
          Tensor<T>& gb = grad_buffer(n.inputs[1]);
          for (std::size_t i = 0; i < gy.numel(); ++i) gb.data[i] += gy.data[i] * A.data[i];
        }
        break;
      }
      case OpKind::kRelu: {
        const auto& X = value(n.inputs[0]);
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gy.numel(); ++i) {
          if (X.data[i] > T(0)) gx.data[i] += gy.data[i];
        }
        break;
      }
      case OpKind::kSigmoid: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gy.numel(); ++i) {
          const T y = n.value.data[i];
          gx.data[i] += gy.data[i] * y * (T(1) - y);
        }
        break;
      }
      case OpKind::kTanh: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gy.numel(); ++i) {
          const T y = n.value.data[i];
          gx.data[i] += gy.data[i] * (T(1) - y * y);
        }
        break;
      }
      case OpKind::kSoftmaxLastDim: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const int cols = n.value.shape.back();
        const std::size_t rows = n.value.numel() / static_cast<std::size_t>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* y = &n.value.data[r * cols];
          const T* g = &gy.data[r * cols];
          T dot = T(0);
          for (int j = 0; j < cols; ++j) dot += g[j] * y[j];
          T* gx_row = &gx.data[r * cols];
          for (int j = 0; j < cols; ++j) gx_row[j] += y[j] * (g[j] - dot);
        }
        break;
      }
      case OpKind::kConcat: {
        const int axis = n.i0;
        const std::size_t outer = outer_size(n.value.shape, axis);
        const std::size_t inner = inner_size(n.value.shape, axis);
        const std::size_t out_span = static_cast<std::size_t>(n.value.shape[axis]) * inner;
        std::size_t offset = 0;
        for (Var in : n.inputs) {
          const std::size_t span = static_cast<std::size_t>(value(in).shape[axis]) * inner;
          if (nodes_[in].requires_grad) {
            Tensor<T>& gi = grad_buffer(in);
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = &gy.data[o * out_span + offset];
              T* dst = &gi.data[o * span];
              for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
            }
          }
          offset += span;
        }
        break;
      }
      case OpKind::kSlice: {
        const auto& X = value(n.inputs[0]);
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const int axis = n.i0;
        const std::size_t outer = outer_size(X.shape, axis);
        const std::size_t inner = inner_size(X.shape, axis);
        const std::size_t in_span = static_cast<std::size_t>(X.shape[axis]) * inner;
        const std::size_t out_span = static_cast<std::size_t>(n.i2) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = &gy.data[o * out_span];
          T* dst = &gx.data[o * in_span + static_cast<std::size_t>(n.i1) * inner];
          for (std::size_t i = 0; i < out_span; ++i) dst[i] += src[i];
        }
        break;
      }
      case OpKind::kSum: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const T g = gy.data[0];
        for (auto& v : gx.data) v += g;
        break;
      }
      case OpKind::kMean: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const T g = gy.data[0] / static_cast<T>(gx.numel());
        for (auto& v : gx.data) v += g;
        break;
      }
      case OpKind::kGlobalAvgPool2d: {
        const auto& X = value(n.inputs[0]);
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const int c = X.shape[0];
        const std::size_t hw = static_cast<std::size_t>(X.shape[1]) * X.shape[2];
        for (int ch = 0; ch < c; ++ch) {
          const T g = gy.data[ch] / static_cast<T>(hw);
          T* plane = &gx.data[ch * hw];
          for (std::size_t i = 0; i < hw; ++i) plane[i] += g;
        }
        break;
      }
      case OpKind::kAdaptiveAvgPool1d: {
        const auto& X = value(n.inputs[0]);
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const int nn = X.shape[0];
        const int m = n.i0;
        for (int j = 0; j < m; ++j) {
          const auto [lo, hi] = pool1d_bucket(nn, m, j);
          const T g = gy.data[j] / static_cast<T>(hi - lo);
          for (int i = lo; i < hi; ++i) gx.data[i] += g;
        }
        break;
      }
      case OpKind::kUpsampleNearest2x: {
        const auto& X = value(n.inputs[0]);
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const int c = X.shape[0], h = X.shape[1], w = X.shape[2];
        for (int ch = 0; ch < c; ++ch) {
          for (int r = 0; r < h; ++r) {
            T* dst = &gx.data[(static_cast<std::size_t>(ch) * h + r) * w];
            for (int rr = 0; rr < 2; ++rr) {
              const T* src = &gy.data[(static_cast<std::size_t>(ch) * 2 * h + 2 * r + rr) * 2 * w];
              for (int cc = 0; cc < w; ++cc) dst[cc] += src[2 * cc] + src[2 * cc + 1];
            }
          }
        }
        break;
      }
      case OpKind::kLstmCell: {
        lstm_backward(n, gy);
        break;
      }
      case OpKind::kL1LossMasked: {
        if (n.i0 == 0) break;
        const auto& P = value(n.inputs[0]);
        Tensor<T>& gp = grad_buffer(n.inputs[0]);
        const T scale = gy.data[0] / static_cast<T>(n.i0);
        for (std::size_t i = 0; i < P.numel(); ++i) {
          if (n.aux1.data[i] == T(0)) continue;
          const T d = P.data[i] - n.aux0.data[i];
          if (d > T(0)) {
            gp.data[i] += scale;
          } else if (d < T(0)) {
            gp.data[i] -= scale;
          }
        }
        break;
      }
      case OpKind::kCrossEntropyLogits: {
        Tensor<T>& gl = grad_buffer(n.inputs[0]);
        const T g = gy.data[0];
        for (int j = 0; j < static_cast<int>(gl.numel()); ++j) {
          T s = n.aux0.data[j];
          if (j == n.i0) s -= T(1);
          gl.data[j] += g * s;
        }
        break;
      }
      case OpKind::kScalarMul: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gy.numel(); ++i) gx.data[i] += n.scalar * gy.data[i];
        break;
      }
      case OpKind::kBroadcastSpatial: {
        Tensor<T>& gv = grad_buffer(n.inputs[0]);
        const int c = static_cast<int>(gv.numel());
        const std::size_t hw = static_cast<std::size_t>(n.i0) * n.i1;
        for (int ch = 0; ch < c; ++ch) {
          const T* plane = &gy.data[ch * hw];
          T acc = T(0);
          for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
          gv.data[ch] += acc;
        }
        break;
      }
      case OpKind::kReshape: {
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < gy.numel(); ++i) gx.data[i] += gy.data[i];
        break;
      }
      case OpKind::kTranspose2d: {
        const auto& X = value(n.inputs[0]);
        Tensor<T>& gx = grad_buffer(n.inputs[0]);
        const int m = X.shape[0], nn = X.shape[1];
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < nn; ++j) {
            gx.at2(i, j) += gy.at2(j, i);
          }
        }
        break;
      }
    }
  }

  void conv_backward(const Node& n, const Tensor<T>& gy) {
    const auto& X = value(n.inputs[0]);
    const auto& W = value(n.inputs[1]);
    const int stride = n.i0, pad = n.i1, dilation = n.i2;
    const int cin = X.shape[0], hin = X.shape[1], win = X.shape[2];
    const int cout = W.shape[0], k = W.shape[2];
    const int ho = n.value.shape[1], wo = n.value.shape[2];
    if (nodes_[n.inputs[0]].requires_grad) {
      Tensor<T>& gx = grad_buffer(n.inputs[0]);
      for (int co = 0; co < cout; ++co) {
        const T* gy_plane = &gy.data[static_cast<std::size_t>(co) * ho * wo];
        for (int ci = 0; ci < cin; ++ci) {
          T* gx_plane = &gx.data[static_cast<std::size_t>(ci) * hin * win];
          const T* wbase = &W.data[((static_cast<std::size_t>(co) * cin + ci) * k) * k];
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              const T wv = wbase[kh * k + kw];
              if (wv == T(0)) continue;
              const int ih_off = kh * dilation - pad;
              const int iw_off = kw * dilation - pad;
              int oh_lo = 0, oh_hi = ho;
              clamp_range(ih_off, stride, hin, oh_lo, oh_hi);
              int ow_lo = 0, ow_hi = wo;
              clamp_range(iw_off, stride, win, ow_lo, ow_hi);
              for (int oh = oh_lo; oh < oh_hi; ++oh) {
                const T* gy_row = &gy_plane[static_cast<std::size_t>(oh) * wo];
                T* gx_row = &gx_plane[(oh * stride + ih_off) * win];
                if (stride == 1) {
                  T* gx_shift = gx_row + iw_off;
                  for (int ow = ow_lo; ow < ow_hi; ++ow) gx_shift[ow] += wv * gy_row[ow];
                } else {
                  for (int ow = ow_lo; ow < ow_hi; ++ow) {
                    gx_row[ow * stride + iw_off] += wv * gy_row[ow];
                  }
                }
              }
            }
          }
        }
      }
    }
    if (nodes_[n.inputs[1]].requires_grad) {
      Tensor<T>& gw = grad_buffer(n.inputs[1]);
      for (int co = 0; co < cout; ++co) {
        const T* gy_plane = &gy.data[static_cast<std::size_t>(co) * ho * wo];
        for (int ci = 0; ci < cin; ++ci) {
          const T* in_plane = &X.data[static_cast<std::size_t>(ci) * hin * win];
          T* gw_base = &gw.data[((static_cast<std::size_t>(co) * cin + ci) * k) * k];
          for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
              const int ih_off = kh * dilation - pad;
              const int iw_off = kw * dilation - pad;
              int oh_lo = 0, oh_hi = ho;
              clamp_range(ih_off, stride, hin, oh_lo, oh_hi);
              int ow_lo = 0, ow_hi = wo;
              clamp_range(iw_off, stride, win, ow_lo, ow_hi);
              T acc = T(0);
              for (int oh = oh_lo; oh < oh_hi; ++oh) {
                const T* gy_row = &gy_plane[static_cast<std::size_t>(oh) * wo];
                const T* in_row = &in_plane[(oh * stride + ih_off) * win];
                if (stride == 1) {
                  const T* in_shift = in_row + iw_off;
                  for (int ow = ow_lo; ow < ow_hi; ++ow) acc += gy_row[ow] * in_shift[ow];
                } else {
                  for (int ow = ow_lo; ow < ow_hi; ++ow) {
                    acc += gy_row[ow] * in_row[ow * stride + iw_off];
                  }
                }
              }
              gw_base[kh * k + kw] += acc;
            }
          }
        }
      }
    }
  }

  void lstm_backward(const Node& n, const Tensor<T>& gy) {
    const auto& X = value(n.inputs[0]);
    const auto& H = value(n.inputs[1]);
    const auto& C = value(n.inputs[2]);
    const auto& Wih = value(n.inputs[3]);
    const auto& Whh = value(n.inputs[4]);
    const int cin = X.shape[0];
    const int ct = H.shape[0];
    const Tensor<T>& gates = n.aux0;
    const Tensor<T>& tanh_c = n.aux1;

    // d(pre-activation) for the packed i,f,o,g vector
    Tensor<T> da({4 * ct});
    Tensor<T> dc({ct});
    for (int j = 0; j < ct; ++j) {
      const T dh = gy.at2(0, j);
      const T dcn_direct = gy.at2(1, j);
      const T gi = gates.data[j];
      const T gf = gates.data[ct + j];
      const T go = gates.data[2 * ct + j];
      const T gg = gates.data[3 * ct + j];
      const T tc = tanh_c.data[j];
      const T dcn = dcn_direct + dh * go * (T(1) - tc * tc);
      da.data[j] = dcn * gg * gi * (T(1) - gi);                 // input gate
      da.data[ct + j] = dcn * C.data[j] * gf * (T(1) - gf);     // forget gate
      da.data[2 * ct + j] = dh * tc * go * (T(1) - go);         // output gate
      da.data[3 * ct + j] = dcn * gi * (T(1) - gg * gg);        // candidate
      dc.data[j] = dcn * gf;
    }
    if (nodes_[n.inputs[2]].requires_grad) {
      Tensor<T>& g = grad_buffer(n.inputs[2]);
      for (int j = 0; j < ct; ++j) g.data[j] += dc.data[j];
    }
    if (nodes_[n.inputs[0]].requires_grad) {
      Tensor<T>& g = grad_buffer(n.inputs[0]);
      for (int r = 0; r < 4 * ct; ++r) {
        const T d = da.data[r];
        if (d == T(0)) continue;
        const T* wrow = &Wih.data[static_cast<std::size_t>(r) * cin];
        for (int j = 0; j < cin; ++j) g.data[j] += d * wrow[j];
      }
    }
    if (nodes_[n.inputs[1]].requires_grad) {
      Tensor<T>& g = grad_buffer(n.inputs[1]);
      for (int r = 0; r < 4 * ct; ++r) {
        const T d = da.data[r];
        if (d == T(0)) continue;
        const T* wrow = &Whh.data[static_cast<std::size_t>(r) * ct];
        for (int j = 0; j < ct; ++j) g.data[j] += d * wrow[j];
      }
    }
    if (nodes_[n.inputs[3]].requires_grad) {
      Tensor<T>& g = grad_buffer(n.inputs[3]);
      for (int r = 0; r < 4 * ct; ++r) {
        const T d = da.data[r];
        T* grow = &g.data[static_cast<std::size_t>(r) * cin];
        for (int j = 0; j < cin; ++j) grow[j] += d * X.data[j];
      }
    }
    if (nodes_[n.inputs[4]].requires_grad) {
      Tensor<T>& g = grad_buffer(n.inputs[4]);
      for (int r = 0; r < 4 * ct; ++r) {
        const T d = da.data[r];
        T* grow = &g.data[static_cast<std::size_t>(r) * ct];
        for (int j = 0; j < ct; ++j) grow[j] += d * H.data[j];
      }
    }
    if (nodes_[n.inputs[5]].requires_grad) {
      Tensor<T>& g = grad_buffer(n.inputs[5]);
      for (int r = 0; r < 4 * ct; ++r) g.data[r] += da.data[r];
    }
  }
};

}  // namespace tride
