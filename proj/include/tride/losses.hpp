#pragma once

#include "tride/errors.hpp"
#include "tride/tape.hpp"
#include "tride/tensor.hpp"
#include "tride/text.hpp"

namespace tride {

struct LossWeights {
  double w_depth = 1.0;
  double w_cls = 1.0;
};

// Cross-entropy of the weather logits against the label.
template <typename T>
Var loss_cls(Tape<T>& t, Var logits, Weather y) {
  return t.cross_entropy_logits(logits, static_cast<int>(y));
}

// Two-term L1: mean |D_s - pred| over the sparse support plus mean |D - pred|
// over the dense support (support = value > 0). A term with an empty support
// contributes 0; a sample with no supervision at all is rejected.
template <typename T>
Var loss_depth(Tape<T>& t, Var pred, const Tensor<float>& dense, const Tensor<float>& sparse) {
  if (dense.shape != sparse.shape) {
    throw DimError("loss_depth dense/sparse shape mismatch: " + shape_str(dense.shape) +
                   " vs " + shape_str(sparse.shape));
  }
  auto masked_term = [&t, &pred](const Tensor<float>& target) -> std::pair<Var, bool> {
    Tensor<T> tgt(target.shape);
    Tensor<T> mask(target.shape);
    bool any = false;
    for (std::size_t i = 0; i < target.numel(); ++i) {
      if (target.data[i] > 0.f) {
        tgt.data[i] = static_cast<T>(target.data[i]);
        mask.data[i] = T(1);
        any = true;
      }
    }
    return {t.l1_loss_masked(pred, std::move(tgt), std::move(mask)), any};
  };
  const auto [sparse_term, has_sparse] = masked_term(sparse);
  const auto [dense_term, has_dense] = masked_term(dense);
  if (!has_sparse && !has_dense) {
    throw ContractError("loss_depth: no valid supervision pixels in either map");
  }
  return t.add(sparse_term, dense_term);
}

// w_depth * depth + w_cls * cls. cls may be -1 (no classifier in this run).
template <typename T>
Var total_loss(Tape<T>& t, Var depth_term, Var cls_term, const LossWeights& w) {
  const Var d = t.scalar_mul(depth_term, static_cast<T>(w.w_depth));
  if (cls_term < 0) return d;
  return t.add(d, t.scalar_mul(cls_term, static_cast<T>(w.w_cls)));
}

}  // namespace tride
