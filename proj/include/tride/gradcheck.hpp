#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "tride/rng.hpp"
#include "tride/tape.hpp"
#include "tride/tensor.hpp"

namespace tride {

// Builds a scalar loss from differentiable leaves. The function must be pure:
// same inputs, same loss, no hidden state.
using BuildLossFn =
    std::function<Var(Tape<double>&, const std::vector<Var>&)>;

namespace detail {

inline double eval_loss(const BuildLossFn& f, const std::vector<Tensor<double>>& xs) {
  Tape<double> tape;
  std::vector<Var> leaves;
  leaves.reserve(xs.size());
  for (const auto& x : xs) leaves.push_back(tape.leaf(x, false));
  const Var loss = f(tape, leaves);
  return tape.value(loss).data[0];
}

}  // namespace detail

// Central-difference check of backward() for a multi-input scalar function.
// Compares (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) against the analytic
// gradient and returns max over checked elements of |a-b|/max(|a|,|b|,1e-8).
// max_checks_per_tensor = 0 checks every element; otherwise that many
// deterministically sampled elements per input.
inline double grad_check_multi(const BuildLossFn& f, const std::vector<Tensor<double>>& xs,
                               double eps = 1e-5, int max_checks_per_tensor = 0,
                               std::uint64_t sample_seed = 7) {
  // analytic gradients, one tape
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x, true));
    const Var loss = f(tape, leaves);
    tape.backward(loss);
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }

  Rng rng(sample_seed);
  double worst = 0.0;
  std::vector<Tensor<double>> work = xs;
  for (std::size_t p = 0; p < xs.size(); ++p) {
    const std::size_t n = xs[p].numel();
    std::vector<std::size_t> idx;
    if (max_checks_per_tensor <= 0 || static_cast<std::size_t>(max_checks_per_tensor) >= n) {
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      for (int i = 0; i < max_checks_per_tensor; ++i) idx.push_back(rng.uniform_int(n));
    }
    for (std::size_t i : idx) {
      const double orig = work[p].data[i];
      work[p].data[i] = orig + eps;
      const double up = detail::eval_loss(f, work);
      work[p].data[i] = orig - eps;
      const double down = detail::eval_loss(f, work);
      work[p].data[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double a = analytic[p].data[i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  return worst;
}

// Single-input convenience wrapper matching grad_check(f, x, eps).
inline double grad_check(const std::function<Var(Tape<double>&, Var)>& f,
                         const Tensor<double>& x, double eps = 1e-5) {
  return grad_check_multi(
      [&f](Tape<double>& tape, const std::vector<Var>& leaves) { return f(tape, leaves[0]); },
      {x}, eps);
}

}  // namespace tride
