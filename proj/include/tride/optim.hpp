#pragma once

#include <cmath>
#include <vector>

#include "tride/errors.hpp"
#include "tride/tensor.hpp"

namespace tride {

// Adam moment buffers for a flat list of parameter tensors.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  long long step = 0;

  void init(const std::vector<Tensor<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.shape);
      v.emplace_back(p.shape);
    }
    step = 0;
  }

  bool matches(const std::vector<Tensor<T>>& params) const {
    if (m.size() != params.size() || v.size() != params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (m[i].shape != params[i].shape || v[i].shape != params[i].shape) return false;
    }
    return true;
  }
};

// One Adam update with bias correction (Kingma & Ba). Mutates params and state.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
  if (params.size() != grads.size()) throw ContractError("adam_step params/grads size mismatch");
  if (!state.matches(params)) throw ContractError("adam_step state does not match params");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].shape != grads[p].shape) {
      throw ContractError("adam_step grad shape mismatch at parameter " + std::to_string(p));
    }
    T* w = params[p].data.data();
    const T* g = grads[p].data.data();
    T* m = state.m[p].data.data();
    T* v = state.v[p].data.data();
    const std::size_t n = params[p].numel();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
      const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// Polynomial decay: base_lr * (1 - step/total)^power. Steps past the end give 0.
inline double poly_lr(long long step, long long total_steps, double base_lr = 1e-4,
                      double power = 0.9) {
  if (total_steps <= 0) throw ContractError("poly_lr needs total_steps > 0");
  if (step < 0) throw ContractError("poly_lr negative step");
  if (step >= total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::pow(frac, power);
}

}  // namespace tride
