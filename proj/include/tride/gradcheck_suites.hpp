#pragma once

// Named finite-difference gradient audits over the whole differentiable
// surface: every tape primitive, every fusion/attention block, and the full
// multimodal micro-model. Shared between the CLI `gradcheck` subcommand and
// the test suite so both report against the same frozen input recipes.

#include <string>
#include <vector>

namespace tride {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

// Shared pass threshold for all gradient audits (64-bit, central differences).
inline constexpr double kGradCheckTol = 1e-4;

// One entry per tape primitive (conv2d appears in several stride/dilation
// variants). Inputs are drawn at fixed seeds and kept away from the ReLU and
// L1 kinks so central differences are valid.
std::vector<GradCheckEntry> gradcheck_primitives();

// One entry per model block: WaFB, gated fusion, general attention, regional
// attention, radar enrichment, DASPP, the paragraph LSTM, and the weather
// classifier head.
std::vector<GradCheckEntry> gradcheck_blocks();

// Full image+radar+text micro-model at 32x64, sampled parameter elements.
GradCheckEntry gradcheck_full_model();

inline double worst_rel_err(const std::vector<GradCheckEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
  return worst;
}

}  // namespace tride
