#pragma once

#include <array>
#include <string>
#include <vector>

#include "tride/geometry.hpp"
#include "tride/tensor.hpp"

namespace tride {

enum class Weather { kNormal = 0, kRainy = 1, kNight = 2 };

inline const char* weather_name(Weather w) {
  switch (w) {
    case Weather::kNormal: return "normal";
    case Weather::kRainy: return "rainy";
    case Weather::kNight: return "night";
  }
  return "?";
}

// Five-paragraph scene description: one general paragraph plus one per image
// region, each split into sentences.
struct SceneDescription {
  std::vector<std::string> general;
  std::array<std::vector<std::string>, 4> regional;  // indexed by Region

  const std::vector<std::string>& of(Region r) const {
    return regional[static_cast<int>(r)];
  }
};

// Per-paragraph sentence embedding vectors; paragraph order: general, L, ML,
// MR, R. All vectors share one dimension.
struct SentenceFeatures {
  std::array<std::vector<Tensor<float>>, 5> paragraphs;
  int dim = 0;
};

// The fixed instruction given to the captioning model.
std::string render_prompt();

// Parse a dash-paragraph description. Lines whose trimmed form starts with
// '-' open a new paragraph; sentences split on '.', '!' and '?'. Paragraphs
// 2..5 map to regions left-to-right by default; regional_rtl reads them
// right-to-left instead.
SceneDescription parse_description(const std::string& text, bool regional_rtl = false);

// Deterministic hashing embedder standing in for a frozen text encoder:
// lowercase, split on non-alphanumeric, FNV-1a-64 each token, accumulate
// sign(top bit) at index (hash mod dim), then L2-normalize. No tokens -> zero.
Tensor<float> embed_sentence(const std::string& sentence, int dim);

// Embed every sentence of a parsed description.
SentenceFeatures embed_description(const SceneDescription& desc, int dim);

// Sentence-features container: magic "TRIDETXT", u32 paragraph count (= 5),
// then per paragraph u32 sentence count, u32 dim, and the little-endian f32
// vectors. Round-trips bit-exactly.
void save_sentence_features(const SentenceFeatures& feats, const std::string& path);
SentenceFeatures load_sentence_features(const std::string& path);

}  // namespace tride
