#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tride/checkpoint.hpp"
#include "tride/errors.hpp"
#include "tride/geometry.hpp"
#include "tride/rng.hpp"
#include "tride/tape.hpp"
#include "tride/tensor.hpp"
#include "tride/text.hpp"

namespace tride {

enum class FusionKind { kConcat = 0, kAdd = 1, kGated = 2, kWafb = 3 };

inline const char* fusion_name(FusionKind f) {
  switch (f) {
    case FusionKind::kConcat: return "concat";
    case FusionKind::kAdd: return "add";
    case FusionKind::kGated: return "gated";
    case FusionKind::kWafb: return "wafb";
  }
  return "?";
}

inline FusionKind fusion_from_name(const std::string& s) {
  if (s == "concat") return FusionKind::kConcat;
  if (s == "add") return FusionKind::kAdd;
  if (s == "gated") return FusionKind::kGated;
  if (s == "wafb") return FusionKind::kWafb;
  throw ContractError("unknown fusion kind: " + s);
}

// Model hyperparameters. Pyramid levels are numbered 1..5 for scales
// 1/2 .. 1/32; attention placement uses those numbers (5 = 1/32, 4 = 1/16,
// 3 = 1/8).
struct ModelConfig {
  bool use_image = true;
  bool use_radar = true;
  bool use_text = true;
  bool text_minus = false;   // with text: drop point encoder + enrichment
  FusionKind fusion = FusionKind::kWafb;
  int c_t = 128;             // text feature width
  int c_rp = 256;            // per-point feature width
  int base_c = 16;           // image encoder base channels
  int embed_dim = 512;       // sentence embedding width
  int ga_level = 5;
  int ra_level = 4;
  float depth_cap = 80.f;
  bool regional_rtl = false; // description paragraph order
  int wafb_kernel = 3;
  std::vector<int> daspp_dilations = {1, 2, 4};

  // channel width of pyramid level 1..5
  int level_channels(int level) const {
    static const int mult[5] = {1, 2, 4, 8, 8};
    if (level < 1 || level > 5) throw ContractError("pyramid level out of range");
    return base_c * mult[level - 1];
  }
  // decoder stage output width for levels 4..1
  int stage_channels(int level) const {
    switch (level) {
      case 4: return 4 * base_c;
      case 3: return 2 * base_c;
      case 2: return base_c;
      case 1: return base_c;
    }
    throw ContractError("decoder stage level out of range");
  }
  bool has_point_branch() const { return use_radar && use_text && !text_minus; }
  bool fusion_active() const { return use_radar; }
};

inline void validate_config(const ModelConfig& cfg) {
  if (!cfg.use_image) throw ContractError("the image branch is required");
  if (cfg.text_minus && !cfg.use_text) {
    throw ContractError("text_minus requires the text branch");
  }
  if (cfg.c_t <= 0 || cfg.c_rp <= 0 || cfg.base_c <= 0 || cfg.embed_dim <= 0) {
    throw ContractError("channel widths must be positive");
  }
  if (cfg.ga_level < 3 || cfg.ga_level > 5 || cfg.ra_level < 3 || cfg.ra_level > 5) {
    throw ContractError("attention levels must be 3 (1/8), 4 (1/16), or 5 (1/32)");
  }
  if (cfg.depth_cap <= 0.f) throw ContractError("depth_cap must be positive");
  if (cfg.wafb_kernel % 2 == 0 || cfg.wafb_kernel <= 0) {
    throw ContractError("fusion kernel must be odd");
  }
  if (cfg.daspp_dilations.empty()) throw ContractError("daspp needs at least one dilation");
  if (8 * cfg.base_c < cfg.c_t) {
    throw ContractError("weather feature needs top image width >= c_t");
  }
}

// ---- weight-variable bundles used by the block builders ----

struct ConvVars {
  Var w = -1;
  Var b = -1;
};

struct AttnVars {  // projection matrices, stored [in x out]
  Var q = -1;
  Var k = -1;
  Var v = -1;
};

struct GaVars {
  AttnVars a1;   // text query over spatial tokens
  AttnVars a2;   // spatial queries over the text token
  ConvVars proj; // 1x1 merge back to feature width
};

struct LstmVars {
  Var w_ih = -1;
  Var w_hh = -1;
  Var b = -1;
};

struct MlpVars {
  Var w1 = -1, b1 = -1;
  Var w2 = -1, b2 = -1;
};

struct WafbVars {
  ConvVars alpha;
  ConvVars beta;
  ConvVars gamma;  // unset for gated fusion
};

struct DasppVars {
  std::vector<ConvVars> branches;
  ConvVars proj;
};

// ---- block builders (pure tape graph construction) ----

template <typename T>
Var conv_bias(Tape<T>& t, Var x, const ConvVars& cv, int stride = 1, int pad = 1, int dil = 1) {
  const Var y = t.conv2d(x, cv.w, stride, pad, dil);
  const Shape& s = t.shape(y);
  return t.add(y, t.broadcast_spatial(cv.b, s[1], s[2]));
}

// y = x W + b for token-major x [n x in]; bias broadcast over rows.
template <typename T>
Var linear_rows(Tape<T>& t, Var x, Var w, Var b = -1) {
  Var y = t.matmul(x, w);
  if (b >= 0) {
    const int n = t.shape(y)[0];
    const Var ones = t.constant(Tensor<T>::full({n, 1}, T(1)));
    y = t.add(y, t.matmul(ones, t.reshape(b, {1, t.shape(b)[0]})));
  }
  return y;
}

// Scaled dot-product cross-attention softmax(QK^T/sqrt(d_k))V with projected
// queries/keys/values. q_tokens [nq x dq], kv_tokens [nk x dkv].
template <typename T>
Var cross_attention(Tape<T>& t, Var q_tokens, Var kv_tokens, const AttnVars& w) {
  const Var q = t.matmul(q_tokens, w.q);
  const Var k = t.matmul(kv_tokens, w.k);
  const Var v = t.matmul(kv_tokens, w.v);
  const int dk = t.shape(q)[1];
  const Var scores = t.scalar_mul(t.matmul(q, t.transpose2d(k)), T(1.0 / std::sqrt(double(dk))));
  return t.matmul(t.softmax_lastdim(scores), v);
}

// Weather-aware fusion: alpha = sigmoid(conv(f_rad)), beta = relu(conv(f_rad)),
// gamma = sigmoid(conv(t_wea broadcast ++ f_rad)); out = alpha*beta +
// gamma*beta + f_img. Without gamma weights this is plain gated fusion.
template <typename T>
Var wafb(Tape<T>& t, Var f_img, Var f_rad, Var t_wea, const WafbVars& w, int kernel = 3) {
  if (t.shape(f_img) != t.shape(f_rad)) {
    throw DimError("fusion inputs differ: " + shape_str(t.shape(f_img)) + " vs " +
                   shape_str(t.shape(f_rad)));
  }
  const int pad = kernel / 2;
  const Var alpha = t.sigmoid(conv_bias(t, f_rad, w.alpha, 1, pad, 1));
  const Var beta = t.relu(conv_bias(t, f_rad, w.beta, 1, pad, 1));
  const Var ab = t.mul(alpha, beta);
  if (w.gamma.w < 0) return t.add(ab, f_img);
  if (t_wea < 0) throw ContractError("weather-aware fusion needs a weather feature");
  const Shape& s = t.shape(f_rad);
  const Var wea_map = t.broadcast_spatial(t_wea, s[1], s[2]);
  const Var gamma = t.sigmoid(conv_bias(t, t.concat({wea_map, f_rad}, 0), w.gamma, 1, pad, 1));
  const Var gb = t.mul(gamma, beta);
  return t.add(t.add(ab, gb), f_img);
}

template <typename T>
Var gated_fusion(Tape<T>& t, Var f_img, Var f_rad, const WafbVars& w, int kernel = 3) {
  WafbVars no_gamma = w;
  no_gamma.gamma = ConvVars{};
  return wafb(t, f_img, f_rad, -1, no_gamma, kernel);
}

// Bidirectional single-token attention between a feature map and one text
// vector. t_gen_row is [1 x c_t]; f is [c x h x w].
template <typename T>
Var general_attention(Tape<T>& t, Var f, Var t_gen_row, const GaVars& w) {
  const Shape& s = t.shape(f);
  const int c = s[0], h = s[1], wd = s[2];
  const Var tokens = t.transpose2d(t.reshape(f, {c, h * wd}));  // [S x c]
  const Var a1 = cross_attention(t, t_gen_row, tokens, w.a1);   // [1 x c_t]
  const Var a2 = cross_attention(t, tokens, t_gen_row, w.a2);   // [S x c_t]
  const int n = h * wd;
  const Var ones = t.constant(Tensor<T>::full({n, 1}, T(1)));
  const Var a1_all = t.matmul(ones, a1);                        // broadcast to [S x c_t]
  const Var cat = t.concat({a1_all, a2}, 1);                    // [S x 2c_t]
  const Var maps = t.reshape(t.transpose2d(cat), {t.shape(cat)[1], h, wd});
  return t.add(f, conv_bias(t, maps, w.proj, 1, 0, 1));
}

// Regional attention: split the width into four equal bands (L, ML, MR, R),
// run general_attention per band with its own text vector and one shared
// weight set, and stitch the bands back together.
template <typename T>
Var regional_attention(Tape<T>& t, Var f, const std::array<Var, 4>& t_reg_rows,
                       const GaVars& w) {
  const Shape& s = t.shape(f);
  if (s[2] % 4 != 0) {
    throw ContractError("regional attention needs width divisible by 4, got " + shape_str(s));
  }
  const int band = s[2] / 4;
  std::vector<Var> parts;
  for (int b = 0; b < 4; ++b) {
    const Var piece = t.slice(f, 2, b * band, band);
    parts.push_back(general_attention(t, piece, t_reg_rows[b], w));
  }
  return t.concat(parts, 2);
}

// Densely connected dilated conv block with a residual 1x1 merge.
template <typename T>
Var daspp(Tape<T>& t, Var f, const DasppVars& w, const std::vector<int>& dilations) {
  if (w.branches.size() != dilations.size()) {
    throw ContractError("daspp branch/dilation count mismatch");
  }
  std::vector<Var> feats{f};
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const Var in = feats.size() == 1 ? f : t.concat(feats, 0);
    const int d = dilations[i];
    feats.push_back(t.relu(conv_bias(t, in, w.branches[i], 1, d, d)));
  }
  const Var all = t.concat(feats, 0);
  return t.add(f, conv_bias(t, all, w.proj, 1, 0, 1));
}

// Radar enrichment of one regional text vector: residual cross-attention with
// the region's point features as keys/values. Empty region -> unchanged.
template <typename T>
Var radar_enrich_one(Tape<T>& t, Var f_reg_row, Var p_region, const AttnVars& w) {
  if (p_region < 0) return f_reg_row;
  return t.add(f_reg_row, cross_attention(t, f_reg_row, p_region, w));
}

// Shared-weight LSTM over sentence vectors from zero state; returns final h.
template <typename T>
Var encode_paragraph(Tape<T>& t, const std::vector<Var>& sentence_rows, const LstmVars& w) {
  if (sentence_rows.empty()) throw ContractError("paragraph with no sentence vectors");
  const int ct = t.shape(w.w_hh)[1];
  Var h = t.constant(Tensor<T>({ct}));
  Var c = t.constant(Tensor<T>({ct}));
  for (Var x : sentence_rows) {
    const Var cell = t.lstm_cell(x, h, c, w.w_ih, w.w_hh, w.b);
    h = t.lstm_h(cell);
    c = t.lstm_c(cell);
  }
  return h;
}

// GAP over the top image feature, adaptive pooling to c_t, plus T_gen.
template <typename T>
Var weather_feature(Tape<T>& t, Var f_img5, Var t_gen_vec, int c_t) {
  const int c_img = t.shape(f_img5)[0];
  if (c_img < c_t) {
    throw ContractError("weather feature needs image width >= c_t, got " +
                        std::to_string(c_img) + " < " + std::to_string(c_t));
  }
  const Var pooled = t.adaptive_avg_pool_1d(t.global_avg_pool_2d(f_img5), c_t);
  return t.add(pooled, t_gen_vec);
}

// Two-layer weather classifier returning logits over {normal, rainy, night}.
template <typename T>
Var classify_weather(Tape<T>& t, Var t_wea_vec, const MlpVars& w) {
  const Var row = t.reshape(t_wea_vec, {1, t.shape(t_wea_vec)[0]});
  const Var hidden = t.relu(linear_rows(t, row, w.w1, w.b1));
  const Var logits = linear_rows(t, hidden, w.w2, w.b2);
  return t.reshape(logits, {t.shape(logits)[1]});
}

// One encoder stage: stride-2 conv then n residual 3x3 blocks.
template <typename T>
Var encoder_stage(Tape<T>& t, Var x, const ConvVars& down,
                  const std::vector<std::pair<ConvVars, ConvVars>>& res_blocks) {
  Var y = t.relu(conv_bias(t, x, down, 2, 1, 1));
  for (const auto& [c1, c2] : res_blocks) {
    const Var h = t.relu(conv_bias(t, y, c1, 1, 1, 1));
    y = t.relu(t.add(y, conv_bias(t, h, c2, 1, 1, 1)));
  }
  return y;
}

// Shared per-point MLP 5 -> 64 -> c_rp (hidden ReLU); rows stay row-aligned.
template <typename T>
Var encode_points(Tape<T>& t, Var p_in, const MlpVars& w) {
  const Var h = t.relu(linear_rows(t, p_in, w.w1, w.b1));
  return linear_rows(t, h, w.w2, w.b2);
}

// ---- parameter registration ----

namespace detail {

inline Tensor<float> kaiming(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor<float>::uniform(std::move(shape), rng, -bound, bound);
}

inline void add_conv(ParamSet& p, const std::string& prefix, int cout, int cin, int k, Rng& rng) {
  p.add(prefix + ".w", kaiming({cout, cin, k, k}, static_cast<std::size_t>(cin) * k * k, rng));
  p.add(prefix + ".b", Tensor<float>({cout}));
}

inline void add_linear(ParamSet& p, const std::string& prefix, int in, int out, Rng& rng,
                       bool bias = true) {
  p.add(prefix + ".w", kaiming({in, out}, in, rng));
  if (bias) p.add(prefix + ".b", Tensor<float>({out}));
}

inline void add_ga(ParamSet& p, const std::string& prefix, int width, int c_t, Rng& rng) {
  p.add(prefix + ".a1.q.w", kaiming({c_t, c_t}, c_t, rng));
  p.add(prefix + ".a1.k.w", kaiming({width, c_t}, width, rng));
  p.add(prefix + ".a1.v.w", kaiming({width, c_t}, width, rng));
  p.add(prefix + ".a2.q.w", kaiming({width, c_t}, width, rng));
  p.add(prefix + ".a2.k.w", kaiming({c_t, c_t}, c_t, rng));
  p.add(prefix + ".a2.v.w", kaiming({c_t, c_t}, c_t, rng));
  add_conv(p, prefix + ".proj", width, 2 * c_t, 1, rng);
}

}  // namespace detail

// Decoder feature width where GA/RA attaches: level 5 is the fused 1/32
// feature (8c), level 4 the post-DASPP 1/16 feature (8c), level 3 the 1/8
// stage output (2c).
inline int attention_width(const ModelConfig& cfg, int level) {
  switch (level) {
    case 5: return 8 * cfg.base_c;
    case 4: return 8 * cfg.base_c;
    case 3: return cfg.stage_channels(3);
  }
  throw ContractError("attention level must be 3, 4, or 5");
}

// Create and initialize every parameter the configured model needs.
inline ParamSet build_params(const ModelConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  Rng rng = Rng(seed).split(0xA11);
  ParamSet p;
  const int c = cfg.base_c;

  // image encoder: 5 stages, two residual blocks each
  int prev = 3;
  for (int level = 1; level <= 5; ++level) {
    const int width = cfg.level_channels(level);
    const std::string s = "img.s" + std::to_string(level);
    detail::add_conv(p, s + ".down", width, prev, 3, rng);
    for (int r = 1; r <= 2; ++r) {
      detail::add_conv(p, s + ".r" + std::to_string(r) + ".c1", width, width, 3, rng);
      detail::add_conv(p, s + ".r" + std::to_string(r) + ".c2", width, width, 3, rng);
    }
    prev = width;
  }

  if (cfg.use_radar) {
    // radar encoder: 5 stages, one residual block each
    prev = 3;
    for (int level = 1; level <= 5; ++level) {
      const int width = cfg.level_channels(level);
      const std::string s = "rad.s" + std::to_string(level);
      detail::add_conv(p, s + ".down", width, prev, 3, rng);
      detail::add_conv(p, s + ".r1.c1", width, width, 3, rng);
      detail::add_conv(p, s + ".r1.c2", width, width, 3, rng);
      prev = width;
    }
    // fusion blocks per pyramid level
    for (int level = 1; level <= 5; ++level) {
      const int width = cfg.level_channels(level);
      const std::string s = "fuse" + std::to_string(level);
      switch (cfg.fusion) {
        case FusionKind::kAdd:
          break;
        case FusionKind::kConcat:
          detail::add_conv(p, s + ".proj", width, 2 * width, 1, rng);
          break;
        case FusionKind::kWafb:
          if (cfg.use_text) {
            detail::add_conv(p, s + ".gamma", width, cfg.c_t + width, cfg.wafb_kernel, rng);
          }
          [[fallthrough]];
        case FusionKind::kGated:
          detail::add_conv(p, s + ".alpha", width, width, cfg.wafb_kernel, rng);
          detail::add_conv(p, s + ".beta", width, width, cfg.wafb_kernel, rng);
          break;
      }
    }
  }

  if (cfg.has_point_branch()) {
    detail::add_linear(p, "pts.l1", 5, 64, rng);
    detail::add_linear(p, "pts.l2", 64, cfg.c_rp, rng);
    p.add("reb.q.w", detail::kaiming({cfg.c_t, cfg.c_t}, cfg.c_t, rng));
    p.add("reb.k.w", detail::kaiming({cfg.c_rp, cfg.c_t}, cfg.c_rp, rng));
    p.add("reb.v.w", detail::kaiming({cfg.c_rp, cfg.c_t}, cfg.c_rp, rng));
  }

  if (cfg.use_text) {
    p.add("txt.lstm.w_ih", detail::kaiming({4 * cfg.c_t, cfg.embed_dim}, cfg.embed_dim, rng));
    p.add("txt.lstm.w_hh", detail::kaiming({4 * cfg.c_t, cfg.c_t}, cfg.c_t, rng));
    p.add("txt.lstm.b", Tensor<float>({4 * cfg.c_t}));
    detail::add_linear(p, "wea.l1", cfg.c_t, cfg.c_t, rng);
    detail::add_linear(p, "wea.l2", cfg.c_t, 3, rng);
    detail::add_ga(p, "ga", attention_width(cfg, cfg.ga_level), cfg.c_t, rng);
    detail::add_ga(p, "ra", attention_width(cfg, cfg.ra_level), cfg.c_t, rng);
  }

  // DASPP at 1/16 on the 8c decoder feature
  {
    const int width = 8 * c;
    const int growth = std::max(width / 4, 1);
    int acc = width;
    for (std::size_t i = 0; i < cfg.daspp_dilations.size(); ++i) {
      detail::add_conv(p, "daspp.b" + std::to_string(i + 1), growth, acc, 3, rng);
      acc += growth;
    }
    detail::add_conv(p, "daspp.proj", width, acc, 1, rng);
  }

  // decoder stages 4..1 and the full-resolution tail
  {
    int cur = 8 * c;  // width arriving at the 1/16 stage
    for (int level = 4; level >= 1; --level) {
      const int skip = cfg.level_channels(level);
      const int out = cfg.stage_channels(level);
      const std::string s = "dec.s" + std::to_string(level);
      detail::add_conv(p, s + ".c1", out, cur + skip, 3, rng);
      detail::add_conv(p, s + ".c2", out, out, 3, rng);
      cur = out;
    }
    detail::add_conv(p, "dec.f1", c, cur, 3, rng);
    detail::add_conv(p, "dec.f2", c, c, 3, rng);
    detail::add_conv(p, "dec.head", 1, c, 3, rng);
  }
  return p;
}

}  // namespace tride
