#pragma once

#include <array>
#include <string>
#include <vector>

#include "tride/model.hpp"

namespace tride {

// Everything one sample contributes to a forward pass. radar_image and cloud
// are in raw physical units; normalization happens inside the graph builders.
struct ForwardInputs {
  Tensor<float> image;        // [3 x H x W], values in [0,1]
  Tensor<float> radar_image;  // [3 x H x W]: depth, velocity, rcs
  RadarPointCloud cloud;      // original radar returns
  RegionAssignment regions;   // row indices of cloud per region
  SentenceFeatures text;      // 5 paragraphs of sentence vectors
};

template <typename T>
struct ForwardResult {
  Var depth = -1;               // [H x W] in meters
  Var logits = -1;              // weather logits [3], -1 without text
  std::vector<Var> param_vars;  // parallel to ParamSet order
};

// Resolves ParamSet entries to tape leaves by name.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParamSet& params, bool requires_grad)
      : params_(&params), vars_(bind_params(tape, params, requires_grad)) {}

  // Adopt externally created leaves (parallel to the ParamSet order).
  Binder(const ParamSet& params, std::vector<Var> vars) : params_(&params), vars_(std::move(vars)) {
    if (vars_.size() != params.size()) {
      throw ContractError("binder var list does not match the parameter set");
    }
  }

  Var operator()(const std::string& name) const { return vars_[params_->find(name)]; }
  const std::vector<Var>& vars() const { return vars_; }

  ConvVars conv(const std::string& prefix) const {
    return {(*this)(prefix + ".w"), (*this)(prefix + ".b")};
  }
  AttnVars attn(const std::string& prefix) const {
    return {(*this)(prefix + ".q.w"), (*this)(prefix + ".k.w"), (*this)(prefix + ".v.w")};
  }
  GaVars ga(const std::string& prefix) const {
    return {attn(prefix + ".a1"), attn(prefix + ".a2"), conv(prefix + ".proj")};
  }
  LstmVars lstm(const std::string& prefix) const {
    return {(*this)(prefix + ".w_ih"), (*this)(prefix + ".w_hh"), (*this)(prefix + ".b")};
  }
  MlpVars mlp(const std::string& l1, const std::string& l2) const {
    return {(*this)(l1 + ".w"), (*this)(l1 + ".b"), (*this)(l2 + ".w"), (*this)(l2 + ".b")};
  }

 private:
  const ParamSet* params_;
  std::vector<Var> vars_;
};

namespace detail {

template <typename T>
std::array<Var, 5> encode_pyramid(Tape<T>& t, Var x, const Binder<T>& b,
                                  const std::string& prefix, int res_blocks) {
  const Shape& s = t.shape(x);
  if (s.size() != 3 || s[0] != 3) throw ContractError("encoder expects a [3 x H x W] input");
  if (s[1] % 32 != 0 || s[2] % 32 != 0) {
    throw ContractError("encoder needs H and W divisible by 32, got " + shape_str(s));
  }
  std::array<Var, 5> levels;
  Var cur = x;
  for (int level = 1; level <= 5; ++level) {
    const std::string stage = prefix + ".s" + std::to_string(level);
    std::vector<std::pair<ConvVars, ConvVars>> blocks;
    for (int r = 1; r <= res_blocks; ++r) {
      const std::string rb = stage + ".r" + std::to_string(r);
      blocks.emplace_back(b.conv(rb + ".c1"), b.conv(rb + ".c2"));
    }
    cur = encoder_stage(t, cur, b.conv(stage + ".down"), blocks);
    levels[level - 1] = cur;
  }
  return levels;
}

// Raw radar channels scaled to comparable ranges before encoding.
inline Tensor<float> normalize_radar_image(const Tensor<float>& raw, float depth_cap) {
  Tensor<float> out = raw;
  const std::size_t hw = out.numel() / 3;
  for (std::size_t i = 0; i < hw; ++i) out.data[i] /= depth_cap;
  for (std::size_t i = hw; i < 2 * hw; ++i) out.data[i] /= 20.f;
  for (std::size_t i = 2 * hw; i < 3 * hw; ++i) out.data[i] /= 40.f;
  return out;
}

}  // namespace detail

// Build the whole depth-estimation graph for one sample on top of already
// bound weight variables.
template <typename T>
ForwardResult<T> forward_with_binder(Tape<T>& t, const ModelConfig& cfg, const Binder<T>& b,
                                     const ForwardInputs& in) {
  validate_config(cfg);
  ForwardResult<T> out;
  out.param_vars = b.vars();

  if (in.image.rank() != 3 || in.image.shape[0] != 3) {
    throw ContractError("forward needs a [3 x H x W] image");
  }
  const Var img_in = t.constant(in.image.template cast<T>());
  const auto img = detail::encode_pyramid(t, img_in, b, "img", 2);

  std::array<Var, 5> rad{-1, -1, -1, -1, -1};
  if (cfg.use_radar) {
    if (in.radar_image.shape != in.image.shape) {
      throw ContractError("radar image missing or mismatched against the camera image");
    }
    const Var rad_in = t.constant(
        detail::normalize_radar_image(in.radar_image, cfg.depth_cap).template cast<T>());
    rad = detail::encode_pyramid(t, rad_in, b, "rad", 1);
  }

  // text branch: paragraph encodings, weather feature, classifier
  Var t_gen = -1;                       // [c_t]
  Var t_gen_row = -1;                   // [1 x c_t]
  std::array<Var, 4> t_reg_rows{-1, -1, -1, -1};
  Var t_wea = -1;
  if (cfg.use_text) {
    if (in.text.dim != cfg.embed_dim) {
      throw ContractError("sentence features dim " + std::to_string(in.text.dim) +
                          " does not match configured embed_dim " +
                          std::to_string(cfg.embed_dim));
    }
    const LstmVars lstm = b.lstm("txt.lstm");
    auto encode = [&](const std::vector<Tensor<float>>& sents) {
      if (sents.empty()) throw ContractError("description paragraph has no sentences");
      std::vector<Var> rows;
      for (const auto& v : sents) rows.push_back(t.constant(v.template cast<T>()));
      return encode_paragraph(t, rows, lstm);
    };
    t_gen = encode(in.text.paragraphs[0]);
    t_gen_row = t.reshape(t_gen, {1, cfg.c_t});
    std::array<Var, 4> f_reg;
    for (int r = 0; r < 4; ++r) {
      f_reg[r] = t.reshape(encode(in.text.paragraphs[1 + r]), {1, cfg.c_t});
    }

    // regional enrichment from per-point features
    if (cfg.has_point_branch()) {
      std::vector<int> order;  // cloud rows grouped L, ML, MR, R
      std::array<std::pair<int, int>, 4> ranges;
      for (int r = 0; r < 4; ++r) {
        const auto& rows = in.regions.rows[r];
        ranges[r] = {static_cast<int>(order.size()), static_cast<int>(rows.size())};
        for (int idx : rows) {
          if (idx < 0 || idx >= static_cast<int>(in.cloud.size())) {
            throw ContractError("region assignment indexes outside the point cloud");
          }
          order.push_back(idx);
        }
      }
      Var p_all = -1;
      if (!order.empty()) {
        Tensor<T> pin({static_cast<int>(order.size()), 5});
        for (std::size_t i = 0; i < order.size(); ++i) {
          const RadarPoint& pt = in.cloud[order[i]];
          pin.at2(static_cast<int>(i), 0) = T(pt.x / cfg.depth_cap);
          pin.at2(static_cast<int>(i), 1) = T(pt.y / cfg.depth_cap);
          pin.at2(static_cast<int>(i), 2) = T(pt.z / cfg.depth_cap);
          pin.at2(static_cast<int>(i), 3) = T(pt.v_r / 20.f);
          pin.at2(static_cast<int>(i), 4) = T(pt.rcs / 40.f);
        }
        p_all = encode_points(t, t.constant(std::move(pin)), b.mlp("pts.l1", "pts.l2"));
      }
      const AttnVars reb = {b("reb.q.w"), b("reb.k.w"), b("reb.v.w")};
      for (int r = 0; r < 4; ++r) {
        const auto [start, len] = ranges[r];
        const Var p_region = len > 0 ? t.slice(p_all, 0, start, len) : -1;
        t_reg_rows[r] = radar_enrich_one(t, f_reg[r], p_region, reb);
      }
    } else {
      t_reg_rows = f_reg;
    }

    t_wea = weather_feature(t, img[4], t_gen, cfg.c_t);
    out.logits = classify_weather(t, t_wea, b.mlp("wea.l1", "wea.l2"));
  }

  auto fuse_level = [&](int level, Var fi, Var fr) -> Var {
    if (!cfg.use_radar) return fi;
    const std::string s = "fuse" + std::to_string(level);
    switch (cfg.fusion) {
      case FusionKind::kAdd:
        return t.add(fi, fr);
      case FusionKind::kConcat:
        return conv_bias(t, t.concat({fi, fr}, 0), b.conv(s + ".proj"), 1, 0, 1);
      case FusionKind::kGated: {
        WafbVars w{b.conv(s + ".alpha"), b.conv(s + ".beta"), ConvVars{}};
        return wafb(t, fi, fr, -1, w, cfg.wafb_kernel);
      }
      case FusionKind::kWafb: {
        WafbVars w{b.conv(s + ".alpha"), b.conv(s + ".beta"),
                   cfg.use_text ? b.conv(s + ".gamma") : ConvVars{}};
        return wafb(t, fi, fr, cfg.use_text ? t_wea : -1, w, cfg.wafb_kernel);
      }
    }
    throw ContractError("unreachable fusion kind");
  };

  auto apply_attention = [&](int level, Var f) -> Var {
    if (!cfg.use_text) return f;
    if (cfg.ga_level == level) f = general_attention(t, f, t_gen_row, b.ga("ga"));
    if (cfg.ra_level == level) f = regional_attention(t, f, t_reg_rows, b.ga("ra"));
    return f;
  };

  // decode: fused 1/32 feature, attention, DASPP at 1/16, skip stages, head
  Var cur = apply_attention(5, fuse_level(5, img[4], rad[4]));

  DasppVars dv;
  for (std::size_t i = 0; i < cfg.daspp_dilations.size(); ++i) {
    dv.branches.push_back(b.conv("daspp.b" + std::to_string(i + 1)));
  }
  dv.proj = b.conv("daspp.proj");
  cur = apply_attention(4, daspp(t, t.upsample_nearest_2x(cur), dv, cfg.daspp_dilations));

  for (int level = 4; level >= 1; --level) {
    const Var skip = fuse_level(level, img[level - 1], rad[level - 1]);
    const std::string s = "dec.s" + std::to_string(level);
    Var x = t.concat({cur, skip}, 0);
    x = t.relu(conv_bias(t, x, b.conv(s + ".c1"), 1, 1, 1));
    x = t.relu(conv_bias(t, x, b.conv(s + ".c2"), 1, 1, 1));
    if (level == 3) x = apply_attention(3, x);
    cur = t.upsample_nearest_2x(x);
  }
  cur = t.relu(conv_bias(t, cur, b.conv("dec.f1"), 1, 1, 1));
  cur = t.relu(conv_bias(t, cur, b.conv("dec.f2"), 1, 1, 1));
  const Var logit = conv_bias(t, cur, b.conv("dec.head"), 1, 1, 1);  // [1 x H x W]
  const Var depth01 = t.sigmoid(logit);
  const Shape& ds = t.shape(depth01);
  out.depth = t.reshape(t.scalar_mul(depth01, T(cfg.depth_cap)), {ds[1], ds[2]});
  return out;
}

// Build the whole depth-estimation graph for one sample. All weights come
// from `params` (bound as leaves so backward() yields their gradients).
template <typename T>
ForwardResult<T> forward_graph(Tape<T>& t, const ModelConfig& cfg, const ParamSet& params,
                               const ForwardInputs& in, bool requires_grad = true) {
  validate_config(cfg);
  const Binder<T> b(t, params, requires_grad);
  return forward_with_binder(t, cfg, b, in);
}

}  // namespace tride
