#include "tride/gradcheck_suites.hpp"

#include <cmath>
#include <utility>

#include "tride/forward.hpp"
#include "tride/gradcheck.hpp"
#include "tride/losses.hpp"
#include "tride/model.hpp"
#include "tride/text.hpp"

namespace tride {
namespace {

using D = Tensor<double>;

// Values with |v| in [lo, hi) and random sign: generic points for rectifier
// inputs, since the finite-difference probe (eps 1e-5) never crosses zero.
D signed_away(Shape s, Rng& rng, double lo, double hi) {
  D t(std::move(s));
  for (auto& v : t.data) {
    const double mag = rng.uniform(lo, hi);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

GradCheckEntry run(std::string name, const BuildLossFn& fn, std::vector<D> xs,
                   int max_checks = 0) {
  return {std::move(name), grad_check_multi(fn, std::move(xs), 1e-5, max_checks)};
}

// Reduce any tensor-valued node to a scalar with nontrivial upstream
// gradient: sum of squares.
Var sq(Tape<double>& t, Var y) { return t.sum(t.mul(y, y)); }

void add_primitive_checks(std::vector<GradCheckEntry>& out) {
  {
    Rng rng(101);
    out.push_back(run("matmul",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.matmul(v[0], v[1]));
                      },
                      {D::uniform({3, 4}, rng, -1, 1), D::uniform({4, 2}, rng, -1, 1)}));
  }
  {
    Rng rng(102);
    out.push_back(run("conv2d_3x3",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.conv2d(v[0], v[1], 1, 1, 1));
                      },
                      {D::uniform({2, 5, 6}, rng, -1, 1), D::uniform({3, 2, 3, 3}, rng, -1, 1)}));
  }
  {
    Rng rng(103);
    out.push_back(run("conv2d_stride2",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.conv2d(v[0], v[1], 2, 1, 1));
                      },
                      {D::uniform({2, 6, 8}, rng, -1, 1), D::uniform({3, 2, 3, 3}, rng, -1, 1)}));
  }
  {
    Rng rng(104);
    out.push_back(run("conv2d_dilated",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.conv2d(v[0], v[1], 1, 2, 2));
                      },
                      {D::uniform({2, 7, 9}, rng, -1, 1), D::uniform({3, 2, 3, 3}, rng, -1, 1)}));
  }
  {
    Rng rng(105);
    out.push_back(run("conv2d_1x1",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.conv2d(v[0], v[1], 1, 0, 1));
                      },
                      {D::uniform({3, 4, 5}, rng, -1, 1), D::uniform({2, 3, 1, 1}, rng, -1, 1)}));
  }
  {
    Rng rng(106);
    out.push_back(run("add",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.add(v[0], v[1]));
                      },
                      {D::uniform({2, 3, 4}, rng, -1, 1), D::uniform({2, 3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(107);
    out.push_back(run("sub",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.sub(v[0], v[1]));
                      },
                      {D::uniform({3, 5}, rng, -1, 1), D::uniform({3, 5}, rng, -1, 1)}));
  }
  {
    Rng rng(108);
    out.push_back(run("mul",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.mul(v[0], v[1]));
                      },
                      {D::uniform({2, 3, 4}, rng, -1, 1), D::uniform({2, 3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(109);
    out.push_back(run("relu",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.relu(v[0]));
                      },
                      {signed_away({3, 4, 5}, rng, 0.2, 1.0)}));
  }
  {
    Rng rng(110);
    out.push_back(run("sigmoid",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.sigmoid(v[0]));
                      },
                      {D::uniform({3, 4}, rng, -2, 2)}));
  }
  {
    Rng rng(111);
    out.push_back(run("tanh",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.tanh(v[0]));
                      },
                      {D::uniform({3, 4}, rng, -2, 2)}));
  }
  {
    Rng rng(112);
    out.push_back(run("softmax_lastdim",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.softmax_lastdim(v[0]));
                      },
                      {D::uniform({3, 5}, rng, -2, 2)}));
  }
  {
    Rng rng(113);
    out.push_back(run("concat_channels",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.concat({v[0], v[1], v[2]}, 0));
                      },
                      {D::uniform({2, 3, 4}, rng, -1, 1), D::uniform({1, 3, 4}, rng, -1, 1),
                       D::uniform({3, 3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(114);
    out.push_back(run("concat_width",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.concat({v[0], v[1]}, 2));
                      },
                      {D::uniform({2, 3, 2}, rng, -1, 1), D::uniform({2, 3, 5}, rng, -1, 1)}));
  }
  {
    Rng rng(115);
    out.push_back(run("slice",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        const Var a = t.slice(v[0], 2, 2, 3);
                        const Var b = t.slice(v[0], 0, 1, 2);
                        return t.add(sq(t, a), sq(t, b));
                      },
                      {D::uniform({3, 6, 8}, rng, -1, 1)}));
  }
  {
    Rng rng(116);
    out.push_back(run("sum",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        const Var s = t.sum(v[0]);
                        return t.mul(s, s);
                      },
                      {D::uniform({3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(117);
    out.push_back(run("mean",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        const Var m = t.mean(v[0]);
                        return t.mul(m, m);
                      },
                      {D::uniform({3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(118);
    out.push_back(run("global_avg_pool_2d",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.global_avg_pool_2d(v[0]));
                      },
                      {D::uniform({3, 4, 6}, rng, -1, 1)}));
  }
  {
    Rng rng(119);
    out.push_back(run("adaptive_avg_pool_1d",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        const Var a = t.adaptive_avg_pool_1d(v[0], 8);   // non-divisible bins
                        const Var b = t.adaptive_avg_pool_1d(v[0], 4);   // exact bins
                        return t.add(sq(t, a), sq(t, b));
                      },
                      {D::uniform({12}, rng, -1, 1)}));
  }
  {
    Rng rng(120);
    out.push_back(run("upsample_nearest_2x",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.upsample_nearest_2x(v[0]));
                      },
                      {D::uniform({2, 3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(121);
    out.push_back(run("lstm_cell",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.lstm_cell(v[0], v[1], v[2], v[3], v[4], v[5]));
                      },
                      {D::uniform({6}, rng, -1, 1), D::uniform({5}, rng, -1, 1),
                       D::uniform({5}, rng, -1, 1), D::uniform({20, 6}, rng, -0.5, 0.5),
                       D::uniform({20, 5}, rng, -0.5, 0.5), D::uniform({20}, rng, -0.5, 0.5)}));
  }
  {
    // Targets offset from the prediction by at least 0.3 so |pred - target|
    // stays differentiable under the probe.
    Rng rng(122);
    D pred = D::uniform({4, 6}, rng, 1.0, 5.0);
    D target(pred.shape);
    D mask(pred.shape);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const double off = rng.uniform(0.3, 1.0);
      target.data[i] = pred.data[i] + (rng.uniform() < 0.5 ? -off : off);
      mask.data[i] = rng.uniform() < 0.6 ? 1.0 : 0.0;
    }
    mask.data[0] = 1.0;
    out.push_back(run("l1_loss_masked",
                      [target, mask](Tape<double>& t, const std::vector<Var>& v) {
                        return t.l1_loss_masked(v[0], target, mask);
                      },
                      {pred}));
  }
  {
    Rng rng(123);
    out.push_back(run("cross_entropy_logits",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return t.cross_entropy_logits(v[0], 1);
                      },
                      {D::uniform({3}, rng, -2, 2)}));
  }
  {
    Rng rng(124);
    out.push_back(run("scalar_mul",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.scalar_mul(v[0], 1.7));
                      },
                      {D::uniform({3, 4}, rng, -1, 1)}));
  }
  {
    Rng rng(125);
    out.push_back(run("broadcast_spatial",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.mul(t.broadcast_spatial(v[0], 3, 5), v[1]));
                      },
                      {D::uniform({4}, rng, -1, 1), D::uniform({4, 3, 5}, rng, -1, 1)}));
  }
  {
    Rng rng(126);
    out.push_back(run("reshape",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.matmul(t.reshape(v[0], {4, 6}), v[1]));
                      },
                      {D::uniform({2, 3, 4}, rng, -1, 1), D::uniform({6, 2}, rng, -1, 1)}));
  }
  {
    Rng rng(127);
    out.push_back(run("transpose2d",
                      [](Tape<double>& t, const std::vector<Var>& v) {
                        return sq(t, t.matmul(t.transpose2d(v[0]), v[1]));
                      },
                      {D::uniform({3, 5}, rng, -1, 1), D::uniform({3, 2}, rng, -1, 1)}));
  }
}

void add_block_checks(std::vector<GradCheckEntry>& out) {
  // Conv weights are kept moderate and biases positive (0.05..0.2) so every
  // rectifier pre-activation sits a generic distance from zero.
  const auto conv_w = [](int co, int ci, int k, Rng& rng) {
    return D::uniform({co, ci, k, k}, rng, -0.5, 0.5);
  };
  const auto bias = [](int n, Rng& rng) { return D::uniform({n}, rng, 0.05, 0.2); };

  {
    Rng rng(201);
    std::vector<D> xs = {D::uniform({3, 4, 6}, rng, -1, 1),   // f_img
                         D::uniform({3, 4, 6}, rng, -1, 1),   // f_rad
                         D::uniform({4}, rng, -1, 1),         // t_wea
                         conv_w(3, 3, 3, rng), bias(3, rng),  // alpha
                         conv_w(3, 3, 3, rng), bias(3, rng),  // beta
                         conv_w(3, 7, 3, rng), bias(3, rng)}; // gamma (c_t + c in)
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      WafbVars w{{v[3], v[4]}, {v[5], v[6]}, {v[7], v[8]}};
      return sq(t, wafb(t, v[0], v[1], v[2], w, 3));
    };
    out.push_back(run("wafb", fn, std::move(xs)));
  }
  {
    Rng rng(202);
    std::vector<D> xs = {D::uniform({3, 4, 6}, rng, -1, 1), D::uniform({3, 4, 6}, rng, -1, 1),
                         conv_w(3, 3, 3, rng), bias(3, rng), conv_w(3, 3, 3, rng), bias(3, rng)};
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      WafbVars w{{v[2], v[3]}, {v[4], v[5]}, {}};
      return sq(t, gated_fusion(t, v[0], v[1], w, 3));
    };
    out.push_back(run("gated_fusion", fn, std::move(xs)));
  }
  {
    // width c=4, c_t=5, f [4 x 3 x 4]
    Rng rng(203);
    std::vector<D> xs = {D::uniform({4, 3, 4}, rng, -1, 1),
                         D::uniform({1, 5}, rng, -1, 1),      // t_gen row
                         D::uniform({5, 5}, rng, -0.5, 0.5),  // a1.q
                         D::uniform({4, 5}, rng, -0.5, 0.5),  // a1.k
                         D::uniform({4, 5}, rng, -0.5, 0.5),  // a1.v
                         D::uniform({4, 5}, rng, -0.5, 0.5),  // a2.q
                         D::uniform({5, 5}, rng, -0.5, 0.5),  // a2.k
                         D::uniform({5, 5}, rng, -0.5, 0.5),  // a2.v
                         D::uniform({4, 10, 1, 1}, rng, -0.5, 0.5), bias(4, rng)};
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      GaVars w{{v[2], v[3], v[4]}, {v[5], v[6], v[7]}, {v[8], v[9]}};
      return sq(t, general_attention(t, v[0], v[1], w));
    };
    out.push_back(run("general_attention", fn, std::move(xs)));
  }
  {
    // width c=3, c_t=4, f [3 x 2 x 8] -> four bands of width 2
    Rng rng(204);
    std::vector<D> xs = {D::uniform({3, 2, 8}, rng, -1, 1)};
    for (int i = 0; i < 4; ++i) xs.push_back(D::uniform({1, 4}, rng, -1, 1));
    xs.push_back(D::uniform({4, 4}, rng, -0.5, 0.5));  // a1.q
    xs.push_back(D::uniform({3, 4}, rng, -0.5, 0.5));  // a1.k
    xs.push_back(D::uniform({3, 4}, rng, -0.5, 0.5));  // a1.v
    xs.push_back(D::uniform({3, 4}, rng, -0.5, 0.5));  // a2.q
    xs.push_back(D::uniform({4, 4}, rng, -0.5, 0.5));  // a2.k
    xs.push_back(D::uniform({4, 4}, rng, -0.5, 0.5));  // a2.v
    xs.push_back(D::uniform({3, 8, 1, 1}, rng, -0.5, 0.5));
    xs.push_back(bias(3, rng));
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      GaVars w{{v[5], v[6], v[7]}, {v[8], v[9], v[10]}, {v[11], v[12]}};
      return sq(t, regional_attention(t, v[0], {v[1], v[2], v[3], v[4]}, w));
    };
    out.push_back(run("regional_attention", fn, std::move(xs)));
  }
  {
    // c_t=4, c_rp=5, three points in the region
    Rng rng(205);
    std::vector<D> xs = {D::uniform({1, 4}, rng, -1, 1), D::uniform({3, 5}, rng, -1, 1),
                         D::uniform({4, 4}, rng, -0.5, 0.5), D::uniform({5, 4}, rng, -0.5, 0.5),
                         D::uniform({5, 4}, rng, -0.5, 0.5)};
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      return sq(t, radar_enrich_one(t, v[0], v[1], AttnVars{v[2], v[3], v[4]}));
    };
    out.push_back(run("radar_enrichment", fn, std::move(xs)));
  }
  {
    // f [4 x 3 x 4], dilations {1, 2}, growth 2
    Rng rng(206);
    std::vector<D> xs = {D::uniform({4, 3, 4}, rng, -1, 1),
                         conv_w(2, 4, 3, rng), bias(2, rng),
                         conv_w(2, 6, 3, rng), bias(2, rng),
                         D::uniform({4, 8, 1, 1}, rng, -0.5, 0.5), bias(4, rng)};
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      DasppVars w;
      w.branches = {{v[1], v[2]}, {v[3], v[4]}};
      w.proj = {v[5], v[6]};
      return sq(t, daspp(t, v[0], w, {1, 2}));
    };
    out.push_back(run("daspp", fn, std::move(xs)));
  }
  {
    // three sentences of dim 5, hidden c_t=4
    Rng rng(207);
    std::vector<D> xs = {D::uniform({5}, rng, -1, 1), D::uniform({5}, rng, -1, 1),
                         D::uniform({5}, rng, -1, 1), D::uniform({16, 5}, rng, -0.5, 0.5),
                         D::uniform({16, 4}, rng, -0.5, 0.5), D::uniform({16}, rng, -0.5, 0.5)};
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      return sq(t, encode_paragraph(t, {v[0], v[1], v[2]}, LstmVars{v[3], v[4], v[5]}));
    };
    out.push_back(run("paragraph_lstm", fn, std::move(xs)));
  }
  {
    // weather feature (GAP + adaptive pool 8 -> 6 + T_gen) into the MLP head
    Rng rng(208);
    std::vector<D> xs = {D::uniform({8, 2, 3}, rng, -1, 1), D::uniform({6}, rng, -1, 1),
                         D::uniform({6, 6}, rng, -0.5, 0.5), bias(6, rng),
                         D::uniform({6, 3}, rng, -0.5, 0.5), D::uniform({3}, rng, -0.5, 0.5)};
    const auto fn = [](Tape<double>& t, const std::vector<Var>& v) {
      const Var wea = weather_feature(t, v[0], v[1], 6);
      const Var logits = classify_weather(t, wea, MlpVars{v[2], v[3], v[4], v[5]});
      return t.cross_entropy_logits(logits, 2);
    };
    out.push_back(run("weather_mlp", fn, std::move(xs)));
  }
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_primitives() {
  std::vector<GradCheckEntry> out;
  add_primitive_checks(out);
  return out;
}

std::vector<GradCheckEntry> gradcheck_blocks() {
  std::vector<GradCheckEntry> out;
  add_block_checks(out);
  return out;
}

GradCheckEntry gradcheck_full_model() {
  ModelConfig cfg;
  cfg.base_c = 2;
  cfg.c_t = 8;
  cfg.c_rp = 8;
  cfg.embed_dim = 8;
  ParamSet params = build_params(cfg, 7);
  // Biases start at zero, and with a mostly-empty radar map whole channels
  // would then sit exactly on the ReLU kink; jitter them off zero.
  Rng brng(77);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& n = params.names[i];
    if (n.size() > 2 && n.rfind(".b") == n.size() - 2) {
      for (auto& v : params.tensors[i].data) v = static_cast<float>(brng.uniform(0.02, 0.2));
    }
  }

  const int h = 32, w = 64;
  Rng rng(8);
  ForwardInputs in;
  in.image = Tensor<float>::uniform({3, h, w}, rng, 0.0, 1.0);
  in.radar_image = Tensor<float>({3, h, w});
  for (int i = 0; i < 24; ++i) {
    const int y = rng.uniform_int(h);
    const int x = rng.uniform_int(w);
    in.radar_image.at3(0, y, x) = static_cast<float>(rng.uniform(4.0, 75.0));
    in.radar_image.at3(1, y, x) = static_cast<float>(rng.uniform(-8.0, 8.0));
    in.radar_image.at3(2, y, x) = static_cast<float>(rng.uniform(0.0, 30.0));
  }
  for (int i = 0; i < 6; ++i) {
    RadarPoint p;
    p.x = static_cast<float>(rng.uniform(-20.0, 20.0));
    p.y = static_cast<float>(rng.uniform(-2.0, 2.0));
    p.z = static_cast<float>(rng.uniform(4.0, 75.0));
    p.v_r = static_cast<float>(rng.uniform(-8.0, 8.0));
    p.rcs = static_cast<float>(rng.uniform(0.0, 30.0));
    in.cloud.push_back(p);
    in.regions.rows[i % 4].push_back(i);
  }
  const std::string text =
      "- A street scene in normal daylight. Clear view of the road.\n"
      "- A car is about 10 meters away.\n"
      "- A truck is about 25 meters away.\n"
      "- There are no notable objects here.\n"
      "- A person is about 5 meters away. A sign is about 15 meters away.\n";
  in.text = embed_description(parse_description(text), cfg.embed_dim);

  Tensor<float> dense({h, w});
  Tensor<float> sparse({h, w});
  Rng trng(9);
  for (std::size_t i = 0; i < dense.numel(); ++i) {
    dense.data[i] = static_cast<float>(trng.uniform(3.0, 75.0));
    if (trng.uniform() < 0.05) sparse.data[i] = dense.data[i];
  }

  std::vector<D> xs;
  xs.reserve(params.size());
  for (const auto& t : params.tensors) xs.push_back(t.cast<double>());

  const auto loss_fn = [&](Tape<double>& t, const std::vector<Var>& vs) {
    const Binder<double> b(params, vs);
    const auto out = forward_with_binder(t, cfg, b, in);
    const Var ld = loss_depth(t, out.depth, dense, sparse);
    const Var lc = loss_cls(t, out.logits, Weather::kNormal);
    return total_loss(t, ld, lc, LossWeights{});
  };
  return {"full_model_irt_32x64", grad_check_multi(loss_fn, xs, 1e-5, 2, 13)};
}

}  // namespace tride
