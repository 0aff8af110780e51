#include "tride/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

namespace tride {

namespace {

// substream ids under the run seed
constexpr std::uint64_t kInitStream = 21;
constexpr std::uint64_t kBatchStream = 22;
constexpr std::uint64_t kMixStream = 31;

void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                 const char* where) {
  if (!j.is_object()) throw ContractError(std::string(where) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ContractError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void validate_run_config(const RunConfig& cfg) {
  validate_config(cfg.model);
  validate_gen_params(cfg.gen);
  const OptimSettings& o = cfg.optim;
  if (o.base_lr <= 0) throw ContractError("base_lr must be positive");
  if (o.power < 0) throw ContractError("lr power must be non-negative");
  if (o.steps <= 0) throw ContractError("steps must be positive");
  if (o.batch_size <= 0) throw ContractError("batch_size must be positive");
  if (o.w_depth < 0 || o.w_cls < 0) throw ContractError("loss weights must be non-negative");
  if (o.val_every < 0) throw ContractError("val_every must be non-negative");
  if (cfg.model.depth_cap != cfg.gen.depth_cap) {
    throw ContractError("model and generator depth caps disagree");
  }
  if (cfg.out_dir.empty()) throw ContractError("output directory must be set");
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json m;
  m["use_image"] = cfg.model.use_image;
  m["use_radar"] = cfg.model.use_radar;
  m["use_text"] = cfg.model.use_text;
  m["text_minus"] = cfg.model.text_minus;
  m["fusion"] = fusion_name(cfg.model.fusion);
  m["c_t"] = cfg.model.c_t;
  m["c_rp"] = cfg.model.c_rp;
  m["base_c"] = cfg.model.base_c;
  m["embed_dim"] = cfg.model.embed_dim;
  m["ga_level"] = cfg.model.ga_level;
  m["ra_level"] = cfg.model.ra_level;
  m["depth_cap"] = cfg.model.depth_cap;
  m["regional_rtl"] = cfg.model.regional_rtl;
  m["wafb_kernel"] = cfg.model.wafb_kernel;
  m["daspp_dilations"] = cfg.model.daspp_dilations;

  nlohmann::json g;
  g["h"] = cfg.gen.h;
  g["w"] = cfg.gen.w;
  g["radar_points"] = cfg.gen.radar_points;
  g["sigma_r"] = cfg.gen.sigma_r;
  g["clutter_fraction"] = cfg.gen.clutter_fraction;
  g["text_noise"] = cfg.gen.text_noise;
  g["depth_cap"] = cfg.gen.depth_cap;
  g["seed"] = cfg.gen.seed;

  nlohmann::json o;
  o["base_lr"] = cfg.optim.base_lr;
  o["power"] = cfg.optim.power;
  o["steps"] = cfg.optim.steps;
  o["batch_size"] = cfg.optim.batch_size;
  o["w_depth"] = cfg.optim.w_depth;
  o["w_cls"] = cfg.optim.w_cls;
  o["val_every"] = cfg.optim.val_every;
  o["augment"] = cfg.optim.augment;

  nlohmann::json j;
  j["model"] = std::move(m);
  j["gen"] = std::move(g);
  j["optim"] = std::move(o);
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  expect_keys(j, {"model", "gen", "optim", "seed", "out_dir"}, "run config");
  RunConfig cfg;
  if (j.contains("model")) {
    const nlohmann::json& m = j.at("model");
    expect_keys(m,
                {"use_image", "use_radar", "use_text", "text_minus", "fusion", "c_t", "c_rp",
                 "base_c", "embed_dim", "ga_level", "ra_level", "depth_cap", "regional_rtl",
                 "wafb_kernel", "daspp_dilations"},
                "model config");
    get_if(m, "use_image", cfg.model.use_image);
    get_if(m, "use_radar", cfg.model.use_radar);
    get_if(m, "use_text", cfg.model.use_text);
    get_if(m, "text_minus", cfg.model.text_minus);
    if (m.contains("fusion")) cfg.model.fusion = fusion_from_name(m.at("fusion").get<std::string>());
    get_if(m, "c_t", cfg.model.c_t);
    get_if(m, "c_rp", cfg.model.c_rp);
    get_if(m, "base_c", cfg.model.base_c);
    get_if(m, "embed_dim", cfg.model.embed_dim);
    get_if(m, "ga_level", cfg.model.ga_level);
    get_if(m, "ra_level", cfg.model.ra_level);
    get_if(m, "depth_cap", cfg.model.depth_cap);
    get_if(m, "regional_rtl", cfg.model.regional_rtl);
    get_if(m, "wafb_kernel", cfg.model.wafb_kernel);
    get_if(m, "daspp_dilations", cfg.model.daspp_dilations);
  }
  if (j.contains("gen")) {
    const nlohmann::json& g = j.at("gen");
    expect_keys(g,
                {"h", "w", "radar_points", "sigma_r", "clutter_fraction", "text_noise",
                 "depth_cap", "seed"},
                "generator config");
    get_if(g, "h", cfg.gen.h);
    get_if(g, "w", cfg.gen.w);
    get_if(g, "radar_points", cfg.gen.radar_points);
    get_if(g, "sigma_r", cfg.gen.sigma_r);
    get_if(g, "clutter_fraction", cfg.gen.clutter_fraction);
    get_if(g, "text_noise", cfg.gen.text_noise);
    get_if(g, "depth_cap", cfg.gen.depth_cap);
    get_if(g, "seed", cfg.gen.seed);
  }
  if (j.contains("optim")) {
    const nlohmann::json& o = j.at("optim");
    expect_keys(o,
                {"base_lr", "power", "steps", "batch_size", "w_depth", "w_cls", "val_every",
                 "augment"},
                "optimizer config");
    get_if(o, "base_lr", cfg.optim.base_lr);
    get_if(o, "power", cfg.optim.power);
    get_if(o, "steps", cfg.optim.steps);
    get_if(o, "batch_size", cfg.optim.batch_size);
    get_if(o, "w_depth", cfg.optim.w_depth);
    get_if(o, "w_cls", cfg.optim.w_cls);
    get_if(o, "val_every", cfg.optim.val_every);
    get_if(o, "augment", cfg.optim.augment);
  }
  get_if(j, "seed", cfg.seed);
  get_if(j, "out_dir", cfg.out_dir);
  validate_run_config(cfg);
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  detail::write_file_bytes(path, run_config_to_json(cfg).dump(2) + "\n");
}

RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file_bytes(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("run config is not valid JSON: " + std::string(e.what()),
                      static_cast<std::size_t>(e.byte));
  }
  return run_config_from_json(j);
}

double poly_lr(double base_lr, int step, int total_steps, double power) {
  if (total_steps <= 0) throw ContractError("poly_lr needs a positive step budget");
  if (step < 0 || step >= total_steps) {
    throw ContractError("poly_lr step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + ")");
  }
  return base_lr * std::pow(1.0 - static_cast<double>(step) / total_steps, power);
}

Adam::Adam(const ParamSet& params, double beta1, double beta2, double eps)
    : b1_(beta1), b2_(beta2), eps_(eps) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& t : params.tensors) {
    m_.emplace_back(t.shape);
    v_.emplace_back(t.shape);
  }
}

void Adam::step(ParamSet& params, const std::vector<Tensor<float>>& grads, double lr) {
  if (grads.size() != params.size()) {
    throw ContractError("gradient list does not match the parameter set");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = params.tensors[i];
    const Tensor<float>& g = grads[i];
    if (g.shape != p.shape) {
      throw ContractError("gradient shape mismatch for " + params.names[i]);
    }
    for (std::size_t e = 0; e < p.numel(); ++e) {
      const double gd = g.data[e];
      const double m = b1_ * m_[i].data[e] + (1.0 - b1_) * gd;
      const double v = b2_ * v_[i].data[e] + (1.0 - b2_) * gd * gd;
      m_[i].data[e] = static_cast<float>(m);
      v_[i].data[e] = static_cast<float>(v);
      p.data[e] = static_cast<float>(p.data[e] -
                                     lr * (m / bc1) / (std::sqrt(v / bc2) + eps_));
    }
  }
}

ParamSet Adam::state(const ParamSet& params) const {
  ParamSet out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.add("opt.m." + params.names[i], m_[i]);
    out.add("opt.v." + params.names[i], v_[i]);
  }
  Tensor<float> step({1});
  step.data[0] = static_cast<float>(t_);  // exact for desk-scale step counts
  out.add("opt.step", std::move(step));
  return out;
}

Adam Adam::from_state(const ParamSet& params, const ParamSet& state) {
  Adam a(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<float>& m = state.at("opt.m." + params.names[i]);
    const Tensor<float>& v = state.at("opt.v." + params.names[i]);
    if (m.shape != params.tensors[i].shape || v.shape != params.tensors[i].shape) {
      throw ContractError("optimizer state shape mismatch for " + params.names[i]);
    }
    a.m_[i] = m;
    a.v_[i] = v;
  }
  a.t_ = static_cast<int>(std::lround(state.at("opt.step").data[0]));
  if (a.t_ < 0) throw ContractError("optimizer state has a negative step count");
  return a;
}

ForwardInputs make_inputs(const SceneSample& s, const ModelConfig& cfg) {
  if (s.image.rank() != 3 || s.image.shape[0] != 3) {
    throw ContractError("scene image must be [3 x H x W]");
  }
  const int h = s.image.shape[1], w = s.image.shape[2];
  ForwardInputs in;
  in.image = s.image;
  if (cfg.use_radar) {
    const ProjectionResult proj =
        project_points(s.cloud, default_intrinsics(h, w), h, w, cfg.depth_cap);
    in.radar_image = proj.image;
    in.cloud = s.cloud;
    in.regions = partition_regions(proj.kept, w);
  } else {
    in.radar_image = Tensor<float>({3, h, w});
  }
  if (cfg.use_text) {
    in.text = embed_description(parse_description(s.text, cfg.regional_rtl), cfg.embed_dim);
  }
  return in;
}

SceneSample flip_scene(const SceneSample& s) {
  if (s.image.rank() != 3 || s.dense.rank() != 2) {
    throw ContractError("flip_scene needs a fully populated sample");
  }
  const int h = s.image.shape[1], w = s.image.shape[2];
  SceneSample out;
  out.weather = s.weather;
  out.image = Tensor<float>(s.image.shape);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) out.image.at3(ch, r, c) = s.image.at3(ch, r, w - 1 - c);
    }
  }
  out.dense = Tensor<float>(s.dense.shape);
  out.sparse = Tensor<float>(s.sparse.shape);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      out.dense.at2(r, c) = s.dense.at2(r, w - 1 - c);
      out.sparse.at2(r, c) = s.sparse.at2(r, w - 1 - c);
    }
  }
  // mirror pixel u maps to w-1-u: with u = fx*x/z + cx and 2*cx = w this is
  // exactly x -> -x - z/fx
  const Intrinsics k = default_intrinsics(h, w);
  out.cloud = s.cloud;
  for (RadarPoint& pt : out.cloud) {
    pt.x = static_cast<float>(-static_cast<double>(pt.x) - static_cast<double>(pt.z) / k.fx);
  }
  // paragraphs 2..5 run left to right; mirroring reverses them
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < s.text.size()) {
    std::size_t end = s.text.find('\n', pos);
    if (end == std::string::npos) end = s.text.size();
    if (end > pos) lines.push_back(s.text.substr(pos, end - pos));
    pos = end + 1;
  }
  if (lines.size() != 5) {
    throw ContractError("flip_scene expects a five-paragraph description, got " +
                        std::to_string(lines.size()) + " lines");
  }
  out.text = lines[0] + "\n" + lines[4] + "\n" + lines[3] + "\n" + lines[2] + "\n" + lines[1] +
             "\n";
  return out;
}

namespace {

struct SampleLossValues {
  double depth = 0, cls = 0, total = 0;
};

// Build the graph for one sample, returning the loss values and, when
// `grads` is given, accumulating scaled parameter gradients into it.
SampleLossValues run_sample(const RunConfig& cfg, const ParamSet& params, const SceneSample& s,
                            std::vector<Tensor<float>>* grads, double grad_scale) {
  Tape<float> t;
  const ForwardResult<float> out =
      forward_graph(t, cfg.model, params, make_inputs(s, cfg.model), grads != nullptr);
  const Var dterm = loss_depth(t, out.depth, s.dense, s.sparse);
  const Var cterm = cfg.model.use_text ? loss_cls(t, out.logits, s.weather) : -1;
  const Var tot = total_loss(t, dterm, cterm, {cfg.optim.w_depth, cfg.optim.w_cls});
  SampleLossValues lv;
  lv.depth = t.value(dterm).data[0];
  lv.cls = cterm >= 0 ? t.value(cterm).data[0] : 0.0;
  lv.total = t.value(tot).data[0];
  if (grads) {
    t.backward(tot);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor<float> g = t.grad(out.param_vars[i]);
      for (std::size_t e = 0; e < g.numel(); ++e) {
        (*grads)[i].data[e] += static_cast<float>(g.data[e] * grad_scale);
      }
    }
  }
  return lv;
}

}  // namespace

TrainResult train_model(const RunConfig& cfg, const std::vector<SceneSample>& train,
                        const std::vector<SceneSample>& val, const ParamSet* resume_params,
                        const ParamSet* resume_opt, int stop_after) {
  validate_run_config(cfg);
  if (train.empty()) throw ContractError("training split is empty");
  const int end_step =
      stop_after > 0 ? std::min(stop_after, cfg.optim.steps) : cfg.optim.steps;
  if ((resume_params == nullptr) != (resume_opt == nullptr)) {
    throw ContractError("resume needs both weights and optimizer state");
  }

  ParamSet params = resume_params ? *resume_params : build_params(cfg.model, Rng::derive(cfg.seed, kInitStream));
  Adam adam = resume_opt ? Adam::from_state(params, *resume_opt) : Adam(params);
  const int start = adam.steps_taken();
  if (start >= end_step) {
    throw ContractError("checkpoint already reached " + std::to_string(start) + " of " +
                        std::to_string(end_step) + " steps");
  }

  auto mean_val_loss = [&](const ParamSet& ps) {
    double acc = 0;
    for (const SceneSample& s : val) acc += run_sample(cfg, ps, s, nullptr, 0).total;
    return acc / static_cast<double>(val.size());
  };

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();
  const int batch = cfg.optim.batch_size;
  std::vector<Tensor<float>> grads;
  grads.reserve(params.size());
  for (const auto& t : params.tensors) grads.emplace_back(t.shape);

  for (int step = start; step < end_step; ++step) {
    for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), 0.f);
    // per-step substream so an interrupted-and-resumed run replays the same
    // batches as an uninterrupted one
    Rng srng(Rng::derive(Rng::derive(cfg.seed, kBatchStream), static_cast<std::uint64_t>(step)));
    double bd = 0, bc = 0, bt = 0;
    for (int j = 0; j < batch; ++j) {
      const std::size_t idx = srng.uniform_int(train.size());
      const bool flip = cfg.optim.augment && srng.uniform() < 0.5;
      const SceneSample* sp = &train[idx];
      SceneSample flipped;
      if (flip) {
        flipped = flip_scene(train[idx]);
        sp = &flipped;
      }
      const SampleLossValues lv = run_sample(cfg, params, *sp, &grads, 1.0 / batch);
      if (!std::isfinite(lv.total)) {
        throw ContractError("training diverged (non-finite loss) at step " +
                            std::to_string(step));
      }
      bd += lv.depth;
      bc += lv.cls;
      bt += lv.total;
    }
    const double lr = poly_lr(cfg.optim.base_lr, step, cfg.optim.steps, cfg.optim.power);
    adam.step(params, grads, lr);
    res.log.push_back({step, lr, bd / batch, bc / batch, bt / batch});

    const bool last = step + 1 == end_step;
    const bool scheduled = cfg.optim.val_every > 0 && (step + 1) % cfg.optim.val_every == 0;
    if (!val.empty() && (scheduled || last)) {
      const double vl = mean_val_loss(params);
      if (vl < res.best_val_loss) {
        res.best_val_loss = vl;
        res.best_val_step = step + 1;
        res.best_params = params;
      }
    }
  }
  res.params = params;
  res.opt_state = adam.state(params);
  if (res.best_val_step < 0) {  // no validation split: best = final
    res.best_params = res.params;
    res.best_val_step = end_step;
    res.best_val_loss = res.log.empty() ? 0.0 : res.log.back().loss_total;
  }
  return res;
}

Prediction predict(const ModelConfig& cfg, const ParamSet& params, const SceneSample& s) {
  Tape<float> t;
  const ForwardResult<float> out = forward_graph(t, cfg, params, make_inputs(s, cfg), false);
  Prediction p;
  p.depth = t.value(out.depth);
  if (out.logits >= 0) p.logits = t.value(out.logits);
  return p;
}

namespace {

std::vector<EvalRow> eval_rows_from_preds(const std::vector<SceneSample>& scenes,
                                          const std::vector<Tensor<float>>& preds,
                                          const std::vector<double>& caps,
                                          const std::vector<std::string>& subsets,
                                          bool include_sparse) {
  if (scenes.empty()) throw ContractError("evaluation needs at least one scene");
  if (caps.empty() || subsets.empty()) throw ContractError("caps and subsets must be non-empty");
  auto in_subset = [](const std::string& subset, Weather w) {
    if (subset == "all") return true;
    if (subset == "normal") return w == Weather::kNormal;
    if (subset == "rainy") return w == Weather::kRainy;
    if (subset == "night") return w == Weather::kNight;
    throw ContractError("unknown eval subset '" + subset + "'");
  };
  std::vector<EvalRow> rows;
  auto emit = [&](bool sparse) {
    for (const double cap : caps) {
      for (const std::string& subset : subsets) {
        MetricsAccum acc;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
          if (!in_subset(subset, scenes[i].weather)) continue;
          acc.add(preds[i], sparse ? scenes[i].sparse : scenes[i].dense, cap);
        }
        rows.push_back({sparse ? subset + "_sparse" : subset, cap, acc.finalize()});
      }
    }
  };
  emit(false);
  if (include_sparse) emit(true);
  return rows;
}

}  // namespace

std::vector<EvalRow> evaluate_model(const ModelConfig& cfg, const ParamSet& params,
                                    const std::vector<SceneSample>& scenes,
                                    const std::vector<double>& caps,
                                    const std::vector<std::string>& subsets,
                                    bool include_sparse) {
  if (scenes.empty()) throw ContractError("evaluation needs at least one scene");
  if (cfg.use_text) {
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      if (scenes[i].text.empty()) {
        throw ContractError("modality mismatch: the checkpoint expects text descriptions but "
                            "dataset scene " + std::to_string(i) + " has none");
      }
    }
  }
  if (cfg.use_radar) {
    bool any = false;
    for (const SceneSample& s : scenes) any = any || !s.cloud.empty();
    if (!any) {
      throw ContractError(
          "modality mismatch: the checkpoint expects radar returns but the dataset has none");
    }
  }
  std::vector<Tensor<float>> preds;
  preds.reserve(scenes.size());
  for (const SceneSample& s : scenes) preds.push_back(predict(cfg, params, s).depth);
  return eval_rows_from_preds(scenes, preds, caps, subsets, include_sparse);
}

std::vector<EvalRow> evaluate_oracle(const std::vector<SceneSample>& scenes,
                                     const std::vector<double>& caps,
                                     const std::vector<std::string>& subsets,
                                     bool include_sparse) {
  std::vector<Tensor<float>> preds;
  preds.reserve(scenes.size());
  for (const SceneSample& s : scenes) preds.push_back(s.dense);
  return eval_rows_from_preds(scenes, preds, caps, subsets, include_sparse);
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "step,lr,loss_depth,loss_cls,loss_total\n";
  for (const TrainLogRow& r : rows) {
    out += std::to_string(r.step) + "," + fmt_double(r.lr) + "," + fmt_double(r.loss_depth) +
           "," + fmt_double(r.loss_cls) + "," + fmt_double(r.loss_total) + "\n";
  }
  return out;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const EvalRow& r : rows) out += metrics_csv_row(r.subset, r.cap, r.metrics) + "\n";
  return out;
}

void write_dataset(const std::string& dir, const GenParams& gen, int n_train, int n_val,
                   int n_test, const std::array<double, 3>& mix) {
  validate_gen_params(gen);
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw ContractError("empty split: every split needs at least one scene");
  }
  double mix_sum = 0;
  for (double m : mix) {
    if (m < 0) throw ContractError("weather mix fractions must be non-negative");
    mix_sum += m;
  }
  if (mix_sum <= 0) throw ContractError("weather mix must have positive mass");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scenes");
  Rng mix_rng(Rng::derive(gen.seed, kMixStream));
  std::vector<ManifestEntry> entries;
  const int total = n_train + n_val + n_test;
  for (int i = 0; i < total; ++i) {
    const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    const double r = mix_rng.uniform() * mix_sum;
    const Weather wea =
        r < mix[0] ? Weather::kNormal : (r < mix[0] + mix[1] ? Weather::kRainy : Weather::kNight);
    const SceneSample s = generate_scene(gen.seed + static_cast<std::uint64_t>(i), gen, wea);
    char name[48];
    std::snprintf(name, sizeof name, "scenes/scene_%06d.bin", i);
    save_scene(s, (fs::path(dir) / name).string());
    entries.push_back({name, split});
  }
  save_manifest(entries, (fs::path(dir) / "manifest.tsv").string());
}

DatasetSplits load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::vector<ManifestEntry> entries =
      load_manifest((fs::path(dir) / "manifest.tsv").string());
  DatasetSplits out;
  for (const ManifestEntry& e : entries) {
    SceneSample s = load_scene((fs::path(dir) / e.path).string());
    if (e.split == "train") {
      out.train.push_back(std::move(s));
    } else if (e.split == "val") {
      out.val.push_back(std::move(s));
    } else if (e.split == "test") {
      out.test.push_back(std::move(s));
    } else {
      throw ContractError("unknown split '" + e.split + "' in manifest");
    }
  }
  return out;
}

void save_checkpoint_dir(const std::string& dir, const std::string& stem, const RunConfig& cfg,
                         const ParamSet& params, const ParamSet* opt_state) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_checkpoint(params, (fs::path(dir) / (stem + ".json")).string(),
                  (fs::path(dir) / (stem + ".bin")).string());
  if (opt_state) {
    save_checkpoint(*opt_state, (fs::path(dir) / (stem + "_opt.json")).string(),
                    (fs::path(dir) / (stem + "_opt.bin")).string());
  }
  save_run_config(cfg, (fs::path(dir) / "config.json").string());
}

ParamSet load_checkpoint_params(const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  return load_checkpoint((fs::path(dir) / (stem + ".json")).string(),
                         (fs::path(dir) / (stem + ".bin")).string());
}

bool checkpoint_exists(const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  return fs::exists(fs::path(dir) / (stem + ".json")) &&
         fs::exists(fs::path(dir) / (stem + ".bin"));
}

}  // namespace tride
