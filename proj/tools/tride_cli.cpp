// Command-line workbench: dataset generation, training, evaluation, ablation
// sweeps, and gradient audits, all reproducible from (config file, seed).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tride/checkpoint.hpp"
#include "tride/gradcheck_suites.hpp"
#include "tride/train.hpp"

namespace fs = std::filesystem;
using namespace tride;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const std::string& tok : split_commas(s)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ContractError(std::string(what) + ": cannot parse '" + tok + "' as a number");
    }
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& body) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing", 0);
  f << body;
  if (!f) throw FormatError("failed writing '" + path + "'", 0);
}

// ---- gen-data ----

struct GenDataArgs {
  std::string config, out, mix = "0.7,0.15,0.15";
  int n_train = 64, n_val = 16, n_test = 20;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int run_gen_data(const GenDataArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed_set) cfg.gen.seed = a.seed;
  const std::vector<double> mix = parse_doubles(a.mix, "--mix");
  if (mix.size() != 3) throw ContractError("--mix needs three fractions: normal,rainy,night");
  write_dataset(a.out, cfg.gen, a.n_train, a.n_val, a.n_test, {mix[0], mix[1], mix[2]});
  std::printf("wrote %d scenes (%d train / %d val / %d test) to %s\n",
              a.n_train + a.n_val + a.n_test, a.n_train, a.n_val, a.n_test, a.out.c_str());
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string config, data, out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool resume = false;
  int stop_after = 0;
};

int run_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed_set) cfg.seed = a.seed;
  if (!a.out.empty()) cfg.out_dir = a.out;
  validate_run_config(cfg);

  const DatasetSplits ds = load_dataset(a.data);
  TrainResult res;
  bool resumed = false;
  if (a.resume) {
    if (!checkpoint_exists(cfg.out_dir, "final")) {
      throw ContractError("--resume: no final checkpoint under '" + cfg.out_dir + "'");
    }
    const ParamSet p = load_checkpoint_params(cfg.out_dir, "final");
    const ParamSet o = load_checkpoint_params(cfg.out_dir, "final_opt");
    res = train_model(cfg, ds.train, ds.val, &p, &o, a.stop_after);
    resumed = true;
  } else {
    res = train_model(cfg, ds.train, ds.val, nullptr, nullptr, a.stop_after);
  }

  // On resume the log continues the existing CSV's step count.
  const std::string log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
  std::string csv = train_log_csv(res.log);
  if (resumed && fs::exists(log_path)) {
    std::ifstream in(log_path, std::ios::binary);
    std::string prior((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    csv = prior + csv.substr(csv.find('\n') + 1);
  }
  write_text_file(log_path, csv);

  save_checkpoint_dir(cfg.out_dir, "final", cfg, res.params, &res.opt_state);
  save_checkpoint_dir(cfg.out_dir, "best", cfg, res.best_params, nullptr);
  if (!res.log.empty()) {
    const TrainLogRow& r = res.log.back();
    std::printf("trained to step %d: loss_depth %.4f loss_cls %.4f loss_total %.4f\n",
                r.step + 1, r.loss_depth, r.loss_cls, r.loss_total);
  }
  std::printf("best val loss %.4f at step %d; checkpoints in %s\n", res.best_val_loss,
              res.best_val_step, cfg.out_dir.c_str());
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string ckpt, stem = "best", data, split = "test", out;
  std::string caps = "50,70,80", subsets = "all,normal,rainy,night";
  bool include_sparse = false;
  bool oracle = false;
};

int run_eval(const EvalArgs& a) {
  if (!a.oracle && a.ckpt.empty()) throw ContractError("--ckpt is required unless --oracle");
  const DatasetSplits ds = load_dataset(a.data);
  const std::vector<SceneSample>* scenes = nullptr;
  if (a.split == "train") scenes = &ds.train;
  else if (a.split == "val") scenes = &ds.val;
  else if (a.split == "test") scenes = &ds.test;
  else throw ContractError("--split must be train, val, or test");

  const std::vector<double> caps = parse_doubles(a.caps, "--caps");
  const std::vector<std::string> subsets = split_commas(a.subsets);

  std::vector<EvalRow> rows;
  if (a.oracle) {
    rows = evaluate_oracle(*scenes, caps, subsets, a.include_sparse);
  } else {
    const RunConfig cfg = load_run_config((fs::path(a.ckpt) / "config.json").string());
    const ParamSet params = load_checkpoint_params(a.ckpt, a.stem);
    rows = evaluate_model(cfg.model, params, *scenes, caps, subsets, a.include_sparse);
  }
  const std::string csv = eval_csv(rows);
  if (a.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text_file(a.out, csv);
    std::printf("wrote %zu rows to %s\n", rows.size(), a.out.c_str());
  }
  return 0;
}

// ---- ablate ----

struct AblateArgs {
  std::string config, grid, data, out;
  int seeds = 5;
};

struct AblationArm {
  std::string id;
  ModelConfig model;
};

ModelConfig apply_modality(ModelConfig m, const std::string& spec) {
  m.use_image = false;
  m.use_radar = false;
  m.use_text = false;
  std::string part;
  for (std::size_t i = 0; i <= spec.size(); ++i) {
    if (i == spec.size() || spec[i] == '+') {
      if (part == "I") m.use_image = true;
      else if (part == "R") m.use_radar = true;
      else if (part == "T") m.use_text = true;
      else throw ContractError("unknown modality token '" + part + "' in '" + spec + "'");
      part.clear();
    } else {
      part += spec[i];
    }
  }
  return m;
}

std::vector<AblationArm> expand_grid(const nlohmann::json& j, const RunConfig& base) {
  if (!j.is_object()) throw ContractError("ablation grid must be a JSON object");
  static const std::set<std::string> known = {"modalities", "fusions", "attention_levels",
                                             "widths"};
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!known.count(k)) throw ContractError("unknown ablation grid key '" + k + "'");
  }
  std::vector<std::string> modalities = j.value("modalities", std::vector<std::string>{"I+R+T"});
  std::vector<std::string> fusions =
      j.value("fusions", std::vector<std::string>{fusion_name(base.model.fusion)});
  std::vector<std::array<int, 2>> levels =
      j.value("attention_levels",
              std::vector<std::array<int, 2>>{{base.model.ga_level, base.model.ra_level}});
  std::vector<std::array<int, 2>> widths =
      j.value("widths", std::vector<std::array<int, 2>>{{base.model.c_t, base.model.c_rp}});
  if (modalities.empty() || fusions.empty() || levels.empty() || widths.empty()) {
    throw ContractError("ablation grid must form a non-empty cartesian product");
  }

  std::vector<AblationArm> arms;
  std::set<std::string> seen;
  for (const std::string& mod : modalities) {
    for (const std::string& fus : fusions) {
      for (const auto& lv : levels) {
        for (const auto& wd : widths) {
          ModelConfig m = apply_modality(base.model, mod);
          m.fusion = fusion_from_name(fus);
          m.ga_level = lv[0];
          m.ra_level = lv[1];
          m.c_t = wd[0];
          m.c_rp = wd[1];
          const std::string id = mod + "/" + fus + "/ga" + std::to_string(lv[0]) + "ra" +
                                 std::to_string(lv[1]) + "/ct" + std::to_string(wd[0]) + "rp" +
                                 std::to_string(wd[1]);
          if (!seen.insert(id).second) {
            std::fprintf(stderr, "warning: duplicate ablation arm '%s' skipped\n", id.c_str());
            continue;
          }
          arms.push_back({id, m});
        }
      }
    }
  }
  return arms;
}

int run_ablate(const AblateArgs& a) {
  RunConfig base = load_run_config(a.config);
  if (!a.out.empty()) base.out_dir = a.out;
  nlohmann::json grid_json;
  {
    std::ifstream f(a.grid);
    if (!f) throw FormatError("cannot open ablation grid '" + a.grid + "'", 0);
    try {
      grid_json = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("ablation grid '" + a.grid + "': " + e.what(), 0);
    }
  }
  const std::vector<AblationArm> arms = expand_grid(grid_json, base);
  if (a.seeds <= 0) throw ContractError("--seeds must be positive");
  const DatasetSplits ds = load_dataset(a.data);

  struct Row {
    std::string arm, seed, metric;
    double value;
  };
  std::vector<Row> rows;
  // per arm -> metric -> per-seed values, for the median rows
  for (const AblationArm& arm : arms) {
    std::vector<std::pair<std::string, std::vector<double>>> collected;
    auto record = [&](const std::string& seed, const std::string& metric, double v) {
      rows.push_back({arm.id, seed, metric, v});
      if (seed != "median") {
        for (auto& [name, vals] : collected) {
          if (name == metric) {
            vals.push_back(v);
            return;
          }
        }
        collected.push_back({metric, {v}});
      }
    };
    for (int s = 0; s < a.seeds; ++s) {
      RunConfig cfg = base;
      cfg.model = arm.model;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      const std::string seed_str = std::to_string(cfg.seed);
      try {
        validate_run_config(cfg);
        const TrainResult res = train_model(cfg, ds.train, ds.val);
        const std::vector<EvalRow> ev = evaluate_model(
            cfg.model, res.params, ds.test, {80.0}, {"all", "normal", "rainy", "night"});
        record(seed_str, "mae_all_80", ev[0].metrics.mae);
        record(seed_str, "rmse_all_80", ev[0].metrics.rmse);
        record(seed_str, "d1_all_80", ev[0].metrics.d1);
        record(seed_str, "mae_normal_80", ev[1].metrics.mae);
        const double rn = static_cast<double>(ev[2].metrics.n_pixels);
        const double nn = static_cast<double>(ev[3].metrics.n_pixels);
        double adverse_abs = 0;  // empty subsets report NaN; skip their term
        if (rn > 0) adverse_abs += ev[2].metrics.mae * rn;
        if (nn > 0) adverse_abs += ev[3].metrics.mae * nn;
        if (rn + nn > 0) record(seed_str, "mae_adverse_80", adverse_abs / (rn + nn));
        if (cfg.model.use_text) {
          int ok = 0;
          for (const SceneSample& sc : ds.test) {
            const Prediction pr = predict(cfg.model, res.params, sc);
            int arg = 0;
            for (int k = 1; k < 3; ++k) {
              if (pr.logits.data[k] > pr.logits.data[arg]) arg = k;
            }
            ok += arg == static_cast<int>(sc.weather);
          }
          record(seed_str, "weather_acc", static_cast<double>(ok) / ds.test.size());
        }
        record(seed_str, "final_loss_total", res.log.back().loss_total);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "arm '%s' seed %s failed: %s\n", arm.id.c_str(), seed_str.c_str(),
                     e.what());
        record(seed_str, "failed", 1.0);
      }
    }
    for (auto& [metric, vals] : collected) {
      if (metric == "failed") continue;
      std::sort(vals.begin(), vals.end());
      const std::size_t n = vals.size();
      const double med = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
      record("median", metric, med);
    }
  }

  std::string csv = "arm,seed,metric,value\n";
  char buf[64];
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g", r.value);
    csv += r.arm + "," + r.seed + "," + r.metric + "," + buf + "\n";
  }
  const std::string out_path =
      a.out.empty() ? (fs::path(base.out_dir) / "ablation.csv").string() : a.out;
  write_text_file(out_path, csv);
  std::printf("%zu arms x %d seeds -> %zu rows in %s\n", arms.size(), a.seeds, rows.size(),
              out_path.c_str());
  for (const Row& r : rows) {
    if (r.seed == "median") {
      std::printf("median %-28s %-16s %.4f\n", r.arm.c_str(), r.metric.c_str(), r.value);
    }
  }
  return 0;
}

// ---- gradcheck ----

int run_gradcheck(const std::string& scope) {
  std::vector<GradCheckEntry> entries;
  if (scope == "primitives" || scope == "all") {
    for (auto& e : gradcheck_primitives()) entries.push_back(std::move(e));
  }
  if (scope == "blocks" || scope == "all") {
    for (auto& e : gradcheck_blocks()) entries.push_back(std::move(e));
  }
  if (scope == "model" || scope == "all") entries.push_back(gradcheck_full_model());
  if (entries.empty()) {
    throw ContractError("--scope must be primitives, blocks, model, or all");
  }
  int failures = 0;
  for (const GradCheckEntry& e : entries) {
    const bool ok = e.max_rel_err < kGradCheckTol;
    failures += !ok;
    std::printf("%s %-24s max_rel_err=%.3e\n", ok ? "PASS" : "FAIL", e.name.c_str(),
                e.max_rel_err);
  }
  std::printf("%zu checks, %d failure%s (tolerance %.0e)\n", entries.size(), failures,
              failures == 1 ? "" : "s", kGradCheckTol);
  return failures ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal radar-camera-text depth estimation workbench"};
  app.require_subcommand(1);
  int rc = 0;

  GenDataArgs ga;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic scene dataset");
  gen->add_option("--config", ga.config, "Run config JSON")->required();
  gen->add_option("--out", ga.out, "Dataset directory")->required();
  gen->add_option("--n-train", ga.n_train, "Training scenes");
  gen->add_option("--n-val", ga.n_val, "Validation scenes");
  gen->add_option("--n-test", ga.n_test, "Test scenes");
  gen->add_option("--mix", ga.mix, "Weather mix normal,rainy,night");
  gen->add_option("--seed", ga.seed, "Override the generator seed")
      ->each([&ga](const std::string&) { ga.seed_set = true; });
  gen->callback([&] { rc = run_gen_data(ga); });

  TrainArgs ta;
  CLI::App* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--config", ta.config, "Run config JSON")->required();
  tr->add_option("--data", ta.data, "Dataset directory")->required();
  tr->add_option("--out", ta.out, "Override the output directory");
  tr->add_option("--seed", ta.seed, "Override the training seed")
      ->each([&ta](const std::string&) { ta.seed_set = true; });
  tr->add_flag("--resume", ta.resume, "Continue from the final checkpoint in the output dir");
  tr->add_option("--stop-after", ta.stop_after,
                 "Pause after this absolute step; finish later with --resume");
  tr->callback([&] { rc = run_train(ta); });

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev->add_option("--ckpt", ea.ckpt, "Checkpoint directory (from train)");
  ev->add_option("--stem", ea.stem, "Checkpoint stem: best or final");
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--split", ea.split, "Dataset split: train, val, or test");
  ev->add_option("--caps", ea.caps, "Distance caps in meters");
  ev->add_option("--subsets", ea.subsets, "Weather subsets");
  ev->add_option("--out", ea.out, "Write CSV here instead of stdout");
  ev->add_flag("--include-sparse", ea.include_sparse, "Also score on the sparse depth support");
  ev->add_flag("--oracle", ea.oracle, "Score the ground truth against itself");
  ev->callback([&] { rc = run_eval(ea); });

  AblateArgs aa;
  CLI::App* ab = app.add_subcommand("ablate", "Train and evaluate an ablation grid");
  ab->add_option("--config", aa.config, "Base run config JSON")->required();
  ab->add_option("--grid", aa.grid, "Ablation grid JSON")->required();
  ab->add_option("--data", aa.data, "Dataset directory")->required();
  ab->add_option("--seeds", aa.seeds, "Seeds per arm");
  ab->add_option("--out", aa.out, "Output CSV path");
  ab->callback([&] { rc = run_ablate(aa); });

  std::string scope = "all";
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  gc->add_option("--scope", scope, "primitives, blocks, model, or all");
  gc->callback([&] { rc = run_gradcheck(scope); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
