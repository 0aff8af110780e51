#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "tride/train.hpp"

using namespace tride;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(p);
  return p.string();
}

bool same_params(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.names[i] != b.names[i] || a.tensors[i].shape != b.tensors[i].shape) return false;
    for (std::size_t e = 0; e < a.tensors[i].numel(); ++e) {
      if (a.tensors[i].data[e] != b.tensors[i].data[e]) return false;
    }
  }
  return true;
}

// small everything: fast to train, still exercises every branch
RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.model.base_c = 2;
  cfg.model.c_t = 8;
  cfg.model.c_rp = 8;
  cfg.model.embed_dim = 8;
  cfg.gen.h = 32;
  cfg.gen.w = 64;
  cfg.gen.radar_points = 12;
  cfg.optim.base_lr = 3e-3;
  cfg.optim.steps = 40;
  cfg.optim.batch_size = 2;
  cfg.optim.val_every = 20;
  cfg.seed = 5;
  return cfg;
}

std::vector<SceneSample> make_scenes(const GenParams& gen, std::uint64_t seed0, int n) {
  std::vector<SceneSample> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(generate_scene(seed0 + static_cast<std::uint64_t>(i), gen));
  }
  return out;
}

}  // namespace

TEST_CASE("polynomial learning-rate schedule") {
  CHECK(poly_lr(1e-4, 0, 1000, 0.9) == 1e-4);
  CHECK(poly_lr(2.0, 500, 1000, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(poly_lr(1.0, 900, 1000, 0.9) == doctest::Approx(0.1258925411794167).epsilon(1e-12));
  CHECK(poly_lr(2e-4, 250, 1000, 0.9) ==
        doctest::Approx(0.0001543779013447141).epsilon(1e-12));
  CHECK_THROWS_AS(poly_lr(1e-4, 1000, 1000, 0.9), ContractError);
  CHECK_THROWS_AS(poly_lr(1e-4, -1, 1000, 0.9), ContractError);
  CHECK_THROWS_AS(poly_lr(1e-4, 0, 0, 0.9), ContractError);
}

TEST_CASE("adam steps match the hand-computed update") {
  ParamSet params;
  Tensor<float> p({2});
  p.data = {1.f, -2.f};
  params.add("p", std::move(p));
  Adam adam(params);
  std::vector<Tensor<float>> grads(1, Tensor<float>({2}));
  grads[0].data = {0.5f, -1.f};

  // constant gradient: bias-corrected adam moves ~lr per step from step one
  adam.step(params, grads, 0.1);
  CHECK(params.at("p").data[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params.at("p").data[1] == doctest::Approx(-1.9).epsilon(1e-6));
  adam.step(params, grads, 0.1);
  CHECK(params.at("p").data[0] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(params.at("p").data[1] == doctest::Approx(-1.8).epsilon(1e-6));
  CHECK(adam.steps_taken() == 2);

  SUBCASE("state round-trips and continues identically") {
    const ParamSet state = adam.state(params);
    ParamSet params_b = params;
    Adam resumed = Adam::from_state(params_b, state);
    CHECK(resumed.steps_taken() == 2);
    adam.step(params, grads, 0.05);
    resumed.step(params_b, grads, 0.05);
    CHECK(same_params(params, params_b));
  }

  SUBCASE("shape and size mismatches are rejected") {
    std::vector<Tensor<float>> wrong(1, Tensor<float>({3}));
    CHECK_THROWS_AS(adam.step(params, wrong, 0.1), ContractError);
    CHECK_THROWS_AS(adam.step(params, {}, 0.1), ContractError);
  }
}

TEST_CASE("run config serializes strictly") {
  RunConfig cfg = tiny_run_config();
  cfg.model.fusion = FusionKind::kGated;
  cfg.model.regional_rtl = true;
  cfg.gen.sigma_r = 0.05f;
  cfg.seed = 99;
  cfg.out_dir = "some/dir";

  const nlohmann::json j = run_config_to_json(cfg);
  const RunConfig back = run_config_from_json(j);
  CHECK(run_config_to_json(back) == j);
  CHECK(back.model.fusion == FusionKind::kGated);
  CHECK(back.seed == 99);
  CHECK(back.gen.sigma_r == 0.05f);

  SUBCASE("file round-trip") {
    const std::string path = temp_dir("tride_cfg") + "/config.json";
    save_run_config(cfg, path);
    const RunConfig loaded = load_run_config(path);
    CHECK(run_config_to_json(loaded) == j);
    std::filesystem::remove(path);
  }

  SUBCASE("unknown keys are rejected at every level") {
    nlohmann::json bad = j;
    bad["stepz"] = 3;
    CHECK_THROWS_AS(run_config_from_json(bad), ContractError);
    bad = j;
    bad["model"]["base_chans"] = 4;
    CHECK_THROWS_AS(run_config_from_json(bad), ContractError);
    bad = j;
    bad["gen"]["sigma"] = 0.1;
    CHECK_THROWS_AS(run_config_from_json(bad), ContractError);
    bad = j;
    bad["optim"]["lr"] = 0.1;
    CHECK_THROWS_AS(run_config_from_json(bad), ContractError);
  }

  SUBCASE("missing keys fall back to defaults; invalid values still fail") {
    const RunConfig defaults = run_config_from_json(nlohmann::json::object());
    CHECK(defaults.optim.base_lr == 1e-4);
    CHECK(defaults.optim.batch_size == 8);
    CHECK(defaults.model.base_c == 16);
    nlohmann::json bad = j;
    bad["optim"]["steps"] = 0;
    CHECK_THROWS_AS(run_config_from_json(bad), ContractError);
    bad = j;
    bad["model"]["fusion"] = "glued";
    CHECK_THROWS_AS(run_config_from_json(bad), ContractError);
  }
}

TEST_CASE("forward inputs are assembled per modality") {
  RunConfig cfg = tiny_run_config();
  const SceneSample s = generate_scene(3, cfg.gen);

  const ForwardInputs full = make_inputs(s, cfg.model);
  CHECK(full.image.shape == Shape{3, 32, 64});
  CHECK(full.radar_image.shape == Shape{3, 32, 64});
  CHECK(full.cloud.size() == s.cloud.size());
  CHECK(full.regions.total() > 0);
  CHECK(full.text.dim == cfg.model.embed_dim);

  ModelConfig no_radar = cfg.model;
  no_radar.use_radar = false;
  const ForwardInputs ir = make_inputs(s, no_radar);
  CHECK(ir.cloud.empty());
  for (float v : ir.radar_image.data) CHECK(v == 0.f);

  ModelConfig no_text = cfg.model;
  no_text.use_text = false;
  CHECK(make_inputs(s, no_text).text.dim == 0);
}

TEST_CASE("horizontal flip mirrors every modality consistently") {
  GenParams gen;
  gen.h = 32;
  gen.w = 64;
  gen.sigma_r = 0.f;
  gen.clutter_fraction = 0.f;
  const SceneSample s = generate_scene(8, gen);
  const SceneSample f = flip_scene(s);

  SUBCASE("pixels are mirrored and flipping twice restores the sample") {
    for (int r = 0; r < gen.h; ++r) {
      for (int c = 0; c < gen.w; ++c) {
        CHECK(f.dense.at2(r, c) == s.dense.at2(r, gen.w - 1 - c));
      }
    }
    const SceneSample ff = flip_scene(f);
    CHECK(ff.text == s.text);
    bool image_same = true, x_close = true;
    for (std::size_t i = 0; i < s.image.numel(); ++i) {
      image_same = image_same && ff.image.data[i] == s.image.data[i];
    }
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
      x_close = x_close && std::abs(ff.cloud[i].x - s.cloud[i].x) < 1e-5f;
      x_close = x_close && ff.cloud[i].z == s.cloud[i].z;
    }
    CHECK(image_same);
    CHECK(x_close);
  }

  SUBCASE("regional paragraphs swap left-right") {
    const SceneDescription orig = parse_description(s.text);
    const SceneDescription flip = parse_description(f.text);
    CHECK(flip.general == orig.general);
    CHECK(flip.of(Region::kL) == orig.of(Region::kR));
    CHECK(flip.of(Region::kML) == orig.of(Region::kMR));
    CHECK(flip.of(Region::kMR) == orig.of(Region::kML));
    CHECK(flip.of(Region::kR) == orig.of(Region::kL));
  }

  SUBCASE("projected radar image is the column mirror of the original") {
    const Intrinsics k = default_intrinsics(gen.h, gen.w);
    const Tensor<float> orig = project_points(s.cloud, k, gen.h, gen.w, gen.depth_cap).image;
    const Tensor<float> flip = project_points(f.cloud, k, gen.h, gen.w, gen.depth_cap).image;
    for (int ch = 0; ch < 3; ++ch) {
      for (int r = 0; r < gen.h; ++r) {
        for (int c = 0; c < gen.w; ++c) {
          CHECK(flip.at3(ch, r, c) == orig.at3(ch, r, gen.w - 1 - c));
        }
      }
    }
  }
}

TEST_CASE("datasets write deterministically and load by split") {
  GenParams gen;
  gen.h = 32;
  gen.w = 64;
  gen.radar_points = 8;
  gen.seed = 1000;
  const std::string dir = temp_dir("tride_ds");

  write_dataset(dir, gen, 3, 2, 2, {1.0, 0.0, 0.0});
  const DatasetSplits ds = load_dataset(dir);
  CHECK(ds.train.size() == 3);
  CHECK(ds.val.size() == 2);
  CHECK(ds.test.size() == 2);
  for (const auto& s : ds.train) CHECK(s.weather == Weather::kNormal);
  for (const auto& s : ds.test) CHECK(s.weather == Weather::kNormal);

  SUBCASE("rerun produces identical bytes") {
    const std::string manifest_before =
        detail::read_file_bytes(dir + "/manifest.tsv");
    const std::string scene_before =
        detail::read_file_bytes(dir + "/scenes/scene_000000.bin");
    write_dataset(dir, gen, 3, 2, 2, {1.0, 0.0, 0.0});
    CHECK(detail::read_file_bytes(dir + "/manifest.tsv") == manifest_before);
    CHECK(detail::read_file_bytes(dir + "/scenes/scene_000000.bin") == scene_before);
  }

  SUBCASE("night-only mix and invalid requests") {
    write_dataset(dir, gen, 1, 1, 1, {0.0, 0.0, 1.0});
    const DatasetSplits night = load_dataset(dir);
    CHECK(night.train[0].weather == Weather::kNight);
    CHECK(night.test[0].weather == Weather::kNight);
    CHECK_THROWS_WITH_AS(write_dataset(dir, gen, 0, 1, 1, {1, 0, 0}),
                         doctest::Contains("empty split"), ContractError);
    CHECK_THROWS_AS(write_dataset(dir, gen, 1, 1, 1, {0, 0, 0}), ContractError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("training descends, logs every step, and reruns bitwise") {
  RunConfig cfg = tiny_run_config();
  const std::vector<SceneSample> train = make_scenes(cfg.gen, 100, 3);
  const std::vector<SceneSample> val = make_scenes(cfg.gen, 200, 2);

  const TrainResult a = train_model(cfg, train, val);
  REQUIRE(a.log.size() == static_cast<std::size_t>(cfg.optim.steps));
  CHECK(a.log.front().step == 0);
  CHECK(a.log.back().step == cfg.optim.steps - 1);
  CHECK(a.log.front().lr == cfg.optim.base_lr);

  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += a.log[i].loss_total;
    last += a.log[cfg.optim.steps - 1 - i].loss_total;
  }
  CHECK(last < first);  // descends on average over the run
  CHECK(a.best_val_step > 0);
  CHECK(std::isfinite(a.best_val_loss));

  const TrainResult b = train_model(cfg, train, val);
  CHECK(same_params(a.params, b.params));
  CHECK(train_log_csv(a.log) == train_log_csv(b.log));
}

TEST_CASE("interrupted training resumes to the exact uninterrupted result") {
  RunConfig cfg = tiny_run_config();
  cfg.optim.steps = 14;
  cfg.optim.val_every = 0;
  const std::vector<SceneSample> train = make_scenes(cfg.gen, 100, 2);
  const std::vector<SceneSample> none;

  const TrainResult full = train_model(cfg, train, none);

  RunConfig half = cfg;
  const TrainResult part1 = train_model(half, train, none, nullptr, nullptr, 7);
  CHECK(part1.log.size() == 7);
  // persist through the checkpoint container, as the CLI does
  const std::string dir = temp_dir("tride_resume");
  save_checkpoint_dir(dir, "last", half, part1.params, &part1.opt_state);
  const ParamSet weights = load_checkpoint_params(dir, "last");
  CHECK(same_params(weights, part1.params));

  const TrainResult part2 =
      train_model(half, train, none, &part1.params, &part1.opt_state);
  CHECK(part2.log.front().step == 7);
  CHECK(part2.log.back().step == 13);
  CHECK(same_params(part2.params, full.params));
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite losses abort with the step number") {
  RunConfig cfg = tiny_run_config();
  cfg.optim.steps = 5;
  const std::vector<SceneSample> train = make_scenes(cfg.gen, 100, 2);

  ParamSet poisoned = build_params(cfg.model, 1);
  // the head bias reaches the loss through sigmoid, which propagates NaN
  poisoned.tensors[poisoned.find("dec.head.b")].data[0] =
      std::numeric_limits<float>::quiet_NaN();
  Adam fresh(poisoned);
  const ParamSet opt = fresh.state(poisoned);
  CHECK_THROWS_WITH_AS(train_model(cfg, train, {}, &poisoned, &opt),
                       doctest::Contains("at step 0"), ContractError);
}

TEST_CASE("evaluation rows cover caps by subsets with nested pixel counts") {
  RunConfig cfg = tiny_run_config();
  const ParamSet params = build_params(cfg.model, 11);
  std::vector<SceneSample> scenes;
  scenes.push_back(generate_scene(301, cfg.gen, Weather::kNormal));
  scenes.push_back(generate_scene(302, cfg.gen, Weather::kRainy));
  scenes.push_back(generate_scene(303, cfg.gen, Weather::kNight));
  scenes.push_back(generate_scene(304, cfg.gen, Weather::kNormal));

  const std::vector<double> caps = {50, 70, 80};
  const std::vector<std::string> subsets = {"all", "normal", "rainy", "night"};
  const std::vector<EvalRow> rows = evaluate_model(cfg.model, params, scenes, caps, subsets);
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].subset == "all");
  CHECK(rows[0].cap == 50);
  CHECK(rows[11].subset == "night");
  CHECK(rows[11].cap == 80);

  auto n_of = [&](const std::string& subset, double cap) {
    for (const EvalRow& r : rows) {
      if (r.subset == subset && r.cap == cap) return r.metrics.n_pixels;
    }
    REQUIRE(false);
    return std::size_t(0);
  };
  for (const std::string& subset : subsets) {
    CHECK(n_of(subset, 50) <= n_of(subset, 70));
    CHECK(n_of(subset, 70) <= n_of(subset, 80));
  }
  for (const double cap : caps) {
    CHECK(n_of("normal", cap) + n_of("rainy", cap) + n_of("night", cap) == n_of("all", cap));
  }
  // every dense pixel qualifies at the full cap
  CHECK(n_of("all", 80) == scenes.size() * 32 * 64);

  SUBCASE("sparse rows are appended on request") {
    const std::vector<EvalRow> with_sparse =
        evaluate_model(cfg.model, params, scenes, caps, subsets, true);
    REQUIRE(with_sparse.size() == 24);
    CHECK(with_sparse[12].subset == "all_sparse");
    CHECK(with_sparse[12].metrics.n_pixels < n_of("all", 50));
  }

  SUBCASE("csv shape") {
    const std::string csv = eval_csv(rows);
    CHECK(csv.find("subset,cap_m,n_pixels,mae") == 0);
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 13);  // header + 12 rows
  }

  SUBCASE("unknown subset and empty scene list are rejected") {
    CHECK_THROWS_AS(evaluate_model(cfg.model, params, scenes, caps, {"dusk"}), ContractError);
    CHECK_THROWS_AS(evaluate_model(cfg.model, params, {}, caps, subsets), ContractError);
  }
}

TEST_CASE("checkpoint directories round-trip weights and config") {
  RunConfig cfg = tiny_run_config();
  const ParamSet params = build_params(cfg.model, 21);
  Adam adam(params);
  const ParamSet opt = adam.state(params);
  const std::string dir = temp_dir("tride_ckpt");

  CHECK_FALSE(checkpoint_exists(dir, "best"));
  save_checkpoint_dir(dir, "best", cfg, params, &opt);
  CHECK(checkpoint_exists(dir, "best"));
  CHECK(same_params(load_checkpoint_params(dir, "best"), params));
  CHECK(same_params(load_checkpoint_params(dir, "best_opt"), opt));
  const RunConfig loaded = load_run_config(dir + "/config.json");
  CHECK(run_config_to_json(loaded) == run_config_to_json(cfg));
  std::filesystem::remove_all(dir);
}
