#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tride/forward.hpp"
#include "tride/losses.hpp"
#include "tride/metrics.hpp"
#include "tride/synth.hpp"

namespace tride {

// Optimizer schedule: Adam under a polynomial learning-rate decay.
struct OptimSettings {
  double base_lr = 1e-4;
  double power = 0.9;
  int steps = 1000;
  int batch_size = 8;
  double w_depth = 1.0;
  double w_cls = 1.0;
  int val_every = 100;  // validation cadence in steps; 0 = final step only
  bool augment = true;  // random horizontal flips during training
};

// One training/evaluation run, serializable to strict JSON.
struct RunConfig {
  ModelConfig model;
  GenParams gen;
  OptimSettings optim;
  std::uint64_t seed = 1;
  std::string out_dir = "run_out";
};

void validate_run_config(const RunConfig& cfg);

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);  // unknown keys rejected
void save_run_config(const RunConfig& cfg, const std::string& path);
RunConfig load_run_config(const std::string& path);

// base_lr * (1 - step/total)^power, defined for 0 <= step < total.
double poly_lr(double base_lr, int step, int total_steps, double power);

// Adam with bias correction; moment tensors parallel the ParamSet order.
class Adam {
 public:
  explicit Adam(const ParamSet& params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(ParamSet& params, const std::vector<Tensor<float>>& grads, double lr);
  int steps_taken() const { return t_; }

  // Optimizer state rides in a ParamSet ("opt." names) for checkpointing.
  ParamSet state(const ParamSet& params) const;
  static Adam from_state(const ParamSet& params, const ParamSet& state);

 private:
  std::vector<Tensor<float>> m_, v_;
  double b1_, b2_, eps_;
  int t_ = 0;
};

// Assemble the per-sample forward inputs: radar projection, region
// partition, and text embedding, as configured.
ForwardInputs make_inputs(const SceneSample& s, const ModelConfig& cfg);

// Horizontal mirror augmentation. Image, depth maps and radar x are
// mirrored; the regional description paragraphs swap L<->R and ML<->MR.
SceneSample flip_scene(const SceneSample& s);

struct TrainLogRow {
  int step = 0;
  double lr = 0, loss_depth = 0, loss_cls = 0, loss_total = 0;
};

struct TrainResult {
  ParamSet params;       // after the final step
  ParamSet best_params;  // lowest validation loss
  ParamSet opt_state;    // Adam moments + step, for resuming
  std::vector<TrainLogRow> log;
  double best_val_loss = 0;
  int best_val_step = -1;
};

// Run the training loop. Resuming passes the saved weights and optimizer
// state; the loop continues at the recorded step and finishes at
// cfg.optim.steps (or stop_after, when positive, without touching the lr
// schedule — an interrupted run resumed later matches an uninterrupted one
// bitwise). Non-finite losses abort with the offending step.
TrainResult train_model(const RunConfig& cfg, const std::vector<SceneSample>& train,
                        const std::vector<SceneSample>& val,
                        const ParamSet* resume_params = nullptr,
                        const ParamSet* resume_opt = nullptr, int stop_after = 0);

struct Prediction {
  Tensor<float> depth;   // [H x W]
  Tensor<float> logits;  // [3]; empty without a text branch
};

Prediction predict(const ModelConfig& cfg, const ParamSet& params, const SceneSample& s);

struct EvalRow {
  std::string subset;
  double cap = 0;
  Metrics metrics;
};

// Metrics per (cap x subset); subsets select scenes by weather label.
// include_sparse adds "<subset>_sparse" rows scored on the D_s support.
// Throws ContractError when the model expects a modality the dataset lacks.
std::vector<EvalRow> evaluate_model(const ModelConfig& cfg, const ParamSet& params,
                                    const std::vector<SceneSample>& scenes,
                                    const std::vector<double>& caps,
                                    const std::vector<std::string>& subsets,
                                    bool include_sparse = false);

// Perfect-knowledge baseline: scores the ground truth against itself, giving
// the analytically perfect report (zero errors, all deltas 1).
std::vector<EvalRow> evaluate_oracle(const std::vector<SceneSample>& scenes,
                                     const std::vector<double>& caps,
                                     const std::vector<std::string>& subsets,
                                     bool include_sparse = false);

std::string train_log_csv(const std::vector<TrainLogRow>& rows);
std::string eval_csv(const std::vector<EvalRow>& rows);

// ---- dataset on disk ----

struct DatasetSplits {
  std::vector<SceneSample> train, val, test;
};

// Scene files plus manifest under `dir`. Scene i uses seed gen.seed + i;
// weather is drawn from the mix (normal, rainy, night fractions).
void write_dataset(const std::string& dir, const GenParams& gen, int n_train, int n_val,
                   int n_test, const std::array<double, 3>& mix);

DatasetSplits load_dataset(const std::string& dir);

// ---- checkpoint directory layout ----

// Weights in <dir>/<stem>.json + <stem>.bin, optimizer state (when given) in
// <stem>_opt.json/.bin, run config alongside as config.json.
void save_checkpoint_dir(const std::string& dir, const std::string& stem, const RunConfig& cfg,
                         const ParamSet& params, const ParamSet* opt_state = nullptr);
ParamSet load_checkpoint_params(const std::string& dir, const std::string& stem);
bool checkpoint_exists(const std::string& dir, const std::string& stem);

}  // namespace tride
