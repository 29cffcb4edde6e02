#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hatsc/model.hpp"
#include "hatsc/tensor.hpp"

namespace hatsc {

// Inverse-square-root learning-rate schedule with linear warmup:
// lr(step) = scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
double lr_at(int64_t step, int d_model, int warmup_steps, double scale);

// Scales every gradient so the global L2 norm is at most max_norm; returns
// the pre-clip norm. max_norm <= 0 disables clipping (norm still returned).
// Throws NumericError when any gradient is non-finite.
double clip_gradients(std::vector<std::pair<std::string, Tensor>>& params, double max_norm);

// Adam with bias correction, applied over a model's parameter registry.
// First and second moments are kept as same-shaped tensors and exposed for
// checkpointing under "m.<param>" / "v.<param>" names.
class AdamOpt {
 public:
  AdamOpt(std::vector<std::pair<std::string, Tensor>>& params, double beta1, double beta2,
          double eps);

  // One update from the parameters' current gradients. Steps count from 1.
  void apply(double lr);
  void zero_grad();
  int64_t steps_taken() const { return step_; }

  std::vector<std::pair<std::string, Tensor>> state_tensors() const;  // m.* then v.*
  // Restores moments and step counter; names/shapes must match exactly.
  void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors, int64_t step);

 private:
  std::vector<std::pair<std::string, Tensor>>& params_;
  double beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

// Token-budget batches: samples are shuffled with a per-epoch stream derived
// from (seed, epoch), stably sorted by target length (bucketing), packed so
// batch_size * max_target_len <= max_tokens (a single oversized sample still
// forms its own batch), and the batch order is then shuffled again.
std::vector<Batch> make_batches(const std::vector<Sample>& samples, int max_tokens, uint64_t seed,
                                int64_t epoch);

struct TrainConfig {
  int epochs = 10;
  int max_tokens = 2000;        // padded-target-token budget per batch
  int warmup_steps = 400;
  double lr_scale = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 1.0;
  double label_smoothing = 0.1;
  uint64_t seed = 1;
  int log_every = 25;           // steps between progress records (0 = epoch ends only)
  std::string metrics_path;     // NDJSON sink, appended; empty = no file
  std::string checkpoint_path;  // model file; optimizer sidecar gets ".opt" added
  int checkpoint_every = 0;     // extra mid-epoch saves every N steps (0 = off)

  void validate() const;
};

struct StepInfo {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;  // pre-clip
  int batch_size = 0;
  int64_t tokens = 0;  // non-pad target tokens in the batch
};

struct TrainReport {
  int64_t steps = 0;
  int epochs_run = 0;
  double final_train_loss = 0.0;  // token-weighted mean over the last epoch
  double final_dev_loss = 0.0;    // 0 when no dev set was given
};

class Trainer {
 public:
  Trainer(HATModel& model, TrainConfig config);

  // Full loop: epochs of token-budget batches, per-step optimization,
  // NDJSON metrics, periodic checkpointing, divergence abort.
  TrainReport train(const std::vector<Sample>& train_set, const std::vector<Sample>& dev_set);

  // One optimization step (exposed so tests can drive training directly).
  StepInfo train_step(const Batch& batch);

  // Token-weighted mean loss without gradient tracking or dropout.
  double eval_loss(const std::vector<Sample>& samples);

  // Model checkpoint plus ".opt" optimizer sidecar (step, epoch position,
  // dropout RNG state, Adam moments). Resume restores all of it in place;
  // continuing a run after save/load reproduces an uninterrupted run
  // bit for bit.
  void save_state(const std::string& model_path) const;
  void load_state(const std::string& model_path);

  int64_t step() const { return optimizer_.steps_taken(); }
  int epoch() const { return epoch_; }
  int64_t next_batch() const { return next_batch_; }
  double last_lr() const { return last_lr_; }

  // Receives every NDJSON line also written to metrics_path.
  std::function<void(const std::string&)> on_log;

 private:
  void emit(const std::string& line);

  HATModel& model_;
  TrainConfig config_;
  AdamOpt optimizer_;
  int epoch_ = 0;         // next epoch to run
  int64_t next_batch_ = 0;  // next batch index within that epoch
  double last_lr_ = 0.0;
};

}  // namespace hatsc
