#include "hatsc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "hatsc/checkpoint.hpp"
#include "hatsc/errors.hpp"
#include "hatsc/tokenizer.hpp"

namespace hatsc {

double lr_at(int64_t step, int d_model, int warmup_steps, double scale) {
  if (step < 1) throw UsageError("lr_at: steps count from 1");
  if (warmup_steps < 1) throw UsageError("lr_at: warmup must be at least 1 step");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return scale / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

double clip_gradients(std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    const std::vector<float>& g = p.grad_values();
    for (float v : g) sq += static_cast<double>(v) * v;
  }
  if (!std::isfinite(sq)) throw NumericError("gradient norm is not finite");
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& [name, p] : params) {
      for (float& v : p.grad_values()) v *= s;
    }
  }
  return norm;
}

AdamOpt::AdamOpt(std::vector<std::pair<std::string, Tensor>>& params, double beta1, double beta2,
                 double eps)
    : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw UsageError("adam: betas must lie in [0, 1)");
  }
  if (eps <= 0.0) throw UsageError("adam: eps must be positive");
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamOpt::apply(double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    const std::vector<float>& g = p.grad_values();
    float* m = m_[i].data();
    float* v = v_[i].data();
    float* w = p.data();
    const int64_t n = p.size();
    for (int64_t j = 0; j < n; ++j) {
      const double gj = g[static_cast<size_t>(j)];
      const double mj = beta1_ * m[j] + (1.0 - beta1_) * gj;
      const double vj = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
      w[j] = static_cast<float>(w[j] - update);
    }
  }
}

void AdamOpt::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> AdamOpt::state_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(2 * params_.size());
  for (size_t i = 0; i < params_.size(); ++i) out.emplace_back("m." + params_[i].first, m_[i]);
  for (size_t i = 0; i < params_.size(); ++i) out.emplace_back("v." + params_[i].first, v_[i]);
  return out;
}

void AdamOpt::load_state(const std::vector<std::pair<std::string, Tensor>>& tensors,
                         int64_t step) {
  if (tensors.size() != 2 * params_.size()) {
    throw DataError("optimizer state: expected " + std::to_string(2 * params_.size()) +
                    " moment tensors, got " + std::to_string(tensors.size()));
  }
  if (step < 0) throw DataError("optimizer state: negative step count");
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& [m_name, m_t] = tensors[i];
    const auto& [v_name, v_t] = tensors[params_.size() + i];
    if (m_name != "m." + params_[i].first || v_name != "v." + params_[i].first) {
      throw DataError("optimizer state: tensor name mismatch at '" + m_name + "'");
    }
    if (m_t.shape() != params_[i].second.shape() || v_t.shape() != params_[i].second.shape()) {
      throw DataError("optimizer state: moment shape mismatch for '" + params_[i].first + "'");
    }
    m_[i].values() = m_t.values();
    v_[i].values() = v_t.values();
  }
  step_ = step;
}

std::vector<Batch> make_batches(const std::vector<Sample>& samples, int max_tokens, uint64_t seed,
                                int64_t epoch) {
  if (max_tokens < 1) throw UsageError("make_batches: token budget must be positive");
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng = Rng::derive(seed, 0x6261746368ull ^ static_cast<uint64_t>(epoch));
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::stable_sort(order.begin(), order.end(), [&samples](size_t a, size_t b) {
    return samples[a].tgt.size() < samples[b].tgt.size();
  });

  std::vector<Batch> batches;
  Batch current;
  size_t max_len = 0;
  for (size_t idx : order) {
    const Sample& s = samples[idx];
    const size_t len = std::max(max_len, s.tgt.size());
    if (!current.empty() &&
        (current.size() + 1) * len > static_cast<size_t>(max_tokens)) {
      batches.push_back(std::move(current));
      current.clear();
      max_len = 0;
    }
    max_len = std::max(max_len, s.tgt.size());
    current.push_back(s);
  }
  if (!current.empty()) batches.push_back(std::move(current));

  for (size_t i = batches.size(); i > 1; --i) {
    std::swap(batches[i - 1], batches[rng.below(i)]);
  }
  return batches;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw UsageError("train config: negative epoch count");
  if (max_tokens < 1) throw UsageError("train config: token budget must be positive");
  if (warmup_steps < 1) throw UsageError("train config: warmup must be at least 1 step");
  if (lr_scale <= 0.0) throw UsageError("train config: lr scale must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw UsageError("train config: adam betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw UsageError("train config: adam eps must be positive");
  if (clip_norm < 0.0) throw UsageError("train config: negative clip norm");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw UsageError("train config: label smoothing outside [0, 1)");
  }
  if (log_every < 0) throw UsageError("train config: negative log interval");
  if (checkpoint_every < 0) throw UsageError("train config: negative checkpoint interval");
}

Trainer::Trainer(HATModel& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      optimizer_(model.parameters(), config_.beta1, config_.beta2, config_.adam_eps) {
  config_.validate();
}

void Trainer::emit(const std::string& line) {
  if (!config_.metrics_path.empty()) {
    std::ofstream out(config_.metrics_path, std::ios::app);
    if (!out) throw DataError("cannot append to metrics file " + config_.metrics_path);
    out << line << "\n";
  }
  if (on_log) on_log(line);
}

StepInfo Trainer::train_step(const Batch& batch) {
  StepInfo info;
  info.batch_size = static_cast<int>(batch.size());
  for (const Sample& s : batch) info.tokens += static_cast<int64_t>(s.tgt.size());

  Tensor loss = model_.forward_loss(batch, true, config_.label_smoothing);
  const int64_t step_being_taken = optimizer_.steps_taken() + 1;
  if (!loss.all_finite()) {
    throw NumericError("training diverged at step " + std::to_string(step_being_taken) +
                       ": non-finite loss (last lr " + std::to_string(last_lr_) + ")");
  }
  optimizer_.zero_grad();
  backward(loss);

  double norm;
  try {
    norm = clip_gradients(model_.parameters(), config_.clip_norm);
  } catch (const NumericError&) {
    throw NumericError("training diverged at step " + std::to_string(step_being_taken) +
                       ": non-finite gradients (last lr " + std::to_string(last_lr_) + ")");
  }

  const double lr = lr_at(step_being_taken, model_.config().d_model, config_.warmup_steps,
                          config_.lr_scale);
  optimizer_.apply(lr);
  last_lr_ = lr;

  info.step = optimizer_.steps_taken();
  info.lr = lr;
  info.loss = static_cast<double>(loss.item());
  info.grad_norm = norm;
  return info;
}

double Trainer::eval_loss(const std::vector<Sample>& samples) {
  if (samples.empty()) throw UsageError("eval_loss: no samples");
  NoGradGuard guard;
  // Deterministic packing: epoch id far outside the training range.
  const std::vector<Batch> batches =
      make_batches(samples, config_.max_tokens, config_.seed, -1);
  double weighted = 0.0;
  int64_t tokens = 0;
  for (const Batch& batch : batches) {
    Tensor loss = model_.forward_loss(batch, false, config_.label_smoothing);
    int64_t t = 0;
    for (const Sample& s : batch) t += static_cast<int64_t>(s.tgt.size());
    weighted += static_cast<double>(loss.item()) * static_cast<double>(t);
    tokens += t;
  }
  return weighted / static_cast<double>(tokens);
}

TrainReport Trainer::train(const std::vector<Sample>& train_set,
                           const std::vector<Sample>& dev_set) {
  if (train_set.empty()) throw UsageError("train: empty training set");
  TrainReport report;

  {
    nlohmann::json j{{"event", "start"},
                     {"epochs", config_.epochs},
                     {"samples", train_set.size()},
                     {"dev_samples", dev_set.size()},
                     {"params", model_.param_count()},
                     {"start_epoch", epoch_},
                     {"start_step", optimizer_.steps_taken()}};
    emit(j.dump());
  }

  for (; epoch_ < config_.epochs; ++epoch_, next_batch_ = 0) {
    const std::vector<Batch> batches =
        make_batches(train_set, config_.max_tokens, config_.seed, epoch_);
    double weighted = 0.0;
    int64_t tokens = 0;
    for (; next_batch_ < static_cast<int64_t>(batches.size()); ++next_batch_) {
      const StepInfo info = train_step(batches[static_cast<size_t>(next_batch_)]);
      weighted += info.loss * static_cast<double>(info.tokens);
      tokens += info.tokens;
      if (config_.log_every > 0 && info.step % config_.log_every == 0) {
        nlohmann::json j{{"event", "step"},      {"step", info.step},
                         {"epoch", epoch_},      {"loss", info.loss},
                         {"lr", info.lr},        {"grad_norm", info.grad_norm},
                         {"batch", info.batch_size}, {"tokens", info.tokens}};
        emit(j.dump());
      }
      if (config_.checkpoint_every > 0 && !config_.checkpoint_path.empty() &&
          info.step % config_.checkpoint_every == 0 &&
          next_batch_ + 1 < static_cast<int64_t>(batches.size())) {
        // Persist mid-epoch: the stored position points at the next batch.
        ++next_batch_;
        save_state(config_.checkpoint_path);
        --next_batch_;
      }
    }

    report.epochs_run = epoch_ + 1;
    report.final_train_loss = tokens > 0 ? weighted / static_cast<double>(tokens) : 0.0;
    nlohmann::json j{{"event", "epoch"},
                     {"epoch", epoch_},
                     {"step", optimizer_.steps_taken()},
                     {"train_loss", report.final_train_loss}};
    if (!dev_set.empty()) {
      report.final_dev_loss = eval_loss(dev_set);
      j["dev_loss"] = report.final_dev_loss;
    }
    emit(j.dump());
    if (!config_.checkpoint_path.empty()) {
      // Position for resume: start of the next epoch.
      const int64_t mark = next_batch_;
      next_batch_ = 0;
      ++epoch_;
      save_state(config_.checkpoint_path);
      --epoch_;
      next_batch_ = mark;
    }
  }

  report.steps = optimizer_.steps_taken();
  nlohmann::json j{{"event", "done"},
                   {"steps", report.steps},
                   {"train_loss", report.final_train_loss}};
  if (!dev_set.empty()) j["dev_loss"] = report.final_dev_loss;
  emit(j.dump());
  return report;
}

void Trainer::save_state(const std::string& model_path) const {
  save_model(model_path, model_);
  const auto moments = optimizer_.state_tensors();
  ckpt_detail::atomic_write(model_path + ".opt", [&](std::ostream& out) {
    out.write("HATO", 4);
    ckpt_detail::write_u32(out, 1);  // version
    ckpt_detail::write_u64(out, static_cast<uint64_t>(optimizer_.steps_taken()));
    ckpt_detail::write_u32(out, static_cast<uint32_t>(epoch_));
    ckpt_detail::write_u64(out, static_cast<uint64_t>(next_batch_));
    ckpt_detail::write_u64(out, model_.rng().state());
    ckpt_detail::write_f64(out, last_lr_);
    ckpt_detail::write_tensor_block(out, moments);
  });
}

void Trainer::load_state(const std::string& model_path) {
  Checkpoint cp = load_checkpoint(model_path);
  const ModelConfig& want = model_.config();
  const ModelConfig& got = cp.config;
  if (got.streams != want.streams || got.d_model != want.d_model ||
      got.n_heads != want.n_heads || got.d_ff != want.d_ff || got.n_layers != want.n_layers ||
      got.max_positions != want.max_positions || got.src_vocab_sizes != want.src_vocab_sizes ||
      got.tgt_vocab_size != want.tgt_vocab_size) {
    throw DataError("resume: checkpoint architecture differs from the configured model");
  }
  auto& params = model_.parameters();
  if (params.size() != cp.tensors.size()) {
    throw DataError("resume: checkpoint tensor count mismatch");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != cp.tensors[i].first ||
        params[i].second.shape() != cp.tensors[i].second.shape()) {
      throw DataError("resume: checkpoint tensor mismatch at '" + params[i].first + "'");
    }
    params[i].second.values() = cp.tensors[i].second.values();
  }

  const std::string opt_path = model_path + ".opt";
  std::ifstream in(opt_path, std::ios::binary);
  if (!in) throw DataError("resume: cannot read optimizer state " + opt_path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "HATO") {
    throw DataError("resume: " + opt_path + " is not an optimizer state file");
  }
  const uint32_t version = ckpt_detail::read_u32(in, "opt version");
  if (version != 1) throw DataError("resume: unsupported optimizer state version");
  const uint64_t step = ckpt_detail::read_u64(in, "opt step");
  const uint32_t epoch = ckpt_detail::read_u32(in, "opt epoch");
  const uint64_t next_batch = ckpt_detail::read_u64(in, "opt batch");
  const uint64_t rng_state = ckpt_detail::read_u64(in, "opt rng");
  const double lr = ckpt_detail::read_f64(in, "opt lr");
  const auto moments = ckpt_detail::read_tensor_block(in);
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw DataError("resume: trailing bytes in optimizer state");

  optimizer_.load_state(moments, static_cast<int64_t>(step));
  epoch_ = static_cast<int>(epoch);
  next_batch_ = static_cast<int64_t>(next_batch);
  model_.rng().set_state(rng_state);
  last_lr_ = lr;
}

}  // namespace hatsc
