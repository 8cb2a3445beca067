#include "gksa/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <random>

#include "gksa/ctc/ctc.hpp"
#include "gksa/errors.hpp"
#include "gksa/numerics/optimizer.hpp"

namespace gksa {

double batch_loss(EncoderModel& model, const std::vector<const Utterance*>& batch, bool accumulate) {
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const Utterance* u : batch) {
    Graph g;
    Var logits = model.forward(g, g.input(u->features));
    Var loss = g.scale(ctc_loss_op(g, g.log_softmax_rows(logits), u->labels), inv);
    total += g.value(loss)(0, 0);
    if (accumulate) g.backward(loss);
  }
  return total;
}

TrainResult train(const EncoderConfig& model_cfg, const Dataset& data, const TrainConfig& cfg,
                  const StepCallback& on_step) {
  if (data.utterances.empty()) throw ConfigError("train: empty dataset");
  if (data.vocab_size != model_cfg.vocab_size || data.feature_dim != model_cfg.input_dim) {
    throw ConfigError("train: dataset vocab/feature size does not match the model");
  }
  if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be positive");

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result{EncoderModel(model_cfg, cfg.seed), {}, 0.0};
  EncoderModel& model = result.model;
  std::vector<Parameter*> params = model.parameters();
  OptimizerState state = make_optimizer_state(params);
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_int_distribution<std::size_t> pick(0, data.utterances.size() - 1);

  std::vector<const Utterance*> batch(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& u : batch) u = &data.utterances[pick(rng)];
    model.zero_grad();
    const double loss = batch_loss(model, batch, true);
    if (!std::isfinite(loss)) {
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step));
    }
    clip_grad_norm(params, cfg.grad_clip);
    double lr = cfg.lr;
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
      lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    adam_step(params, state, lr);
    result.curve.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  model.zero_grad();
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::map<std::string, std::string> training_metadata(const ExperimentConfig& cfg,
                                                     const TrainResult& result) {
  std::map<std::string, std::string> meta;
  for (const auto& [k, v] : cfg.to_map()) meta[k] = v;
  meta["config_hash"] = cfg.hash();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", result.curve.empty() ? 0.0 : result.curve.back());
  meta["final_loss"] = buf;
  meta["steps_run"] = std::to_string(result.curve.size());
  return meta;
}

ExperimentConfig experiment_from_checkpoint(const Checkpoint& ckpt) {
  ExperimentConfig cfg;
  bool recorded = false;
  for (const auto& [k, v] : ckpt.metadata) {
    if (k.find('.') == std::string::npos) continue;
    cfg.set(k, v);
    recorded = true;
  }
  if (!recorded) {
    // No training record: keep the default task, take the model as stored.
    for (const auto& [k, v] : ckpt.config.to_map())
      if (k != "model.input_dim" && k != "model.vocab_size") cfg.set(k, v);
    cfg.task.vocab_size = ckpt.config.vocab_size;
    cfg.task.feature_dim = ckpt.config.input_dim;
  }
  cfg.resolve();
  if (cfg.model.to_map() != ckpt.config.to_map())
    throw ConfigError("checkpoint model does not match its recorded experiment config");
  return cfg;
}

void write_curve_csv(std::ostream& os, const std::vector<double>& curve,
                     const std::string& config_hash) {
  os << "# config_hash=" << config_hash << '\n' << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) os << i << ',' << curve[i] << '\n';
}

}  // namespace gksa
