#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gksa/encoder/encoder.hpp"
#include "gksa/harness/config.hpp"
#include "gksa/harness/synthetic.hpp"

namespace gksa {

struct TrainResult {
  EncoderModel model;
  std::vector<double> curve;  // mean per-utterance CTC loss at each step
  double seconds = 0.0;
};

// Called after every step with (step, loss).
using StepCallback = std::function<void(std::size_t, double)>;

// Single-threaded and deterministic in (model config, data, train config).
// Init uses train.seed; batches are drawn with replacement from a stream
// seeded by train.seed + 1. DivergenceError on a non-finite loss.
TrainResult train(const EncoderConfig& model_cfg, const Dataset& data, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

// Mean CTC loss of one utterance list under the current parameters, and
// (when accumulate is true) its gradient added into the model's grads.
double batch_loss(EncoderModel& model, const std::vector<const Utterance*>& batch, bool accumulate);

// Training metadata stored alongside the weights.
std::map<std::string, std::string> training_metadata(const ExperimentConfig& cfg,
                                                     const TrainResult& result);

// Rebuilds the experiment a checkpoint was trained under from its config
// block and training metadata.
ExperimentConfig experiment_from_checkpoint(const Checkpoint& ckpt);

void write_curve_csv(std::ostream& os, const std::vector<double>& curve,
                     const std::string& config_hash);

}  // namespace gksa
