#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gksa/encoder/encoder.hpp"
#include "gksa/harness/synthetic.hpp"

namespace gksa {

struct TrainConfig {
  std::size_t steps = 1500;
  double lr = 3e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;  // global L2 norm; 0 disables
  std::size_t warmup_steps = 100;
};

struct EvalConfig {
  std::vector<std::size_t> lengths = {1, 8, 16};
  std::size_t eval_utterances = 200;  // short held-out utterances
  std::uint64_t eval_seed = 1001;
  std::size_t long_utterances = 24;  // per k > 1
  std::uint64_t concat_seed = 77;
  // Attention-path element budget per utterance; longer inputs are split in
  // half until they fit. 0 = unlimited.
  std::size_t memory_budget = 0;
};

// Everything one experiment needs. Serialized as an INI-style file:
//
//   [model]  variant, d_model, n_layers, n_heads, d_k, d_ff, subsample_factor,
//            alpha, use_abs_pe (auto | true | false)
//   [task]   vocab_size, feature_dim, min_frames_per_token, max_frames_per_token,
//            min_tokens, max_tokens, noise_std, onset_units, prototype_seed,
//            train_utterances, train_seed
//   [train]  steps, lr, batch_size, seed, grad_clip, warmup_steps
//   [eval]   lengths (comma list), eval_utterances, eval_seed,
//            long_utterances, concat_seed, memory_budget
//
// model.input_dim and model.vocab_size always follow the task section.
struct ExperimentConfig {
  EncoderConfig model = EncoderConfig::desk_default(AttentionVariant::Standard);
  std::string use_abs_pe = "auto";
  SyntheticTaskConfig task;
  TrainConfig train;
  EvalConfig eval;

  // Applies one "section.key" = value setting. ConfigError on unknown keys
  // or unparsable values.
  void set(const std::string& key, const std::string& value);
  // Re-derives dependent model fields and validates everything.
  void resolve();

  SyntheticTaskConfig train_task() const;
  SyntheticTaskConfig eval_task() const;

  // Sorted "section.key" -> canonical value text.
  std::map<std::string, std::string> to_map() const;
  std::string to_ini() const;
  // 16 hex digits of FNV-1a over the canonical map.
  std::string hash() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Applies "section.key=value" overrides then resolves.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

std::string fnv1a_hex(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace gksa
