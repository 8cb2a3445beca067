#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gksa/attention/attention.hpp"
#include "gksa/numerics/graph.hpp"

namespace gksa {

// Frame-index scale for the desk-scale models. With d_model 64 and a few
// thousand training steps the index/100 column is too small for W_s to pick
// up; index/10 trains reliably.
inline constexpr double kDeskAlpha = 10.0;

struct EncoderConfig {
  std::size_t input_dim = 16;
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 2;
  std::size_t d_k = 32;  // per head
  std::size_t d_ff = 128;
  std::size_t subsample_factor = 4;
  AttentionVariant variant = AttentionVariant::Standard;
  std::size_t vocab_size = 13;  // including blank
  double alpha = kDefaultAlpha;
  bool use_abs_pe = true;

  // ConfigError on any violated invariant.
  void validate() const;

  // Desk-scale defaults: alpha = kDeskAlpha, use_abs_pe chosen per variant.
  static EncoderConfig desk_default(AttentionVariant variant);
  // 12 layers, 4 heads of 256, FFN 2048, x4 subsampling. Documentation and
  // memory accounting only; far too large to train here.
  static EncoderConfig reference_full_scale(AttentionVariant variant);

  // Flat "model.<key>" -> value text form, used by checkpoints and config hashes.
  std::map<std::string, std::string> to_map() const;
  static EncoderConfig from_map(const std::map<std::string, std::string>& kv);
};

struct SABlockParams {
  MultiHeadParams attention;  // w_o doubles as the middle linear layer
  Parameter ln1_gain, ln1_bias;
  Parameter ln2_gain, ln2_bias;
  Parameter ffn_in;   // d_ff x (d_model + 1)
  Parameter ffn_out;  // d_model x (d_ff + 1)
};

struct EncoderParams {
  Parameter input_proj;  // d_model x (factor * input_dim + 1)
  std::vector<SABlockParams> blocks;
  Parameter final_gain, final_bias;
  Parameter output_proj;  // vocab x (d_model + 1)
};

struct ForwardOptions {
  // Index of the first subsampled frame, for frame-indexed variants.
  long start_index = 0;
  // When set, receives attention Vars ordered [layer][head].
  std::vector<std::vector<Var>>* attention_out = nullptr;
};

class EncoderModel {
 public:
  EncoderModel(EncoderConfig config, std::uint64_t seed);
  EncoderModel(EncoderConfig config, EncoderParams params);

  const EncoderConfig& config() const { return config_; }
  EncoderParams& params() { return params_; }

  // Stable, ordered parameter names ("block0.attn.head1.w_s", ...).
  std::vector<std::pair<std::string, Parameter*>> named_parameters();
  std::vector<Parameter*> parameters();
  void zero_grad();

  // features (T x input_dim) -> logits (ceil(T / factor) x vocab).
  Var forward(Graph& g, Var features, const ForwardOptions& opts = {});
  Matrix logits(const Matrix& features, const ForwardOptions& opts = {});
  Matrix log_probs(const Matrix& features, const ForwardOptions& opts = {});

 private:
  EncoderConfig config_;
  EncoderParams params_;
};

// Frame stacking plus a linear map: row t of the output projects input frames
// [t*factor, (t+1)*factor), zero-padded at the tail. InputTooShortError if
// T < factor.
Var subsample(Graph& g, Var features, std::size_t factor, Var proj);

// x + MHA(LN(x)) -> y;  y + FFN(LN(y)) with a rectifier between the FFN maps.
Var sa_block_forward(Graph& g, Var x, SABlockParams& block, const EncoderConfig& cfg,
                     const AttentionOptions& opts, std::vector<Var>* attention_out = nullptr);

SABlockParams init_block(const EncoderConfig& cfg, std::mt19937_64& rng);

// ---- checkpoint container -------------------------------------------------------
// Layout is documented in docs/checkpoint_format.md.

struct Checkpoint {
  EncoderConfig config;
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Matrix>> tensors;
};

std::string serialize_checkpoint(EncoderModel& model,
                                 const std::map<std::string, std::string>& metadata);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, EncoderModel& model,
                     const std::map<std::string, std::string>& metadata);
Checkpoint load_checkpoint(const std::string& path);
// Rebuilds the model; ConfigError if tensor names or shapes disagree.
EncoderModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gksa
