#include "gksa/encoder/encoder.hpp"

#include <cmath>
#include <sstream>

#include "gksa/errors.hpp"
#include "gksa/numerics/ops.hpp"

namespace gksa {

// ---- config -----------------------------------------------------------------------

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
  if (input_dim == 0) fail("input_dim must be positive");
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_k == 0 || d_ff == 0)
    fail("dimensions and layer counts must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (subsample_factor < 1) fail("subsample_factor must be >= 1");
  if (vocab_size < 2) fail("vocab_size must be >= 2 (blank plus one token)");
  if (!(alpha > 0.0)) fail("alpha must be positive");
  if ((use_abs_pe || variant == AttentionVariant::RelativePE) && d_model % 2 != 0)
    fail("sinusoid encodings need an even d_model");
}

EncoderConfig EncoderConfig::desk_default(AttentionVariant variant) {
  EncoderConfig c;
  c.variant = variant;
  c.alpha = kDeskAlpha;
  c.use_abs_pe = default_uses_abs_pe(variant);
  return c;
}

EncoderConfig EncoderConfig::reference_full_scale(AttentionVariant variant) {
  EncoderConfig c;
  c.input_dim = 83;  // 80 filter banks + pitch
  c.d_model = 256;
  c.n_layers = 12;
  c.n_heads = 4;
  c.d_k = 64;
  c.d_ff = 2048;
  c.subsample_factor = 4;
  c.variant = variant;
  c.vocab_size = 3262;
  c.use_abs_pe = default_uses_abs_pe(variant);
  return c;
}

std::map<std::string, std::string> EncoderConfig::to_map() const {
  std::ostringstream alpha_text;
  alpha_text.precision(17);
  alpha_text << alpha;
  return {{"model.input_dim", std::to_string(input_dim)},
          {"model.d_model", std::to_string(d_model)},
          {"model.n_layers", std::to_string(n_layers)},
          {"model.n_heads", std::to_string(n_heads)},
          {"model.d_k", std::to_string(d_k)},
          {"model.d_ff", std::to_string(d_ff)},
          {"model.subsample_factor", std::to_string(subsample_factor)},
          {"model.variant", std::string(variant_name(variant))},
          {"model.vocab_size", std::to_string(vocab_size)},
          {"model.alpha", alpha_text.str()},
          {"model.use_abs_pe", use_abs_pe ? "true" : "false"}};
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(text, &pos);
    if (pos != text.size() || v < 0) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + text + "'");
  }
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + text + "'");
}

Matrix init_linear(std::size_t out_dim, std::size_t in_dim, std::mt19937_64& rng) {
  Matrix w(out_dim, in_dim + 1);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  for (std::size_t r = 0; r < out_dim; ++r)
    for (std::size_t c = 0; c < in_dim; ++c) w(r, c) = dist(rng);
  return w;
}

}  // namespace

EncoderConfig EncoderConfig::from_map(const std::map<std::string, std::string>& kv) {
  EncoderConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "model.input_dim") c.input_dim = parse_size(key, value);
    else if (key == "model.d_model") c.d_model = parse_size(key, value);
    else if (key == "model.n_layers") c.n_layers = parse_size(key, value);
    else if (key == "model.n_heads") c.n_heads = parse_size(key, value);
    else if (key == "model.d_k") c.d_k = parse_size(key, value);
    else if (key == "model.d_ff") c.d_ff = parse_size(key, value);
    else if (key == "model.subsample_factor") c.subsample_factor = parse_size(key, value);
    else if (key == "model.variant") c.variant = parse_variant(value);
    else if (key == "model.vocab_size") c.vocab_size = parse_size(key, value);
    else if (key == "model.alpha") c.alpha = parse_real(key, value);
    else if (key == "model.use_abs_pe") c.use_abs_pe = parse_bool(key, value);
    else if (key.rfind("model.", 0) == 0) throw ConfigError("unknown model key '" + key + "'");
  }
  c.validate();
  return c;
}

// ---- model ---------------------------------------------------------------------------

SABlockParams init_block(const EncoderConfig& cfg, std::mt19937_64& rng) {
  SABlockParams b;
  b.attention = init_multi_head(cfg.variant, cfg.d_model, cfg.n_heads, cfg.d_k, rng);
  b.ln1_gain = Parameter(Matrix(1, cfg.d_model, 1.0));
  b.ln1_bias = Parameter(Matrix(1, cfg.d_model, 0.0));
  b.ln2_gain = Parameter(Matrix(1, cfg.d_model, 1.0));
  b.ln2_bias = Parameter(Matrix(1, cfg.d_model, 0.0));
  b.ffn_in = Parameter(init_linear(cfg.d_ff, cfg.d_model, rng));
  b.ffn_out = Parameter(init_linear(cfg.d_model, cfg.d_ff, rng));
  return b;
}

EncoderModel::EncoderModel(EncoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  params_.input_proj =
      Parameter(init_linear(config_.d_model, config_.subsample_factor * config_.input_dim, rng));
  for (std::size_t l = 0; l < config_.n_layers; ++l) params_.blocks.push_back(init_block(config_, rng));
  params_.final_gain = Parameter(Matrix(1, config_.d_model, 1.0));
  params_.final_bias = Parameter(Matrix(1, config_.d_model, 0.0));
  params_.output_proj = Parameter(init_linear(config_.vocab_size, config_.d_model, rng));
}

EncoderModel::EncoderModel(EncoderConfig config, EncoderParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
}

std::vector<std::pair<std::string, Parameter*>> EncoderModel::named_parameters() {
  std::vector<std::pair<std::string, Parameter*>> out;
  out.emplace_back("input_proj", &params_.input_proj);
  for (std::size_t l = 0; l < params_.blocks.size(); ++l) {
    SABlockParams& b = params_.blocks[l];
    const std::string prefix = "block" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < b.attention.heads.size(); ++h) {
      const std::string head_prefix = prefix + "attn.head" + std::to_string(h) + ".";
      for_each_parameter(b.attention.heads[h], [&](const std::string& name, Parameter& p) {
        out.emplace_back(head_prefix + name, &p);
      });
    }
    out.emplace_back(prefix + "attn.w_o", &b.attention.w_o);
    out.emplace_back(prefix + "ln1.gain", &b.ln1_gain);
    out.emplace_back(prefix + "ln1.bias", &b.ln1_bias);
    out.emplace_back(prefix + "ln2.gain", &b.ln2_gain);
    out.emplace_back(prefix + "ln2.bias", &b.ln2_bias);
    out.emplace_back(prefix + "ffn.in", &b.ffn_in);
    out.emplace_back(prefix + "ffn.out", &b.ffn_out);
  }
  out.emplace_back("final_ln.gain", &params_.final_gain);
  out.emplace_back("final_ln.bias", &params_.final_bias);
  out.emplace_back("output_proj", &params_.output_proj);
  return out;
}

std::vector<Parameter*> EncoderModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

void EncoderModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Var subsample(Graph& g, Var features, std::size_t factor, Var proj) {
  const Matrix& f = g.value(features);
  if (factor < 1) throw ConfigError("subsample factor must be >= 1");
  if (f.rows() < factor) {
    throw InputTooShortError("subsample: " + std::to_string(f.rows()) +
                             " frames is shorter than one stack of " + std::to_string(factor));
  }
  Var stacked = g.stack_frames(features, factor);
  return g.matmul_nt(g.append_constant_col(stacked, 1.0), proj);
}

Var sa_block_forward(Graph& g, Var x, SABlockParams& block, const EncoderConfig& cfg,
                     const AttentionOptions& opts, std::vector<Var>* attention_out) {
  if (g.value(x).cols() != cfg.d_model) {
    throw DimensionError("sa_block_forward: input " + g.value(x).shape_string() +
                         " does not match d_model " + std::to_string(cfg.d_model));
  }
  Var h1 = g.layer_norm_rows(x, g.param(block.ln1_gain), g.param(block.ln1_bias), kLayerNormEps);
  Var attn = multi_head_attention(g, cfg.variant, block.attention, h1, opts, attention_out);
  Var y = g.add(x, attn);
  Var h2 = g.layer_norm_rows(y, g.param(block.ln2_gain), g.param(block.ln2_bias), kLayerNormEps);
  Var hidden = g.relu(g.matmul_nt(g.append_constant_col(h2, 1.0), g.param(block.ffn_in)));
  Var ffn = g.matmul_nt(g.append_constant_col(hidden, 1.0), g.param(block.ffn_out));
  return g.add(y, ffn);
}

Var EncoderModel::forward(Graph& g, Var features, const ForwardOptions& opts) {
  if (g.value(features).cols() != config_.input_dim) {
    throw DimensionError("encoder: features " + g.value(features).shape_string() +
                         " but input_dim is " + std::to_string(config_.input_dim));
  }
  Var x = subsample(g, features, config_.subsample_factor, g.param(params_.input_proj));
  if (config_.use_abs_pe) {
    const std::size_t len = g.value(x).rows();
    x = g.add(x, g.input(sinusoid_encoding_at(opts.start_index, len, config_.d_model)));
  }
  const AttentionOptions attn_opts{opts.start_index, config_.alpha};
  for (SABlockParams& block : params_.blocks) {
    std::vector<Var>* layer_out = nullptr;
    if (opts.attention_out != nullptr) {
      opts.attention_out->emplace_back();
      layer_out = &opts.attention_out->back();
    }
    x = sa_block_forward(g, x, block, config_, attn_opts, layer_out);
  }
  x = g.layer_norm_rows(x, g.param(params_.final_gain), g.param(params_.final_bias),
                        kLayerNormEps);
  return g.matmul_nt(g.append_constant_col(x, 1.0), g.param(params_.output_proj));
}

Matrix EncoderModel::logits(const Matrix& features, const ForwardOptions& opts) {
  Graph g;
  return g.value(forward(g, g.input(features), opts));
}

Matrix EncoderModel::log_probs(const Matrix& features, const ForwardOptions& opts) {
  Graph g;
  return g.value(g.log_softmax_rows(forward(g, g.input(features), opts)));
}

}  // namespace gksa
