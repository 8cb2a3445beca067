#include "gksa/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gksa/errors.hpp"

namespace gksa {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(to_u64("list", item));
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto sz = [&] { return static_cast<std::size_t>(to_u64(key, v)); };
  EncoderConfig& m = model;
  if (key == "model.variant") m.variant = parse_variant(v);
  else if (key == "model.d_model") m.d_model = sz();
  else if (key == "model.n_layers") m.n_layers = sz();
  else if (key == "model.n_heads") m.n_heads = sz();
  else if (key == "model.d_k") m.d_k = sz();
  else if (key == "model.d_ff") m.d_ff = sz();
  else if (key == "model.subsample_factor") m.subsample_factor = sz();
  else if (key == "model.alpha") m.alpha = to_real(key, v);
  else if (key == "model.use_abs_pe") {
    if (v != "auto" && v != "true" && v != "false")
      throw ConfigError("model.use_abs_pe must be auto, true or false");
    use_abs_pe = v;
  } else if (key == "task.vocab_size") task.vocab_size = sz();
  else if (key == "task.feature_dim") task.feature_dim = sz();
  else if (key == "task.min_frames_per_token") task.min_frames_per_token = sz();
  else if (key == "task.max_frames_per_token") task.max_frames_per_token = sz();
  else if (key == "task.min_tokens") task.min_tokens = sz();
  else if (key == "task.max_tokens") task.max_tokens = sz();
  else if (key == "task.noise_std") task.noise_std = to_real(key, v);
  else if (key == "task.onset_units") task.onset_units = sz();
  else if (key == "task.prototype_seed") task.prototype_seed = to_u64(key, v);
  else if (key == "task.train_utterances") task.num_utterances = sz();
  else if (key == "task.train_seed") task.seed = to_u64(key, v);
  else if (key == "train.steps") train.steps = sz();
  else if (key == "train.lr") train.lr = to_real(key, v);
  else if (key == "train.batch_size") train.batch_size = sz();
  else if (key == "train.seed") train.seed = to_u64(key, v);
  else if (key == "train.grad_clip") train.grad_clip = to_real(key, v);
  else if (key == "train.warmup_steps") train.warmup_steps = sz();
  else if (key == "eval.lengths") eval.lengths = parse_size_list(v);
  else if (key == "eval.eval_utterances") eval.eval_utterances = sz();
  else if (key == "eval.eval_seed") eval.eval_seed = to_u64(key, v);
  else if (key == "eval.long_utterances") eval.long_utterances = sz();
  else if (key == "eval.concat_seed") eval.concat_seed = to_u64(key, v);
  else if (key == "eval.memory_budget") eval.memory_budget = sz();
  else throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::resolve() {
  task.validate();
  model.input_dim = task.feature_dim;
  model.vocab_size = task.vocab_size;
  model.use_abs_pe = use_abs_pe == "auto" ? default_uses_abs_pe(model.variant) : use_abs_pe == "true";
  model.validate();
  if (task.min_frames_per_token < model.subsample_factor) {
    // Guarantees every utterance has at least as many subsampled frames as tokens.
    throw ConfigError("task.min_frames_per_token must be >= model.subsample_factor");
  }
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (eval.eval_utterances == 0) throw ConfigError("eval.eval_utterances must be positive");
  for (std::size_t k : eval.lengths) {
    if (k == 0 || k > eval.eval_utterances)
      throw ConfigError("eval.lengths entries must be in [1, eval.eval_utterances]");
  }
}

SyntheticTaskConfig ExperimentConfig::train_task() const { return task; }

SyntheticTaskConfig ExperimentConfig::eval_task() const {
  SyntheticTaskConfig t = task;
  t.num_utterances = eval.eval_utterances;
  t.seed = eval.eval_seed;
  return t;
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  return {
      {"model.variant", std::string(variant_name(model.variant))},
      {"model.d_model", std::to_string(model.d_model)},
      {"model.n_layers", std::to_string(model.n_layers)},
      {"model.n_heads", std::to_string(model.n_heads)},
      {"model.d_k", std::to_string(model.d_k)},
      {"model.d_ff", std::to_string(model.d_ff)},
      {"model.subsample_factor", std::to_string(model.subsample_factor)},
      {"model.alpha", real_text(model.alpha)},
      {"model.use_abs_pe", use_abs_pe},
      {"task.vocab_size", std::to_string(task.vocab_size)},
      {"task.feature_dim", std::to_string(task.feature_dim)},
      {"task.min_frames_per_token", std::to_string(task.min_frames_per_token)},
      {"task.max_frames_per_token", std::to_string(task.max_frames_per_token)},
      {"task.min_tokens", std::to_string(task.min_tokens)},
      {"task.max_tokens", std::to_string(task.max_tokens)},
      {"task.noise_std", real_text(task.noise_std)},
      {"task.onset_units", std::to_string(task.onset_units)},
      {"task.prototype_seed", std::to_string(task.prototype_seed)},
      {"task.train_utterances", std::to_string(task.num_utterances)},
      {"task.train_seed", std::to_string(task.seed)},
      {"train.steps", std::to_string(train.steps)},
      {"train.lr", real_text(train.lr)},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.seed", std::to_string(train.seed)},
      {"train.grad_clip", real_text(train.grad_clip)},
      {"train.warmup_steps", std::to_string(train.warmup_steps)},
      {"eval.lengths", join(eval.lengths)},
      {"eval.eval_utterances", std::to_string(eval.eval_utterances)},
      {"eval.eval_seed", std::to_string(eval.eval_seed)},
      {"eval.long_utterances", std::to_string(eval.long_utterances)},
      {"eval.concat_seed", std::to_string(eval.concat_seed)},
      {"eval.memory_budget", std::to_string(eval.memory_budget)},
  };
}

std::string ExperimentConfig::to_ini() const {
  std::string out;
  std::string section;
  // Group by section in a fixed order.
  for (const char* sec : {"model", "task", "train", "eval"}) {
    out += std::string(out.empty() ? "" : "\n") + "[" + sec + "]\n";
    for (const auto& [key, value] : to_map()) {
      const auto dot = key.find('.');
      if (key.substr(0, dot) == sec) out += key.substr(dot + 1) + " = " + value + "\n";
    }
  }
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ExperimentConfig::hash() const {
  std::string canon;
  for (const auto& [k, v] : to_map()) canon += k + "=" + v + "\n";
  return fnv1a_hex(canon);
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside a [section]");
    }
    cfg.set(section + "." + trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.resolve();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  cfg.resolve();
}

}  // namespace gksa
