#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "gksa/encoder/encoder.hpp"
#include "gksa/errors.hpp"

namespace gksa {
namespace {

constexpr char kMagic[8] = {'G', 'K', 'S', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr const char* kMetaPrefix = "meta.";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  double f64() { return std::bit_cast<double>(u(8)); }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ConfigError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(EncoderModel& model,
                                 const std::map<std::string, std::string>& metadata) {
  std::map<std::string, std::string> block = model.config().to_map();
  for (const auto& [k, v] : metadata) {
    if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos ||
        k.find('=') != std::string::npos) {
      throw ConfigError("checkpoint metadata may not contain newlines or '=' in keys");
    }
    block[kMetaPrefix + k] = v;
  }
  std::string config_text;
  for (const auto& [k, v] : block) config_text += k + "=" + v + "\n";

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u64(out, config_text.size());
  out += config_text;
  auto named = model.named_parameters();
  put_u64(out, named.size());
  for (const auto& [name, p] : named) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u64(out, p->value.rows());
    put_u64(out, p->value.cols());
    for (double v : p->value.values()) put_f64(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.text(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ConfigError("checkpoint: bad magic (not a checkpoint file)");
  }
  const auto version = r.u(4);
  if (version != kVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::string config_text = r.text(r.u(8));
  std::map<std::string, std::string> model_keys;
  Checkpoint ckpt;
  std::istringstream lines(config_text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("checkpoint: malformed config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key.rfind(kMetaPrefix, 0) == 0) {
      ckpt.metadata[key.substr(std::strlen(kMetaPrefix))] = value;
    } else {
      model_keys[key] = value;
    }
  }
  ckpt.config = EncoderConfig::from_map(model_keys);
  const auto count = r.u(8);
  for (std::uint64_t t = 0; t < count; ++t) {
    std::string name = r.text(r.u(4));
    const auto rows = r.u(8);
    const auto cols = r.u(8);
    if (rows == 0 || cols == 0 || rows * cols > (1ull << 32)) {
      throw ConfigError("checkpoint: tensor '" + name + "' has invalid shape");
    }
    std::vector<double> values(rows * cols);
    for (double& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Matrix(rows, cols, std::move(values)));
  }
  if (!r.done()) throw ConfigError("checkpoint: trailing bytes after last tensor");
  return ckpt;
}

void save_checkpoint(const std::string& path, EncoderModel& model,
                     const std::map<std::string, std::string>& metadata) {
  const std::string bytes = serialize_checkpoint(model, metadata);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_checkpoint(buf.str());
}

EncoderModel model_from_checkpoint(const Checkpoint& ckpt) {
  EncoderModel model(ckpt.config, 0);
  auto named = model.named_parameters();
  if (named.size() != ckpt.tensors.size()) {
    throw ConfigError("checkpoint: expected " + std::to_string(named.size()) + " tensors, found " +
                      std::to_string(ckpt.tensors.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, value] = ckpt.tensors[i];
    Parameter& p = *named[i].second;
    if (name != named[i].first) {
      throw ConfigError("checkpoint: tensor " + std::to_string(i) + " is '" + name +
                        "', expected '" + named[i].first + "'");
    }
    if (!value.same_shape(p.value)) {
      throw ConfigError("checkpoint: tensor '" + name + "' has shape " + value.shape_string() +
                        ", expected " + p.value.shape_string());
    }
    p.value = value;
    p.zero_grad();
  }
  return model;
}

}  // namespace gksa
