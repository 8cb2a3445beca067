#include "gksa/harness/synthetic.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gksa/errors.hpp"

namespace gksa {

void SyntheticTaskConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("task config: " + m); };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (vocab_size < 3 && max_tokens > 1) fail("without repeats, multi-token utterances need vocab_size >= 3");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (min_frames_per_token == 0 || min_frames_per_token > max_frames_per_token)
    fail("need 1 <= min_frames_per_token <= max_frames_per_token");
  if (min_tokens == 0 || min_tokens > max_tokens) fail("need 1 <= min_tokens <= max_tokens");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (num_utterances == 0) fail("num_utterances must be positive");
  if (onset_units > 0) {
    if ((vocab_size - 1) % onset_units != 0 || (vocab_size - 1) / onset_units < 1)
      fail("vocab_size - 1 must be a multiple of onset_units");
    if (min_frames_per_token < 2) fail("onset/coda tokens need at least 2 frames");
  }
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.features.rows();
  return n;
}

std::size_t Dataset::max_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n = std::max(n, u.features.rows());
  return n;
}

Matrix make_prototypes(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.prototype_seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  const std::size_t units =
      cfg.onset_units == 0 ? cfg.vocab_size - 1
                           : cfg.onset_units + (cfg.vocab_size - 1) / cfg.onset_units;
  Matrix p(units, cfg.feature_dim);
  for (double& v : p.values()) v = dist(rng);
  return p;
}

std::vector<std::size_t> token_units(std::size_t vocab_size, std::size_t onset_units, int token) {
  const auto id = static_cast<std::size_t>(token) - 1;
  if (onset_units == 0) return {id};
  const std::size_t n_coda = (vocab_size - 1) / onset_units;
  return {id / n_coda, onset_units + id % n_coda};
}

Dataset gen_dataset(const SyntheticTaskConfig& cfg) {
  cfg.validate();
  Dataset ds{cfg.vocab_size, cfg.feature_dim, make_prototypes(cfg), cfg.onset_units, {}};
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> n_tokens(cfg.min_tokens, cfg.max_tokens);
  std::uniform_int_distribution<std::size_t> duration(cfg.min_frames_per_token,
                                                      cfg.max_frames_per_token);
  std::uniform_int_distribution<int> token(1, static_cast<int>(cfg.vocab_size) - 1);
  std::normal_distribution<double> noise(0.0, 1.0);
  ds.utterances.reserve(cfg.num_utterances);
  for (std::size_t u = 0; u < cfg.num_utterances; ++u) {
    Utterance utt;
    const std::size_t n = n_tokens(rng);
    std::vector<std::size_t> durations;
    for (std::size_t i = 0; i < n; ++i) {
      int t = token(rng);
      while (!utt.labels.empty() && t == utt.labels.back()) t = token(rng);
      utt.labels.push_back(t);
      durations.push_back(duration(rng));
    }
    const std::size_t frames = std::accumulate(durations.begin(), durations.end(), std::size_t{0});
    utt.features = Matrix(frames, cfg.feature_dim);
    std::size_t row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      utt.token_starts.push_back(row);
      const auto units = token_units(cfg.vocab_size, cfg.onset_units, utt.labels[i]);
      for (std::size_t d = 0; d < durations[i]; ++d, ++row) {
        const std::size_t unit = units.size() == 1 || d < durations[i] / 2 ? units[0] : units[1];
        const auto proto = ds.prototypes.row(unit);
        for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
          // noise is drawn even at noise_std = 0 so the stream does not depend on it
          const double z = noise(rng);
          utt.features(row, c) = proto[c] + cfg.noise_std * z;
        }
      }
    }
    ds.utterances.push_back(std::move(utt));
  }
  return ds;
}

Dataset concat_eval(const Dataset& source, std::size_t k, std::size_t count, std::uint64_t seed) {
  if (k == 0) throw ConfigError("concat_eval: k must be >= 1");
  if (k > source.utterances.size()) {
    throw ConfigError("concat_eval: k=" + std::to_string(k) + " exceeds the " +
                      std::to_string(source.utterances.size()) + " source utterances");
  }
  Dataset out{source.vocab_size, source.feature_dim, source.prototypes, source.onset_units, {}};
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> stream;
  std::size_t cursor = 0;
  // Makes stream[cursor + ahead] valid by appending fresh permutations.
  auto ensure = [&](std::size_t ahead) {
    while (cursor + ahead >= stream.size()) {
      std::vector<std::size_t> perm(source.utterances.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      stream.insert(stream.end(), perm.begin(), perm.end());
    }
  };
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<std::size_t> picks;
    for (std::size_t s = 0; s < k; ++s) {
      ensure(0);
      if (!picks.empty()) {
        const int last = source.utterances[picks.back()].labels.back();
        std::size_t ahead = 0;
        while (source.utterances[stream[cursor + ahead]].labels.front() == last) {
          ++ahead;
          if (ahead > 4 * source.utterances.size()) {
            throw ConfigError("concat_eval: cannot find a segment avoiding a merged join");
          }
          ensure(ahead);
        }
        std::swap(stream[cursor], stream[cursor + ahead]);
      }
      picks.push_back(stream[cursor++]);
    }
    std::size_t frames = 0;
    for (std::size_t i : picks) frames += source.utterances[i].features.rows();
    Utterance utt;
    utt.features = Matrix(frames, source.feature_dim);
    std::size_t row = 0;
    for (std::size_t i : picks) {
      const Utterance& part = source.utterances[i];
      for (std::size_t s : part.token_starts) utt.token_starts.push_back(row + s);
      utt.labels.insert(utt.labels.end(), part.labels.begin(), part.labels.end());
      for (std::size_t r = 0; r < part.features.rows(); ++r, ++row)
        for (std::size_t c = 0; c < source.feature_dim; ++c) utt.features(row, c) = part.features(r, c);
    }
    out.utterances.push_back(std::move(utt));
  }
  return out;
}

// ---- dataset container ----------------------------------------------------------------

namespace {

constexpr char kDataMagic[8] = {'G', 'K', 'S', 'A', 'D', 'A', 'T', 'A'};

void put(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

std::uint64_t get(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("dataset: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_matrix(std::ostream& os, const Matrix& m) {
  put(os, m.rows());
  put(os, m.cols());
  for (double v : m.values()) put(os, std::bit_cast<std::uint64_t>(v));
}

Matrix get_matrix(std::istream& is) {
  const auto rows = get(is);
  const auto cols = get(is);
  if (rows == 0 || cols == 0 || rows * cols > (1ull << 32)) throw ConfigError("dataset: bad matrix shape");
  Matrix m(rows, cols);
  for (double& v : m.values()) v = std::bit_cast<double>(get(is));
  return m;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  os.write(kDataMagic, 8);
  put(os, 1);  // version
  put(os, ds.vocab_size);
  put(os, ds.feature_dim);
  put(os, ds.onset_units);
  put_matrix(os, ds.prototypes);
  put(os, ds.utterances.size());
  for (const Utterance& u : ds.utterances) {
    put(os, u.labels.size());
    for (std::size_t i = 0; i < u.labels.size(); ++i) {
      put(os, static_cast<std::uint64_t>(u.labels[i]));
      put(os, u.token_starts[i]);
    }
    put_matrix(os, u.features);
  }
  if (!os) throw std::runtime_error("failed writing dataset '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open dataset '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kDataMagic))
    throw ConfigError("dataset: bad magic in '" + path + "'");
  if (get(is) != 1) throw ConfigError("dataset: unsupported version");
  Dataset ds;
  ds.vocab_size = get(is);
  ds.feature_dim = get(is);
  ds.onset_units = get(is);
  ds.prototypes = get_matrix(is);
  const auto n = get(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    Utterance u;
    const auto labels = get(is);
    for (std::uint64_t j = 0; j < labels; ++j) {
      u.labels.push_back(static_cast<int>(get(is)));
      u.token_starts.push_back(get(is));
    }
    u.features = get_matrix(is);
    if (u.features.cols() != ds.feature_dim) throw ConfigError("dataset: feature width mismatch");
    validate_labels(u.labels, ds.vocab_size);
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

}  // namespace gksa
