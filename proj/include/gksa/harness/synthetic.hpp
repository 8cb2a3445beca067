#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gksa/ctc/ctc.hpp"
#include "gksa/numerics/matrix.hpp"

namespace gksa {

// Prototype-emission task standing in for speech. An utterance is a token
// sequence with no immediate repeats; each token emits a run of noisy copies
// of prototype vectors.
//
// With onset_units == 0 every token id in [1, vocab_size - 1] owns one
// prototype. With onset_units = n > 0 tokens are (onset, coda) pairs: there
// are n onset prototypes and (vocab_size - 1) / n coda prototypes, token
// t = 1 + onset * n_coda + coda, and its run is the onset prototype for the
// first half followed by the coda prototype. A single frame then identifies
// only half a token; decoding needs ordered local context.
struct SyntheticTaskConfig {
  std::size_t vocab_size = 13;  // including blank
  std::size_t feature_dim = 16;
  std::size_t min_frames_per_token = 8;
  std::size_t max_frames_per_token = 16;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 10;
  double noise_std = 0.7;
  std::size_t onset_units = 4;
  std::size_t num_utterances = 2000;
  std::uint64_t prototype_seed = 7;  // shared by train and eval sets
  std::uint64_t seed = 1;            // utterance sampling

  void validate() const;
};

struct Utterance {
  Matrix features;  // T x feature_dim
  LabelSeq labels;
  // First raw frame of each token run, parallel to labels.
  std::vector<std::size_t> token_starts;
};

struct Dataset {
  std::size_t vocab_size = 0;
  std::size_t feature_dim = 0;
  // One row per unit: tokens (onset_units == 0) or onsets followed by codas.
  Matrix prototypes;
  std::size_t onset_units = 0;
  std::vector<Utterance> utterances;

  std::size_t total_frames() const;
  std::size_t max_frames() const;
};

Matrix make_prototypes(const SyntheticTaskConfig& cfg);
// Prototype rows emitted by a token: {row} or {onset row, coda row}.
std::vector<std::size_t> token_units(std::size_t vocab_size, std::size_t onset_units, int token);
// Deterministic in (prototype_seed, seed). ConfigError on a degenerate config.
Dataset gen_dataset(const SyntheticTaskConfig& cfg);

// `count` long utterances, each the concatenation of k source utterances.
// Sources are drawn from successive seeded permutations of the dataset, so
// k = 1 with count = size is a permutation. When a candidate would start with
// the token that ended the previous segment (the two runs would merge into
// one), the next candidate in the stream is used instead.
// ConfigError if k is 0 or exceeds the dataset size.
Dataset concat_eval(const Dataset& source, std::size_t k, std::size_t count, std::uint64_t seed);

// Binary dataset container ("GKSADATA"), little-endian, see docs/.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace gksa
