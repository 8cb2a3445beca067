#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "gksa/attention/attention.hpp"
#include "gksa/encoder/encoder.hpp"
#include "gksa/harness/config.hpp"
#include "gksa/harness/synthetic.hpp"

namespace gksa {

// One evaluation bucket: utterances built from k concatenated short ones.
struct EvalSet {
  std::size_t k = 1;
  Dataset data;
};

// Builds the k = 1 held-out set and one concatenated set per other k in
// cfg.eval.lengths.
std::vector<EvalSet> build_eval_sets(const ExperimentConfig& cfg);

struct BucketResult {
  std::string variant;
  std::size_t k = 1;
  std::size_t utterances = 0;
  std::size_t ref_tokens = 0;
  std::size_t errors = 0;  // summed edit distance
  double mean_frames = 0.0;  // subsampled frames per utterance
  std::size_t splits = 0;    // utterances split to fit the memory budget
  double error_rate() const {
    return ref_tokens == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(ref_tokens);
  }
};

struct ExperimentReport {
  std::string config_hash;
  std::vector<BucketResult> buckets;
  double seconds = 0.0;  // wall clock; not written to the CSV

  // Header comment, header row, one row per bucket.
  void write_csv(std::ostream& os) const;
};

struct EvalOptions {
  std::size_t memory_budget = 0;   // see EvalConfig::memory_budget
  std::ostream* log = nullptr;     // split points are logged here
};

// Decodes one utterance, splitting in half (recursively) while the
// attention-path footprint exceeds the budget.
LabelSeq decode_utterance(EncoderModel& model, const Matrix& features, const EvalOptions& opts,
                          std::size_t* splits = nullptr);

// Greedy-decodes every utterance (in parallel across utterances, ordered
// reduction) and aggregates token error per bucket. ConfigError on a
// vocabulary or feature mismatch.
ExperimentReport evaluate(EncoderModel& model, const std::vector<EvalSet>& sets,
                          const EvalOptions& opts = {}, const std::string& config_hash = "");

// ---- heatmaps -----------------------------------------------------------------------

// Attention weights of one layer/head for an utterance. ConfigError if the
// layer or head index is out of range.
AttnMatrix dump_heatmap(EncoderModel& model, const Matrix& features, std::size_t layer,
                        std::size_t head);
// 8-bit binary graymap, linear, scaled by the map maximum; row i is the
// source (query) frame drawn top to bottom.
void write_pgm(std::ostream& os, const AttnMatrix& attn);
// Mean over rows of the attention mass within +-window of the diagonal.
double diagonal_mass(const AttnMatrix& attn, std::size_t window);
double min_row_diagonal_mass(const AttnMatrix& attn, std::size_t window);

// ---- memory accounting --------------------------------------------------------------

struct MemoryFootprint {
  std::size_t analytic = 0;  // closed-form element count of one head's attention path
  std::size_t measured = 0;  // elements materialized on a live graph
  std::size_t maps = 0;      // the part of `analytic` held in L x L-sized maps
};

// Counts intermediates from the head input (L x d_model) to the attention weights.
std::size_t analytic_attention_elements(AttentionVariant variant, std::size_t length,
                                        std::size_t d_model, std::size_t d_k);
// Elements of the score and weight maps alone (L x L, and L x (2L-1) for the
// relative table gather). The remaining terms are O(L d).
std::size_t attention_map_elements(AttentionVariant variant, std::size_t length);
MemoryFootprint memory_footprint_estimate(AttentionVariant variant, std::size_t length,
                                          const EncoderConfig& cfg);

// ---- length sweep -------------------------------------------------------------------

struct SweepRow {
  std::string variant;
  std::size_t k = 1;
  double mean_error_rate = 0.0;
  std::vector<double> per_seed;
};

// Checkpoint path used for (variant, seed) in a sweep directory.
std::string sweep_checkpoint_path(const std::string& dir, AttentionVariant v, std::uint64_t seed);

// Evaluates dir/<variant>_seed<seed>.ckpt for every pair. ConfigError listing
// every missing checkpoint before any evaluation runs.
std::vector<SweepRow> run_length_sweep(const std::string& dir,
                                       const std::vector<AttentionVariant>& variants,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::vector<EvalSet>& sets, const EvalOptions& opts);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows,
                     const std::string& config_hash);

}  // namespace gksa
