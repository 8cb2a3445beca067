#pragma once

#include <cstddef>
#include <vector>

#include "gksa/numerics/graph.hpp"
#include "gksa/numerics/matrix.hpp"

namespace gksa {

inline constexpr int kBlank = 0;

// Token ids in [1, vocab - 1]; 0 is the blank and never appears here.
using LabelSeq = std::vector<int>;

// Throws ConfigError if a token is blank or out of range.
void validate_labels(const LabelSeq& labels, std::size_t vocab_size);

// Minimum frames any alignment of `labels` needs: one per token plus one
// blank between each pair of equal neighbours.
std::size_t min_alignment_frames(const LabelSeq& labels);

struct CtcResult {
  double loss = 0.0;  // -log p(labels | lattice)
  Matrix grad;        // d loss / d log_probs, L x vocab
};

// Forward-backward over the blank-interleaved labels, in log space.
// log_probs is L x vocab (rows are normally log-softmax outputs, though the
// recursion does not require it). InfeasibleAlignmentError if L is too short.
CtcResult ctc_loss(const Matrix& log_probs, const LabelSeq& labels);

// Exhaustive sum over all vocab^L frame labelings that collapse to labels.
// SizeError if vocab^L exceeds max_paths. Returns +inf when no path exists.
double ctc_brute_force(const Matrix& log_probs, const LabelSeq& labels,
                       std::size_t max_paths = 10'000'000);

// Graph op wrapping ctc_loss; the adjoint is the analytic gradient.
Var ctc_loss_op(Graph& g, Var log_probs, const LabelSeq& labels);

// Per-frame argmax, merge repeats, drop blanks.
LabelSeq greedy_decode(const Matrix& log_probs);
// Collapse an explicit frame path the same way.
LabelSeq collapse_path(const std::vector<int>& path);

// Unit-cost Levenshtein distance.
std::size_t edit_distance(const LabelSeq& hyp, const LabelSeq& ref);
// edit_distance / |ref|. EvaluationError for an empty reference.
double token_error_rate(const LabelSeq& hyp, const LabelSeq& ref);

}  // namespace gksa
