#include "gksa/ctc/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gksa/errors.hpp"

namespace gksa {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

void validate_labels(const LabelSeq& labels, std::size_t vocab_size) {
  for (int t : labels) {
    if (t == kBlank || t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
      throw ConfigError("label " + std::to_string(t) + " outside [1, " +
                        std::to_string(vocab_size - 1) + "]");
    }
  }
}

std::size_t min_alignment_frames(const LabelSeq& labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++n;
  return n;
}

CtcResult ctc_loss(const Matrix& log_probs, const LabelSeq& labels) {
  const std::size_t frames = log_probs.rows();
  const std::size_t vocab = log_probs.cols();
  validate_labels(labels, vocab);
  const std::size_t need = min_alignment_frames(labels);
  if (need > frames) {
    throw InfeasibleAlignmentError("CTC: " + std::to_string(labels.size()) +
                                   " labels need at least " + std::to_string(need) +
                                   " frames, lattice has " + std::to_string(frames));
  }

  // Extended sequence: blank, l1, blank, l2, ..., blank
  const std::size_t states = 2 * labels.size() + 1;
  std::vector<int> ext(states, kBlank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto can_skip = [&](std::size_t s) {  // transition s-2 -> s
    return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2];
  };

  Matrix alpha(frames, states, kNegInf);
  alpha(0, 0) = log_probs(0, ext[0]);
  if (states > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc == kNegInf ? kNegInf : acc + log_probs(t, ext[s]);
    }
  }

  // beta(t, s): log prob of emitting frames t+1.. given state s at frame t.
  Matrix beta(frames, states, kNegInf);
  beta(frames - 1, states - 1) = 0.0;
  if (states > 1) beta(frames - 1, states - 2) = 0.0;
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double acc = beta(t + 1, s) + log_probs(t + 1, ext[s]);
      if (s + 1 < states) acc = log_add(acc, beta(t + 1, s + 1) + log_probs(t + 1, ext[s + 1]));
      if (s + 2 < states && can_skip(s + 2))
        acc = log_add(acc, beta(t + 1, s + 2) + log_probs(t + 1, ext[s + 2]));
      beta(t, s) = acc;
    }
  }

  double log_p = alpha(frames - 1, states - 1);
  if (states > 1) log_p = log_add(log_p, alpha(frames - 1, states - 2));
  if (log_p == kNegInf) {
    throw InfeasibleAlignmentError("CTC: lattice assigns zero probability to every alignment");
  }

  CtcResult result{-log_p, Matrix(frames, vocab)};
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      const double occ = alpha(t, s) + beta(t, s);
      if (occ == kNegInf) continue;
      result.grad(t, ext[s]) -= std::exp(occ - log_p);
    }
  }
  return result;
}

double ctc_brute_force(const Matrix& log_probs, const LabelSeq& labels, std::size_t max_paths) {
  const std::size_t frames = log_probs.rows();
  const std::size_t vocab = log_probs.cols();
  validate_labels(labels, vocab);
  double paths = 1.0;
  for (std::size_t t = 0; t < frames; ++t) paths *= static_cast<double>(vocab);
  if (paths > static_cast<double>(max_paths)) {
    throw SizeError("CTC brute force: " + std::to_string(vocab) + "^" + std::to_string(frames) +
                    " paths exceed budget " + std::to_string(max_paths));
  }
  std::vector<int> path(frames, 0);
  double total = 0.0;
  const auto count = static_cast<std::size_t>(paths);
  for (std::size_t code = 0; code < count; ++code) {
    std::size_t c = code;
    double logp = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      path[t] = static_cast<int>(c % vocab);
      c /= vocab;
      logp += log_probs(t, path[t]);
    }
    if (collapse_path(path) == labels) total += std::exp(logp);
  }
  return total > 0.0 ? -std::log(total) : std::numeric_limits<double>::infinity();
}

Var ctc_loss_op(Graph& g, Var log_probs, const LabelSeq& labels) {
  CtcResult r = ctc_loss(g.value(log_probs), labels);
  return g.op(Matrix(1, 1, r.loss), [log_probs, grad = std::move(r.grad)](Graph& gr, Var self) {
    const double scale = gr.grad(self)(0, 0);
    gr.grad_accumulator(log_probs) += grad * scale;
  });
}

LabelSeq collapse_path(const std::vector<int>& path) {
  LabelSeq out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != kBlank) out.push_back(k);
    prev = k;
  }
  return out;
}

LabelSeq greedy_decode(const Matrix& log_probs) {
  std::vector<int> path(log_probs.rows());
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    auto row = log_probs.row(t);
    path[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return collapse_path(path);
}

std::size_t edit_distance(const LabelSeq& hyp, const LabelSeq& ref) {
  std::vector<std::size_t> prev(ref.size() + 1);
  std::vector<std::size_t> cur(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double token_error_rate(const LabelSeq& hyp, const LabelSeq& ref) {
  if (ref.empty()) throw EvaluationError("token error rate is undefined for an empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace gksa
