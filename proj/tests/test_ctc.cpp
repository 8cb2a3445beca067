#include <cmath>
#include <random>

#include "doctest.h"
#include "gksa/ctc/ctc.hpp"
#include "gksa/errors.hpp"
#include "gksa/numerics/kernels.hpp"
#include "test_support.hpp"

using namespace gksa;
using gksa::testing::check_gradients;
using gksa::testing::max_of;
using gksa::testing::random_matrix;

namespace {

Matrix random_lattice(std::size_t frames, std::size_t vocab, std::mt19937_64& rng) {
  Matrix p = kernels::softmax_rows(random_matrix(frames, vocab, rng, 1.5));
  for (double& v : p.values()) v = std::log(v);
  return p;
}

// Every label sequence over tokens 1..vocab-1 with length <= max_len.
std::vector<LabelSeq> all_label_seqs(std::size_t vocab, std::size_t max_len) {
  std::vector<LabelSeq> out{{}};
  std::vector<LabelSeq> frontier{{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<LabelSeq> next;
    for (const LabelSeq& s : frontier)
      for (int t = 1; t < static_cast<int>(vocab); ++t) {
        LabelSeq e = s;
        e.push_back(t);
        next.push_back(e);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

std::size_t levenshtein_table(const LabelSeq& a, const LabelSeq& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[a.size()][b.size()];
}

}  // namespace

TEST_CASE("ctc_loss small cases") {
  std::mt19937_64 rng(41);
  const Matrix one = random_lattice(1, 3, rng);
  CHECK(std::abs(ctc_loss(one, {2}).loss + one(0, 2)) <= 1e-14);

  const Matrix two = random_lattice(2, 3, rng);
  CHECK(std::abs(ctc_loss(two, {}).loss + two(0, 0) + two(1, 0)) <= 1e-14);

  // Uniform, L=2, vocab=2, labels [a]: paths aa, a-, -a.
  const Matrix uniform(2, 2, std::log(0.5));
  CHECK(std::abs(ctc_loss(uniform, {1}).loss + std::log(3.0 / 4.0)) <= 1e-14);
  CHECK(std::abs(ctc_brute_force(uniform, {1}) + std::log(3.0 / 4.0)) <= 1e-14);

  CHECK_THROWS_AS(ctc_loss(two, {1, 1}), InfeasibleAlignmentError);
  CHECK_THROWS_AS(ctc_loss(two, {1, 2, 1}), InfeasibleAlignmentError);
  CHECK(std::isinf(ctc_brute_force(two, {1, 1})));
  CHECK_THROWS_AS(ctc_loss(two, {0}), ConfigError);
  CHECK_THROWS_AS(ctc_loss(two, {3}), ConfigError);
  CHECK(min_alignment_frames({1, 1, 2, 2, 2}) == 8);

  CHECK_THROWS_AS(ctc_brute_force(random_lattice(15, 3, rng), {1}), SizeError);
}

TEST_CASE("ctc_loss equals brute-force enumeration on the full small grid") {
  std::mt19937_64 rng(42);
  double worst = 0.0;
  std::size_t cases = 0;
  const auto seqs = all_label_seqs(3, 3);
  for (std::size_t frames = 1; frames <= 6; ++frames) {
    for (int rep = 0; rep < 3; ++rep) {
      const Matrix lat = random_lattice(frames, 3, rng);
      for (const LabelSeq& labels : seqs) {
        const double brute = ctc_brute_force(lat, labels);
        if (min_alignment_frames(labels) > frames) {
          CHECK(std::isinf(brute));
          CHECK_THROWS_AS(ctc_loss(lat, labels), InfeasibleAlignmentError);
          continue;
        }
        worst = std::max(worst, std::abs(ctc_loss(lat, labels).loss - brute));
        ++cases;
      }
    }
  }
  CHECK(cases == 180);
  CHECK(worst <= 1e-10);
}

TEST_CASE("probabilities over all label sequences sum to one") {
  std::mt19937_64 rng(43);
  for (std::size_t frames = 1; frames <= 6; ++frames) {
    const Matrix lat = random_lattice(frames, 3, rng);
    double total = 0.0;
    for (const LabelSeq& labels : all_label_seqs(3, frames)) {
      if (min_alignment_frames(labels) > frames) continue;
      total += std::exp(-ctc_loss(lat, labels).loss);
    }
    CHECK(std::abs(total - 1.0) <= 1e-8);
  }
}

TEST_CASE("ctc_loss stays finite for tiny probabilities") {
  Matrix single(1, 3, std::log(0.5));
  single(0, 1) = std::log(1e-280);
  CHECK(std::abs(ctc_loss(single, {1}).loss - 280.0 * std::log(10.0)) <= 1e-9);

  Matrix lat(6, 3, std::log(1e-280));
  for (std::size_t t = 0; t < 6; ++t) lat(t, 0) = std::log(1.0 - 2e-280);
  const CtcResult r = ctc_loss(lat, {1, 2, 1});
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss > 3.0 * 280.0 * std::log(10.0) - 10.0);
  CHECK(all_finite(r.grad));
}

TEST_CASE("ctc gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix logits = random_matrix(7, 4, rng);
    const LabelSeq labels{1, 3, 3};
    const auto errs = check_gradients(
        {logits},
        [&](Graph& g, const std::vector<Var>& v) {
          return ctc_loss_op(g, g.log_softmax_rows(v[0]), labels);
        },
        seed);
    CHECK(max_of(errs) <= 1e-5);

    // Raw lattice gradient, without the softmax in front.
    const Matrix lat = random_lattice(5, 3, rng);
    Matrix probe = lat;
    const Matrix analytic = ctc_loss(lat, {2, 1}).grad;
    const Matrix numeric = finite_diff_grad([&] { return ctc_loss(probe, {2, 1}).loss; }, probe);
    CHECK(gksa::testing::grad_rel_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("greedy_decode and collapse") {
  CHECK(collapse_path({0, 1, 1, 0, 2}) == LabelSeq{1, 2});
  CHECK(collapse_path({0, 0, 0}).empty());
  CHECK(collapse_path({1, 0, 1}) == LabelSeq{1, 1});
  CHECK(collapse_path({}).empty());

  Matrix lat(5, 3, -5.0);
  const int path[] = {0, 1, 1, 0, 2};
  for (std::size_t t = 0; t < 5; ++t) lat(t, static_cast<std::size_t>(path[t])) = -0.1;
  CHECK(greedy_decode(lat) == LabelSeq{1, 2});
}

TEST_CASE("token error rate") {
  CHECK(token_error_rate({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(token_error_rate({1, 3}, {1, 2, 3}) == doctest::Approx(1.0 / 3.0));
  CHECK(edit_distance({}, {}) == 0);
  CHECK(edit_distance({1, 2}, {}) == 2);
  CHECK_THROWS_AS(token_error_rate({1}, {}), EvaluationError);

  std::mt19937_64 rng(44);
  std::uniform_int_distribution<int> tok(1, 4);
  std::uniform_int_distribution<std::size_t> len(0, 12);
  for (int trial = 0; trial < 500; ++trial) {
    LabelSeq a(len(rng)), b(len(rng));
    for (int& t : a) t = tok(rng);
    for (int& t : b) t = tok(rng);
    CHECK(edit_distance(a, b) == levenshtein_table(a, b));
  }

  // Perfect per-segment hypotheses concatenate to a perfect hypothesis.
  LabelSeq ref, hyp;
  for (const LabelSeq& seg : {LabelSeq{1, 2}, LabelSeq{3}, LabelSeq{2, 2, 4}}) {
    ref.insert(ref.end(), seg.begin(), seg.end());
    hyp.insert(hyp.end(), seg.begin(), seg.end());
  }
  CHECK(token_error_rate(hyp, ref) == 0.0);
}
