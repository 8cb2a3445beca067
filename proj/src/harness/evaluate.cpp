#include "gksa/harness/evaluate.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <random>

#include "gksa/ctc/ctc.hpp"
#include "gksa/errors.hpp"

namespace gksa {

std::vector<EvalSet> build_eval_sets(const ExperimentConfig& cfg) {
  const Dataset base = gen_dataset(cfg.eval_task());
  std::vector<EvalSet> sets;
  for (std::size_t k : cfg.eval.lengths) {
    if (k == 1) {
      sets.push_back({1, base});
    } else {
      sets.push_back({k, concat_eval(base, k, cfg.eval.long_utterances, cfg.eval.concat_seed + k)});
    }
  }
  return sets;
}

void ExperimentReport::write_csv(std::ostream& os) const {
  os << "# config_hash=" << config_hash << '\n'
     << "variant,k,utterances,ref_tokens,errors,error_rate,mean_frames,splits\n"
     << std::setprecision(17);
  for (const BucketResult& b : buckets) {
    os << b.variant << ',' << b.k << ',' << b.utterances << ',' << b.ref_tokens << ',' << b.errors
       << ',' << b.error_rate() << ',' << b.mean_frames << ',' << b.splits << '\n';
  }
}

namespace {

std::size_t model_attention_elements(const EncoderConfig& cfg, std::size_t length) {
  return analytic_attention_elements(cfg.variant, length, cfg.d_model, cfg.d_k) * cfg.n_heads *
         cfg.n_layers;
}

}  // namespace

LabelSeq decode_utterance(EncoderModel& model, const Matrix& features, const EvalOptions& opts,
                          std::size_t* splits) {
  const EncoderConfig& cfg = model.config();
  const std::size_t factor = cfg.subsample_factor;
  const std::size_t len = (features.rows() + factor - 1) / factor;
  if (opts.memory_budget > 0 && len >= 2 &&
      model_attention_elements(cfg, len) > opts.memory_budget) {
    // Keep the split on a stack boundary so neither half changes its frame grouping.
    const std::size_t cut = std::max<std::size_t>(factor, (features.rows() / 2) / factor * factor);
    if (opts.log != nullptr) {
      *opts.log << "split: " << features.rows() << " frames at frame " << cut << '\n';
    }
    if (splits != nullptr) ++*splits;
    Matrix left(cut, features.cols());
    Matrix right(features.rows() - cut, features.cols());
    for (std::size_t r = 0; r < features.rows(); ++r) {
      auto dst = r < cut ? left.row(r) : right.row(r - cut);
      std::copy(features.row(r).begin(), features.row(r).end(), dst.begin());
    }
    LabelSeq out = decode_utterance(model, left, opts, splits);
    LabelSeq tail = decode_utterance(model, right, opts, splits);
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
  }
  return greedy_decode(model.log_probs(features));
}

ExperimentReport evaluate(EncoderModel& model, const std::vector<EvalSet>& sets,
                          const EvalOptions& opts, const std::string& config_hash) {
  const auto t0 = std::chrono::steady_clock::now();
  const EncoderConfig& cfg = model.config();
  struct Job {
    std::size_t set;
    std::size_t utt;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const Dataset& d = sets[s].data;
    if (d.vocab_size != cfg.vocab_size || d.feature_dim != cfg.input_dim) {
      throw ConfigError("evaluate: eval set vocab " + std::to_string(d.vocab_size) + " / features " +
                        std::to_string(d.feature_dim) + " do not match the model (" +
                        std::to_string(cfg.vocab_size) + " / " + std::to_string(cfg.input_dim) + ")");
    }
    for (std::size_t u = 0; u < d.utterances.size(); ++u) jobs.push_back({s, u});
  }

  std::vector<std::size_t> distances(jobs.size());
  std::vector<std::size_t> split_counts(jobs.size());
  std::exception_ptr failure;
  // Logging is only safe single-threaded; split logs are rare and tests use one thread.
  const long n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      const Utterance& u = sets[jobs[i].set].data.utterances[jobs[i].utt];
      const LabelSeq hyp = decode_utterance(model, u.features, opts, &split_counts[i]);
      distances[i] = edit_distance(hyp, u.labels);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentReport report;
  report.config_hash = config_hash;
  for (const EvalSet& s : sets) {
    BucketResult b;
    b.variant = std::string(variant_name(cfg.variant));
    b.k = s.k;
    report.buckets.push_back(b);
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    BucketResult& b = report.buckets[jobs[i].set];
    const Utterance& u = sets[jobs[i].set].data.utterances[jobs[i].utt];
    ++b.utterances;
    b.ref_tokens += u.labels.size();
    b.errors += distances[i];
    b.splits += split_counts[i];
    b.mean_frames += static_cast<double>((u.features.rows() + cfg.subsample_factor - 1) /
                                         cfg.subsample_factor);
  }
  for (BucketResult& b : report.buckets)
    if (b.utterances > 0) b.mean_frames /= static_cast<double>(b.utterances);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// ---- heatmaps -------------------------------------------------------------------------

AttnMatrix dump_heatmap(EncoderModel& model, const Matrix& features, std::size_t layer,
                        std::size_t head) {
  const EncoderConfig& cfg = model.config();
  if (layer >= cfg.n_layers) {
    throw ConfigError("heatmap: layer " + std::to_string(layer) + " out of range (model has " +
                      std::to_string(cfg.n_layers) + ")");
  }
  if (head >= cfg.n_heads) {
    throw ConfigError("heatmap: head " + std::to_string(head) + " out of range (model has " +
                      std::to_string(cfg.n_heads) + ")");
  }
  Graph g;
  std::vector<std::vector<Var>> attn;
  ForwardOptions opts;
  opts.attention_out = &attn;
  model.forward(g, g.input(features), opts);
  return AttnMatrix(g.value(attn[layer][head]));
}

void write_pgm(std::ostream& os, const AttnMatrix& attn) {
  const Matrix& w = attn.weights();
  const double mx = max_abs(w);
  os << "P5\n" << w.cols() << ' ' << w.rows() << "\n255\n";
  for (double v : w.values()) {
    const double scaled = mx > 0.0 ? v / mx * 255.0 : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(scaled, 0.0, 255.0)))));
  }
}

namespace {

double row_diagonal_mass(const Matrix& w, std::size_t i, std::size_t window) {
  const std::size_t lo = i >= window ? i - window : 0;
  const std::size_t hi = std::min(w.cols() - 1, i + window);
  double s = 0.0;
  for (std::size_t j = lo; j <= hi; ++j) s += w(i, j);
  return s;
}

}  // namespace

double diagonal_mass(const AttnMatrix& attn, std::size_t window) {
  double total = 0.0;
  for (std::size_t i = 0; i < attn.length(); ++i) total += row_diagonal_mass(attn.weights(), i, window);
  return total / static_cast<double>(attn.length());
}

double min_row_diagonal_mass(const AttnMatrix& attn, std::size_t window) {
  double worst = 1.0;
  for (std::size_t i = 0; i < attn.length(); ++i)
    worst = std::min(worst, row_diagonal_mass(attn.weights(), i, window));
  return worst;
}

// ---- memory accounting ----------------------------------------------------------------

std::size_t analytic_attention_elements(AttentionVariant variant, std::size_t length,
                                        std::size_t d_model, std::size_t d_k) {
  const std::size_t L = length;
  const std::size_t sq = L * L;
  // Augmented query/key input: [x, 1], or [x, idx] followed by [x, idx, 1].
  const std::size_t input =
      uses_frame_index(variant) ? L * (d_model + 1) + L * (d_model + 2) : L * (d_model + 1);
  switch (variant) {
    case AttentionVariant::Standard:
    case AttentionVariant::StandardFrameIndex:
      // Q, K; raw scores, scaled scores, softmax
      return input + 2 * L * d_k + 3 * sq;
    case AttentionVariant::SoftMask:
      return input + 2 * L * d_k + 4 * sq;
    case AttentionVariant::SharedQK:
    case AttentionVariant::Gaussian:
    case AttentionVariant::GaussianFrameIndex:
      // one shared projection; Gram or distance matrix, scaled, softmax
      return input + L * d_k + 3 * sq;
    case AttentionVariant::RelativePE: {
      const std::size_t offsets = 2 * L - 1;
      // Q, K, projected offset table, q.r before gathering, u.k row, v.r row,
      // then eight L x L maps: content, gathered position, gathered bias,
      // two partial sums, bias broadcast, scaled, softmax
      return input + 2 * L * d_k + offsets * d_k + L * offsets + L + offsets + 8 * sq;
    }
  }
  return 0;
}

std::size_t attention_map_elements(AttentionVariant variant, std::size_t length) {
  const std::size_t sq = length * length;
  switch (variant) {
    case AttentionVariant::SoftMask: return 4 * sq;
    case AttentionVariant::RelativePE: return 8 * sq + length * (2 * length - 1);
    default: return 3 * sq;
  }
}

MemoryFootprint memory_footprint_estimate(AttentionVariant variant, std::size_t length,
                                          const EncoderConfig& cfg) {
  if (length == 0) throw ConfigError("memory_footprint_estimate: length must be >= 1");
  MemoryFootprint fp;
  fp.analytic = analytic_attention_elements(variant, length, cfg.d_model, cfg.d_k);
  fp.maps = attention_map_elements(variant, length);
  std::mt19937_64 rng(0);
  HeadParams head = init_head_params(variant, {cfg.d_model, cfg.d_k, cfg.d_model / cfg.n_heads}, rng);
  Graph g;
  Var x = g.input(Matrix(length, cfg.d_model, 0.5));
  HeadVars hv = bind_head(g, head);
  const std::size_t before = g.intermediate_elements();
  attention_weights(g, variant, hv, x, AttentionOptions{0, cfg.alpha});
  fp.measured = g.intermediate_elements() - before;
  return fp;
}

// ---- length sweep ---------------------------------------------------------------------

std::string sweep_checkpoint_path(const std::string& dir, AttentionVariant v, std::uint64_t seed) {
  return (std::filesystem::path(dir) /
          (std::string(variant_name(v)) + "_seed" + std::to_string(seed) + ".ckpt"))
      .string();
}

std::vector<SweepRow> run_length_sweep(const std::string& dir,
                                       const std::vector<AttentionVariant>& variants,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::vector<EvalSet>& sets, const EvalOptions& opts) {
  std::string missing;
  for (AttentionVariant v : variants)
    for (std::uint64_t s : seeds) {
      const std::string p = sweep_checkpoint_path(dir, v, s);
      if (!std::filesystem::exists(p)) missing += (missing.empty() ? "" : ", ") + p;
    }
  if (!missing.empty()) throw ConfigError("sweep: missing checkpoints: " + missing);

  std::vector<SweepRow> rows;
  for (AttentionVariant v : variants) {
    std::vector<SweepRow> per_k(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i) {
      per_k[i].variant = std::string(variant_name(v));
      per_k[i].k = sets[i].k;
    }
    for (std::uint64_t s : seeds) {
      EncoderModel model = model_from_checkpoint(load_checkpoint(sweep_checkpoint_path(dir, v, s)));
      if (model.config().variant != v) {
        throw ConfigError("sweep: checkpoint for " + std::string(variant_name(v)) +
                          " holds variant " + std::string(variant_name(model.config().variant)));
      }
      const ExperimentReport rep = evaluate(model, sets, opts);
      for (std::size_t i = 0; i < sets.size(); ++i) per_k[i].per_seed.push_back(rep.buckets[i].error_rate());
    }
    for (SweepRow& r : per_k) {
      double sum = 0.0;
      for (double e : r.per_seed) sum += e;
      r.mean_error_rate = sum / static_cast<double>(r.per_seed.size());
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows,
                     const std::string& config_hash) {
  os << "# config_hash=" << config_hash << '\n'
     << "variant,k,mean_error_rate,seeds,per_seed\n"
     << std::setprecision(17);
  for (const SweepRow& r : rows) {
    os << r.variant << ',' << r.k << ',' << r.mean_error_rate << ',' << r.per_seed.size() << ',';
    for (std::size_t i = 0; i < r.per_seed.size(); ++i) os << (i ? ";" : "") << r.per_seed[i];
    os << '\n';
  }
}

}  // namespace gksa
