#include "gksa/attention/attention.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "gksa/errors.hpp"
#include "gksa/numerics/kernels.hpp"

namespace gksa {

std::string_view variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::Standard: return "Standard";
    case AttentionVariant::SoftMask: return "SoftMask";
    case AttentionVariant::RelativePE: return "RelativePE";
    case AttentionVariant::SharedQK: return "SharedQK";
    case AttentionVariant::Gaussian: return "Gaussian";
    case AttentionVariant::GaussianFrameIndex: return "GaussianFrameIndex";
    case AttentionVariant::StandardFrameIndex: return "StandardFrameIndex";
  }
  return "?";
}

AttentionVariant parse_variant(std::string_view name) {
  for (AttentionVariant v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown attention variant '" + std::string(name) + "'");
}

bool uses_frame_index(AttentionVariant v) {
  return v == AttentionVariant::GaussianFrameIndex || v == AttentionVariant::StandardFrameIndex;
}

bool uses_shared_projection(AttentionVariant v) {
  return v == AttentionVariant::SharedQK || v == AttentionVariant::Gaussian ||
         v == AttentionVariant::GaussianFrameIndex;
}

bool default_uses_abs_pe(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::Standard:
    case AttentionVariant::SoftMask:
    case AttentionVariant::SharedQK:
    case AttentionVariant::StandardFrameIndex: return true;
    default: return false;
  }
}

// ---- AttnMatrix -------------------------------------------------------------------

AttnMatrix::AttnMatrix(Matrix weights) : weights_(std::move(weights)) {
  if (weights_.rows() != weights_.cols()) {
    throw DimensionError("AttnMatrix must be square, got " + weights_.shape_string());
  }
}

double AttnMatrix::max_row_sum_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < weights_.rows(); ++i) {
    double s = 0.0;
    for (double v : weights_.row(i)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

void AttnMatrix::write_csv(std::ostream& os) const {
  const auto old_precision = os.precision();
  os << std::setprecision(17);
  for (std::size_t i = 0; i < weights_.rows(); ++i) {
    for (std::size_t j = 0; j < weights_.cols(); ++j) {
      if (j > 0) os << ',';
      os << weights_(i, j);
    }
    os << '\n';
  }
  os.precision(old_precision);
}

// ---- encodings and masks ------------------------------------------------------------

Matrix sinusoid_encoding_at(long first, std::size_t count, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("sinusoid encoding needs an even dimension, got " + std::to_string(dim));
  }
  if (count == 0) throw ConfigError("sinusoid encoding needs at least one position");
  Matrix u(count, dim);
  for (std::size_t r = 0; r < count; ++r) {
    const double pos = static_cast<double>(first + static_cast<long>(r));
    for (std::size_t k = 0; 2 * k < dim; ++k) {
      const double denom =
          std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(dim));
      u(r, 2 * k) = std::sin(pos / denom);
      u(r, 2 * k + 1) = std::cos(pos / denom);
    }
  }
  return u;
}

Matrix sinusoid_encoding(std::size_t length, std::size_t dim) {
  return sinusoid_encoding_at(0, length, dim);
}

Matrix relative_offset_table(std::size_t length, std::size_t dim) {
  if (length == 0) throw ConfigError("relative_offset_table: length must be positive");
  return sinusoid_encoding_at(-static_cast<long>(length) + 1, 2 * length - 1, dim);
}

Matrix soft_mask_matrix(std::size_t length, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("soft mask sigma must be positive");
  Matrix m(length, length);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = 0; j < length; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      m(i, j) = -(d * d) / (2.0 * sigma * sigma);
    }
  }
  return m;
}

Matrix apply_soft_mask(const Matrix& scores, const Matrix& mask) {
  require_same_shape(scores, mask, "apply_soft_mask");
  return scores + mask;
}

Matrix append_bias_column(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    out(i, x.cols()) = 1.0;
  }
  return out;
}

Matrix frame_index_augment(const Matrix& x, long start_index, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("frame index alpha must be positive");
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    out(i, x.cols()) = static_cast<double>(start_index + static_cast<long>(i)) / alpha;
  }
  return out;
}

// ---- graph builders ------------------------------------------------------------------

namespace {

void require_proj(const Matrix& w, std::size_t in_dim, const char* name) {
  if (w.cols() != in_dim) {
    throw DimensionError(std::string(name) + " is " + w.shape_string() +
                         " but the augmented input has " + std::to_string(in_dim) + " columns");
  }
}

double inv_sqrt_dk(const Matrix& w) { return 1.0 / std::sqrt(static_cast<double>(w.rows())); }

// [x, index/alpha, 1] or [x, 1] depending on the variant.
Var qk_input(Graph& g, AttentionVariant variant, Var x, const AttentionOptions& opts) {
  if (!uses_frame_index(variant)) return g.append_constant_col(x, 1.0);
  if (!(opts.alpha > 0.0)) throw ConfigError("frame index alpha must be positive");
  const std::size_t len = g.value(x).rows();
  Matrix idx(len, 1);
  for (std::size_t i = 0; i < len; ++i)
    idx(i, 0) = static_cast<double>(opts.start_index + static_cast<long>(i)) / opts.alpha;
  Var with_index = g.concat_cols({x, g.input(std::move(idx))});
  return g.append_constant_col(with_index, 1.0);
}

Var dot_scores(Graph& g, Var xa, Var w_q, Var w_k) {
  require_proj(g.value(w_q), g.value(xa).cols(), "w_q");
  require_proj(g.value(w_k), g.value(xa).cols(), "w_k");
  Var q = g.matmul_nt(xa, w_q);
  Var k = g.matmul_nt(xa, w_k);
  return g.scale(g.matmul_nt(q, k), inv_sqrt_dk(g.value(w_q)));
}

Var shared_scores(Graph& g, Var xa, Var w_s) {
  require_proj(g.value(w_s), g.value(xa).cols(), "w_s");
  Var s = g.matmul_nt(xa, w_s);
  return g.scale(g.matmul_nt(s, s), inv_sqrt_dk(g.value(w_s)));
}

// -1/2 (a_i - a_j)^T Sigma^-1 (a_i - a_j) = -|W a_i - W a_j|^2 / (2 sqrt(d_k))
Var gaussian_graph_scores(Graph& g, Var xa, Var w_s) {
  require_proj(g.value(w_s), g.value(xa).cols(), "w_s");
  Var q = g.matmul_nt(xa, w_s);
  return g.scale(g.pairwise_sq_dist(q), -0.5 * inv_sqrt_dk(g.value(w_s)));
}

Var relative_graph_scores(Graph& g, Var xa, Var w_q, Var w_k_x, Var w_k_r, Var u, Var v,
                          Var r_table) {
  const std::size_t len = g.value(xa).rows();
  require_proj(g.value(w_q), g.value(xa).cols(), "w_q");
  require_proj(g.value(w_k_x), g.value(xa).cols(), "w_k_x");
  require_proj(g.value(w_k_r), g.value(r_table).cols(), "w_k_r");
  if (g.value(r_table).rows() != 2 * len - 1) {
    throw StateError("relative offset table covers " + std::to_string(g.value(r_table).rows()) +
                     " offsets, need " + std::to_string(2 * len - 1));
  }
  Var q = g.matmul_nt(xa, w_q);
  Var k = g.matmul_nt(xa, w_k_x);
  Var rp = g.matmul_nt(r_table, w_k_r);                    // (2L-1) x d_k
  Var content = g.matmul_nt(q, k);                         // q_i . k_j
  Var position = g.relative_gather(g.matmul_nt(q, rp));    // q_i . r_{i-j}
  Var content_bias = g.matmul_nt(u, k);                    // 1 x L: u . k_j
  Var position_bias = g.relative_gather_row(g.matmul_nt(v, rp));  // v . r_{i-j}
  Var total = g.add(g.add(content, position), position_bias);
  return g.add_row_vector(total, content_bias);
}

}  // namespace

Var attention_scores(Graph& g, AttentionVariant variant, const HeadVars& head, Var x,
                     const AttentionOptions& opts) {
  Var xa = qk_input(g, variant, x, opts);
  switch (variant) {
    case AttentionVariant::Standard:
    case AttentionVariant::StandardFrameIndex: return dot_scores(g, xa, head.w_q, head.w_k);
    case AttentionVariant::SoftMask:
      return g.add_gaussian_window(dot_scores(g, xa, head.w_q, head.w_k), head.log_sigma);
    case AttentionVariant::SharedQK: return shared_scores(g, xa, head.w_s);
    case AttentionVariant::Gaussian:
    case AttentionVariant::GaussianFrameIndex: return gaussian_graph_scores(g, xa, head.w_s);
    case AttentionVariant::RelativePE: {
      const std::size_t len = g.value(x).rows();
      Var table = g.input(relative_offset_table(len, g.value(x).cols()));
      Var raw = relative_graph_scores(g, xa, head.w_q, head.w_k, head.w_k_r, head.u, head.v,
                                      table);
      return g.scale(raw, inv_sqrt_dk(g.value(head.w_q)));
    }
  }
  throw ConfigError("unhandled attention variant");
}

Var attention_weights(Graph& g, AttentionVariant variant, const HeadVars& head, Var x,
                      const AttentionOptions& opts) {
  return g.softmax_rows(attention_scores(g, variant, head, x, opts));
}

// ---- plain-matrix entry points --------------------------------------------------------

Matrix standard_scores(const Matrix& x, const Matrix& w_q, const Matrix& w_k) {
  Graph g;
  return g.value(dot_scores(g, g.input(append_bias_column(x)), g.input(w_q), g.input(w_k)));
}

AttnMatrix attn_standard(const Matrix& x, const Matrix& w_q, const Matrix& w_k) {
  return AttnMatrix(kernels::softmax_rows(standard_scores(x, w_q, w_k)));
}

Matrix shared_qk_scores(const Matrix& x, const Matrix& w_s) {
  Graph g;
  return g.value(shared_scores(g, g.input(append_bias_column(x)), g.input(w_s)));
}

AttnMatrix attn_shared_qk(const Matrix& x, const Matrix& w_s) {
  return AttnMatrix(kernels::softmax_rows(shared_qk_scores(x, w_s)));
}

Matrix gaussian_scores(const Matrix& x, const Matrix& w_s) {
  Graph g;
  return g.value(gaussian_graph_scores(g, g.input(append_bias_column(x)), g.input(w_s)));
}

AttnMatrix attn_gaussian(const Matrix& x, const Matrix& w_s) {
  return AttnMatrix(kernels::softmax_rows(gaussian_scores(x, w_s)));
}

Matrix scores_relative(const Matrix& x, const Matrix& w_q, const Matrix& w_k_x,
                       const Matrix& w_k_r, const Matrix& u, const Matrix& v,
                       const Matrix& r_table) {
  Graph g;
  return g.value(relative_graph_scores(g, g.input(append_bias_column(x)), g.input(w_q),
                                       g.input(w_k_x), g.input(w_k_r), g.input(u), g.input(v),
                                       g.input(r_table)));
}

// ---- kernel view ------------------------------------------------------------------------

Matrix kernel_precision(const Matrix& w_s) {
  // W_hat = W / d_k^(1/4); Sigma^-1 = W_hat^T W_hat
  const double s = 1.0 / std::pow(static_cast<double>(w_s.rows()), 0.25);
  const Matrix w_hat = w_s * s;
  return kernels::serial::matmul_tn(w_hat, w_hat);
}

namespace {

double quad_form(const Matrix& p, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double inner = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) inner += p(r, c) * b[c];
    s += a[r] * inner;
  }
  return s;
}

// Log of the three completed-square factors for every pair.
struct LogFactors {
  Matrix precision;
  Matrix log_difference;
  std::vector<double> log_energy;
};

LogFactors log_kernel_factors(const Matrix& x, const Matrix& w_s) {
  const Matrix a = append_bias_column(x);
  require_proj(w_s, a.cols(), "w_s");
  LogFactors f{kernel_precision(w_s), Matrix(a.rows(), a.rows()),
               std::vector<double>(a.rows())};
  std::vector<double> diff(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    f.log_energy[i] = 0.5 * quad_form(f.precision, a.row(i), a.row(i));
    for (std::size_t j = 0; j < a.rows(); ++j) {
      for (std::size_t c = 0; c < a.cols(); ++c) diff[c] = a(i, c) - a(j, c);
      f.log_difference(i, j) = -0.5 * quad_form(f.precision, diff, diff);
    }
  }
  return f;
}

}  // namespace

KernelFormFactors kernel_form_factors(const Matrix& x, const Matrix& w_s) {
  LogFactors lf = log_kernel_factors(x, w_s);
  const Matrix a = append_bias_column(x);
  const std::size_t len = a.rows();
  KernelFormFactors out{lf.precision, Matrix(len, len), Matrix(len, len),
                        std::vector<double>(len)};
  for (std::size_t i = 0; i < len; ++i) out.energy[i] = std::exp(lf.log_energy[i]);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      out.difference(i, j) = std::exp(lf.log_difference(i, j));
      out.gram(i, j) = std::exp(quad_form(lf.precision, a.row(i), a.row(j)));
    }
  }
  return out;
}

AttnMatrix attn_kernel_form(const Matrix& x, const Matrix& w_s) {
  LogFactors lf = log_kernel_factors(x, w_s);
  const std::size_t len = x.rows();
  Matrix w(len, len);
  for (std::size_t i = 0; i < len; ++i) {
    // difference(i,j) * energy(i) * energy(j), normalized over j. Products are
    // taken as sums of logs and shifted by the row max so they stay finite.
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < len; ++j) {
      w(i, j) = lf.log_difference(i, j) + lf.log_energy[i] + lf.log_energy[j];
      mx = std::max(mx, w(i, j));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      w(i, j) = std::exp(w(i, j) - mx);
      z += w(i, j);
    }
    for (std::size_t j = 0; j < len; ++j) w(i, j) /= z;
  }
  return AttnMatrix(std::move(w));
}

// ---- parameters ---------------------------------------------------------------------------

namespace {

Matrix init_projection(std::size_t out_dim, std::size_t in_dim, bool has_bias,
                       std::mt19937_64& rng) {
  const std::size_t cols = in_dim + (has_bias ? 1 : 0);
  Matrix w(out_dim, cols);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  for (std::size_t r = 0; r < out_dim; ++r)
    for (std::size_t c = 0; c < in_dim; ++c) w(r, c) = dist(rng);
  return w;
}

}  // namespace

HeadParams init_head_params(AttentionVariant variant, const HeadShape& shape,
                            std::mt19937_64& rng) {
  if (shape.d_model == 0 || shape.d_k == 0 || shape.d_v == 0) {
    throw ConfigError("attention head dimensions must be positive");
  }
  const std::size_t qk_in = shape.d_model + (uses_frame_index(variant) ? 1 : 0);
  HeadParams h;
  if (uses_shared_projection(variant)) {
    h.w_s = Parameter(init_projection(shape.d_k, qk_in, true, rng));
  } else {
    h.w_q = Parameter(init_projection(shape.d_k, qk_in, true, rng));
    h.w_k = Parameter(init_projection(shape.d_k, qk_in, true, rng));
  }
  if (variant == AttentionVariant::RelativePE) {
    if (shape.d_model % 2 != 0) throw ConfigError("RelativePE needs an even d_model");
    h.w_k_r = Parameter(init_projection(shape.d_k, shape.d_model, false, rng));
    std::normal_distribution<double> small(0.0, 0.1);
    Matrix u(1, shape.d_k);
    Matrix v(1, shape.d_k);
    for (double& e : u.values()) e = small(rng);
    for (double& e : v.values()) e = small(rng);
    h.u = Parameter(std::move(u));
    h.v = Parameter(std::move(v));
  }
  if (variant == AttentionVariant::SoftMask) {
    h.log_sigma = Parameter(Matrix(1, 1, std::log(kDefaultSoftMaskSigma)));
  }
  h.w_v = Parameter(init_projection(shape.d_v, shape.d_model, true, rng));
  return h;
}

void for_each_parameter(HeadParams& head,
                        const std::function<void(const std::string&, Parameter&)>& fn) {
  const std::pair<const char*, Parameter*> fields[] = {
      {"w_q", &head.w_q}, {"w_k", &head.w_k},   {"w_s", &head.w_s},
      {"w_k_r", &head.w_k_r}, {"u", &head.u},   {"v", &head.v},
      {"log_sigma", &head.log_sigma}, {"w_v", &head.w_v}};
  for (const auto& [name, p] : fields)
    if (p->defined()) fn(name, *p);
}

HeadVars bind_head(Graph& g, HeadParams& head) {
  auto bind = [&g](Parameter& p) { return p.defined() ? g.param(p) : Var(); };
  return HeadVars{bind(head.w_q), bind(head.w_k), bind(head.w_s),         bind(head.w_k_r),
                  bind(head.u),   bind(head.v),   bind(head.log_sigma), bind(head.w_v)};
}

MultiHeadParams init_multi_head(AttentionVariant variant, std::size_t d_model,
                                std::size_t n_heads, std::size_t d_k, std::mt19937_64& rng) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
  const HeadShape shape{d_model, d_k, d_model / n_heads};
  MultiHeadParams mh;
  for (std::size_t h = 0; h < n_heads; ++h) mh.heads.push_back(init_head_params(variant, shape, rng));
  mh.w_o = Parameter(init_projection(d_model, n_heads * shape.d_v, true, rng));
  return mh;
}

Var multi_head_attention(Graph& g, AttentionVariant variant, MultiHeadParams& params, Var x,
                         const AttentionOptions& opts, std::vector<Var>* weights_out) {
  if (params.heads.empty()) throw ConfigError("multi-head attention needs at least one head");
  // Values never see the frame index column.
  Var xv = g.append_constant_col(x, 1.0);
  std::vector<Var> outputs;
  outputs.reserve(params.heads.size());
  for (HeadParams& head : params.heads) {
    HeadVars hv = bind_head(g, head);
    Var attn = attention_weights(g, variant, hv, x, opts);
    if (weights_out != nullptr) weights_out->push_back(attn);
    Var values = g.matmul_nt(xv, hv.w_v);
    outputs.push_back(g.matmul(attn, values));
  }
  Var joined = outputs.size() == 1 ? outputs.front() : g.concat_cols(outputs);
  return g.matmul_nt(g.append_constant_col(joined, 1.0), g.param(params.w_o));
}

}  // namespace gksa
