#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gksa/numerics/graph.hpp"
#include "gksa/numerics/matrix.hpp"

namespace gksa {

enum class AttentionVariant {
  Standard,
  SoftMask,
  RelativePE,
  SharedQK,
  Gaussian,
  GaussianFrameIndex,
  // Frame index fed to the non-shift-invariant dot-product attention. Kept to
  // show that the index column breaks it.
  StandardFrameIndex,
};

inline constexpr std::array<AttentionVariant, 7> kAllVariants = {
    AttentionVariant::Standard,          AttentionVariant::SoftMask,
    AttentionVariant::RelativePE,        AttentionVariant::SharedQK,
    AttentionVariant::Gaussian,          AttentionVariant::GaussianFrameIndex,
    AttentionVariant::StandardFrameIndex};

std::string_view variant_name(AttentionVariant v);
// ConfigError on an unknown name.
AttentionVariant parse_variant(std::string_view name);
bool uses_frame_index(AttentionVariant v);
bool uses_shared_projection(AttentionVariant v);
// Whether the encoder adds absolute sinusoid encodings by default.
bool default_uses_abs_pe(AttentionVariant v);

inline constexpr double kDefaultAlpha = 100.0;
// Finite stand-in for -inf in additive masks.
inline constexpr double kMaskNegInf = -1e30;
inline constexpr double kDefaultSoftMaskSigma = 10.0;

// L x L row-stochastic attention weights. Row = query (source) frame,
// column = key (target) frame.
class AttnMatrix {
 public:
  explicit AttnMatrix(Matrix weights);
  const Matrix& weights() const { return weights_; }
  std::size_t length() const { return weights_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return weights_(i, j); }
  // max_i |sum_j w(i, j) - 1|
  double max_row_sum_error() const;
  // Row-major CSV, 17 significant digits, no header.
  void write_csv(std::ostream& os) const;

 private:
  Matrix weights_;
};

// ---- encodings and masks ------------------------------------------------------

// U(i, 2k) = sin(i / 10000^(2k/D)), U(i, 2k+1) = cos(i / 10000^(2k/D)) for
// positions i = first, first+1, ... (first may be negative). D must be even.
Matrix sinusoid_encoding(std::size_t length, std::size_t dim);
Matrix sinusoid_encoding_at(long first, std::size_t count, std::size_t dim);
// Rows for signed offsets -(L-1) .. (L-1); row r + L - 1 holds offset r.
Matrix relative_offset_table(std::size_t length, std::size_t dim);

// M(i, j) = -(i - j)^2 / (2 sigma^2).
Matrix soft_mask_matrix(std::size_t length, double sigma);
Matrix apply_soft_mask(const Matrix& scores, const Matrix& mask);

// [x, 1]: the constant column carries the bias of every linear map.
Matrix append_bias_column(const Matrix& x);
// [x, (start_index + i) / alpha]
Matrix frame_index_augment(const Matrix& x, long start_index, double alpha = kDefaultAlpha);

// ---- single-head attention on plain matrices ------------------------------------
// x is L x D; projection matrices are d_k x (D + 1) and act on [x, 1].

AttnMatrix attn_standard(const Matrix& x, const Matrix& w_q, const Matrix& w_k);
Matrix standard_scores(const Matrix& x, const Matrix& w_q, const Matrix& w_k);
AttnMatrix attn_shared_qk(const Matrix& x, const Matrix& w_s);
Matrix shared_qk_scores(const Matrix& x, const Matrix& w_s);
AttnMatrix attn_gaussian(const Matrix& x, const Matrix& w_s);
Matrix gaussian_scores(const Matrix& x, const Matrix& w_s);

// Precision matrix of the kernel view: W^T W / sqrt(d_k), (D+1) x (D+1).
Matrix kernel_precision(const Matrix& w_s);

// Factors of the completed-square form of shared-QK attention, on [x, 1]:
//   gram(i, j)       = exp(a_i^T P a_j)
//   difference(i, j) = exp(-1/2 (a_i - a_j)^T P (a_i - a_j))
//   energy(i)        = exp(1/2 a_i^T P a_i)
// with gram(i, j) == difference(i, j) * energy(i) * energy(j).
struct KernelFormFactors {
  Matrix precision;
  Matrix difference;
  Matrix gram;
  std::vector<double> energy;
};
KernelFormFactors kernel_form_factors(const Matrix& x, const Matrix& w_s);

// Shared-QK attention evaluated through the precision matrix as
// difference kernel x both energy terms, row-normalized. Independent route
// to attn_shared_qk.
AttnMatrix attn_kernel_form(const Matrix& x, const Matrix& w_s);

// Four-term relative score, unscaled:
//   A(i,j) = q_i.k_j + q_i.(W_kr R_{i-j}) + u.k_j + v.(W_kr R_{i-j})
// with q = W_q [x,1], k = W_kx [x,1]. r_table from relative_offset_table.
Matrix scores_relative(const Matrix& x, const Matrix& w_q, const Matrix& w_k_x,
                       const Matrix& w_k_r, const Matrix& u, const Matrix& v,
                       const Matrix& r_table);

// ---- trainable heads ----------------------------------------------------------

// Only the fields required by the variant are defined. log_sigma keeps
// sigma = exp(log_sigma) positive.
struct HeadParams {
  Parameter w_q;
  Parameter w_k;
  Parameter w_s;
  Parameter w_k_r;
  Parameter u;
  Parameter v;
  Parameter log_sigma;
  Parameter w_v;
};

struct HeadShape {
  std::size_t d_model = 0;
  std::size_t d_k = 0;
  std::size_t d_v = 0;
};

HeadParams init_head_params(AttentionVariant variant, const HeadShape& shape,
                            std::mt19937_64& rng);
// Visits the defined parameters with stable names (w_q, w_k, ...).
void for_each_parameter(HeadParams& head,
                        const std::function<void(const std::string&, Parameter&)>& fn);

struct HeadVars {
  Var w_q, w_k, w_s, w_k_r, u, v, log_sigma, w_v;
};
HeadVars bind_head(Graph& g, HeadParams& head);

// Options shared by every head of a layer.
struct AttentionOptions {
  long start_index = 0;
  double alpha = kDefaultAlpha;
};

// Pre-softmax scores (after 1/sqrt(d_k) scaling and any mask) for one head.
// x is L x D_model. Weight Vars may be graph inputs or bound parameters.
Var attention_scores(Graph& g, AttentionVariant variant, const HeadVars& head, Var x,
                     const AttentionOptions& opts);
Var attention_weights(Graph& g, AttentionVariant variant, const HeadVars& head, Var x,
                      const AttentionOptions& opts);

struct MultiHeadParams {
  std::vector<HeadParams> heads;
  Parameter w_o;  // D_model x (H * d_v + 1)
};

// ConfigError unless d_model is divisible by n_heads.
MultiHeadParams init_multi_head(AttentionVariant variant, std::size_t d_model,
                                std::size_t n_heads, std::size_t d_k, std::mt19937_64& rng);

// Concat over heads of A_h (W_v,h [x,1]), then W_o [., 1]. When
// weights_out is given, the per-head attention Vars are appended to it.
Var multi_head_attention(Graph& g, AttentionVariant variant, MultiHeadParams& params, Var x,
                         const AttentionOptions& opts, std::vector<Var>* weights_out = nullptr);

}  // namespace gksa
