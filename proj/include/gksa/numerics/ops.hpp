#pragma once

#include <span>
#include <vector>

#include "gksa/numerics/matrix.hpp"

namespace gksa {

inline constexpr double kLayerNormEps = 1e-12;

// Standard matrix product; DimensionError naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with max subtraction. Rows sum to 1; safe for row ranges
// far beyond exp's overflow threshold.
Matrix softmax_rows(const Matrix& m);

// (x - mean) / sqrt(var + eps) * gain + bias, population variance.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias, double eps = kLayerNormEps);

}  // namespace gksa
