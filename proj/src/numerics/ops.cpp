#include "gksa/numerics/ops.hpp"

#include <cmath>
#include <string>

#include "gksa/errors.hpp"
#include "gksa/numerics/kernels.hpp"

namespace gksa {

Matrix matmul(const Matrix& a, const Matrix& b) { return kernels::matmul(a, b); }

Matrix softmax_rows(const Matrix& m) { return kernels::softmax_rows(m); }

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  if (x.size() != gain.size() || x.size() != bias.size()) {
    throw DimensionError("layer_norm: lengths " + std::to_string(x.size()) + ", " +
                         std::to_string(gain.size()) + ", " + std::to_string(bias.size()));
  }
  if (x.empty()) throw DimensionError("layer_norm: empty input");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

}  // namespace gksa
