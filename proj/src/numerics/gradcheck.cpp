#include "gksa/numerics/gradcheck.hpp"

#include <cmath>

#include "gksa/errors.hpp"

namespace gksa {

Matrix finite_diff_grad(const std::function<double()>& f, Matrix& x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_grad: eps must be positive");
  Matrix out(x.rows(), x.cols());
  auto vals = x.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double saved = vals[i];
    vals[i] = saved + eps;
    const double up = f();
    vals[i] = saved - eps;
    const double down = f();
    vals[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite_diff_grad: function is not finite at entry " +
                            std::to_string(i));
    }
    out.values()[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

Matrix finite_diff_grad(const std::function<double()>& f, Parameter& p, double eps) {
  return finite_diff_grad(f, p.value, eps);
}

}  // namespace gksa
