#include "gksa/numerics/optimizer.hpp"

#include <cmath>

#include "gksa/errors.hpp"

namespace gksa {

OptimizerState make_optimizer_state(std::span<Parameter* const> params) {
  OptimizerState state;
  for (const Parameter* p : params) {
    state.first_moment.emplace_back(p->value.rows(), p->value.cols());
    state.second_moment.emplace_back(p->value.rows(), p->value.cols());
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, OptimizerState& state, double lr,
               const AdamConfig& cfg) {
  if (!(lr > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, given " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    require_same_shape(m, p.value, "optimizer state");
    auto w = p.value.values();
    auto g = p.grad.values();
    auto mv = m.values();
    auto vv = v.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * g[i];
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = mv[i] / c1;
      const double vhat = vv[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

}  // namespace gksa
