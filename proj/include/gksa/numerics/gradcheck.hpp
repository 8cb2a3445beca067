#pragma once

#include <functional>

#include "gksa/numerics/graph.hpp"

namespace gksa {

inline constexpr double kFiniteDiffEps = 1e-4;

// Central differences of a scalar function w.r.t. every entry of p.value:
// (f(p + eps e) - f(p - eps e)) / (2 eps). p.value is restored afterwards.
// EvaluationError if f returns a non-finite value.
Matrix finite_diff_grad(const std::function<double()>& f, Parameter& p,
                        double eps = kFiniteDiffEps);

// Same, for a plain matrix that f reads by reference.
Matrix finite_diff_grad(const std::function<double()>& f, Matrix& x,
                        double eps = kFiniteDiffEps);

}  // namespace gksa
