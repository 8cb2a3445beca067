#include "gksa/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gksa/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gksa::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

void check_inner(std::size_t lhs, std::size_t rhs, const Matrix& a, const Matrix& b,
                 const char* what) {
  if (lhs != rhs) {
    throw DimensionError(std::string(what) + ": incompatible shapes " + a.shape_string() +
                         " and " + b.shape_string());
  }
}

// Row kernels shared by the serial and parallel drivers so the arithmetic is
// literally the same code.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  double* o = out.data() + i * n;
  const double* ar = a.data() + i * inner;
  for (std::size_t k = 0; k < inner; ++k) {
    const double aik = ar[k];
    const double* br = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += aik * br[j];
  }
}

inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const double* ar = a.data() + i * inner;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* br = b.data() + j * inner;
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += ar[k] * br[k];
    out(i, j) = s;
  }
}

// Row i of a^T b: sum over k of a(k, i) * b(k, :).
inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t n = b.cols();
  double* o = out.data() + i * n;
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double aki = a(k, i);
    const double* br = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += aki * br[j];
  }
}

inline void sq_dist_row(const Matrix& q, Matrix& out, std::size_t i) {
  const std::size_t d = q.cols();
  const double* qi = q.data() + i * d;
  for (std::size_t j = 0; j < q.rows(); ++j) {
    const double* qj = q.data() + j * d;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = qi[k] - qj[k];
      s += diff * diff;
    }
    out(i, j) = s;
  }
}

inline void softmax_row(const Matrix& m, Matrix& out, std::size_t i) {
  auto in = m.row(i);
  auto o = out.row(i);
  const double mx = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    o[j] = std::exp(in[j] - mx);
    sum += o[j];
  }
  const double inv = 1.0 / sum;
  for (double& v : o) v *= inv;
}

template <typename RowFn>
void run_rows(std::size_t rows, std::size_t work, RowFn&& fn) {
  const long n = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (long i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), a, b, "matmul");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), a, b, "matmul_nt");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_nt_row(a, b, out, i);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), a, b, "matmul_tn");
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, out, i);
  return out;
}

Matrix pairwise_sq_dist(const Matrix& q) {
  Matrix out(q.rows(), q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) sq_dist_row(q, out, i);
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) softmax_row(m, out, i);
  return out;
}

}  // namespace serial

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.rows(), a, b, "matmul");
  Matrix out(a.rows(), b.cols());
  run_rows(a.rows(), a.rows() * a.cols() * b.cols(),
           [&](std::size_t i) { matmul_row(a, b, out, i); });
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_inner(a.cols(), b.cols(), a, b, "matmul_nt");
  Matrix out(a.rows(), b.rows());
  run_rows(a.rows(), a.rows() * a.cols() * b.rows(),
           [&](std::size_t i) { matmul_nt_row(a, b, out, i); });
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_inner(a.rows(), b.rows(), a, b, "matmul_tn");
  Matrix out(a.cols(), b.cols());
  run_rows(a.cols(), a.rows() * a.cols() * b.cols(),
           [&](std::size_t i) { matmul_tn_row(a, b, out, i); });
  return out;
}

Matrix pairwise_sq_dist(const Matrix& q) {
  Matrix out(q.rows(), q.rows());
  run_rows(q.rows(), q.rows() * q.rows() * q.cols(),
           [&](std::size_t i) { sq_dist_row(q, out, i); });
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  run_rows(m.rows(), m.size() * 8, [&](std::size_t i) { softmax_row(m, out, i); });
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace gksa::kernels
