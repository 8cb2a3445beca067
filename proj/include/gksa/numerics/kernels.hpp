#pragma once

#include "gksa/numerics/matrix.hpp"

// Dense kernels used on the hot path. Each kernel exists twice: a plain serial
// loop nest under kernels::serial, kept as the reference, and an OpenMP
// version that splits the outermost output loop across threads. Both walk the
// reduction index in the same order, so results are bit-identical for any
// thread count.
namespace gksa::kernels {

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
// out(i, j) = sum_k (q(i, k) - q(j, k))^2
Matrix pairwise_sq_dist(const Matrix& q);
Matrix softmax_rows(const Matrix& m);
}  // namespace serial

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix pairwise_sq_dist(const Matrix& q);
Matrix softmax_rows(const Matrix& m);

// Number of threads the parallel kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace gksa::kernels
