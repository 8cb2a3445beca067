#include <cmath>
#include <random>

#include "doctest.h"
#include "gksa/errors.hpp"
#include "gksa/numerics/gradcheck.hpp"
#include "gksa/numerics/graph.hpp"
#include "gksa/numerics/kernels.hpp"
#include "gksa/numerics/ops.hpp"
#include "gksa/numerics/optimizer.hpp"
#include "test_support.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace gksa;
using gksa::testing::check_gradients;
using gksa::testing::max_of;
using gksa::testing::random_matrix;

namespace {

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul") {
  std::mt19937_64 rng(1);
  const Matrix m = random_matrix(2, 2, rng);
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{0}, {1}})) ==
        Matrix::from_rows({{2}, {4}}));

  const Matrix a = random_matrix(5, 4, rng);
  const Matrix b = random_matrix(4, 3, rng);
  const Matrix c = matmul(a, b);
  CHECK(c.rows() == 5);
  CHECK(c.cols() == 3);
  CHECK(max_abs_diff(c, triple_loop(a, b)) <= 1e-12);

  try {
    matmul(a, a);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("5x4") != std::string::npos);
  }
}

TEST_CASE("matmul is associative on random triples") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(3, 5, rng);
    const Matrix b = random_matrix(5, 4, rng);
    const Matrix c = random_matrix(4, 2, rng);
    CHECK(relative_error(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-9);
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(3);
  const Matrix a = random_matrix(70, 40, rng);
  const Matrix b = random_matrix(40, 90, rng);
  const Matrix bt = random_matrix(90, 40, rng);
  const Matrix at = random_matrix(40, 70, rng);
  auto compare = [&] {
    CHECK(kernels::matmul(a, b) == kernels::serial::matmul(a, b));
    CHECK(kernels::matmul_nt(a, bt) == kernels::serial::matmul_nt(a, bt));
    CHECK(kernels::matmul_tn(at, b) == kernels::serial::matmul_tn(at, b));
    CHECK(kernels::pairwise_sq_dist(a) == kernels::serial::pairwise_sq_dist(a));
    CHECK(kernels::softmax_rows(a) == kernels::serial::softmax_rows(a));
  };
  compare();
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  compare();
  omp_set_num_threads(saved);
#endif
}

TEST_CASE("softmax_rows") {
  CHECK(softmax_rows(Matrix(1, 1, 123.0))(0, 0) == 1.0);
  const Matrix u = softmax_rows(Matrix(1, 3, 0.0));
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Extended-precision oracle.
  const Matrix s = softmax_rows(Matrix::from_rows({{1000.0, 1000.5}}));
  const long double e0 = 1.0L;
  const long double e1 = std::exp(0.5L);
  CHECK(std::abs(s(0, 0) - static_cast<double>(e0 / (e0 + e1))) <= 1e-12);
  CHECK(std::abs(s(0, 1) - static_cast<double>(e1 / (e0 + e1))) <= 1e-12);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = random_matrix(4, 7, rng, 1e4);
    const Matrix p = softmax_rows(m);
    CHECK(all_finite(p));
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double sum = 0.0;
      for (double v : p.row(i)) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    Matrix shifted = m;
    std::uniform_real_distribution<double> c(-50.0, 50.0);
    for (std::size_t i = 0; i < shifted.rows(); ++i) {
      const double add = c(rng);
      for (double& v : shifted.row(i)) v += add;
    }
    Matrix small = random_matrix(4, 7, rng);
    Matrix small_shift = small;
    for (double& v : small_shift.values()) v += 3.25;
    CHECK(max_abs_diff(softmax_rows(small), softmax_rows(small_shift)) <= 1e-12);
  }
}

TEST_CASE("layer_norm") {
  const std::vector<double> ones(4, 1.0), zeros(4, 0.0);
  for (double v : layer_norm(std::vector<double>(4, 2.5), ones, zeros)) CHECK(v == 0.0);

  const std::vector<double> pair = layer_norm(std::vector<double>{1.0, -1.0},
                                              std::vector<double>{1.0, 1.0},
                                              std::vector<double>{0.0, 0.0});
  CHECK(std::abs(pair[0] - 1.0) <= 1e-11);
  CHECK(std::abs(pair[1] + 1.0) <= 1e-11);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(3.0, 2.0);
  std::vector<double> x(8);
  for (double& v : x) v = dist(rng);
  const auto y = layer_norm(x, std::vector<double>(8, 1.0), std::vector<double>(8, 0.0));
  double mean = 0.0, var = 0.0;
  for (double v : y) mean += v;
  mean /= 8.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= 8.0;
  CHECK(std::abs(mean) <= 1e-10);
  CHECK(std::abs(var - 1.0) <= 1e-6);

  CHECK_THROWS_AS(layer_norm(x, std::vector<double>(7, 1.0), std::vector<double>(8, 0.0)),
                  DimensionError);
}

TEST_CASE("backward on simple graphs") {
  SUBCASE("loss = sum(W x) gives outer(1, x)") {
    Parameter w(Matrix::from_rows({{0.5, -1.0, 2.0}, {1.5, 0.25, -0.75}}));
    const Matrix x = Matrix::from_rows({{1.0}, {2.0}, {-3.0}});
    Graph g;
    Var loss = g.sum(g.matmul(g.param(w), g.input(x)));
    g.backward(loss);
    CHECK(w.grad == Matrix::from_rows({{1.0, 2.0, -3.0}, {1.0, 2.0, -3.0}}));
  }
  SUBCASE("softmax of a 1x1 input has zero gradient") {
    Graph g;
    Var x = g.input(Matrix(1, 1, 0.7));
    g.backward(g.sum(g.softmax_rows(x)));
    CHECK(g.grad(x)(0, 0) == 0.0);
  }
  SUBCASE("a parameter used twice accumulates both uses") {
    Parameter p(Matrix(1, 1, 3.0));
    Graph g;
    g.backward(g.sum(g.hadamard(g.param(p), g.param(p))));
    CHECK(p.grad(0, 0) == doctest::Approx(6.0));
    Graph g2;
    g2.backward(g2.sum(g2.param(p)));
    CHECK(p.grad(0, 0) == doctest::Approx(7.0));
    p.zero_grad();
    CHECK(p.grad(0, 0) == 0.0);
  }
  SUBCASE("state errors") {
    Graph g;
    CHECK_THROWS_AS(g.backward(Var()), StateError);
    Var x = g.input(Matrix(1, 1, 1.0));
    Var y = g.sum(x);
    g.backward(y);
    CHECK_THROWS_AS(g.backward(y), StateError);
    Graph other;
    CHECK_THROWS_AS(other.backward(Var(5)), StateError);
  }
  SUBCASE("non-scalar loss rejected") {
    Graph g;
    CHECK_THROWS_AS(g.backward(g.input(Matrix(2, 1))), DimensionError);
  }
}

TEST_CASE("every graph op matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix a = random_matrix(4, 3, rng);
    const Matrix b = random_matrix(3, 5, rng);
    const Matrix c = random_matrix(4, 3, rng);
    const Matrix bt = random_matrix(6, 3, rng);
    const Matrix row = random_matrix(1, 3, rng);
    const Matrix col = random_matrix(4, 1, rng);
    const Matrix sq = random_matrix(5, 5, rng);
    const Matrix rel = random_matrix(5, 9, rng);
    const Matrix relrow = random_matrix(1, 9, rng);
    const Matrix frames = random_matrix(7, 2, rng);
    const Matrix gain = random_matrix(1, 3, rng);
    Matrix logsig(1, 1, 0.3);
    using V = const std::vector<Var>&;

    CHECK(max_of(check_gradients({a, b}, [](Graph& g, V v) { return g.matmul(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, bt}, [](Graph& g, V v) { return g.matmul_nt(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, c}, [](Graph& g, V v) { return g.add(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, c}, [](Graph& g, V v) { return g.sub(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, c}, [](Graph& g, V v) { return g.hadamard(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.scale(v[0], -1.7); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, row}, [](Graph& g, V v) { return g.add_row_vector(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, col}, [](Graph& g, V v) { return g.add_col_vector(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.relu(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.softmax_rows(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.log_softmax_rows(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, gain, row}, [](Graph& g, V v) {
      return g.layer_norm_rows(v[0], v[1], v[2], 1e-12); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.append_constant_col(v[0], 1.0); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a, col}, [](Graph& g, V v) { return g.concat_cols({v[0], v[1]}); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.slice_cols(v[0], 1, 2); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.sum(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({a}, [](Graph& g, V v) { return g.pairwise_sq_dist(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({sq, logsig}, [](Graph& g, V v) {
      return g.add_gaussian_window(v[0], v[1]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({rel}, [](Graph& g, V v) { return g.relative_gather(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({relrow}, [](Graph& g, V v) { return g.relative_gather_row(v[0]); }, seed)) <= 1e-5);
    CHECK(max_of(check_gradients({frames}, [](Graph& g, V v) { return g.stack_frames(v[0], 3); }, seed)) <= 1e-5);
  }
}

TEST_CASE("graph counts intermediate elements") {
  Graph g;
  Var a = g.input(Matrix(3, 4));
  Var b = g.input(Matrix(4, 2));
  CHECK(g.leaf_elements() == 20);
  CHECK(g.intermediate_elements() == 0);
  Var c = g.matmul(a, b);
  g.softmax_rows(c);
  CHECK(g.intermediate_elements() == 12);
}

TEST_CASE("forward and backward are bit-deterministic") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Parameter w(random_matrix(4, 4, rng));
    const Matrix x = random_matrix(6, 4, rng);
    Graph g;
    Var h = g.softmax_rows(g.matmul_nt(g.input(x), g.param(w)));
    Var loss = g.sum(g.pairwise_sq_dist(h));
    g.backward(loss);
    return std::make_pair(g.value(loss), w.grad);
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("finite_diff_grad") {
  Parameter p(Matrix::from_rows({{1.0, 2.0}}));
  auto sq = [&] {
    double s = 0.0;
    for (double v : p.value.values()) s += v * v;
    return s;
  };
  const Matrix g = finite_diff_grad(sq, p);
  CHECK(std::abs(g(0, 0) - 2.0) <= 1e-7);
  CHECK(std::abs(g(0, 1) - 4.0) <= 1e-7);
  CHECK(p.value == Matrix::from_rows({{1.0, 2.0}}));

  const Matrix z = finite_diff_grad([] { return 3.0; }, p);
  CHECK(max_abs(z) == 0.0);

  CHECK_THROWS_AS(finite_diff_grad([] { return std::nan(""); }, p), EvaluationError);
  CHECK_THROWS_AS(finite_diff_grad(sq, p, 0.0), ConfigError);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Parameter p(Matrix::from_rows({{1.0, -2.0}}));
    std::vector<Parameter*> ps{&p};
    OptimizerState st = make_optimizer_state(ps);
    adam_step(ps, st, 0.1);
    CHECK(p.value == Matrix::from_rows({{1.0, -2.0}}));
    CHECK(st.step == 1);
  }
  SUBCASE("one step on w^2 descends, grads untouched") {
    Parameter p(Matrix(1, 1, 1.0));
    std::vector<Parameter*> ps{&p};
    OptimizerState st = make_optimizer_state(ps);
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    adam_step(ps, st, 0.1);
    CHECK(p.value(0, 0) < 1.0);
    CHECK(p.grad(0, 0) == 2.0);
  }
  SUBCASE("500 steps on a 2-D quadratic converge") {
    Parameter p(Matrix::from_rows({{1.0, -2.0}}));
    std::vector<Parameter*> ps{&p};
    OptimizerState st = make_optimizer_state(ps);
    for (int i = 0; i < 500; ++i) {
      p.grad(0, 0) = 2.0 * p.value(0, 0);
      p.grad(0, 1) = 6.0 * p.value(0, 1);
      adam_step(ps, st, 0.05);
    }
    CHECK(std::hypot(p.value(0, 0), p.value(0, 1)) < 1e-2);
  }
  SUBCASE("non-positive learning rate") {
    Parameter p(Matrix(1, 1, 1.0));
    std::vector<Parameter*> ps{&p};
    OptimizerState st = make_optimizer_state(ps);
    CHECK_THROWS_AS(adam_step(ps, st, 0.0), ConfigError);
    CHECK_THROWS_AS(adam_step(ps, st, -1.0), ConfigError);
  }
}

TEST_CASE("clip_grad_norm") {
  Parameter p(Matrix::from_rows({{0.0, 0.0}}));
  p.grad = Matrix::from_rows({{3.0, 4.0}});
  std::vector<Parameter*> ps{&p};
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(frobenius_norm(p.grad) == doctest::Approx(1.0));
}
