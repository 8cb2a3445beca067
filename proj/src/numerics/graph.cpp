#include "gksa/numerics/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gksa/errors.hpp"
#include "gksa/numerics/kernels.hpp"

namespace gksa {

Var Graph::push(Matrix value, Backward backward, Parameter* param, bool leaf) {
  if (backward_done_) throw StateError("graph: cannot record ops after backward()");
  (leaf ? leaf_elements_ : intermediate_elements_) += value.size();
  nodes_.push_back(Node{std::move(value), std::move(backward), param});
  grads_.emplace_back();
  return Var(nodes_.size() - 1);
}

void Graph::check(Var v) const {
  if (!v.valid() || v.id() >= nodes_.size()) {
    throw StateError("graph: variable does not belong to this graph (no forward pass recorded)");
  }
}

Var Graph::input(Matrix value) { return push(std::move(value), nullptr, nullptr, true); }

Var Graph::param(Parameter& p) {
  if (!p.defined()) throw StateError("graph: binding an undefined parameter");
  return push(p.value, nullptr, &p, true);
}

Var Graph::op(Matrix value, Backward backward) {
  return push(std::move(value), std::move(backward), nullptr, false);
}

const Matrix& Graph::value(Var v) const {
  check(v);
  return nodes_[v.id()].value;
}

bool Graph::has_grad(Var v) const {
  check(v);
  return !grads_[v.id()].empty();
}

Matrix Graph::grad(Var v) const {
  check(v);
  if (grads_[v.id()].empty()) {
    const Matrix& val = nodes_[v.id()].value;
    return Matrix(val.rows(), val.cols());
  }
  return grads_[v.id()];
}

Matrix& Graph::grad_accumulator(Var v) {
  check(v);
  Matrix& g = grads_[v.id()];
  if (g.empty()) {
    const Matrix& val = nodes_[v.id()].value;
    g = Matrix(val.rows(), val.cols());
  }
  return g;
}

void Graph::backward(Var loss) {
  check(loss);
  if (backward_done_) throw StateError("graph: backward() already ran on this graph");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("graph: backward() needs a 1x1 loss, got " + lv.shape_string());
  }
  backward_done_ = true;
  grad_accumulator(loss)(0, 0) = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (grads_[id].empty()) continue;
    Node& node = nodes_[id];
    if (node.backward) node.backward(*this, Var(id));
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& node = nodes_[id];
    if (node.param != nullptr && !grads_[id].empty()) node.param->grad += grads_[id];
  }
}

// ---- ops --------------------------------------------------------------------

Var Graph::matmul(Var a, Var b) {
  Matrix out = kernels::matmul(value(a), value(b));
  return op(std::move(out), [a, b](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    g.grad_accumulator(a) += kernels::matmul_nt(go, g.value(b));
    g.grad_accumulator(b) += kernels::matmul_tn(g.value(a), go);
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  Matrix out = kernels::matmul_nt(value(a), value(b));
  return op(std::move(out), [a, b](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    g.grad_accumulator(a) += kernels::matmul(go, g.value(b));
    g.grad_accumulator(b) += kernels::matmul_tn(go, g.value(a));
  });
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "graph add");
  Matrix out = value(a) + value(b);
  return op(std::move(out), [a, b](Graph& g, Var self) {
    const Matrix go = g.grads_[self.id()];
    g.grad_accumulator(a) += go;
    g.grad_accumulator(b) += go;
  });
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "graph sub");
  Matrix out = value(a) - value(b);
  return op(std::move(out), [a, b](Graph& g, Var self) {
    const Matrix go = g.grads_[self.id()];
    g.grad_accumulator(a) += go;
    g.grad_accumulator(b) -= go;
  });
}

Var Graph::hadamard(Var a, Var b) {
  Matrix out = gksa::hadamard(value(a), value(b));
  return op(std::move(out), [a, b](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    const Matrix da = gksa::hadamard(go, g.value(b));
    const Matrix db = gksa::hadamard(go, g.value(a));
    g.grad_accumulator(a) += da;
    g.grad_accumulator(b) += db;
  });
}

Var Graph::scale(Var a, double s) {
  Matrix out = value(a) * s;
  return op(std::move(out), [a, s](Graph& g, Var self) {
    const Matrix d = g.grads_[self.id()] * s;
    g.grad_accumulator(a) += d;
  });
}

Var Graph::add_row_vector(Var m, Var v) {
  const Matrix& mv = value(m);
  const Matrix& vv = value(v);
  if (vv.rows() != 1 || vv.cols() != mv.cols()) {
    throw DimensionError("add_row_vector: " + mv.shape_string() + " with " + vv.shape_string());
  }
  Matrix out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vv(0, j);
  return op(std::move(out), [m, v](Graph& g, Var self) {
    const Matrix go = g.grads_[self.id()];
    g.grad_accumulator(m) += go;
    Matrix& gv = g.grad_accumulator(v);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gv(0, j) += go(i, j);
  });
}

Var Graph::add_col_vector(Var m, Var v) {
  const Matrix& mv = value(m);
  const Matrix& vv = value(v);
  if (vv.cols() != 1 || vv.rows() != mv.rows()) {
    throw DimensionError("add_col_vector: " + mv.shape_string() + " with " + vv.shape_string());
  }
  Matrix out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vv(i, 0);
  return op(std::move(out), [m, v](Graph& g, Var self) {
    const Matrix go = g.grads_[self.id()];
    g.grad_accumulator(m) += go;
    Matrix& gv = g.grad_accumulator(v);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gv(i, 0) += go(i, j);
  });
}

Var Graph::relu(Var a) {
  Matrix out = value(a);
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return op(std::move(out), [a](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    const Matrix& in = g.value(a);
    Matrix d(go.rows(), go.cols());
    for (std::size_t i = 0; i < d.size(); ++i)
      d.values()[i] = in.values()[i] > 0.0 ? go.values()[i] : 0.0;
    g.grad_accumulator(a) += d;
  });
}

Var Graph::softmax_rows(Var a) {
  Matrix out = kernels::softmax_rows(value(a));
  return op(std::move(out), [a](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    const Matrix& y = g.value(self);
    Matrix d(go.rows(), go.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += go(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (go(i, j) - dot);
    }
    g.grad_accumulator(a) += d;
  });
}

Var Graph::log_softmax_rows(Var a) {
  const Matrix& in = value(a);
  Matrix out(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto r = in.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double x : r) s += std::exp(x - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < in.cols(); ++j) out(i, j) = r[j] - lse;
  }
  return op(std::move(out), [a](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    const Matrix& y = g.value(self);
    Matrix d(go.rows(), go.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) total += go(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = go(i, j) - std::exp(y(i, j)) * total;
    }
    g.grad_accumulator(a) += d;
  });
}

Var Graph::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Matrix& xv = value(x);
  const Matrix& gv = value(gain);
  const Matrix& bv = value(bias);
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != xv.cols() || bv.cols() != xv.cols()) {
    throw DimensionError("layer_norm_rows: input " + xv.shape_string() + ", gain " +
                         gv.shape_string() + ", bias " + bv.shape_string());
  }
  const std::size_t n = xv.cols();
  Matrix normalized(xv.rows(), n);
  Matrix inv_std(xv.rows(), 1);
  Matrix out(xv.rows(), n);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto r = xv.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = inv;
    for (std::size_t j = 0; j < n; ++j) {
      normalized(i, j) = (r[j] - mean) * inv;
      out(i, j) = normalized(i, j) * gv(0, j) + bv(0, j);
    }
  }
  return op(std::move(out), [x, gain, bias, normalized = std::move(normalized),
                             inv_std = std::move(inv_std)](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    const Matrix& gv = g.value(gain);
    const std::size_t n = go.cols();
    Matrix dx(go.rows(), n);
    Matrix dg(1, n);
    Matrix db(1, n);
    std::vector<double> dxhat(n);
    for (std::size_t i = 0; i < go.rows(); ++i) {
      double sum_d = 0.0;
      double sum_dx = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        dg(0, j) += go(i, j) * normalized(i, j);
        db(0, j) += go(i, j);
        dxhat[j] = go(i, j) * gv(0, j);
        sum_d += dxhat[j];
        sum_dx += dxhat[j] * normalized(i, j);
      }
      const double nn = static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        dx(i, j) = inv_std(i, 0) / nn * (nn * dxhat[j] - sum_d - normalized(i, j) * sum_dx);
      }
    }
    g.grad_accumulator(x) += dx;
    g.grad_accumulator(gain) += dg;
    g.grad_accumulator(bias) += db;
  });
}

Var Graph::append_constant_col(Var x, double c) {
  const Matrix& xv = value(x);
  Matrix out(xv.rows(), xv.cols() + 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) = xv(i, j);
    out(i, xv.cols()) = c;
  }
  return op(std::move(out), [x](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    Matrix& gx = g.grad_accumulator(x);
    for (std::size_t i = 0; i < gx.rows(); ++i)
      for (std::size_t j = 0; j < gx.cols(); ++j) gx(i, j) += go(i, j);
  });
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + value(parts.front()).shape_string() +
                           " vs " + value(p).shape_string());
    }
    cols += value(p).cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& pv = value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offset + j) = pv(i, j);
    offset += pv.cols();
  }
  return op(std::move(out), [parts](Graph& g, Var self) {
    const Matrix go = g.grads_[self.id()];
    std::size_t off = 0;
    for (Var p : parts) {
      Matrix& gp = g.grad_accumulator(p);
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += go(i, off + j);
      off += gp.cols();
    }
  });
}

Var Graph::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = value(x);
  if (count == 0 || begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + xv.shape_string());
  }
  Matrix out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, begin + j);
  return op(std::move(out), [x, begin](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    Matrix& gx = g.grad_accumulator(x);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gx(i, begin + j) += go(i, j);
  });
}

Var Graph::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).values()) s += v;
  return op(Matrix(1, 1, s), [a](Graph& g, Var self) {
    const double go = g.grads_[self.id()](0, 0);
    for (double& v : g.grad_accumulator(a).values()) v += go;
  });
}

Var Graph::pairwise_sq_dist(Var q) {
  Matrix out = kernels::pairwise_sq_dist(value(q));
  return op(std::move(out), [q](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    const Matrix& qv = g.value(q);
    // S = G + G^T; dq_i = 2 (rowsum(S)_i q_i - (S q)_i)
    Matrix s = go + go.transposed();
    Matrix sq = kernels::matmul(s, qv);
    Matrix& gq = g.grad_accumulator(q);
    for (std::size_t i = 0; i < qv.rows(); ++i) {
      double rs = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) rs += s(i, j);
      for (std::size_t k = 0; k < qv.cols(); ++k) gq(i, k) += 2.0 * (rs * qv(i, k) - sq(i, k));
    }
  });
}

Var Graph::add_gaussian_window(Var scores, Var log_sigma) {
  const Matrix& sv = value(scores);
  const Matrix& ls = value(log_sigma);
  if (sv.rows() != sv.cols() || ls.size() != 1) {
    throw DimensionError("add_gaussian_window: scores " + sv.shape_string() + ", log_sigma " +
                         ls.shape_string());
  }
  const double inv_var = std::exp(-2.0 * ls(0, 0));
  Matrix out = sv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      out(i, j) -= 0.5 * d * d * inv_var;
    }
  }
  return op(std::move(out), [scores, log_sigma, inv_var](Graph& g, Var self) {
    const Matrix go = g.grads_[self.id()];
    g.grad_accumulator(scores) += go;
    // d/dl of -d^2/2 * exp(-2l) = d^2 * exp(-2l)
    double acc = 0.0;
    for (std::size_t i = 0; i < go.rows(); ++i) {
      for (std::size_t j = 0; j < go.cols(); ++j) {
        const double d = static_cast<double>(i) - static_cast<double>(j);
        acc += go(i, j) * d * d * inv_var;
      }
    }
    g.grad_accumulator(log_sigma)(0, 0) += acc;
  });
}

Var Graph::relative_gather(Var m) {
  const Matrix& mv = value(m);
  const std::size_t len = mv.rows();
  if (mv.cols() != 2 * len - 1) {
    throw DimensionError("relative_gather: expected Lx(2L-1), got " + mv.shape_string());
  }
  Matrix out(len, len);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j) out(i, j) = mv(i, i + len - 1 - j);
  return op(std::move(out), [m, len](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    Matrix& gm = g.grad_accumulator(m);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) gm(i, i + len - 1 - j) += go(i, j);
  });
}

Var Graph::relative_gather_row(Var v) {
  const Matrix& vv = value(v);
  if (vv.rows() != 1 || vv.cols() % 2 == 0) {
    throw DimensionError("relative_gather_row: expected 1x(2L-1), got " + vv.shape_string());
  }
  const std::size_t len = (vv.cols() + 1) / 2;
  Matrix out(len, len);
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j) out(i, j) = vv(0, i + len - 1 - j);
  return op(std::move(out), [v, len](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    Matrix& gv = g.grad_accumulator(v);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < len; ++j) gv(0, i + len - 1 - j) += go(i, j);
  });
}

Var Graph::stack_frames(Var x, std::size_t factor) {
  const Matrix& xv = value(x);
  if (factor == 0) throw ConfigError("stack_frames: factor must be >= 1");
  const std::size_t out_rows = (xv.rows() + factor - 1) / factor;
  const std::size_t f = xv.cols();
  Matrix out(out_rows, factor * f);
  for (std::size_t t = 0; t < xv.rows(); ++t) {
    const std::size_t r = t / factor;
    const std::size_t slot = t % factor;
    for (std::size_t c = 0; c < f; ++c) out(r, slot * f + c) = xv(t, c);
  }
  return op(std::move(out), [x, factor](Graph& g, Var self) {
    const Matrix& go = g.grads_[self.id()];
    Matrix& gx = g.grad_accumulator(x);
    const std::size_t f = gx.cols();
    for (std::size_t t = 0; t < gx.rows(); ++t)
      for (std::size_t c = 0; c < f; ++c) gx(t, c) += go(t / factor, (t % factor) * f + c);
  });
}

}  // namespace gksa
