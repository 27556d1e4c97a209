#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dsp/diff/ops.hpp"
#include "dsp/diff/tape.hpp"
#include "dsp/error.hpp"

namespace dsp::diff {

namespace {

std::string shape(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + ")";
}

[[noreturn]] void mismatch(const char* op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void require_same(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) mismatch(op, shape(a) + " vs " + shape(b));
}

Tape& tape_of(const char* op, std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) continue;
    if (t && v.tape() != t) mismatch(op, "operands live on different tapes");
    t = v.tape();
  }
  if (!t) mismatch(op, "no operand is bound to a tape");
  return *t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape_->value_of(*this); }

Matrix Var::grad() const { return tape_->grad_of(*this); }

Var Tape::push(Node node, const char* op) {
  if (!node.value.allFinite()) {
    throw Error(ErrorCode::NonFiniteValue, std::string(op) + " produced a non-finite value");
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n), "constant");
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.keep_grad = true;
  return push(std::move(n), "input");
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.keep_grad = true;
  n.param = &p;
  if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
    p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
  }
  return push(std::move(n), p.name.c_str());
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.valid() && nodes_[static_cast<std::size_t>(p.id_)].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n), op);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    mismatch("backward", "gradient " + shape(g) + " for value " + shape(n.value));
  }
  if (n.param) {
    n.param->grad += g;
    n.param->has_grad = true;
    if (n.grad.size() == 0) n.grad = g;
    else n.grad += g;
    return;
  }
  if (n.grad.size() == 0) n.grad = g;
  else n.grad += g;
}

Matrix Tape::grad_of(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var out) {
  Node& root = nodes_[static_cast<std::size_t>(out.id_)];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    mismatch("backward", "output must be 1x1, got " + shape(root.value));
  }
  if (!root.requires_grad) return;
  root.grad = Matrix::Constant(1, 1, 1.0);
  for (int id = out.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad, n.value);
    if (!n.keep_grad && id != out.id_) n.grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------
// Sparse patterns

SparsePattern SparsePattern::from_rows(const std::vector<std::vector<int>>& lists, int cols) {
  SparsePattern p;
  p.rows = static_cast<int>(lists.size());
  p.cols = cols;
  p.offsets.reserve(lists.size() + 1);
  for (const auto& l : lists) {
    p.indices.insert(p.indices.end(), l.begin(), l.end());
    p.offsets.push_back(static_cast<int>(p.indices.size()));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  Tape& t = tape_of("matmul", {a, b});
  if (a.cols() != b.rows()) mismatch("matmul", shape(a.value()) + " x " + shape(b.value()));
  Matrix y = a.value() * b.value();
  return t.record("matmul", std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(a, [&] { return Matrix(g * b.value().transpose()); });
    t.accumulate_with(b, [&] { return Matrix(a.value().transpose() * g); });
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of("matmul_nt", {a, b});
  if (a.cols() != b.cols()) mismatch("matmul_nt", shape(a.value()) + " x " + shape(b.value()) + "^T");
  Matrix y = a.value() * b.value().transpose();
  return t.record("matmul_nt", std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(a, [&] { return Matrix(g * b.value()); });
    t.accumulate_with(b, [&] { return Matrix(g.transpose() * a.value()); });
  });
}

Var linear(Var x, Var w, Var b) {
  Tape& t = tape_of("linear", {x, w, b});
  if (x.cols() != w.rows()) mismatch("linear", shape(x.value()) + " x " + shape(w.value()));
  Matrix y = x.value() * w.value();
  if (b.valid()) {
    if (b.rows() != 1 || b.cols() != w.cols()) mismatch("linear", "bias " + shape(b.value()));
    y.rowwise() += b.value().row(0);
  }
  return t.record("linear", std::move(y), {x, w, b}, [x, w, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] { return Matrix(g * w.value().transpose()); });
    t.accumulate_with(w, [&] { return Matrix(x.value().transpose() * g); });
    if (b.valid()) t.accumulate_with(b, [&] { return Matrix(g.colwise().sum()); });
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of("add", {a, b});
  require_same("add", a.value(), b.value());
  return t.record("add", a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of("sub", {a, b});
  require_same("sub", a.value(), b.value());
  return t.record("sub", a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, g);
    t.accumulate_with(b, [&] { return Matrix(-g); });
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of("mul", {a, b});
  require_same("mul", a.value(), b.value());
  Matrix y = a.value().cwiseProduct(b.value());
  return t.record("mul", std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(a, [&] { return Matrix(g.cwiseProduct(b.value())); });
    t.accumulate_with(b, [&] { return Matrix(g.cwiseProduct(a.value())); });
  });
}

Var scale(Var x, double s) {
  Tape& t = tape_of("scale", {x});
  return t.record("scale", x.value() * s, {x},
                  [x, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate_with(x, [&] { return Matrix(g * s); }); });
}

Var add_row(Var x, Var row) {
  Tape& t = tape_of("add_row", {x, row});
  if (row.rows() != 1 || row.cols() != x.cols()) mismatch("add_row", shape(x.value()) + " + " + shape(row.value()));
  Matrix y = x.value();
  y.rowwise() += row.value().row(0);
  return t.record("add_row", std::move(y), {x, row}, [x, row](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(x, g);
    t.accumulate_with(row, [&] { return Matrix(g.colwise().sum()); });
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) mismatch("concat", "no operands");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) mismatch("concat", "operands live on different tapes");
    if (p.rows() != rows) mismatch("concat", "row counts differ: " + shape(parts.front().value()) + " vs " + shape(p.value()));
    cols += p.cols();
  }
  Matrix y(rows, cols);
  std::vector<Var> keep(parts.begin(), parts.end());
  Eigen::Index at = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    y.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    any_grad = any_grad || t.requires_grad(p);
  }
  Var anchor = any_grad ? *std::find_if(parts.begin(), parts.end(), [&](const Var& p) { return t.requires_grad(p); })
                        : parts.front();
  return t.record("concat", std::move(y), {anchor}, [keep](Tape& t, const Matrix& g, const Matrix&) {
    Eigen::Index at = 0;
    for (const Var& p : keep) {
      t.accumulate_with(p, [&] { return Matrix(g.middleCols(at, p.cols())); });
      at += p.cols();
    }
  });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of("reshape", {x});
  if (rows * cols != x.value().size()) mismatch("reshape", shape(x.value()) + " to (" + std::to_string(rows) + ", " + std::to_string(cols) + ")");
  Matrix y = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  const Eigen::Index r0 = x.rows();
  const Eigen::Index c0 = x.cols();
  return t.record("reshape", std::move(y), {x}, [x, r0, c0](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] { return Matrix(Eigen::Map<const Matrix>(g.data(), r0, c0)); });
  });
}

Var transpose(Var x) {
  Tape& t = tape_of("transpose", {x});
  return t.record("transpose", x.value().transpose(), {x}, [x](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] { return Matrix(g.transpose()); });
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Var relu(Var x) {
  Tape& t = tape_of("relu", {x});
  Matrix y = x.value().cwiseMax(0.0);
  return t.record("relu", std::move(y), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate_with(x, [&] { return Matrix((y.array() > 0.0).select(g, 0.0)); });
  });
}

Var leaky_relu(Var x, double slope) {
  Tape& t = tape_of("leaky_relu", {x});
  Matrix y = (x.value().array() > 0.0).select(x.value(), x.value() * slope);
  return t.record("leaky_relu", std::move(y), {x}, [x, slope](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] { return Matrix((x.value().array() > 0.0).select(g, g * slope)); });
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of("sigmoid", {x});
  Matrix y = x.value().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return t.record("sigmoid", std::move(y), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate_with(x, [&] { return Matrix(g.array() * y.array() * (1.0 - y.array())); });
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of("layer_norm", {x, gamma, beta});
  const Eigen::Index C = x.cols();
  if (gamma.valid() && (gamma.rows() != 1 || gamma.cols() != C)) mismatch("layer_norm", "gamma " + shape(gamma.value()));
  if (beta.valid() && (beta.rows() != 1 || beta.cols() != C)) mismatch("layer_norm", "beta " + shape(beta.value()));
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), C);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const auto centered = (xv.row(r).array() - mu).eval();
    const double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix y = xhat;
  if (gamma.valid()) y = y.array().rowwise() * gamma.value().row(0).array();
  if (beta.valid()) y.rowwise() += beta.value().row(0);
  return t.record("layer_norm", std::move(y), {x, gamma, beta},
                  [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix& g, const Matrix&) {
                    if (gamma.valid()) {
                      t.accumulate_with(gamma, [&] { return Matrix(g.cwiseProduct(xhat).colwise().sum()); });
                    }
                    if (beta.valid()) t.accumulate_with(beta, [&] { return Matrix(g.colwise().sum()); });
                    t.accumulate_with(x, [&] {
                      Matrix dxhat = g;
                      if (gamma.valid()) dxhat = dxhat.array().rowwise() * gamma.value().row(0).array();
                      Matrix dx(dxhat.rows(), dxhat.cols());
                      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                        const double m1 = dxhat.row(r).mean();
                        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                      }
                      return dx;
                    });
                  });
}

Var softmax(Var x, int axis) {
  Tape& t = tape_of("softmax", {x});
  if (axis != 0 && axis != 1) mismatch("softmax", "axis must be 0 or 1");
  Matrix y = x.value();
  if (axis == 1) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      y.row(r) = (y.row(r).array() - y.row(r).maxCoeff()).exp();
      y.row(r) /= y.row(r).sum();
    }
  } else {
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      y.col(c) = (y.col(c).array() - y.col(c).maxCoeff()).exp();
      y.col(c) /= y.col(c).sum();
    }
  }
  return t.record("softmax", std::move(y), {x}, [x, axis](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate_with(x, [&] {
      Matrix gy = g.cwiseProduct(y);
      Matrix dx(y.rows(), y.cols());
      if (axis == 1) {
        const Eigen::VectorXd s = gy.rowwise().sum();
        dx = gy - (y.array().colwise() * s.array()).matrix();
      } else {
        const RowVector s = gy.colwise().sum();
        dx = gy - (y.array().rowwise() * s.array()).matrix();
      }
      return dx;
    });
  });
}

// ---------------------------------------------------------------------------
// Sets and graphs

Var max_pool_sets(Var x, const SparsePattern& sets) {
  Tape& t = tape_of("max_pool_sets", {x});
  const Eigen::Index C = x.cols();
  const Matrix& xv = x.value();
  Matrix y = Matrix::Zero(sets.rows, C);
  std::vector<int> arg(static_cast<std::size_t>(sets.rows) * static_cast<std::size_t>(C), -1);
  for (int i = 0; i < sets.rows; ++i) {
    const auto members = sets.row(i);
    for (Eigen::Index c = 0; c < C; ++c) {
      int best = -1;
      double best_v = 0.0;
      for (int j : members) {
        if (j < 0 || j >= xv.rows()) mismatch("max_pool_sets", "member index " + std::to_string(j) + " out of range");
        const double v = xv(j, c);
        if (best < 0 || v > best_v || (v == best_v && j < best)) {
          best = j;
          best_v = v;
        }
      }
      if (best >= 0) {
        y(i, c) = best_v;
        arg[static_cast<std::size_t>(i) * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)] = best;
      }
    }
  }
  const Eigen::Index R = x.rows();
  return t.record("max_pool_sets", std::move(y), {x}, [x, arg = std::move(arg), C, R](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] {
      Matrix dx = Matrix::Zero(R, C);
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index c = 0; c < C; ++c) {
          const int j = arg[static_cast<std::size_t>(i * C + c)];
          if (j >= 0) dx(j, c) += g(i, c);
        }
      }
      return dx;
    });
  });
}

Var gather_rows(Var x, std::span<const int> index) {
  Tape& t = tape_of("gather_rows", {x});
  Matrix y(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] < 0 || index[e] >= x.rows()) mismatch("gather_rows", "index " + std::to_string(index[e]) + " out of range");
    y.row(static_cast<Eigen::Index>(e)) = x.value().row(index[e]);
  }
  std::vector<int> idx(index.begin(), index.end());
  const Eigen::Index R = x.rows();
  return t.record("gather_rows", std::move(y), {x}, [x, idx = std::move(idx), R](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] {
      Matrix dx = Matrix::Zero(R, g.cols());
      for (std::size_t e = 0; e < idx.size(); ++e) dx.row(idx[e]) += g.row(static_cast<Eigen::Index>(e));
      return dx;
    });
  });
}

Var scatter_sum_rows(Var x, std::span<const int> index, Eigen::Index out_rows) {
  Tape& t = tape_of("scatter_sum_rows", {x});
  if (static_cast<Eigen::Index>(index.size()) != x.rows()) mismatch("scatter_sum_rows", "index length differs from row count");
  Matrix y = Matrix::Zero(out_rows, x.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] < 0 || index[e] >= out_rows) mismatch("scatter_sum_rows", "index " + std::to_string(index[e]) + " out of range");
    y.row(index[e]) += x.value().row(static_cast<Eigen::Index>(e));
  }
  std::vector<int> idx(index.begin(), index.end());
  return t.record("scatter_sum_rows", std::move(y), {x}, [x, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] {
      Matrix dx(static_cast<Eigen::Index>(idx.size()), g.cols());
      for (std::size_t e = 0; e < idx.size(); ++e) dx.row(static_cast<Eigen::Index>(e)) = g.row(idx[e]);
      return dx;
    });
  });
}

Var sparse_adj_matmul(const SparsePattern& adjacency, Var v) {
  Tape& t = tape_of("sparse_adj_matmul", {v});
  if (adjacency.cols != v.rows()) {
    mismatch("sparse_adj_matmul", "adjacency has " + std::to_string(adjacency.cols) + " columns, V has " + std::to_string(v.rows()) + " rows");
  }
  const Matrix& vv = v.value();
  Matrix y = Matrix::Zero(adjacency.rows, vv.cols());
  for (int i = 0; i < adjacency.rows; ++i) {
    for (int j : adjacency.row(i)) y.row(i) += vv.row(j);
  }
  // Pattern copied: graphs may be rebuilt while the tape is alive.
  return t.record("sparse_adj_matmul", std::move(y), {v}, [v, adjacency](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(v, [&] {
      Matrix dv = Matrix::Zero(v.rows(), g.cols());
      for (int i = 0; i < adjacency.rows; ++i) {
        for (int j : adjacency.row(i)) dv.row(j) += g.row(i);
      }
      return dv;
    });
  });
}

Var segment_softmax(Var logits, std::span<const int> segment, Eigen::Index segments) {
  Tape& t = tape_of("segment_softmax", {logits});
  if (logits.cols() != 1 || logits.rows() != static_cast<Eigen::Index>(segment.size())) {
    mismatch("segment_softmax", "logits " + shape(logits.value()) + " for " + std::to_string(segment.size()) + " edges");
  }
  const Eigen::Index E = logits.rows();
  std::vector<double> mx(static_cast<std::size_t>(segments), -std::numeric_limits<double>::infinity());
  for (Eigen::Index e = 0; e < E; ++e) {
    const int s = segment[static_cast<std::size_t>(e)];
    if (s < 0 || s >= segments) mismatch("segment_softmax", "segment id out of range");
    mx[static_cast<std::size_t>(s)] = std::max(mx[static_cast<std::size_t>(s)], logits.value()(e, 0));
  }
  Matrix y(E, 1);
  std::vector<double> total(static_cast<std::size_t>(segments), 0.0);
  for (Eigen::Index e = 0; e < E; ++e) {
    const auto s = static_cast<std::size_t>(segment[static_cast<std::size_t>(e)]);
    y(e, 0) = std::exp(logits.value()(e, 0) - mx[s]);
    total[s] += y(e, 0);
  }
  for (Eigen::Index e = 0; e < E; ++e) y(e, 0) /= total[static_cast<std::size_t>(segment[static_cast<std::size_t>(e)])];
  std::vector<int> seg(segment.begin(), segment.end());
  return t.record("segment_softmax", std::move(y), {logits},
                  [logits, seg = std::move(seg), segments](Tape& t, const Matrix& g, const Matrix& y) {
                    t.accumulate_with(logits, [&] {
                      std::vector<double> dot(static_cast<std::size_t>(segments), 0.0);
                      for (std::size_t e = 0; e < seg.size(); ++e) {
                        dot[static_cast<std::size_t>(seg[e])] += g(static_cast<Eigen::Index>(e), 0) * y(static_cast<Eigen::Index>(e), 0);
                      }
                      Matrix dx(y.rows(), 1);
                      for (std::size_t e = 0; e < seg.size(); ++e) {
                        const auto r = static_cast<Eigen::Index>(e);
                        dx(r, 0) = y(r, 0) * (g(r, 0) - dot[static_cast<std::size_t>(seg[e])]);
                      }
                      return dx;
                    });
                  });
}

Var mul_rows(Var x, Var w) {
  Tape& t = tape_of("mul_rows", {x, w});
  if (w.cols() != 1 || w.rows() != x.rows()) mismatch("mul_rows", shape(x.value()) + " by " + shape(w.value()));
  Matrix y = x.value().array().colwise() * w.value().col(0).array();
  return t.record("mul_rows", std::move(y), {x, w}, [x, w](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] { return Matrix(g.array().colwise() * w.value().col(0).array()); });
    t.accumulate_with(w, [&] { return Matrix(g.cwiseProduct(x.value()).rowwise().sum()); });
  });
}

Var temporal_shift(Var x, Eigen::Index block, int offset) {
  Tape& t = tape_of("temporal_shift", {x});
  if (block <= 0 || x.rows() % block != 0) mismatch("temporal_shift", "rows not divisible into blocks of " + std::to_string(block));
  const Matrix& xv = x.value();
  Matrix y = Matrix::Zero(xv.rows(), xv.cols());
  const Eigen::Index blocks = xv.rows() / block;
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (Eigen::Index r = 0; r < block; ++r) {
      const Eigen::Index src = r + offset;
      if (src >= 0 && src < block) y.row(b * block + r) = xv.row(b * block + src);
    }
  }
  return t.record("temporal_shift", std::move(y), {x}, [x, block, offset, blocks](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] {
      Matrix dx = Matrix::Zero(g.rows(), g.cols());
      for (Eigen::Index b = 0; b < blocks; ++b) {
        for (Eigen::Index r = 0; r < block; ++r) {
          const Eigen::Index src = r + offset;
          if (src >= 0 && src < block) dx.row(b * block + src) += g.row(b * block + r);
        }
      }
      return dx;
    });
  });
}

Var select_rows(const std::vector<bool>& mask, Var a, Var b) {
  Tape& t = tape_of("select_rows", {a, b});
  require_same("select_rows", a.value(), b.value());
  if (static_cast<Eigen::Index>(mask.size()) != a.rows()) mismatch("select_rows", "mask length differs from row count");
  Matrix y = b.value();
  for (std::size_t r = 0; r < mask.size(); ++r) {
    if (mask[r]) y.row(static_cast<Eigen::Index>(r)) = a.value().row(static_cast<Eigen::Index>(r));
  }
  return t.record("select_rows", std::move(y), {a, b}, [mask, a, b](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(a, [&] {
      Matrix d = g;
      for (std::size_t r = 0; r < mask.size(); ++r) {
        if (!mask[r]) d.row(static_cast<Eigen::Index>(r)).setZero();
      }
      return d;
    });
    t.accumulate_with(b, [&] {
      Matrix d = g;
      for (std::size_t r = 0; r < mask.size(); ++r) {
        if (mask[r]) d.row(static_cast<Eigen::Index>(r)).setZero();
      }
      return d;
    });
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

Var sum(Var x) {
  Tape& t = tape_of("sum", {x});
  Matrix y = Matrix::Constant(1, 1, x.value().sum());
  const Eigen::Index r = x.rows(), c = x.cols();
  return t.record("sum", std::move(y), {x}, [x, r, c](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate_with(x, [&] { return Matrix(Matrix::Constant(r, c, g(0, 0))); });
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) mismatch("mean", "empty operand");
  return scale(sum(x), 1.0 / n);
}

Var smooth_l1(Var pred, const Matrix& target, double delta, Reduction reduction) {
  Tape& t = tape_of("smooth_l1", {pred});
  require_same("smooth_l1", pred.value(), target);
  const Matrix diff = pred.value() - target;
  double total = 0.0;
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    const double a = std::abs(diff.data()[i]);
    total += a < delta ? 0.5 * a * a / delta : a - 0.5 * delta;
  }
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(diff.size()) : 1.0;
  return t.record("smooth_l1", Matrix::Constant(1, 1, total * norm), {pred},
                  [pred, diff, delta, norm](Tape& t, const Matrix& g, const Matrix&) {
                    t.accumulate_with(pred, [&] {
                      Matrix d = diff.unaryExpr([delta](double v) {
                        return std::abs(v) < delta ? v / delta : (v > 0 ? 1.0 : -1.0);
                      });
                      return Matrix(d * (norm * g(0, 0)));
                    });
                  });
}

Var focal_loss(Var pred, const Matrix& labels, double alpha, double beta) {
  Tape& t = tape_of("focal_loss", {pred});
  require_same("focal_loss", pred.value(), labels);
  constexpr double kClamp = 1e-12;
  const Matrix& p = pred.value();
  double total = 0.0;
  int positives = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double h = labels.data()[i];
    const double q = std::clamp(p.data()[i], kClamp, 1.0 - kClamp);
    if (h == 1.0) {
      ++positives;
      total += std::pow(1.0 - q, alpha) * std::log(q);
    } else {
      total += std::pow(1.0 - h, beta) * std::pow(q, alpha) * std::log(1.0 - q);
    }
  }
  const double norm = 1.0 / std::max(positives, 1);
  return t.record("focal_loss", Matrix::Constant(1, 1, -total * norm), {pred},
                  [pred, labels, alpha, beta, norm](Tape& t, const Matrix& g, const Matrix&) {
                    t.accumulate_with(pred, [&] {
                      const Matrix& p = pred.value();
                      Matrix d(p.rows(), p.cols());
                      for (Eigen::Index i = 0; i < p.size(); ++i) {
                        const double h = labels.data()[i];
                        const double raw = p.data()[i];
                        if (raw <= kClamp || raw >= 1.0 - kClamp) {
                          d.data()[i] = 0.0;
                          continue;
                        }
                        const double q = raw;
                        double v;
                        if (h == 1.0) {
                          // d/dq (1-q)^a log q
                          v = -alpha * std::pow(1.0 - q, alpha - 1.0) * std::log(q) + std::pow(1.0 - q, alpha) / q;
                        } else {
                          // d/dq (1-h)^b q^a log(1-q)
                          v = std::pow(1.0 - h, beta) *
                              (alpha * std::pow(q, alpha - 1.0) * std::log(1.0 - q) - std::pow(q, alpha) / (1.0 - q));
                        }
                        d.data()[i] = -v * norm * g(0, 0);
                      }
                      return d;
                    });
                  });
}

}  // namespace dsp::diff
