#pragma once

#include <span>
#include <vector>

#include "dsp/diff/tape.hpp"

namespace dsp::diff {

/// Compressed row lists: row i owns indices[offsets[i] .. offsets[i + 1]).
/// Used both for neighbor sets (max pooling) and sparse 0/1 adjacency.
struct SparsePattern {
  int rows = 0;
  int cols = 0;
  std::vector<int> offsets{0};
  std::vector<int> indices;

  static SparsePattern from_rows(const std::vector<std::vector<int>>& lists, int cols);
  std::span<const int> row(int i) const {
    return {indices.data() + offsets[static_cast<std::size_t>(i)],
            static_cast<std::size_t>(offsets[static_cast<std::size_t>(i) + 1] - offsets[static_cast<std::size_t>(i)])};
  }
};

enum class Reduction { Sum, Mean };

// Linear algebra
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// x W (+ b, broadcast over rows when b is valid)
Var linear(Var x, Var w, Var b = {});
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
/// Adds a 1 x C row to every row of x.
Var add_row(Var x, Var row);
/// Column-wise concatenation (the feature-concatenation operator).
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);
Var transpose(Var x);

// Nonlinearities and normalization
Var relu(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var sigmoid(Var x);
/// Row-wise LayerNorm; gamma/beta (1 x C) are optional.
Var layer_norm(Var x, Var gamma = {}, Var beta = {}, double eps = 1e-5);
/// axis = 1: each row sums to one; axis = 0: each column.
Var softmax(Var x, int axis = 1);

// Set and graph operators
/// out[i] = elementwise max over rows sets.row(i) of x; zero row when empty.
/// Gradient goes to the argmax row, the lowest row index on ties.
Var max_pool_sets(Var x, const SparsePattern& sets);
Var gather_rows(Var x, std::span<const int> index);
Var scatter_sum_rows(Var x, std::span<const int> index, Eigen::Index out_rows);
/// out[i] = sum_{j in A.row(i)} V[j]
Var sparse_adj_matmul(const SparsePattern& adjacency, Var v);
/// Softmax of an E x 1 column within groups of equal segment id.
Var segment_softmax(Var logits, std::span<const int> segment, Eigen::Index segments);
/// Multiplies row e of x (E x C) by w(e, 0) (w is E x 1).
Var mul_rows(Var x, Var w);
/// Rows grouped into blocks of `block`; out[b, t] = x[b, t + offset] or 0 outside the block.
Var temporal_shift(Var x, Eigen::Index block, int offset);
/// Picks a's row where mask is set, otherwise b's row.
Var select_rows(const std::vector<bool>& mask, Var a, Var b);

// Reductions and losses
Var sum(Var x);
Var mean(Var x);
/// Elementwise Huber-style smooth L1 with transition `delta` against a constant target.
Var smooth_l1(Var pred, const Matrix& target, double delta = 1.0, Reduction reduction = Reduction::Mean);
/// Penalty-reduced focal loss over heatmap scores in (0, 1) against soft labels.
/// Labels exactly 1 are positives; the sum is divided by max(#positives, 1).
Var focal_loss(Var pred, const Matrix& labels, double alpha = 2.0, double beta = 4.0);

}  // namespace dsp::diff
