#pragma once

#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace dsp::test {

struct OpCase {
  std::string name;
  InputFn f;
  std::vector<Matrix> inputs;
};

// Weighted sum with fixed random coefficients turns any output into a scalar
// whose gradient exercises every entry.
inline Var probe(Tape& t, Var y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return diff::sum(diff::mul(y, t.constant(random_matrix(rng, y.rows(), y.cols()))));
}

inline diff::SparsePattern random_sets(std::mt19937_64& rng, int rows, int cols, int max_len, bool allow_empty) {
  std::vector<std::vector<int>> lists(static_cast<std::size_t>(rows));
  std::uniform_int_distribution<int> len(allow_empty ? 0 : 1, max_len), pick(0, cols - 1);
  for (auto& l : lists) {
    const int n = len(rng);
    for (int k = 0; k < n; ++k) l.push_back(pick(rng));
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return diff::SparsePattern::from_rows(lists, cols);
}

/// One finite-difference fixture per differentiable op.
inline std::vector<OpCase> op_cases(std::uint64_t seed = 1) {
  namespace d = diff;
  using V = const std::vector<Var>&;
  std::mt19937_64 rng(seed);
  auto R = [&](Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) { return random_matrix(rng, r, c, lo, hi); };
  std::vector<OpCase> c;
  c.push_back({"matmul", [](Tape& t, V v) { return probe(t, d::matmul(v[0], v[1])); }, {R(3, 4), R(4, 2)}});
  c.push_back({"matmul_nt", [](Tape& t, V v) { return probe(t, d::matmul_nt(v[0], v[1])); }, {R(3, 4), R(5, 4)}});
  c.push_back({"linear", [](Tape& t, V v) { return probe(t, d::linear(v[0], v[1], v[2])); }, {R(5, 3), R(3, 4), R(1, 4)}});
  c.push_back({"add", [](Tape& t, V v) { return probe(t, d::add(v[0], v[1])); }, {R(2, 3), R(2, 3)}});
  c.push_back({"sub", [](Tape& t, V v) { return probe(t, d::sub(v[0], v[1])); }, {R(2, 3), R(2, 3)}});
  c.push_back({"mul", [](Tape& t, V v) { return probe(t, d::mul(v[0], v[1])); }, {R(2, 3), R(2, 3)}});
  c.push_back({"scale", [](Tape& t, V v) { return probe(t, d::scale(v[0], -2.5)); }, {R(2, 3)}});
  c.push_back({"add_row", [](Tape& t, V v) { return probe(t, d::add_row(v[0], v[1])); }, {R(4, 3), R(1, 3)}});
  c.push_back({"concat", [](Tape& t, V v) { return probe(t, d::concat({v[0], v[1], v[0]})); }, {R(3, 2), R(3, 4)}});
  c.push_back({"reshape", [](Tape& t, V v) { return probe(t, d::reshape(v[0], 2, 6)); }, {R(3, 4)}});
  c.push_back({"transpose", [](Tape& t, V v) { return probe(t, d::transpose(v[0])); }, {R(3, 4)}});
  c.push_back({"relu", [](Tape& t, V v) { return probe(t, d::relu(v[0])); }, {R(4, 5)}});
  c.push_back({"leaky_relu", [](Tape& t, V v) { return probe(t, d::leaky_relu(v[0], 0.1)); }, {R(4, 5)}});
  c.push_back({"sigmoid", [](Tape& t, V v) { return probe(t, d::sigmoid(v[0])); }, {R(4, 5, -6.0, 6.0)}});
  c.push_back({"layer_norm_affine", [](Tape& t, V v) { return probe(t, d::layer_norm(v[0], v[1], v[2])); },
               {R(4, 6), R(1, 6), R(1, 6)}});
  c.push_back({"layer_norm", [](Tape& t, V v) { return probe(t, d::layer_norm(v[0])); }, {R(3, 5)}});
  c.push_back({"softmax_rows", [](Tape& t, V v) { return probe(t, d::softmax(v[0], 1)); }, {R(3, 5, -3.0, 3.0)}});
  c.push_back({"softmax_cols", [](Tape& t, V v) { return probe(t, d::softmax(v[0], 0)); }, {R(3, 5, -3.0, 3.0)}});

  const auto sets = random_sets(rng, 6, 7, 4, true);
  c.push_back({"max_pool_sets", [sets](Tape& t, V v) { return probe(t, d::max_pool_sets(v[0], sets)); }, {R(7, 3)}});
  const std::vector<int> idx{4, 0, 0, 2, 3};
  c.push_back({"gather_rows", [idx](Tape& t, V v) { return probe(t, d::gather_rows(v[0], idx)); }, {R(5, 3)}});
  c.push_back({"scatter_sum_rows", [idx](Tape& t, V v) { return probe(t, d::scatter_sum_rows(v[0], idx, 6)); }, {R(5, 3)}});
  const auto adj = random_sets(rng, 5, 5, 3, true);
  c.push_back({"sparse_adj_matmul", [adj](Tape& t, V v) { return probe(t, d::sparse_adj_matmul(adj, v[0])); }, {R(5, 4)}});
  const std::vector<int> seg{0, 0, 2, 2, 2, 3};
  c.push_back({"segment_softmax", [seg](Tape& t, V v) { return probe(t, d::segment_softmax(v[0], seg, 4)); },
               {R(6, 1, -2.0, 2.0)}});
  c.push_back({"mul_rows", [](Tape& t, V v) { return probe(t, d::mul_rows(v[0], v[1])); }, {R(4, 3), R(4, 1)}});
  c.push_back({"temporal_shift_back", [](Tape& t, V v) { return probe(t, d::temporal_shift(v[0], 4, -1)); }, {R(8, 3)}});
  c.push_back({"temporal_shift_fwd", [](Tape& t, V v) { return probe(t, d::temporal_shift(v[0], 4, 1)); }, {R(8, 3)}});
  const std::vector<bool> mask{true, false, true};
  c.push_back({"select_rows", [mask](Tape& t, V v) { return probe(t, d::select_rows(mask, v[0], v[1])); }, {R(3, 2), R(3, 2)}});

  c.push_back({"sum", [](Tape&, V v) { return d::sum(v[0]); }, {R(3, 3)}});
  c.push_back({"mean", [](Tape&, V v) { return d::mean(v[0]); }, {R(3, 3)}});
  const Matrix target = R(3, 4, -2.0, 2.0);
  c.push_back({"smooth_l1_mean", [target](Tape&, V v) { return d::smooth_l1(v[0], target, 1.0, d::Reduction::Mean); },
               {R(3, 4, -3.0, 3.0)}});
  c.push_back({"smooth_l1_sum", [target](Tape&, V v) { return d::smooth_l1(v[0], target, 1.0, d::Reduction::Sum); },
               {R(3, 4, -3.0, 3.0)}});
  Matrix labels = R(9, 1, 0.0, 0.9);
  labels(2, 0) = 1.0;
  labels(6, 0) = 1.0;
  c.push_back({"focal_loss", [labels](Tape&, V v) { return d::focal_loss(v[0], labels, 2.0, 4.0); }, {R(9, 1, 0.05, 0.95)}});
  return c;
}

}  // namespace dsp::test
