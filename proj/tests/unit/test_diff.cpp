#include <doctest.h>

#include <cmath>
#include <random>

#include "dsp/error.hpp"
#include "op_cases.hpp"

using namespace dsp;
using namespace dsp::test;
namespace d = dsp::diff;


TEST_CASE("every op matches central finite differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const OpCase& c : op_cases(seed)) {
      const GradReport r = check_inputs(c.f, c.inputs);
      INFO(c.name << " seed " << seed << ": worst " << r.worst << " rel " << r.max_rel);
      CHECK(r.max_rel < 1e-4);
    }
  }
}

TEST_CASE("gradients accumulate over reused values") {
  Tape t;
  Var x = t.input(Matrix::Constant(1, 1, 3.0));
  Var y = d::sum(d::add(d::mul(x, x), x));  // x^2 + x
  t.backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("constants receive no gradient and parameters accumulate") {
  d::ParamStore store(3);
  d::Parameter& p = store.get("w", 2, 2, d::Init::Ones);
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    Var c = t.constant(Matrix::Constant(2, 2, 5.0));
    t.backward(d::sum(d::mul(t.param(p), c)));
  }
  CHECK(p.has_grad);
  CHECK(p.grad.isApproxToConstant(10.0));
}

TEST_CASE("non-finite values are rejected") {
  Tape t;
  Var x = t.input(Matrix::Constant(1, 1, 1e308));
  CHECK_THROWS_AS(d::scale(x, 10.0), Error);
}

TEST_CASE("shape errors are reported") {
  Tape t;
  Var a = t.input(Matrix::Zero(2, 3));
  Var b = t.input(Matrix::Zero(2, 3));
  CHECK_THROWS_AS(d::matmul(a, b), Error);
  CHECK_THROWS_AS(d::add(a, t.input(Matrix::Zero(3, 2))), Error);
}

TEST_CASE("max pooling is invariant to set order and empty sets give zeros") {
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(rng, 6, 3);
  const auto a = d::SparsePattern::from_rows({{0, 3, 5}, {}, {1, 2}}, 6);
  const auto b = d::SparsePattern::from_rows({{5, 0, 3}, {}, {2, 1}}, 6);
  Tape t;
  Var v = t.constant(x);
  const Matrix pa = d::max_pool_sets(v, a).value();
  const Matrix pb = d::max_pool_sets(v, b).value();
  CHECK(pa == pb);
  CHECK(pa.row(1).isZero(0.0));
  CHECK(pa(0, 0) == std::max({x(0, 0), x(3, 0), x(5, 0)}));
}

TEST_CASE("softmax rows sum to one and segment softmax normalizes per segment") {
  std::mt19937_64 rng(6);
  Tape t;
  const Matrix s = d::softmax(t.constant(random_matrix(rng, 4, 7, -50, 50)), 1).value();
  for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(s.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<int> seg{1, 1, 1, 0, 0};
  const Matrix g = d::segment_softmax(t.constant(random_matrix(rng, 5, 1, -5, 5)), seg, 3).value();
  CHECK(g(0, 0) + g(1, 0) + g(2, 0) == doctest::Approx(1.0));
  CHECK(g(3, 0) + g(4, 0) == doctest::Approx(1.0));
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  std::mt19937_64 rng(7);
  Tape t;
  const Matrix y = d::layer_norm(t.constant(random_matrix(rng, 3, 16, -4, 9)), {}, {}, 0.0).value();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    CHECK(std::abs(y.row(i).mean()) < 1e-12);
    CHECK(y.row(i).squaredNorm() / 16.0 == doctest::Approx(1.0));
  }
}

TEST_CASE("temporal shift zero-fills at block edges") {
  Matrix x(6, 1);
  x << 1, 2, 3, 4, 5, 6;
  Tape t;
  const Matrix back = d::temporal_shift(t.constant(x), 3, -1).value();
  const Matrix fwd = d::temporal_shift(t.constant(x), 3, 1).value();
  Matrix eb(6, 1), ef(6, 1);
  eb << 0, 1, 2, 0, 4, 5;
  ef << 2, 3, 0, 5, 6, 0;
  CHECK(back == eb);
  CHECK(fwd == ef);
}
