#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dsp::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Trainable tensor with its accumulated gradient and optimizer moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // first moment
  Matrix v;  // second moment
  bool has_grad = false;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient after Tape::backward (zeros if nothing flowed here).
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records the forward computation; `backward` replays it in reverse.
/// Every recorded value is checked to be finite (NonFiniteValue otherwise).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out, const Matrix& value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Matrix value);
  /// Differentiable input whose gradient stays readable through Var::grad.
  Var input(Matrix value);
  /// Binds a parameter; gradients accumulate into `p.grad`.
  Var param(Parameter& p);

  /// Records an op output. `backward` runs only when some parent needs a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> parents, BackwardFn backward);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(Var out);

  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].requires_grad; }
  /// grad(v) += g, shape-checked. No-op when v does not require a gradient.
  void accumulate(Var v, const Matrix& g);
  template <typename Fn>
  void accumulate_with(Var v, Fn&& fn) {
    if (!requires_grad(v)) return;
    accumulate(v, fn());
  }

  const Matrix& value_of(Var v) const { return nodes_[static_cast<std::size_t>(v.id_)].value; }
  Matrix grad_of(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool keep_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  Var push(Node node, const char* op);
  std::deque<Node> nodes_;
};

}  // namespace dsp::diff
