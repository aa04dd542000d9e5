#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gcbf/numerics/tensor.hpp"

namespace gcbf::num {

// The closed set of differentiable primitives. Gather, SegmentSum and
// SegmentSoftmax are the indexed forms of Slice, SumReduce and Softmax; they
// let one tape hold a whole batch of variable-size neighbourhoods.
enum class Primitive : std::uint8_t {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  Tanh,
  Exp,
  Log,
  SumReduce,
  MaxReduce,
  Softmax,
  Concat,
  Slice,
  Hinge,
  L2Norm,
  Gather,
  SegmentSum,
  SegmentSoftmax,
};

std::string_view primitive_name(Primitive p);
// Throws UnknownPrimitiveError for names outside the closed set.
Primitive primitive_from_name(std::string_view name);

// Direction of a reduction, softmax, slice or concatenation.
//   Columns: within each row, across its columns (result r x 1 for reductions)
//   Rows:    within each column, across its rows (result 1 x c for reductions)
//   All:     every element (result 1 x 1)
enum class Along : std::uint8_t { Columns, Rows, All };

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* t, std::uint32_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

using Index = std::shared_ptr<const std::vector<std::size_t>>;

// Dynamic reverse-mode tape. Operations are recorded in call order; backward()
// visits them in exact reverse order. A tape is used by one thread at a time.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Differentiable input (parameters, states we need gradients for).
  Var input(Tensor value);
  // Value that never receives a gradient.
  Var constant(Tensor value);

  Var matmul(Var a, Var b);
  // Elementwise with broadcasting of unit dimensions (bias rows, scalars, columns).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sum(Var a, Along along = Along::All);
  Var max(Var a, Along along = Along::All);
  Var softmax(Var a, Along along = Along::Columns);
  // Along::Columns joins side by side, Along::Rows stacks vertically.
  Var concat(std::span<const Var> parts, Along along);
  Var slice(Var a, Along along, std::size_t begin, std::size_t end);
  Var hinge(Var a);
  // Euclidean norm of every row (Along::Columns), every column (Along::Rows) or of everything.
  Var l2norm(Var a, Along along = Along::All);
  Var gather_rows(Var a, Index rows);
  Var segment_sum(Var a, Index offsets);
  Var segment_softmax(Var a, Index offsets);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep seeded with d(out) = seed. Clears gradients of any previous sweep.
  void backward(Var out, const Tensor& seed);
  void backward(Var out);  // seed of ones, for scalar outputs
  // Gradient of the last sweep; zeros for values that did not participate.
  // The reference stays valid until the next backward().
  const Tensor& grad(Var v) const;

  // Branch tracking for gradient checks: when enabled, the sign pattern of
  // every relu/hinge, argmax choice and zero-norm flag is folded into a hash.
  void track_branches(bool on) { track_branches_ = on; }
  std::uint64_t branch_signature() const { return signature_; }
  void mix_signature(std::uint64_t value);

 private:
  struct Node {
    Primitive op = Primitive::Input;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::vector<std::uint32_t> parts;
    Tensor value;
    bool needs_grad = false;
    Along along = Along::All;
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    Index index;
    std::vector<std::size_t> argmax;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void check_same_tape(Var v) const;
  Var elementwise_binary(Primitive op, Var a, Var b);
  Var unary(Primitive op, Var a);
  void fold_mask(const Tensor& x);
  void accumulate(std::uint32_t id, const Tensor& g);
  Tensor& grad_slot(std::uint32_t id);
  void backprop_node(std::uint32_t id);

  // deque: recorded values keep their address while the tape grows
  std::deque<Node> nodes_;
  mutable std::vector<Tensor> grads_;
  mutable std::vector<bool> has_grad_;
  bool track_branches_ = false;
  std::uint64_t signature_ = 1469598103934665603ull;
};

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator*(double s, Var a) { return a.tape()->scale(a, s); }
inline Var matmul(Var a, Var b) { return a.tape()->matmul(a, b); }
inline Var relu(Var a) { return a.tape()->relu(a); }
inline Var hinge(Var a) { return a.tape()->hinge(a); }
inline Var sum(Var a, Along along = Along::All) { return a.tape()->sum(a, along); }

}  // namespace gcbf::num
