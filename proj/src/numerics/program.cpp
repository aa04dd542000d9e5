#include "gcbf/numerics/program.hpp"

#include "gcbf/error.hpp"

namespace gcbf::num {

namespace {

Var arg(const std::vector<Var>& values, const Instruction& ins, std::size_t k) {
  if (k >= ins.args.size()) throw ShapeError("'" + ins.op + "' is missing operand " + std::to_string(k));
  const std::size_t id = ins.args[k];
  if (id >= values.size()) throw ShapeError("'" + ins.op + "' refers to undefined value " + std::to_string(id));
  return values[id];
}

Var apply(Tape& tape, const std::vector<Var>& values, const Instruction& ins) {
  switch (primitive_from_name(ins.op)) {
    case Primitive::Input:
      throw ShapeError("inputs are implicit; 'input' cannot appear in a program body");
    case Primitive::Constant:
      return tape.constant(ins.constant);
    case Primitive::MatMul:
      return tape.matmul(arg(values, ins, 0), arg(values, ins, 1));
    case Primitive::Add:
      return tape.add(arg(values, ins, 0), arg(values, ins, 1));
    case Primitive::Sub:
      return tape.sub(arg(values, ins, 0), arg(values, ins, 1));
    case Primitive::Mul:
      return tape.mul(arg(values, ins, 0), arg(values, ins, 1));
    case Primitive::Scale:
      return tape.scale(arg(values, ins, 0), ins.scalar);
    case Primitive::Relu:
      return tape.relu(arg(values, ins, 0));
    case Primitive::Tanh:
      return tape.tanh(arg(values, ins, 0));
    case Primitive::Exp:
      return tape.exp(arg(values, ins, 0));
    case Primitive::Log:
      return tape.log(arg(values, ins, 0));
    case Primitive::SumReduce:
      return tape.sum(arg(values, ins, 0), ins.along);
    case Primitive::MaxReduce:
      return tape.max(arg(values, ins, 0), ins.along);
    case Primitive::Softmax:
      return tape.softmax(arg(values, ins, 0), ins.along);
    case Primitive::Concat: {
      std::vector<Var> parts;
      for (std::size_t k = 0; k < ins.args.size(); ++k) parts.push_back(arg(values, ins, k));
      return tape.concat(parts, ins.along);
    }
    case Primitive::Slice:
      return tape.slice(arg(values, ins, 0), ins.along, ins.begin, ins.end);
    case Primitive::Hinge:
      return tape.hinge(arg(values, ins, 0));
    case Primitive::L2Norm:
      return tape.l2norm(arg(values, ins, 0), ins.along);
    case Primitive::Gather:
      return tape.gather_rows(arg(values, ins, 0), ins.index);
    case Primitive::SegmentSum:
      return tape.segment_sum(arg(values, ins, 0), ins.index);
    case Primitive::SegmentSoftmax:
      return tape.segment_softmax(arg(values, ins, 0), ins.index);
  }
  throw UnknownPrimitiveError("unknown primitive '" + ins.op + "'");
}

}  // namespace

ProgramResult evaluate_and_backprop(const Program& program, std::span<const Tensor> inputs, const Tensor& seed) {
  if (inputs.size() != program.n_inputs) {
    throw ShapeError("program expects " + std::to_string(program.n_inputs) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  if (program.outputs.empty()) throw ShapeError("program has no outputs");
  Tape tape;
  std::vector<Var> values;
  values.reserve(program.n_inputs + program.body.size());
  for (const Tensor& t : inputs) values.push_back(tape.input(t));
  for (const Instruction& ins : program.body) values.push_back(apply(tape, values, ins));

  ProgramResult result;
  for (std::size_t id : program.outputs) {
    if (id >= values.size()) throw ShapeError("program output refers to undefined value " + std::to_string(id));
    result.outputs.push_back(values[id].value());
  }
  tape.backward(values[program.outputs.back()], seed);
  for (std::size_t k = 0; k < program.n_inputs; ++k) result.gradients.push_back(tape.grad(values[k]));
  return result;
}

}  // namespace gcbf::num
