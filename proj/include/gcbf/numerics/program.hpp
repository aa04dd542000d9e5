#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gcbf/numerics/tape.hpp"

namespace gcbf::num {

// A straight-line program over the primitive set, addressed by name. Value ids
// 0..n_inputs-1 are the inputs; instruction k defines value n_inputs + k.
struct Instruction {
  std::string op;
  std::vector<std::size_t> args;
  Along along = Along::All;
  double scalar = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Index index;      // gather rows or segment offsets
  Tensor constant;  // payload of "constant"
};

struct Program {
  std::size_t n_inputs = 0;
  std::vector<Instruction> body;
  std::vector<std::size_t> outputs;  // the last output receives the seed
};

struct ProgramResult {
  std::vector<Tensor> outputs;
  std::vector<Tensor> gradients;  // one per input
};

// Forward evaluation followed by one reverse sweep seeded at the last output.
// Throws UnknownPrimitiveError, ShapeError or NonFiniteError.
ProgramResult evaluate_and_backprop(const Program& program, std::span<const Tensor> inputs, const Tensor& seed);

}  // namespace gcbf::num
