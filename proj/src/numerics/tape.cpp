#include "gcbf/numerics/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "gcbf/error.hpp"
#include "gcbf/numerics/kernels.hpp"

namespace gcbf::num {

namespace {

constexpr std::array<std::string_view, 21> kNames = {
    "input", "constant", "matmul",  "add",    "sub",    "elementwise-mul", "scalar-mul",
    "relu",  "tanh",     "exp",     "log",    "sum-reduce", "max-reduce", "softmax",
    "concatenate", "slice", "hinge", "l2-norm", "gather", "segment-sum", "segment-softmax"};

std::size_t broadcast_dim(std::size_t x, std::size_t y, const Tensor& a, const Tensor& b) {
  if (x == y) return x;
  if (x == 1) return y;
  if (y == 1) return x;
  throw ShapeError("cannot broadcast " + a.shape_string() + " with " + b.shape_string());
}

// Sum g (r x c) down to the shape of `target` by collapsing broadcast axes.
Tensor reduce_to(const Tensor& g, const Tensor& target) {
  const std::size_t tr = target.rows();
  const std::size_t tc = target.cols();
  if (tr == g.rows() && tc == g.cols()) {
    Tensor out = g;
    return Tensor(target.shape(), std::vector<double>(out.values().begin(), out.values().end()));
  }
  Tensor out(target.shape(), 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const std::size_t orow = tr == 1 ? 0 : r;
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out[orow * tc + (tc == 1 ? 0 : c)] += g(r, c);
    }
  }
  return out;
}

}  // namespace

std::string_view primitive_name(Primitive p) { return kNames[static_cast<std::size_t>(p)]; }

Primitive primitive_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Primitive>(i);
  }
  throw UnknownPrimitiveError("unknown primitive '" + std::string(name) + "'");
}

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  node.value.require_finite(primitive_name(node.op));
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Tape::Node& Tape::node(Var v) const {
  check_same_tape(v);
  return nodes_[v.id()];
}

void Tape::check_same_tape(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw ShapeError("variable does not belong to this tape");
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::needs_grad(Var v) const { return node(v).needs_grad; }

void Tape::mix_signature(std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    signature_ ^= (value >> (8 * i)) & 0xffu;
    signature_ *= 1099511628211ull;
  }
}

void Tape::fold_mask(const Tensor& x) {
  std::uint64_t word = 0;
  int bits = 0;
  for (double v : x.values()) {
    word = (word << 1) | (v > 0.0 ? 1u : 0u);
    if (++bits == 64) {
      mix_signature(word);
      word = 0;
      bits = 0;
    }
  }
  mix_signature(word ^ static_cast<std::uint64_t>(x.size()));
}

Var Tape::input(Tensor value) {
  Node n;
  n.op = Primitive::Input;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Primitive::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul shape mismatch: " + av.shape_string() + " x " + bv.shape_string());
  }
  Node n;
  n.op = Primitive::MatMul;
  n.a = a.id();
  n.b = b.id();
  n.value = Tensor::matrix(av.rows(), bv.cols());
  kernels::gemm(kernels::Trans::No, kernels::Trans::No, av, bv, n.value);
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n));
}

Var Tape::elementwise_binary(Primitive op, Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  const std::size_t r = broadcast_dim(av.rows(), bv.rows(), av, bv);
  const std::size_t c = broadcast_dim(av.cols(), bv.cols(), av, bv);
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  const bool same = av.rows() == r && av.cols() == c && bv.rows() == r && bv.cols() == c;
  n.value = (av.rows() == r && av.cols() == c) ? Tensor(av.shape(), 0.0) : Tensor::matrix(r, c);
  double* out = n.value.ptr();
  if (same) {
    const double* x = av.ptr();
    const double* y = bv.ptr();
    const std::size_t sz = r * c;
    switch (op) {
      case Primitive::Add:
        for (std::size_t i = 0; i < sz; ++i) out[i] = x[i] + y[i];
        break;
      case Primitive::Sub:
        for (std::size_t i = 0; i < sz; ++i) out[i] = x[i] - y[i];
        break;
      default:
        for (std::size_t i = 0; i < sz; ++i) out[i] = x[i] * y[i];
        break;
    }
  } else {
    const std::size_t ar = av.rows() == 1 ? 0 : 1, ac = av.cols() == 1 ? 0 : 1;
    const std::size_t br = bv.rows() == 1 ? 0 : 1, bc = bv.cols() == 1 ? 0 : 1;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const double x = av(i * ar, j * ac);
        const double y = bv(i * br, j * bc);
        out[i * c + j] = op == Primitive::Add ? x + y : op == Primitive::Sub ? x - y : x * y;
      }
    }
  }
  n.needs_grad = needs_grad(a) || needs_grad(b);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) { return elementwise_binary(Primitive::Add, a, b); }
Var Tape::sub(Var a, Var b) { return elementwise_binary(Primitive::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return elementwise_binary(Primitive::Mul, a, b); }

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Primitive::Scale;
  n.a = a.id();
  n.scalar = s;
  n.value = value(a);
  for (double& v : n.value.values()) v *= s;
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::unary(Primitive op, Var a) {
  Node n;
  n.op = op;
  n.a = a.id();
  n.value = value(a);
  auto vals = n.value.values();
  switch (op) {
    case Primitive::Relu:
    case Primitive::Hinge:
      if (track_branches_) fold_mask(value(a));
      for (double& v : vals) v = v > 0.0 ? v : 0.0;
      break;
    case Primitive::Tanh:
      for (double& v : vals) v = std::tanh(v);
      break;
    case Primitive::Exp:
      for (double& v : vals) v = std::exp(v);
      break;
    case Primitive::Log:
      for (double& v : vals) v = std::log(v);
      break;
    default:
      throw UnknownPrimitiveError("not a unary primitive: " + std::string(primitive_name(op)));
  }
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::relu(Var a) { return unary(Primitive::Relu, a); }
Var Tape::hinge(Var a) { return unary(Primitive::Hinge, a); }
Var Tape::tanh(Var a) { return unary(Primitive::Tanh, a); }
Var Tape::exp(Var a) { return unary(Primitive::Exp, a); }
Var Tape::log(Var a) { return unary(Primitive::Log, a); }

Var Tape::sum(Var a, Along along) {
  const Tensor& x = value(a);
  Node n;
  n.op = Primitive::SumReduce;
  n.a = a.id();
  n.along = along;
  const std::size_t r = x.rows(), c = x.cols();
  if (along == Along::All) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    n.value = Tensor::matrix(1, 1, std::vector<double>{acc});
  } else if (along == Along::Columns) {
    n.value = Tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += x(i, j);
      n.value[i] = acc;
    }
  } else {
    n.value = Tensor::matrix(1, c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) n.value[j] += x(i, j);
    }
  }
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::max(Var a, Along along) {
  const Tensor& x = value(a);
  if (x.size() == 0) throw ShapeError("max-reduce of an empty tensor");
  Node n;
  n.op = Primitive::MaxReduce;
  n.a = a.id();
  n.along = along;
  const std::size_t r = x.rows(), c = x.cols();
  auto argmax_range = [&](std::size_t start, std::size_t count, std::size_t stride) {
    std::size_t best = start;
    for (std::size_t k = 1; k < count; ++k) {
      const std::size_t idx = start + k * stride;
      if (x[idx] > x[best]) best = idx;
    }
    return best;
  };
  if (along == Along::All) {
    n.argmax = {argmax_range(0, x.size(), 1)};
    n.value = Tensor::matrix(1, 1, std::vector<double>{x[n.argmax[0]]});
  } else if (along == Along::Columns) {
    n.value = Tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
      n.argmax.push_back(argmax_range(i * c, c, 1));
      n.value[i] = x[n.argmax.back()];
    }
  } else {
    n.value = Tensor::matrix(1, c);
    for (std::size_t j = 0; j < c; ++j) {
      n.argmax.push_back(argmax_range(j, r, c));
      n.value[j] = x[n.argmax.back()];
    }
  }
  if (track_branches_) {
    for (std::size_t k : n.argmax) mix_signature(k);
  }
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::softmax(Var a, Along along) {
  const Tensor& x = value(a);
  Node n;
  n.op = Primitive::Softmax;
  n.a = a.id();
  n.along = along;
  n.value = Tensor::like(x);
  const std::size_t r = x.rows(), c = x.cols();
  auto run = [&](std::size_t start, std::size_t count, std::size_t stride) {
    double mx = x[start];
    for (std::size_t k = 1; k < count; ++k) mx = std::max(mx, x[start + k * stride]);
    double denom = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double e = std::exp(x[start + k * stride] - mx);
      n.value[start + k * stride] = e;
      denom += e;
    }
    for (std::size_t k = 0; k < count; ++k) n.value[start + k * stride] /= denom;
  };
  if (x.size() > 0) {
    if (along == Along::All) {
      run(0, x.size(), 1);
    } else if (along == Along::Columns) {
      for (std::size_t i = 0; i < r; ++i) run(i * c, c, 1);
    } else {
      for (std::size_t j = 0; j < c; ++j) run(j, r, c);
    }
  }
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts, Along along) {
  if (parts.empty()) throw ShapeError("concatenate of zero tensors");
  if (along == Along::All) throw ShapeError("concatenate needs Along::Rows or Along::Columns");
  Node n;
  n.op = Primitive::Concat;
  n.along = along;
  std::size_t rows = 0, cols = 0;
  for (Var p : parts) {
    const Tensor& v = value(p);
    n.parts.push_back(p.id());
    n.needs_grad = n.needs_grad || needs_grad(p);
    if (along == Along::Columns) {
      if (rows == 0 && cols == 0) rows = v.rows();
      if (v.rows() != rows) throw ShapeError("concatenate: row count mismatch " + v.shape_string());
      cols += v.cols();
    } else {
      if (rows == 0 && cols == 0) cols = v.cols();
      if (v.cols() != cols) throw ShapeError("concatenate: column count mismatch " + v.shape_string());
      rows += v.rows();
    }
  }
  n.value = Tensor::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& v = value(p);
    if (along == Along::Columns) {
      for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(v.ptr() + i * v.cols(), v.cols(), n.value.ptr() + i * cols + offset);
      }
      offset += v.cols();
    } else {
      std::copy_n(v.ptr(), v.size(), n.value.ptr() + offset * cols);
      offset += v.rows();
    }
  }
  return push(std::move(n));
}

Var Tape::slice(Var a, Along along, std::size_t begin, std::size_t end) {
  const Tensor& x = value(a);
  if (along == Along::All) throw ShapeError("slice needs Along::Rows or Along::Columns");
  const std::size_t extent = along == Along::Rows ? x.rows() : x.cols();
  if (begin > end || end > extent) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     x.shape_string());
  }
  Node n;
  n.op = Primitive::Slice;
  n.a = a.id();
  n.along = along;
  n.begin = begin;
  n.end = end;
  if (along == Along::Rows) {
    n.value = Tensor::matrix(end - begin, x.cols());
    std::copy_n(x.ptr() + begin * x.cols(), (end - begin) * x.cols(), n.value.ptr());
  } else {
    n.value = Tensor::matrix(x.rows(), end - begin);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::copy_n(x.ptr() + i * x.cols() + begin, end - begin, n.value.ptr() + i * (end - begin));
    }
  }
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::l2norm(Var a, Along along) {
  const Tensor& x = value(a);
  Node n;
  n.op = Primitive::L2Norm;
  n.a = a.id();
  n.along = along;
  const std::size_t r = x.rows(), c = x.cols();
  if (along == Along::All) {
    double acc = 0.0;
    for (double v : x.values()) acc += v * v;
    n.value = Tensor::matrix(1, 1, std::vector<double>{std::sqrt(acc)});
  } else if (along == Along::Columns) {
    n.value = Tensor::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < c; ++j) acc += x(i, j) * x(i, j);
      n.value[i] = std::sqrt(acc);
    }
  } else {
    n.value = Tensor::matrix(1, c);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) n.value[j] += x(i, j) * x(i, j);
    }
    for (double& v : n.value.values()) v = std::sqrt(v);
  }
  if (track_branches_) {
    std::uint64_t zeros = 0;
    for (std::size_t k = 0; k < n.value.size(); ++k) zeros = zeros * 31 + (n.value[k] == 0.0 ? 1 : 0);
    mix_signature(zeros);
  }
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, Index rows) {
  if (!rows) throw ShapeError("gather with null index");
  const Tensor& x = value(a);
  Node n;
  n.op = Primitive::Gather;
  n.a = a.id();
  n.index = std::move(rows);
  n.value = Tensor::matrix(n.index->size(), x.cols());
  kernels::gather_rows(x, *n.index, n.value);
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::segment_sum(Var a, Index offsets) {
  if (!offsets) throw ShapeError("segment-sum with null offsets");
  const Tensor& x = value(a);
  Node n;
  n.op = Primitive::SegmentSum;
  n.a = a.id();
  n.index = std::move(offsets);
  n.value = Tensor::matrix(n.index->size() - 1, x.cols());
  kernels::segment_sum(x, *n.index, n.value);
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Var Tape::segment_softmax(Var a, Index offsets) {
  if (!offsets) throw ShapeError("segment-softmax with null offsets");
  const Tensor& x = value(a);
  Node n;
  n.op = Primitive::SegmentSoftmax;
  n.a = a.id();
  n.index = std::move(offsets);
  n.value = Tensor::like(x);
  kernels::segment_softmax(x, *n.index, n.value);
  n.needs_grad = needs_grad(a);
  return push(std::move(n));
}

Tensor& Tape::grad_slot(std::uint32_t id) {
  if (!has_grad_[id]) {
    grads_[id] = Tensor::like(nodes_[id].value, 0.0);
    has_grad_[id] = true;
  }
  return grads_[id];
}

void Tape::accumulate(std::uint32_t id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  if (!has_grad_[id]) {
    grads_[id] = Tensor(nodes_[id].value.shape(), std::vector<double>(g.values().begin(), g.values().end()));
    has_grad_[id] = true;
    return;
  }
  double* dst = grads_[id].ptr();
  const double* src = g.ptr();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var out) { backward(out, Tensor::like(value(out), 1.0)); }

void Tape::backward(Var out, const Tensor& seed) {
  check_same_tape(out);
  if (!seed.same_shape(value(out))) {
    throw ShapeError("seed gradient " + seed.shape_string() + " does not match output " + value(out).shape_string());
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  if (!nodes_[out.id()].needs_grad) return;
  accumulate(out.id(), seed);
  for (std::size_t k = out.id() + 1; k-- > 0;) {
    const auto id = static_cast<std::uint32_t>(k);
    if (!has_grad_[id]) continue;
    backprop_node(id);
  }
}

void Tape::backprop_node(std::uint32_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = grads_[id];
  auto in_needs = [&](std::uint32_t i) { return nodes_[i].needs_grad; };
  switch (n.op) {
    case Primitive::Input:
    case Primitive::Constant:
      return;
    case Primitive::MatMul: {
      const Tensor& av = nodes_[n.a].value;
      const Tensor& bv = nodes_[n.b].value;
      if (in_needs(n.a)) {
        Tensor& ga = grad_slot(n.a);
        kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, g, bv, ga, 1.0);
      }
      if (in_needs(n.b)) {
        Tensor& gb = grad_slot(n.b);
        kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, av, g, gb, 1.0);
      }
      return;
    }
    case Primitive::Add:
    case Primitive::Sub: {
      if (in_needs(n.a)) accumulate(n.a, reduce_to(g, nodes_[n.a].value));
      if (in_needs(n.b)) {
        Tensor gb = reduce_to(g, nodes_[n.b].value);
        if (n.op == Primitive::Sub) {
          for (double& v : gb.values()) v = -v;
        }
        accumulate(n.b, gb);
      }
      return;
    }
    case Primitive::Mul: {
      const Tensor& av = nodes_[n.a].value;
      const Tensor& bv = nodes_[n.b].value;
      const std::size_t r = g.rows(), c = g.cols();
      auto at = [](const Tensor& t, std::size_t i, std::size_t j) {
        return t(t.rows() == 1 ? 0 : i, t.cols() == 1 ? 0 : j);
      };
      if (in_needs(n.a)) {
        Tensor ga = Tensor::matrix(r, c);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga(i, j) = g(i, j) * at(bv, i, j);
        accumulate(n.a, reduce_to(ga, av));
      }
      if (in_needs(n.b)) {
        Tensor gb = Tensor::matrix(r, c);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb(i, j) = g(i, j) * at(av, i, j);
        accumulate(n.b, reduce_to(gb, bv));
      }
      return;
    }
    case Primitive::Scale: {
      Tensor& ga = grad_slot(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
      return;
    }
    case Primitive::Relu:
    case Primitive::Hinge: {
      const Tensor& x = nodes_[n.a].value;
      Tensor& ga = grad_slot(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : 0.0;
      return;
    }
    case Primitive::Tanh: {
      Tensor& ga = grad_slot(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      return;
    }
    case Primitive::Exp: {
      Tensor& ga = grad_slot(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      return;
    }
    case Primitive::Log: {
      const Tensor& x = nodes_[n.a].value;
      Tensor& ga = grad_slot(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      return;
    }
    case Primitive::SumReduce: {
      Tensor& ga = grad_slot(n.a);
      const std::size_t r = ga.rows(), c = ga.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ga(i, j) += n.along == Along::All ? g[0] : n.along == Along::Columns ? g[i] : g[j];
      return;
    }
    case Primitive::MaxReduce: {
      Tensor& ga = grad_slot(n.a);
      for (std::size_t k = 0; k < n.argmax.size(); ++k) ga[n.argmax[k]] += g[k];
      return;
    }
    case Primitive::Softmax: {
      Tensor& ga = grad_slot(n.a);
      const Tensor& y = n.value;
      const std::size_t r = y.rows(), c = y.cols();
      auto run = [&](std::size_t start, std::size_t count, std::size_t stride) {
        double dot = 0.0;
        for (std::size_t k = 0; k < count; ++k) dot += g[start + k * stride] * y[start + k * stride];
        for (std::size_t k = 0; k < count; ++k) {
          const std::size_t idx = start + k * stride;
          ga[idx] += y[idx] * (g[idx] - dot);
        }
      };
      if (n.along == Along::All) {
        run(0, y.size(), 1);
      } else if (n.along == Along::Columns) {
        for (std::size_t i = 0; i < r; ++i) run(i * c, c, 1);
      } else {
        for (std::size_t j = 0; j < c; ++j) run(j, r, c);
      }
      return;
    }
    case Primitive::Concat: {
      std::size_t offset = 0;
      const std::size_t cols = g.cols();
      for (std::uint32_t p : n.parts) {
        const Tensor& v = nodes_[p].value;
        if (in_needs(p)) {
          Tensor& gp = grad_slot(p);
          if (n.along == Along::Columns) {
            for (std::size_t i = 0; i < v.rows(); ++i)
              for (std::size_t j = 0; j < v.cols(); ++j) gp(i, j) += g(i, offset + j);
          } else {
            for (std::size_t i = 0; i < v.size(); ++i) gp[i] += g[offset * cols + i];
          }
        }
        offset += n.along == Along::Columns ? v.cols() : v.rows();
      }
      return;
    }
    case Primitive::Slice: {
      Tensor& ga = grad_slot(n.a);
      if (n.along == Along::Rows) {
        double* dst = ga.ptr() + n.begin * ga.cols();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      } else {
        const std::size_t w = n.end - n.begin;
        for (std::size_t i = 0; i < ga.rows(); ++i)
          for (std::size_t j = 0; j < w; ++j) ga(i, n.begin + j) += g(i, j);
      }
      return;
    }
    case Primitive::L2Norm: {
      const Tensor& x = nodes_[n.a].value;
      Tensor& ga = grad_slot(n.a);
      const std::size_t r = x.rows(), c = x.cols();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t k = n.along == Along::All ? 0 : n.along == Along::Columns ? i : j;
          const double norm = n.value[k];
          if (norm > 0.0) ga(i, j) += g[k] * x(i, j) / norm;
        }
      }
      return;
    }
    case Primitive::Gather: {
      Tensor& ga = grad_slot(n.a);
      kernels::scatter_add_rows(g, *n.index, ga);
      return;
    }
    case Primitive::SegmentSum: {
      Tensor& ga = grad_slot(n.a);
      const auto& off = *n.index;
      const std::size_t c = ga.cols();
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        for (std::size_t r = off[s]; r < off[s + 1]; ++r) {
          for (std::size_t j = 0; j < c; ++j) ga(r, j) += g(s, j);
        }
      }
      return;
    }
    case Primitive::SegmentSoftmax: {
      Tensor& ga = grad_slot(n.a);
      const auto& off = *n.index;
      const Tensor& y = n.value;
      const std::size_t c = y.cols();
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        for (std::size_t j = 0; j < c; ++j) {
          double dot = 0.0;
          for (std::size_t r = off[s]; r < off[s + 1]; ++r) dot += g(r, j) * y(r, j);
          for (std::size_t r = off[s]; r < off[s + 1]; ++r) ga(r, j) += y(r, j) * (g(r, j) - dot);
        }
      }
      return;
    }
  }
}

const Tensor& Tape::grad(Var v) const {
  check_same_tape(v);
  if (grads_.size() < nodes_.size()) {
    grads_.resize(nodes_.size());
    has_grad_.resize(nodes_.size(), false);
  }
  if (!has_grad_[v.id()]) {
    grads_[v.id()] = Tensor::like(nodes_[v.id()].value, 0.0);
    has_grad_[v.id()] = true;
  }
  return grads_[v.id()];
}

}  // namespace gcbf::num
