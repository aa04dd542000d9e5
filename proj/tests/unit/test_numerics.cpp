#include <omp.h>

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gcbf/error.hpp"
#include "gcbf/numerics/adam.hpp"
#include "gcbf/numerics/gradcheck.hpp"
#include "gcbf/numerics/kernels.hpp"
#include "gcbf/numerics/program.hpp"
#include "gcbf/numerics/rng.hpp"
#include "gcbf/numerics/tape.hpp"

using namespace gcbf;
using namespace gcbf::num;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

Index make_index(std::vector<std::size_t> v) { return std::make_shared<const std::vector<std::size_t>>(std::move(v)); }

// Central differences written out independently of gradient_check.
double fd_partial(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2 * h);
}

}  // namespace

TEST_CASE("square has value 9 and slope 6 at 3") {
  Tape t;
  Var x = t.input(Tensor::scalar(3.0));
  Var y = x * x;
  t.backward(y);
  CHECK(y.value().item() == 9.0);
  CHECK(t.grad(x).item() == 6.0);
}

TEST_CASE("softmax over a single element is constant") {
  Tape t;
  Var x = t.input(Tensor::matrix(1, 1, 0.7));
  Var s = t.softmax(x, Along::Columns);
  Var y = t.scale(t.exp(s), 3.0);
  t.backward(y);
  CHECK(s.value().item() == 1.0);
  CHECK(t.grad(x).item() == 0.0);
}

TEST_CASE("non-participating values get zero gradient") {
  Tape t;
  Var a = t.input(Tensor::matrix(2, 2, 1.0));
  Var b = t.input(Tensor::matrix(2, 2, 2.0));
  Var y = t.sum(a * a);
  t.backward(y);
  for (double g : t.grad(b).values()) CHECK(g == 0.0);
  for (double g : t.grad(a).values()) CHECK(g == 2.0);
}

TEST_CASE("errors: shape mismatch, non-finite, unknown primitive") {
  Tape t;
  Var a = t.input(Tensor::matrix(2, 3));
  Var b = t.input(Tensor::matrix(2, 3));
  CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
  Var c = t.input(Tensor::matrix(4, 5));
  CHECK_THROWS_AS(t.add(a, c), ShapeError);
  Var z = t.input(Tensor::matrix(1, 1, 0.0));
  CHECK_THROWS_AS(t.log(z), NonFiniteError);
  CHECK_THROWS_AS(primitive_from_name("conv2d"), UnknownPrimitiveError);
  CHECK_THROWS_AS(Tensor({2, 2, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST_CASE("every primitive name round-trips") {
  for (int p = 0; p <= static_cast<int>(Primitive::SegmentSoftmax); ++p) {
    const auto prim = static_cast<Primitive>(p);
    CHECK(primitive_from_name(primitive_name(prim)) == prim);
  }
}

TEST_CASE("softmax rows sum to one and ignore a constant shift") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_matrix(rng, 4, 7, 5.0);
    Tensor shifted = x;
    const double shift = rng.uniform(-100, 100);
    for (double& v : shifted.values()) v += shift;
    Tape t;
    const Tensor& s = t.softmax(t.constant(x), Along::Columns).value();
    const Tensor& s2 = t.softmax(t.constant(shifted), Along::Columns).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        acc += s(r, c);
        CHECK(std::abs(s(r, c) - s2(r, c)) < 1e-12);
      }
      CHECK(std::abs(acc - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("each primitive's backward matches central differences") {
  Rng rng(3);
  auto offsets = make_index({0, 2, 2, 5, 6});
  auto rows = make_index({3, 0, 0, 5, 2, 1, 3});
  const std::vector<std::pair<const char*, ScalarFn>> cases = {
      {"matmul", [](Tape& t, std::span<const Var> v) { return t.sum(t.matmul(v[0], v[1])); }},
      {"add-broadcast", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.add(v[0], t.slice(v[1], Along::Rows, 0, 1)))); }},
      {"sub", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.sub(v[0], t.slice(v[1], Along::Columns, 0, 1)))); }},
      {"mul", [](Tape& t, std::span<const Var> v) { return t.sum(t.mul(v[0], t.tanh(v[0]))); }},
      {"scale", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.scale(v[0], -1.7))); }},
      {"relu", [](Tape& t, std::span<const Var> v) { return t.sum(t.mul(t.relu(v[0]), v[0])); }},
      {"hinge", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.hinge(v[0]))); }},
      {"exp-log", [](Tape& t, std::span<const Var> v) { return t.sum(t.log(t.add(t.exp(v[0]), t.exp(v[0])))); }},
      {"sum-rows", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.sum(v[0], Along::Rows))); }},
      {"sum-cols", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.sum(v[0], Along::Columns))); }},
      {"max", [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.max(v[0], Along::Columns))); }},
      {"softmax", [](Tape& t, std::span<const Var> v) { return t.sum(t.mul(t.softmax(v[0], Along::Rows), v[0])); }},
      {"concat", [](Tape& t, std::span<const Var> v) {
         const std::array<Var, 2> parts{v[0], t.tanh(v[0])};
         return t.sum(t.mul(t.concat(parts, Along::Columns), t.concat(parts, Along::Columns)));
       }},
      {"l2norm", [](Tape& t, std::span<const Var> v) { return t.sum(t.l2norm(v[0], Along::Columns)); }},
      {"gather", [rows](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.gather_rows(v[1], rows))); }},
      {"segment-sum", [offsets](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(t.segment_sum(v[1], offsets))); }},
      {"segment-softmax", [offsets](Tape& t, std::span<const Var> v) {
         return t.sum(t.mul(t.segment_softmax(v[1], offsets), v[1]));
       }},
  };
  for (const auto& [name, fn] : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      const std::vector<Tensor> point = {random_matrix(rng, 6, 4), random_matrix(rng, 4, 6)};
      // v[1] must be 6 rows for the indexed cases
      std::vector<Tensor> p = point;
      if (std::string_view(name).starts_with("segment") || std::string_view(name) == "gather") {
        p[1] = random_matrix(rng, 6, 3);
      }
      if (std::string_view(name) == "add-broadcast") p[1] = random_matrix(rng, 2, 4);
      if (std::string_view(name) == "sub") p[1] = random_matrix(rng, 6, 2);
      const auto report = gradient_check(fn, p);
      INFO(name, " rel error ", report.max_rel_error);
      CHECK(report.passed);
      CHECK(report.checked > 0);
    }
  }
}

TEST_CASE("three-layer MLP gradient within 1e-5 of central differences") {
  Rng rng(17);
  for (int seed = 0; seed < 5; ++seed) {
    const Tensor w1 = random_matrix(rng, 5, 16, 0.5), b1 = random_matrix(rng, 1, 16, 0.1);
    const Tensor w2 = random_matrix(rng, 16, 16, 0.3), b2 = random_matrix(rng, 1, 16, 0.1);
    const Tensor w3 = random_matrix(rng, 16, 1, 0.3);
    const Tensor x = random_matrix(rng, 3, 5);
    auto forward = [&](Tape& t, Var xv) {
      Var h = t.relu(t.add(t.matmul(xv, t.constant(w1)), t.constant(b1)));
      h = t.relu(t.add(t.matmul(h, t.constant(w2)), t.constant(b2)));
      return t.sum(t.matmul(h, t.constant(w3)));
    };
    Tape tape;
    Var xv = tape.input(x);
    tape.backward(forward(tape, xv));
    const Tensor g = tape.grad(xv);
    auto f = [&](const Tensor& xx) {
      Tape t2;
      return forward(t2, t2.input(xx)).value().item();
    };
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double num = fd_partial(f, x, i, 1e-6);
      worst = std::max(worst, std::abs(num - g[i]) / std::max({std::abs(num), std::abs(g[i]), 1e-4}));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("gradient check is exact on an affine map") {
  Rng rng(5);
  const Tensor a = random_matrix(rng, 4, 1);
  ScalarFn f = [&](Tape& t, std::span<const Var> v) {
    return t.add(t.sum(t.matmul(v[0], t.constant(a))), t.constant(Tensor::scalar(2.5)));
  };
  GradCheckOptions opts;
  opts.step = 1e-3;
  const auto report = gradient_check(f, std::vector<Tensor>{random_matrix(rng, 3, 4)}, opts);
  CHECK(report.max_rel_error < 1e-10);
}

TEST_CASE("relu probed at its kink is skipped, not failed") {
  ScalarFn f = [](Tape& t, std::span<const Var> v) { return t.sum(t.relu(v[0])); };
  const auto report = gradient_check(f, std::vector<Tensor>{Tensor::matrix(1, 3, std::vector<double>{0.0, 1.0, -1.0})});
  CHECK(report.passed);
  CHECK(report.skipped == 1);
  CHECK(report.checked == 2);
}

TEST_CASE("program interpreter evaluates named primitives") {
  Program p;
  p.n_inputs = 1;
  p.body.push_back({.op = "elementwise-mul", .args = {0, 0}});
  p.body.push_back({.op = "sum-reduce", .args = {1}, .along = Along::All});
  p.outputs = {2};
  const auto r = evaluate_and_backprop(p, std::vector<Tensor>{Tensor::scalar(3.0)}, Tensor::matrix(1, 1, 1.0));
  CHECK(r.outputs[0].item() == 9.0);
  CHECK(r.gradients[0].item() == 6.0);

  Program bad = p;
  bad.body[0].op = "convolve";
  CHECK_THROWS_AS(evaluate_and_backprop(bad, std::vector<Tensor>{Tensor::scalar(3.0)}, Tensor::matrix(1, 1, 1.0)),
                  UnknownPrimitiveError);
}

TEST_CASE("parallel kernels agree with their serial references") {
  Rng rng(23);
  const int saved = omp_get_max_threads();
  for (auto [ta, tb] : {std::pair{kernels::Trans::No, kernels::Trans::No}, {kernels::Trans::No, kernels::Trans::Yes},
                        {kernels::Trans::Yes, kernels::Trans::No}, {kernels::Trans::Yes, kernels::Trans::Yes}}) {
    const std::size_t m = 300, k = 40, n = 33;
    const Tensor a = ta == kernels::Trans::No ? random_matrix(rng, m, k) : random_matrix(rng, k, m);
    const Tensor b = tb == kernels::Trans::No ? random_matrix(rng, k, n) : random_matrix(rng, n, k);
    const Tensor c0 = random_matrix(rng, m, n);
    Tensor c1 = c0, c2 = c0, c4 = c0;
    kernels::gemm_reference(ta, tb, a, b, c1, 0.5);
    omp_set_num_threads(1);
    kernels::gemm(ta, tb, a, b, c2, 0.5);
    omp_set_num_threads(4);
    kernels::gemm(ta, tb, a, b, c4, 0.5);
    CHECK(c2 == c4);
    for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) < 1e-11);
  }
  omp_set_num_threads(saved);

  std::vector<std::size_t> off{0};
  while (off.back() < 5000) off.push_back(std::min<std::size_t>(5000, off.back() + rng.below(9)));
  const Tensor x = random_matrix(rng, 5000, 20);
  Tensor s1 = Tensor::matrix(off.size() - 1, 20), s2 = s1;
  kernels::segment_sum(x, off, s1);
  kernels::segment_sum_reference(x, off, s2);
  CHECK(s1 == s2);
  Tensor m1 = Tensor::like(x), m2 = Tensor::like(x);
  kernels::segment_softmax(x, off, m1);
  kernels::segment_softmax_reference(x, off, m2);
  for (std::size_t i = 0; i < m1.size(); ++i) CHECK(std::abs(m1[i] - m2[i]) < 1e-15);

  std::vector<std::size_t> idx(6000);
  for (auto& v : idx) v = rng.below(700);
  const Tensor g = random_matrix(rng, 6000, 70);
  Tensor o1 = Tensor::matrix(700, 70), o2 = o1;
  kernels::scatter_add_rows(g, idx, o1);
  kernels::scatter_add_rows_reference(g, idx, o2);
  CHECK(o1 == o2);
}

TEST_CASE("adam: fixed point, first step, symmetry") {
  std::vector<Tensor> p{Tensor::matrix(1, 3, std::vector<double>{1.0, -2.0, 0.5})};
  auto st = AdamState::for_params(p, 1e-3);
  st.m[0][0] = 0.3;
  st.v[0][0] = 0.2;
  const std::vector<Tensor> zero{Tensor::matrix(1, 3)};
  const Tensor before = p[0];
  adam_update(p, zero, st);
  // m is nonzero for coordinate 0 so only coordinates 1 and 2 are an exact fixed point
  CHECK(p[0][1] == before[1]);
  CHECK(p[0][2] == before[2]);
  CHECK(st.m[0][0] < 0.3);
  CHECK(st.v[0][0] < 0.2);

  std::vector<Tensor> q{Tensor::matrix(1, 2, std::vector<double>{0.0, 5.0})};
  auto s2 = AdamState::for_params(q, 1e-3);
  adam_update(q, std::vector<Tensor>{Tensor::matrix(1, 2, 1.0)}, s2);
  // hand recurrence: m=0.1, v=0.001, mhat=1, vhat=1, step = lr*1/(1+1e-8)
  CHECK(std::abs(q[0][0] - (-1e-3 / (1 + 1e-8))) < 1e-15);
  CHECK(q[0][1] - 5.0 == doctest::Approx(q[0][0]).epsilon(1e-9));
  CHECK(s2.step == 1);

  auto s3 = AdamState::for_params(q, 1e-3);
  CHECK_THROWS_AS(adam_update(q, std::vector<Tensor>{Tensor::matrix(1, 3)}, s3), ShapeError);
  CHECK_THROWS_AS(adam_update(q, std::vector<Tensor>{Tensor::matrix(1, 2, std::nan(""))}, s3), NonFiniteError);
}

TEST_CASE("adam with all-zero moments and zero gradient leaves params unchanged") {
  std::vector<Tensor> p{Tensor::matrix(2, 2, 0.7)};
  auto st = AdamState::for_params(p, 1e-2);
  for (int i = 0; i < 3; ++i) adam_update(p, std::vector<Tensor>{Tensor::matrix(2, 2)}, st);
  for (double v : p[0].values()) CHECK(v == 0.7);
}

TEST_CASE("rng is reproducible and streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng base(42);
  Rng s1 = base.split(1), s2 = base.split(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += s1.next_u64() == s2.next_u64();
  CHECK(same == 0);
  Rng u(7);
  double mean = 0, var = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    mean += z / n;
    var += z * z / n;
  }
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}
