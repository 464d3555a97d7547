#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "macdmp/errors.hpp"
#include "macdmp/optim.hpp"
#include "macdmp/rng.hpp"
#include "macdmp/tensor.hpp"

using namespace macdmp;
using namespace macdmp::tensor;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = scale * standard_normal(rng);
  return t;
}

// Central differences of f over every entry of `x`, compared with the tape.
void check_input_grad(const std::function<Var(Tape&, Var)>& f, Tensor x, double tol = 1e-6) {
  Tape tape;
  Var in = tape.input(x, true);
  tape.backward(f(tape, in));
  const Tensor g = tape.grad(in);
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    Tape tp, tm;
    const double fp = f(tp, tp.input(xp, false)).value()[0];
    const double fm = f(tm, tm.input(xm, false)).value()[0];
    const double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(fd - g[i]) <= tol * std::max(1.0, std::abs(fd)));
  }
}

}  // namespace

TEST_CASE("matmul basics") {
  Rng rng = make_rng(1, 0);
  Tape tape;
  Tensor eye(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1;
  const Tensor A = random_tensor(3, 5, rng);
  CHECK(matmul(tape.constant(eye), tape.constant(A)).value() == A);

  const Tensor X = random_tensor(3, 4, rng), W = random_tensor(4, 2, rng);
  const Tensor Y = matmul(tape.constant(X), tape.constant(W)).value();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int p = 0; p < 4; ++p) s += X(i, p) * W(p, j);
      CHECK(std::abs(Y(i, j) - s) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(matmul(tape.constant(X), tape.constant(X)), DomainError);
  try {
    add(tape.constant(X), tape.constant(W));
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3,4]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("relu of negatives is zero and x*x has slope 2x") {
  Tape tape;
  Tensor neg(1, 3, std::vector<double>{-1, -2, -0.5});
  for (double v : relu(tape.constant(neg)).value().values()) CHECK(v == 0.0);

  Tape t2;
  Var x = t2.input(Tensor(1, 1, 3.0), true);
  t2.backward(sum(mul(x, x)));
  CHECK(t2.grad(x)[0] == 6.0);
}

TEST_CASE("backward needs a scalar root") {
  Tape tape;
  Var x = tape.input(Tensor(2, 2, 1.0), true);
  CHECK_THROWS_AS(tape.backward(x), DomainError);
}

TEST_CASE("constant graph gives zero parameter gradients") {
  Parameter p("w", Tensor(2, 2, 0.5));
  Tape tape;
  Var w = tape.param(p);
  tape.backward(scale(sum(w), 0.0));
  for (double g : p.grad.values()) CHECK(g == 0.0);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng = make_rng(3, 0);
  const Tensor W = random_tensor(4, 3, rng), b = random_tensor(1, 3, rng), other = random_tensor(5, 4, rng);
  const Tensor x = random_tensor(5, 4, rng);
  auto C = [](Tape& t, const Tensor& v) { return t.constant(v); };
  check_input_grad([&](Tape& t, Var v) { return sum_sq(affine(v, C(t, W), C(t, b))); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum(mul(v, C(t, other))); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum_sq(sub(add(v, C(t, other)), scale(v, 0.3))); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum_sq(silu(v)); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum_sq(tanh(v)); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum(mul(layer_norm(v), C(t, other))); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum_sq(concat({v, slice(v, 1, 3)})); }, x);
  check_input_grad([&](Tape& t, Var v) { return mean(mul(v, v)); }, x);
  check_input_grad([&](Tape& t, Var v) { return mse(v, C(t, other)); }, x);
  check_input_grad([&](Tape& t, Var v) { return sum_sq(matmul(v, C(t, W))); }, x);
  // relu away from its kink
  Tensor xr = x;
  for (auto& v : xr.values()) v += v > 0 ? 0.1 : -0.1;
  check_input_grad([&](Tape& t, Var v) { return sum_sq(relu(v)); }, xr);
}

TEST_CASE("parameter gradients of a small net match finite differences") {
  Rng rng = make_rng(4, 0);
  Parameter w("w", random_tensor(3, 4, rng)), b("b", random_tensor(1, 4, rng));
  const Tensor x = random_tensor(6, 3, rng);
  auto loss = [&](Tape& t) { return sum_sq(silu(affine(t.constant(x), t.param(w), t.param(b)))); };
  {
    Tape t;
    t.backward(loss(t));
  }
  const double h = 1e-5;
  for (Parameter* p : {&w, &b}) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double v0 = p->value[i];
      p->value[i] = v0 + h;
      Tape tp(false);
      const double fp = loss(tp).value()[0];
      p->value[i] = v0 - h;
      Tape tm(false);
      const double fm = loss(tm).value()[0];
      p->value[i] = v0;
      const double fd = (fp - fm) / (2 * h);
      CHECK(std::abs(fd - p->grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("adam first step and zero gradient") {
  Parameter p("p", Tensor(1, 1, 2.0)), q("q", Tensor(1, 1, -1.0));
  Adam opt({&p, &q}, {.lr = 0.01});
  p.grad[0] = 0.37;
  q.grad[0] = 0.0;
  opt.step();
  CHECK(p.value[0] == doctest::Approx(2.0 - 0.01).epsilon(1e-7));
  CHECK(q.value[0] == -1.0);

  Parameter r("r", Tensor(1, 1, 0.0));
  Adam o2({&r}, {.lr = 0.01});
  r.grad[0] = -5.0;
  o2.step();
  CHECK(r.value[0] == doctest::Approx(0.01).epsilon(1e-7));
}

TEST_CASE("checkpoint round trip") {
  Rng rng = make_rng(5, 0);
  Parameter a("layer.w", random_tensor(3, 2, rng)), b("layer.b", random_tensor(1, 2, rng));
  const auto path = std::filesystem::temp_directory_path() / "macdmp_params.ckpt";
  save_checkpoint(path, {&a, &b}, "{\"x\":1}");
  const auto ck = load_checkpoint(path);
  CHECK(ck.meta == "{\"x\":1}");
  Parameter a2("layer.w", Tensor(3, 2)), b2("layer.b", Tensor(1, 2));
  assign_parameters(ck, {&a2, &b2});
  CHECK(a2.value == a.value);
  CHECK(b2.value == b.value);
  Parameter wrong("layer.w", Tensor(2, 2));
  CHECK_THROWS_AS(assign_parameters(ck, {&wrong}), SchemaError);
  Parameter missing("other", Tensor(1, 1));
  CHECK_THROWS_AS(assign_parameters(ck, {&missing}), SchemaError);
}
