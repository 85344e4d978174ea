#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cosdpo/autodiff.hpp"
#include "cosdpo/error.hpp"
#include "helpers.hpp"

using namespace cosdpo;
using cosdpo::testing::finite_difference;
using cosdpo::testing::grad_close;

namespace {

// Checks d(closure)/dx against central differences at x.
void check_gradient(const std::function<Var(Tape&, Var)>& closure, const std::vector<double>& x) {
  Tape tape;
  Var v = tape.variable(x);
  Var out = closure(tape, v);
  tape.backward(out);
  const auto analytic = tape.grad(v);
  const auto numeric = finite_difference(
      [&](std::span<const double> p) { return cosdpo::testing::closure_value(closure, p); }, x);
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_TRUE(grad_close(analytic[i], numeric[i]))
        << "coordinate " << i << ": " << analytic[i] << " vs " << numeric[i];
}

}  // namespace

TEST(Tape, ConstantsHaveNoGradient) {
  Tape tape;
  Var c = tape.constant({1.0, 2.0});
  Var s = dot(tape, c, std::vector<double>{1.0, 1.0});
  EXPECT_FALSE(tape.needs_grad(s));
  tape.backward(s);
  EXPECT_DOUBLE_EQ(tape.scalar(s), 3.0);
}

TEST(Tape, NonFiniteValueNamesPrimitive) {
  Tape tape;
  Var x = tape.variable({1e308, 1e308});
  try {
    scale(tape, x, 10.0);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.primitive(), "scale");
  }
}

TEST(Tape, BackwardRequiresScalar) {
  Tape tape;
  Var x = tape.variable({1.0, 2.0});
  EXPECT_THROW(tape.backward(x), DomainError);
}

TEST(Tape, FanOutAccumulates) {
  Tape tape;
  Var x = tape.variable({3.0});
  Var y = add(tape, x, x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 2.0);
}

TEST(Primitives, LogSoftmaxIsStableForLargeInputs) {
  Tape tape;
  Var x = tape.constant({1000.0, 0.0});
  const auto& v = tape.value(log_softmax(tape, x));
  EXPECT_NEAR(v[0], 0.0, 1e-12);
  EXPECT_NEAR(v[1], -1000.0, 1e-9);
}

TEST(Primitives, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto x = cosdpo::testing::random_vector(rng, 5);
  const auto w = cosdpo::testing::random_vector(rng, 5);
  check_gradient([&](Tape& t, Var v) { return dot(t, log_softmax(t, v), w); }, x);
  check_gradient(
      [&](Tape& t, Var v) { return dot(t, axpby(t, 0.3, v, -1.7, scale(t, v, 2.0)), w); }, x);
  check_gradient([&](Tape& t, Var v) { return dot(t, sub(t, v, t.constant(w)), w); }, x);
  check_gradient([&](Tape& t, Var v) { return cosine_similarity(t, v, w); }, x);
  check_gradient(
      [&](Tape& t, Var v) {
        Var a = dot(t, v, w);
        Var b = dot(t, log_softmax(t, v), w);
        const Var parts[2] = {a, b};
        const double c[2] = {0.25, -2.0};
        Var st = stack(t, parts);
        return add(t, weighted_sum(t, parts, c), dot(t, st, std::vector<double>{1.0, 3.0}));
      },
      x);
}

TEST(Primitives, CosineOfZeroVectorIsZeroWithZeroGradient) {
  Tape tape;
  Var x = tape.variable({0.0, 0.0});
  Var c = cosine_similarity(tape, x, std::vector<double>{1.0, 0.0});
  EXPECT_DOUBLE_EQ(tape.scalar(c), 0.0);
  tape.backward(c);
  for (double g : tape.grad(x)) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Primitives, LengthMismatchThrows) {
  Tape tape;
  Var x = tape.variable({1.0, 2.0});
  Var y = tape.variable({1.0});
  EXPECT_THROW(add(tape, x, y), DomainError);
  EXPECT_THROW(dot(tape, x, std::vector<double>{1.0}), DomainError);
}
