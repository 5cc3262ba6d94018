#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mtpp/adam.hpp"
#include "mtpp/params.hpp"

using namespace mtpp::ad;

TEST_CASE("adam matches a straight-line reimplementation for two steps") {
  ParamStore ps;
  ps.add("w", Owner::shared, Tensor::scalar(1.0));
  Adam opt(0.1);

  // Reference trajectory computed with the textbook update, no loops.
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1;
  double w = 1.0, m = 0.0, v = 0.0;

  double g1 = 0.5;
  m = b1 * m + (1 - b1) * g1;
  v = b2 * v + (1 - b2) * g1 * g1;
  w -= lr * (m / (1 - b1)) / (std::sqrt(v / (1 - b2)) + eps);

  ps.at("w").grad[0] = g1;
  opt.step(ps);
  CHECK(ps.at("w").value[0] == Catch::Approx(w).epsilon(1e-15));

  double g2 = -0.3;
  m = b1 * m + (1 - b1) * g2;
  v = b2 * v + (1 - b2) * g2 * g2;
  w -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);

  ps.at("w").grad[0] = g2;
  opt.step(ps);
  CHECK(ps.at("w").value[0] == Catch::Approx(w).epsilon(1e-15));
}

TEST_CASE("frozen blocks are skipped and their optimizer state does not advance") {
  ParamStore ps;
  ps.add("a", Owner::time, Tensor::scalar(1.0));
  ps.add("b", Owner::mark, Tensor::scalar(1.0));
  Adam opt(0.05);

  ps.at("a").grad[0] = 1.0;
  ps.at("b").grad[0] = 1.0;
  ps.set_frozen(Owner::time, true);
  opt.step(ps);
  CHECK(ps.at("a").value[0] == 1.0);
  CHECK(ps.at("b").value[0] < 1.0);

  // Unfreeze: the first real step for "a" must use bias correction t=1,
  // which for Adam means a step of size ~lr regardless of gradient scale.
  ps.set_frozen(Owner::time, false);
  ps.at("a").grad[0] = 1e-3;
  ps.at("b").grad[0] = 0.0;
  opt.step(ps);
  CHECK(ps.at("a").value[0] == Catch::Approx(1.0 - 0.05).margin(1e-6));
}

TEST_CASE("plain gradient step subtracts lr times grad exactly") {
  ParamStore ps;
  ps.add("w", Owner::shared, Tensor::vec({1.0, -2.0}));
  ps.at("w").grad[0] = 0.25;
  ps.at("w").grad[1] = -4.0;
  sgd_step(ps, 0.5);
  CHECK(ps.at("w").value[0] == 1.0 - 0.5 * 0.25);
  CHECK(ps.at("w").value[1] == -2.0 + 0.5 * 4.0);
}

TEST_CASE("param_count sums block sizes with and without an owner filter") {
  ParamStore ps;
  ps.add("enc.W", Owner::shared, Tensor(4, 3));
  ps.add("dec.w", Owner::time, Tensor(5, 1));
  ps.add("head.W", Owner::mark, Tensor(2, 2));
  CHECK(ps.param_count() == 12 + 5 + 4);
  CHECK(ps.param_count(Owner::time) == 5);
  CHECK(ps.param_count(Owner::mark) == 4);
  CHECK(ps.param_count(Owner::shared) == 12);
}
