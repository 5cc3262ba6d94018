#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mtpp/gradcheck.hpp"
#include "mtpp/params.hpp"
#include "mtpp/rng.hpp"
#include "mtpp/tape.hpp"

using namespace mtpp;
using namespace mtpp::ad;

namespace {

Tensor tv(std::vector<double> xs) { return Tensor::vec(std::move(xs)); }

}  // namespace

TEST_CASE("unary op values match reference constants") {
  Tape t;
  // softplus(0) = ln 2
  CHECK(t.scalar(t.softplus(t.constant(0.0))) ==
        Catch::Approx(0.6931471805599453).epsilon(1e-14));
  // sigmoid(1) = 1 / (1 + e^-1)
  CHECK(t.scalar(t.sigmoid(t.constant(1.0))) ==
        Catch::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(t.scalar(t.tanh(t.constant(0.5))) ==
        Catch::Approx(std::tanh(0.5)).epsilon(1e-15));
  CHECK(t.scalar(t.relu(t.constant(-2.0))) == 0.0);
  CHECK(t.scalar(t.relu(t.constant(3.0))) == 3.0);
}

TEST_CASE("erf values match published table entries to 1e-12") {
  // Abramowitz & Stegun table 7.1 values.
  Tape t;
  CHECK(t.scalar(t.erf(t.constant(0.5))) ==
        Catch::Approx(0.5204998778130465).epsilon(1e-12));
  CHECK(t.scalar(t.erf(t.constant(1.0))) ==
        Catch::Approx(0.8427007929497149).epsilon(1e-12));
  CHECK(t.scalar(t.erf(t.constant(2.0))) ==
        Catch::Approx(0.9953222650189527).epsilon(1e-12));
  CHECK(t.scalar(t.erf(t.constant(-1.0))) ==
        Catch::Approx(-0.8427007929497149).epsilon(1e-12));
}

TEST_CASE("gelu is x times the standard normal CDF") {
  Tape t;
  // Phi(1) = 0.8413447460685429, Phi(-0.5) = 0.3085375387259869
  CHECK(t.scalar(t.gelu(t.constant(1.0))) ==
        Catch::Approx(0.8413447460685429).epsilon(1e-13));
  CHECK(t.scalar(t.gelu(t.constant(-0.5))) ==
        Catch::Approx(-0.5 * 0.3085375387259869).epsilon(1e-13));
  CHECK(t.scalar(t.gelu(t.constant(0.0))) == 0.0);
}

TEST_CASE("softplus stays finite and exact in the saturated tails") {
  Tape t;
  CHECK(t.scalar(t.softplus(t.constant(800.0))) == 800.0);
  CHECK(t.scalar(t.softplus(t.constant(-800.0))) == 0.0);
  CHECK(std::isfinite(t.scalar(t.sigmoid(t.constant(-800.0)))));
}

TEST_CASE("softmax normalizes and matches a hand case") {
  Tape t;
  Var y = t.softmax(t.leaf(tv({0.0, std::log(2.0)})));
  CHECK(t.val(y)[0] == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(t.val(y)[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-14));

  // Max-shift keeps huge logits finite.
  Var z = t.softmax(t.leaf(tv({1000.0, 1000.0, 999.0})));
  double s = t.val(z)[0] + t.val(z)[1] + t.val(z)[2];
  CHECK(s == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("logsumexp is shift invariant and exact on a hand case") {
  Tape t;
  // lse(ln1, ln2, ln3) = ln 6
  Var a = t.logsumexp(t.leaf(tv({std::log(1.0), std::log(2.0), std::log(3.0)})));
  CHECK(t.scalar(a) == Catch::Approx(std::log(6.0)).epsilon(1e-14));

  Var b = t.logsumexp(t.leaf(tv({1.0, 2.0})));
  Var c = t.logsumexp(t.leaf(tv({1.0 + 500.0, 2.0 + 500.0})));
  CHECK(t.scalar(c) - t.scalar(b) == Catch::Approx(500.0).epsilon(1e-12));
}

TEST_CASE("matvec and affine match hand arithmetic") {
  Tape t;
  Tensor W(2, 3);
  W(0, 0) = 1; W(0, 1) = 2; W(0, 2) = 3;
  W(1, 0) = -1; W(1, 1) = 0; W(1, 2) = 4;
  Var y = t.matvec(t.leaf(W), t.leaf(tv({1.0, -2.0, 0.5})));
  CHECK(t.val(y)[0] == Catch::Approx(1 - 4 + 1.5));
  CHECK(t.val(y)[1] == Catch::Approx(-1 + 2.0));

  Var z = t.affine(t.leaf(W), t.leaf(tv({1.0, -2.0, 0.5})), t.leaf(tv({10.0, 20.0})));
  CHECK(t.val(z)[0] == Catch::Approx(-1.5 + 10.0));
  CHECK(t.val(z)[1] == Catch::Approx(1.0 + 20.0));
}

TEST_CASE("concat, slice and row shuffle values where expected") {
  Tape t;
  Var c = t.concat({t.leaf(tv({1.0, 2.0})), t.constant(7.0), t.leaf(tv({3.0}))});
  REQUIRE(t.val(c).rows == 4);
  CHECK(t.val(c)[2] == 7.0);

  Var s = t.slice(c, 1, 2);
  CHECK(t.val(s)[0] == 2.0);
  CHECK(t.val(s)[1] == 7.0);

  Tensor E(3, 2);
  E(0, 0) = 1; E(0, 1) = 2; E(1, 0) = 3; E(1, 1) = 4; E(2, 0) = 5; E(2, 1) = 6;
  Var r = t.row(t.leaf(E), 1);
  CHECK(t.val(r)[0] == 3.0);
  CHECK(t.val(r)[1] == 4.0);
}

TEST_CASE("shape violations throw") {
  Tape t;
  Var a = t.leaf(tv({1.0, 2.0}));
  Var b = t.leaf(tv({1.0, 2.0, 3.0}));
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.dot(a, b), ShapeError);
  Tensor W(2, 2);
  CHECK_THROWS_AS(t.matvec(t.leaf(W), b), ShapeError);
  CHECK_THROWS_AS(t.slice(a, 1, 5), ShapeError);
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("backward on a linear map reproduces hand gradients exactly") {
  // L = sum(W x + b): dL/dW_ij = x_j, dL/dx_j = sum_i W_ij, dL/db_i = 1.
  ParamStore ps;
  Tensor W(2, 2);
  W(0, 0) = 1.0; W(0, 1) = -2.0; W(1, 0) = 0.5; W(1, 1) = 3.0;
  ps.add("W", Owner::shared, W);
  ps.add("x", Owner::shared, tv({0.25, -1.5}));
  ps.add("b", Owner::shared, tv({0.0, 0.0}));

  Tape t;
  Var y = t.affine(t.param(ps.at("W")), t.param(ps.at("x")), t.param(ps.at("b")));
  t.backward(t.sum(y));

  CHECK(ps.at("W").grad(0, 0) == 0.25);
  CHECK(ps.at("W").grad(0, 1) == -1.5);
  CHECK(ps.at("W").grad(1, 0) == 0.25);
  CHECK(ps.at("W").grad(1, 1) == -1.5);
  CHECK(ps.at("x").grad[0] == 1.5);
  CHECK(ps.at("x").grad[1] == 1.0);
  CHECK(ps.at("b").grad[0] == 1.0);
  CHECK(ps.at("b").grad[1] == 1.0);
}

namespace {

// Composite graph exercising every differentiable primitive at least once.
// Returns a scalar whose gradient is probed by central differences.
double composite_loss(ParamStore& ps) {
  Tape t;
  Var W = t.param(ps.at("W"));
  Var x = t.param(ps.at("x"));
  Var b = t.param(ps.at("b"));
  Var E = t.param(ps.at("E"));

  Var h = t.affine(W, x, b);                    // 3
  Var s1 = t.sigmoid(h);
  Var s2 = t.tanh(t.scale(h, 0.5));
  Var s3 = t.softplus(t.shift(h, -0.25));
  Var s4 = t.gelu(h);
  Var mixed = t.add(t.mul(s1, s2), t.div(s3, t.shift(t.mul(s4, s4), 1.0)));
  Var e = t.row(E, 1);                          // 3
  Var joined = t.concat({mixed, e});            // 6
  Var sm = t.softmax(joined);
  Var picked = t.slice(sm, 1, 3);
  Var lse = t.logsumexp(joined);
  Var quad = t.dot(picked, picked);
  Var extras = t.add(t.sum(t.erf(t.scale(mixed, 0.3))),
                     t.sum(t.sqrt(t.shift(t.relu(h), 0.1))));
  Var cl = t.sum(t.clamp(h, -0.5, 0.6));
  Var loss = t.add(t.add(quad, t.mul(lse, t.constant(0.25))),
                   t.add(t.scale(extras, 0.1), t.log(t.shift(t.exp(cl), 1.0))));
  t.backward(loss);
  return t.scalar(loss);
}

}  // namespace

TEST_CASE("central differences confirm gradients of a graph using every op") {
  Rng rng(1234);
  ParamStore ps;
  ps.add("W", Owner::shared, uniform_init(rng, 3, 2, 2));
  ps.add("x", Owner::shared, uniform_init(rng, 2, 1, 2));
  ps.add("b", Owner::shared, uniform_init(rng, 3, 1, 2));
  ps.add("E", Owner::shared, uniform_init(rng, 2, 3, 3));

  auto rep = grad_check(ps, [&] { return composite_loss(ps); }, 1e-5, 16);
  INFO("worst block " << rep.worst_block << "[" << rep.worst_index << "] analytic "
       << rep.analytic << " numeric " << rep.numeric);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("scalar broadcast in binary ops is differentiated correctly") {
  Rng rng(77);
  ParamStore ps;
  ps.add("v", Owner::shared, uniform_init(rng, 4, 1, 1));
  ps.add("s", Owner::shared, Tensor::scalar(0.35));

  auto loss = [&] {
    Tape t;
    Var v = t.param(ps.at("v"));
    Var s = t.param(ps.at("s"));
    Var a = t.mul(s, v);          // scalar * vector
    Var b = t.add(v, s);          // vector + scalar
    Var c = t.div(s, t.shift(t.mul(v, v), 1.0));  // scalar / vector
    Var d = t.sub(t.constant(1.0), t.sub(s, t.constant(2.0)));
    Var loss = t.add(t.add(t.sum(a), t.sum(b)), t.add(t.sum(c), d));
    t.backward(loss);
    return t.scalar(loss);
  };
  auto rep = grad_check(ps, loss, 1e-6, 8);
  CHECK(rep.max_rel_err < 1e-8);
}

TEST_CASE("clamp passes gradient inside the interval and blocks it outside") {
  ParamStore ps;
  ps.add("x", Owner::shared, tv({-2.0, 0.3, 2.0}));
  Tape t;
  Var x = t.param(ps.at("x"));
  t.backward(t.sum(t.clamp(x, -1.0, 1.0)));
  CHECK(ps.at("x").grad[0] == 0.0);
  CHECK(ps.at("x").grad[1] == 1.0);
  CHECK(ps.at("x").grad[2] == 0.0);
}

TEST_CASE("two backward passes on one tape are independent and additive") {
  ParamStore ps;
  ps.add("w", Owner::shared, tv({0.7, -0.2}));

  Tape t;
  Var w = t.param(ps.at("w"));
  Var l1 = t.dot(w, w);                        // grad 2w
  Var l2 = t.sum(t.mul(w, t.leaf(tv({3.0, -1.0}))));  // grad (3, -1)

  ps.zero_grad();
  t.backward(l1);
  Tensor g1 = ps.at("w").grad;
  CHECK(g1[0] == Catch::Approx(1.4));
  CHECK(g1[1] == Catch::Approx(-0.4));

  ps.zero_grad();
  t.backward(l2);
  Tensor g2 = ps.at("w").grad;
  CHECK(g2[0] == 3.0);
  CHECK(g2[1] == -1.0);

  // Combined root equals the sum of the split passes.
  ps.zero_grad();
  t.backward(t.add(l1, l2));
  CHECK(ps.at("w").grad[0] == Catch::Approx(g1[0] + g2[0]).epsilon(1e-15));
  CHECK(ps.at("w").grad[1] == Catch::Approx(g1[1] + g2[1]).epsilon(1e-15));
}

TEST_CASE("backward seed scales the whole gradient") {
  ParamStore ps;
  ps.add("w", Owner::shared, tv({0.5}));
  Tape t;
  Var w = t.param(ps.at("w"));
  Var l = t.dot(w, w);
  ps.zero_grad();
  t.backward(l, 2.5);
  CHECK(ps.at("w").grad[0] == Catch::Approx(2.5 * 1.0).epsilon(1e-15));
}

TEST_CASE("non-finite gradients are reported with the block name") {
  ParamStore ps;
  ps.add("bad", Owner::shared, tv({0.0}));
  Tape t;
  Var w = t.param(ps.at("bad"));
  ps.zero_grad();
  t.backward(t.log(w));  // d log(0) = inf
  CHECK_THROWS_WITH(ps.check_grads_finite(),
                    Catch::Matchers::ContainsSubstring("bad"));
}
