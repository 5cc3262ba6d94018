#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "mtpp/decoders.hpp"
#include "mtpp/model_spec.hpp"

using namespace mtpp;
using namespace mtpp::models;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.num_marks = 2;
  s.dims.d_t = 2;
  s.dims.d_k = 2;
  s.dims.d_h = 3;
  s.dims.d_1 = 4;
  s.dims.mixtures = 3;
  s.dims.channels = 2;
  return s;
}

// composite Simpson on a plain function, independent of the quadrature module
double simpson(const std::function<double(double)>& f, double a, double b,
               int n) {
  if (n % 2 == 1) ++n;
  double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

double softplus_d(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double gelu_d(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

ad::Tensor randvec(Rng& rng, int n) {
  ad::Tensor t(n, 1);
  for (auto& x : t.v) x = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// rmtpp
// ---------------------------------------------------------------------------

TEST_CASE("rmtpp unit intensity and compensator at pinned parameters") {
  ModelSpec spec = small_spec();
  Rng rng(2);
  ad::ParamStore ps;
  RmtppTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);
  ps.at("dec.w_t").value.fill(1.0);
  ps.at("dec.w_h").value.fill(0.0);
  ps.at("dec.b").value.fill(0.0);

  ad::Tape t;
  auto b = dec.bind(t, ps);
  ad::Var h = t.leaf(ad::Tensor::zeros(3, 1));

  CHECK(std::exp(t.scalar(dec.log_intensity(t, b, h, 0.0, 0.0))) ==
        Catch::Approx(1.0).epsilon(1e-15));
  quad::QuadSpec qs;
  ad::Var lam = dec.compensator(t, b, h, 0.0, 0.0, std::log(2.0), qs, 0);
  CHECK(t.scalar(lam) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rmtpp closed compensator matches numeric integration") {
  ModelSpec spec = small_spec();
  Rng rng(4);
  ad::ParamStore ps;
  RmtppTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);

  ad::Tensor hv = randvec(rng, 3);
  double w = ps.at("dec.w_t").value[0];
  double c = ps.at("dec.b").value[0];
  for (int i = 0; i < 3; ++i) c += ps.at("dec.w_h").value[i] * hv[i];

  ad::Tape t;
  auto b = dec.bind(t, ps);
  ad::Var h = t.leaf(hv);
  quad::QuadSpec qs;
  double got = t.scalar(dec.compensator(t, b, h, 0.3, 0.3, 1.7, qs, 0));
  double want = simpson(
      [&](double s) { return std::exp(w * (s - 0.3) + c); }, 0.3, 1.7, 20000);
  CHECK(got == Catch::Approx(want).epsilon(1e-9));

  // sub-interval starting after the interval's base time
  double got2 = t.scalar(dec.compensator(t, b, h, 0.3, 0.9, 1.7, qs, 0));
  double want2 = simpson(
      [&](double s) { return std::exp(w * (s - 0.3) + c); }, 0.9, 1.7, 20000);
  CHECK(got2 == Catch::Approx(want2).epsilon(1e-9));
}

TEST_CASE("rmtpp near-zero slope uses the linear limit") {
  ModelSpec spec = small_spec();
  Rng rng(6);
  ad::ParamStore ps;
  RmtppTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);
  ps.at("dec.w_t").value.fill(1e-12);

  ad::Tensor hv = randvec(rng, 3);
  double c = ps.at("dec.b").value[0];
  for (int i = 0; i < 3; ++i) c += ps.at("dec.w_h").value[i] * hv[i];

  ad::Tape t;
  auto b = dec.bind(t, ps);
  quad::QuadSpec qs;
  double got = t.scalar(dec.compensator(t, b, t.leaf(hv), 0.0, 0.0, 2.0, qs, 0));
  double want =
      simpson([&](double s) { return std::exp(1e-12 * s + c); }, 0.0, 2.0, 20000);
  CHECK(got == Catch::Approx(want).epsilon(1e-6));
}

TEST_CASE("rmtpp exponent clamp saturates and is counted") {
  ModelSpec spec = small_spec();
  Rng rng(8);
  ad::ParamStore ps;
  RmtppTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);
  ps.at("dec.b").value.fill(40.0);
  ps.at("dec.w_h").value.fill(0.0);

  ad::Tape t;
  auto b = dec.bind(t, ps);
  ad::Var h = t.leaf(ad::Tensor::zeros(3, 1));
  auto before = dec.clamp_events();
  double li = t.scalar(dec.log_intensity(t, b, h, 0.0, 0.01));
  CHECK(li <= 30.0 + 1e-12);
  CHECK(dec.clamp_events() > before);
}

// ---------------------------------------------------------------------------
// lnm
// ---------------------------------------------------------------------------

TEST_CASE("single standard log-normal component has known density and cdf") {
  ModelSpec spec = small_spec();
  spec.dims.mixtures = 1;
  Rng rng(3);
  ad::ParamStore ps;
  LnmTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);
  for (const char* n :
       {"dec.W_mu", "dec.b_mu", "dec.W_s", "dec.b_s", "dec.W_p", "dec.b_p"}) {
    ps.at(n).value.fill(0.0);
  }

  ad::Tape t;
  auto b = dec.bind(t, ps);
  ad::Var h = t.leaf(randvec(rng, 3));
  quad::QuadSpec qs;

  double f1 = std::exp(t.scalar(dec.log_density(t, b, h, 0.0, 1.0, qs, 0)));
  CHECK(f1 == Catch::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
  double s1 = std::exp(t.scalar(dec.log_survival(t, b, h, 0.0, 1.0, qs, 0)));
  CHECK(s1 == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("lnm cdf agrees with integrating the density") {
  ModelSpec spec = small_spec();
  Rng rng(10);
  ad::ParamStore ps;
  LnmTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);

  ad::Tensor hv = randvec(rng, 3);
  quad::QuadSpec qs;
  // integrate in y = log tau so wide mixture components stay resolved
  auto mass = [&](double y) {
    double tau = std::exp(y);
    ad::Tape t;
    auto b = dec.bind(t, ps);
    double f =
        std::exp(t.scalar(dec.log_density(t, b, t.leaf(hv), 0.0, tau, qs, 0)));
    return f * tau;
  };

  ad::Tape t;
  auto b = dec.bind(t, ps);
  double cdf = 1.0 - std::exp(t.scalar(dec.log_survival(t, b, t.leaf(hv), 0.0, 2.0, qs, 0)));
  double integral = simpson(mass, std::log(1e-12), std::log(2.0), 4000);
  CHECK(cdf == Catch::Approx(integral).margin(1e-6));
}

TEST_CASE("lnm compensator telescopes over adjacent intervals") {
  ModelSpec spec = small_spec();
  Rng rng(12);
  ad::ParamStore ps;
  LnmTime dec;
  dec.init(ps, "dec", ad::Owner::time, spec, rng);

  ad::Tape t;
  auto b = dec.bind(t, ps);
  ad::Var h = t.leaf(randvec(rng, 3));
  quad::QuadSpec qs;
  double ab = t.scalar(dec.compensator(t, b, h, 0.1, 0.2, 0.9, qs, 0));
  double bc = t.scalar(dec.compensator(t, b, h, 0.1, 0.9, 1.8, qs, 0));
  double ac = t.scalar(dec.compensator(t, b, h, 0.1, 0.2, 1.8, qs, 0));
  CHECK(ab + bc == Catch::Approx(ac).margin(1e-12));
  CHECK(ab >= 0.0);
  CHECK(bc >= 0.0);
}

// ---------------------------------------------------------------------------
// thp
// ---------------------------------------------------------------------------

TEST_CASE("thp intensity at the interval start with zero projection") {
  ModelSpec spec = small_spec();
  Rng rng(5);
  ad::ParamStore ps;
  ThpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);
  ps.at("dec.W").value.fill(0.0);
  ps.at("dec.b").value.fill(0.0);

  ad::Tape t;
  auto b = core.bind(t, ps);
  ad::Var h = t.leaf(randvec(rng, 3));
  ad::Var v = core.intensity_vec(t, b, h, 1.0, 1.0);
  const ad::Tensor& val = t.val(v);
  REQUIRE(val.rows == 2);
  for (double x : val.v) CHECK(x == Catch::Approx(std::log(2.0)).epsilon(1e-14));

  GroundVecTime ground(&core);
  double li = t.scalar(ground.log_intensity(t, b, h, 1.0, 1.0));
  CHECK(li == Catch::Approx(std::log(2.0 * std::log(2.0))).epsilon(1e-13));
}

TEST_CASE("thp stays finite when the interval starts at zero") {
  ModelSpec spec = small_spec();
  Rng rng(7);
  ad::ParamStore ps;
  ThpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);

  ad::Tape t;
  auto b = core.bind(t, ps);
  ad::Var v = core.intensity_vec(t, b, t.leaf(randvec(rng, 3)), 0.0, 0.002);
  for (double x : t.val(v).v) {
    CHECK(std::isfinite(x));
    CHECK(x > 0.0);
  }
}

TEST_CASE("thp intensity is nondecreasing in t for positive slopes") {
  ModelSpec spec = small_spec();
  Rng rng(9);
  ad::ParamStore ps;
  ThpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);
  ps.at("dec.wt_raw").value.fill(0.5);

  ad::Tape t;
  auto b = core.bind(t, ps);
  ad::Var h = t.leaf(randvec(rng, 3));
  double prev = -1.0;
  for (double time : {1.0, 1.5, 2.5, 4.0}) {
    double tot = t.scalar(t.sum(core.intensity_vec(t, b, h, 1.0, time)));
    CHECK(tot >= prev);
    prev = tot;
  }
}

TEST_CASE("thp quadrature compensator matches a dense oracle") {
  ModelSpec spec = small_spec();
  Rng rng(14);
  ad::ParamStore ps;
  ThpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);

  ad::Tensor hv = randvec(rng, 3);
  double wt0 = softplus_d(ps.at("dec.wt_raw").value[0]);
  double wt1 = softplus_d(ps.at("dec.wt_raw").value[1]);
  const ad::Tensor& W = ps.at("dec.W").value;
  const ad::Tensor& bias = ps.at("dec.b").value;
  auto plain = [&](double s) {
    double u = (s - 0.4) / 0.4;
    double tot = 0.0;
    for (int cch = 0; cch < 2; ++cch) {
      double lin = (cch == 0 ? wt0 : wt1) * u + bias[cch];
      for (int j = 0; j < 3; ++j) lin += W(cch, j) * hv[j];
      tot += softplus_d(lin);
    }
    return tot;
  };

  ad::Tape t;
  auto b = core.bind(t, ps);
  quad::QuadSpec qs;  // gauss-legendre, 32 nodes
  double got = t.scalar(core.sum_compensator(t, b, t.leaf(hv), 0.4, 0.4, 2.0, qs, 0));
  double want = simpson(plain, 0.4, 2.0, 20000);
  CHECK(got == Catch::Approx(want).epsilon(1e-7));
}

// ---------------------------------------------------------------------------
// sahp
// ---------------------------------------------------------------------------

TEST_CASE("sahp intensity matches a plain-double replay") {
  ModelSpec spec = small_spec();
  Rng rng(16);
  ad::ParamStore ps;
  SahpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);

  ad::Tensor hv = randvec(rng, 3);
  auto channel = [&](int cch, double tau) {
    double mu = 0.0, eta = 0.0, gam = 0.0;
    for (int j = 0; j < 3; ++j) {
      mu += ps.at("dec.W_mu").value(cch, j) * hv[j];
      eta += ps.at("dec.W_eta").value(cch, j) * hv[j];
      gam += ps.at("dec.W_gamma").value(cch, j) * hv[j];
    }
    mu = gelu_d(mu);
    eta = softplus_d(eta);
    gam = gelu_d(gam);
    return softplus_d(mu - (eta - mu) * std::exp(-gam * tau));
  };

  ad::Tape t;
  auto b = core.bind(t, ps);
  ad::Var h = t.leaf(hv);
  for (double tau : {0.0, 0.3, 2.0}) {
    const ad::Tensor& v = t.val(core.intensity_vec(t, b, h, 1.0, 1.0 + tau));
    for (int cch = 0; cch < 2; ++cch) {
      CHECK(v[cch] == Catch::Approx(channel(cch, tau)).epsilon(1e-12));
      CHECK(v[cch] > 0.0);
    }
  }
}

TEST_CASE("sahp decay vanishes for large gaps when gamma is positive") {
  ModelSpec spec = small_spec();
  Rng rng(18);
  ad::ParamStore ps;
  SahpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);
  ps.at("dec.W_gamma").value.fill(1.0);

  ad::Tensor hv(3, 1);
  hv.fill(0.5);
  auto limit = [&](int cch) {
    double mu = 0.0;
    for (int j = 0; j < 3; ++j) mu += ps.at("dec.W_mu").value(cch, j) * hv[j];
    return softplus_d(gelu_d(mu));
  };

  ad::Tape t;
  auto b = core.bind(t, ps);
  const ad::Tensor& v = t.val(core.intensity_vec(t, b, t.leaf(hv), 0.0, 60.0));
  for (int cch = 0; cch < 2; ++cch) {
    CHECK(v[cch] == Catch::Approx(limit(cch)).epsilon(1e-9));
  }
}

TEST_CASE("sahp quadrature compensator matches a dense oracle") {
  ModelSpec spec = small_spec();
  Rng rng(20);
  ad::ParamStore ps;
  SahpCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);

  ad::Tensor hv = randvec(rng, 3);
  auto plain = [&](double s) {
    double tot = 0.0;
    for (int cch = 0; cch < 2; ++cch) {
      double mu = 0.0, eta = 0.0, gam = 0.0;
      for (int j = 0; j < 3; ++j) {
        mu += ps.at("dec.W_mu").value(cch, j) * hv[j];
        eta += ps.at("dec.W_eta").value(cch, j) * hv[j];
        gam += ps.at("dec.W_gamma").value(cch, j) * hv[j];
      }
      mu = gelu_d(mu);
      eta = softplus_d(eta);
      gam = gelu_d(gam);
      tot += softplus_d(mu - (eta - mu) * std::exp(-gam * (s - 0.2)));
    }
    return tot;
  };

  ad::Tape t;
  auto b = core.bind(t, ps);
  quad::QuadSpec qs;
  double got = t.scalar(core.sum_compensator(t, b, t.leaf(hv), 0.2, 0.2, 1.5, qs, 0));
  double want = simpson(plain, 0.2, 1.5, 20000);
  CHECK(got == Catch::Approx(want).epsilon(1e-7));
}

// ---------------------------------------------------------------------------
// fnn
// ---------------------------------------------------------------------------

TEST_CASE("fnn compensator starts at zero and never decreases") {
  ModelSpec spec = small_spec();
  Rng rng(22);
  ad::ParamStore ps;
  FnnCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);

  ad::Tape t;
  auto b = core.bind(t, ps);
  ad::Var h = t.leaf(randvec(rng, 3));
  quad::QuadSpec qs;
  CHECK(t.scalar(core.sum_compensator(t, b, h, 0.0, 0.0, 0.0, qs, 0)) == 0.0);

  double prev = 0.0;
  for (int i = 1; i <= 100; ++i) {
    double tau = 0.05 * i;
    double lam = t.scalar(core.sum_compensator(t, b, h, 0.0, 0.0, tau, qs, 0));
    CHECK(lam >= prev - 1e-12);
    prev = lam;
  }
}

TEST_CASE("fnn intensity equals the derivative of its compensator") {
  ModelSpec spec = small_spec();
  for (auto act : {FnnActivation::softplus, FnnActivation::sigmoid,
                   FnnActivation::exp}) {
    spec.fnn_act = act;
    Rng rng(24);
    ad::ParamStore ps;
    FnnCore core;
    core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);

    ad::Tensor hv = randvec(rng, 3);
    quad::QuadSpec qs;
    auto lambda_at = [&](double tau) {
      ad::Tape t;
      auto b = core.bind(t, ps);
      return t.scalar(t.sum(core.intensity_vec(t, b, t.leaf(hv), 0.0, tau)));
    };
    auto big_lambda = [&](double tau) {
      ad::Tape t;
      auto b = core.bind(t, ps);
      return t.scalar(core.sum_compensator(t, b, t.leaf(hv), 0.0, 0.0, tau, qs, 0));
    };

    for (double tau : {0.2, 0.8, 2.0}) {
      double fd = (big_lambda(tau + 1e-5) - big_lambda(tau - 1e-5)) / 2e-5;
      double lam = lambda_at(tau);
      CHECK(lam == Catch::Approx(fd).epsilon(1e-4));
      CHECK(lam > 0.0);
    }
  }
}

TEST_CASE("fnn reparametrization keeps weights effective even when raw values are negative") {
  ModelSpec spec = small_spec();
  Rng rng(26);
  ad::ParamStore ps;
  FnnCore core;
  core.init(ps, "dec", ad::Owner::shared, spec, 2, rng);
  ps.at("dec.W_raw").value.fill(-3.0);
  ps.at("dec.wt_raw").value.fill(-2.0);

  ad::Tape t;
  auto b = core.bind(t, ps);
  ad::Var h = t.leaf(randvec(rng, 3));
  quad::QuadSpec qs;
  double a01 = t.scalar(core.sum_compensator(t, b, h, 0.0, 0.5, 1.5, qs, 0));
  CHECK(a01 >= 0.0);
  const ad::Tensor& v = t.val(core.intensity_vec(t, b, h, 0.0, 1.0));
  for (double x : v.v) CHECK(x >= 0.0);
}
