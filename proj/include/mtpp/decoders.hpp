#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/mark_head.hpp"
#include "mtpp/model_spec.hpp"
#include "mtpp/params.hpp"
#include "mtpp/quadrature.hpp"
#include "mtpp/tape.hpp"

namespace mtpp::models {

// A bound component is a list of parameter nodes on one tape. Each concrete
// class knows the order it pushed them in. Initialization happens on the
// concrete types; the interfaces cover only what the assembled model calls.
using Binding = std::vector<ad::Var>;

// Time side of a model: conditional intensity of the next event time given
// the hidden state, plus its integral over an interval. log_density and
// log_survival have generic compositions here; decoders with closed forms
// override them.
class TimeComponent {
 public:
  virtual ~TimeComponent() = default;

  virtual Binding bind(ad::Tape& t, ad::ParamStore& ps) const = 0;

  // log lambda*(t) with h summarizing events before the interval
  virtual ad::Var log_intensity(ad::Tape& t, const Binding& b, ad::Var h,
                                double t_prev, double time) const = 0;

  // integral of lambda* over [a, b_end], both inside the interval that
  // starts at t_prev
  virtual ad::Var compensator(ad::Tape& t, const Binding& b, ad::Var h,
                              double t_prev, double a, double b_end,
                              const quad::QuadSpec& qs,
                              uint64_t stream) const = 0;

  virtual ad::Var log_density(ad::Tape& t, const Binding& b, ad::Var h,
                              double t_prev, double tau,
                              const quad::QuadSpec& qs,
                              uint64_t stream) const {
    ad::Var li = log_intensity(t, b, h, t_prev, t_prev + tau);
    ad::Var lam = compensator(t, b, h, t_prev, t_prev, t_prev + tau, qs, stream);
    return t.sub(li, lam);
  }

  virtual ad::Var log_survival(ad::Tape& t, const Binding& b, ad::Var h,
                               double t_prev, double tau,
                               const quad::QuadSpec& qs,
                               uint64_t stream) const {
    return t.neg(compensator(t, b, h, t_prev, t_prev, t_prev + tau, qs, stream));
  }

  // true when compensator() evaluates a numeric quadrature rule
  virtual bool quadrature_compensator() const { return false; }
};

// Mark side: distribution over mark types at a given event time.
class MarkComponent {
 public:
  virtual ~MarkComponent() = default;

  virtual Binding bind(ad::Tape& t, ad::ParamStore& ps) const = 0;
  virtual ad::Var log_prob(ad::Tape& t, const Binding& b, ad::Var h,
                           double t_prev, double time, int k) const = 0;
  virtual ad::Var probs(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const = 0;
};

inline void require_ordered(double t_prev, double time, const char* who) {
  if (time < t_prev) {
    throw DataError(std::string(who) + " queried before the interval start");
  }
}

// ---------------------------------------------------------------------------
// exponential decoder: log lambda = w_t tau + w_h . h + b
// ---------------------------------------------------------------------------

// Exponents are clamped to +/-30 before exp so an untrained model cannot
// overflow; every activation of the clamp is counted so runs can report
// whether results ever left the exact regime.
class RmtppTime : public TimeComponent {
 public:
  static constexpr double kExpCap = 30.0;
  static constexpr double kLinearEps = 1e-8;

  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, Rng& rng) {
    prefix_ = pfx;
    ps.add(pfx + ".w_t", owner, ad::glorot_init(rng, 1, 1));
    ps.add(pfx + ".w_h", owner, ad::glorot_init(rng, spec.dims.d_h, 1));
    ps.add(pfx + ".b", owner, ad::Tensor::zeros(1, 1));
  }

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    return {t.param(ps.at(prefix_ + ".w_t")), t.param(ps.at(prefix_ + ".w_h")),
            t.param(ps.at(prefix_ + ".b"))};
  }

  ad::Var log_intensity(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const override {
    require_ordered(t_prev, time, "rmtpp intensity");
    return clamped_exponent(t, b, h, time - t_prev);
  }

  ad::Var compensator(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                      double a, double b_end, const quad::QuadSpec&,
                      uint64_t) const override {
    require_ordered(t_prev, a, "rmtpp compensator");
    require_ordered(a, b_end, "rmtpp compensator");
    double w = t.scalar(b[0]);
    if (std::abs(w) < kLinearEps) {
      // integral of exp(c) over the interval; the w_t term is below noise
      ad::Var c = t.add(t.dot(b[1], h), b[2]);
      return t.scale(t.exp(clamp_count(t, c)), b_end - a);
    }
    ad::Var xb = clamped_exponent(t, b, h, b_end - t_prev);
    ad::Var xa = clamped_exponent(t, b, h, a - t_prev);
    return t.div(t.sub(t.exp(xb), t.exp(xa)), b[0]);
  }

  std::int64_t clamp_events() const { return clamp_events_; }

 private:
  ad::Var clamped_exponent(ad::Tape& t, const Binding& b, ad::Var h,
                           double tau) const {
    ad::Var x = t.add(t.add(t.scale(b[0], tau), t.dot(b[1], h)), b[2]);
    return clamp_count(t, x);
  }

  ad::Var clamp_count(ad::Tape& t, ad::Var x) const {
    if (std::abs(t.scalar(x)) > kExpCap) ++clamp_events_;
    return t.clamp(x, -kExpCap, kExpCap);
  }

  std::string prefix_;
  mutable std::int64_t clamp_events_ = 0;
};

// ---------------------------------------------------------------------------
// log-normal mixture over the inter-arrival
// ---------------------------------------------------------------------------

class LnmTime : public TimeComponent {
 public:
  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, Rng& rng) {
    prefix_ = pfx;
    int m = spec.dims.mixtures;
    int d_h = spec.dims.d_h;
    ps.add(pfx + ".W_mu", owner, ad::glorot_init(rng, m, d_h));
    ps.add(pfx + ".b_mu", owner, ad::Tensor::zeros(m, 1));
    ps.add(pfx + ".W_s", owner, ad::glorot_init(rng, m, d_h));
    ps.add(pfx + ".b_s", owner, ad::Tensor::zeros(m, 1));
    ps.add(pfx + ".W_p", owner, ad::glorot_init(rng, m, d_h));
    ps.add(pfx + ".b_p", owner, ad::Tensor::zeros(m, 1));
  }

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    Binding b;
    for (const char* n : {".W_mu", ".b_mu", ".W_s", ".b_s", ".W_p", ".b_p"}) {
      b.push_back(t.param(ps.at(prefix_ + n)));
    }
    return b;
  }

  ad::Var log_intensity(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const override {
    require_ordered(t_prev, time, "lnm intensity");
    quad::QuadSpec unused;
    double tau = time - t_prev;
    return t.sub(log_density(t, b, h, t_prev, tau, unused, 0),
                 log_survival(t, b, h, t_prev, tau, unused, 0));
  }

  ad::Var compensator(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                      double a, double b_end, const quad::QuadSpec& qs,
                      uint64_t stream) const override {
    require_ordered(t_prev, a, "lnm compensator");
    require_ordered(a, b_end, "lnm compensator");
    // -log S is the cumulative hazard, so the interval integral telescopes
    return t.sub(log_survival(t, b, h, t_prev, a - t_prev, qs, stream),
                 log_survival(t, b, h, t_prev, b_end - t_prev, qs, stream));
  }

  ad::Var log_density(ad::Tape& t, const Binding& b, ad::Var h, double,
                      double tau, const quad::QuadSpec&,
                      uint64_t) const override {
    if (tau <= 0.0) throw DataError("lnm density needs a positive gap");
    double lt = std::log(tau);
    Mix m = mix(t, b, h);
    ad::Var z = standardized(t, m, lt);
    ad::Var comp = t.add(m.logw, t.scale(t.mul(z, z), -0.5));
    comp = t.sub(comp, m.s);
    comp = t.shift(comp, -lt - 0.5 * std::log(2.0 * M_PI));
    return t.logsumexp(comp);
  }

  ad::Var log_survival(ad::Tape& t, const Binding& b, ad::Var h, double,
                       double tau, const quad::QuadSpec&,
                       uint64_t) const override {
    double lt = std::log(tau < kTauFloor ? kTauFloor : tau);
    Mix m = mix(t, b, h);
    ad::Var z = standardized(t, m, lt);
    // Phi(-z) through erf, mixed in probability space
    ad::Var tail =
        t.scale(t.shift(t.erf(t.scale(z, -1.0 / std::sqrt(2.0))), 1.0), 0.5);
    return t.logsumexp(t.add(m.logw, t.log(tail)));
  }

 private:
  struct Mix {
    ad::Var mu, s, logw;  // s = log sigma
  };

  Mix mix(ad::Tape& t, const Binding& b, ad::Var h) const {
    ad::Var mu = t.affine(b[0], h, b[1]);
    ad::Var s = t.affine(b[2], h, b[3]);
    ad::Var logits = t.affine(b[4], h, b[5]);
    ad::Var logw = t.sub(logits, t.logsumexp(logits));
    return {mu, s, logw};
  }

  ad::Var standardized(ad::Tape& t, const Mix& m, double log_tau) const {
    return t.div(t.sub(t.constant(log_tau), m.mu), t.exp(m.s));
  }

  std::string prefix_;
};

// ---------------------------------------------------------------------------
// vector cores: decoders that emit one intensity per output channel
// ---------------------------------------------------------------------------

// Shared machinery for thp / sahp / fnn. The same core serves two roles: with
// out_dim = num_marks it is a full marked decoder, with out_dim = channels it
// is the ground part of a factorized model.
class VecCore {
 public:
  virtual ~VecCore() = default;

  virtual void init(ad::ParamStore& ps, const std::string& pfx,
                    ad::Owner owner, const ModelSpec& spec, int out_dim,
                    Rng& rng) = 0;
  virtual Binding bind(ad::Tape& t, ad::ParamStore& ps) const = 0;

  // per-channel intensities, every entry positive
  virtual ad::Var intensity_vec(ad::Tape& t, const Binding& b, ad::Var h,
                                double t_prev, double time) const = 0;

  // integral of the channel sum over [a, b_end]; quadrature unless the core
  // has a closed form
  virtual ad::Var sum_compensator(ad::Tape& t, const Binding& b, ad::Var h,
                                  double t_prev, double a, double b_end,
                                  const quad::QuadSpec& qs,
                                  uint64_t stream) const {
    std::vector<double> pts, wts;
    quad::interval_points(qs, a, b_end, stream, pts, wts);
    ad::Var acc = t.constant(0.0);
    for (size_t i = 0; i < pts.size(); ++i) {
      ad::Var tot = t.sum(intensity_vec(t, b, h, t_prev, pts[i]));
      acc = t.add(acc, t.scale(tot, wts[i]));
    }
    return acc;
  }

  int out_dim() const { return out_dim_; }

  virtual bool closed_compensator() const { return false; }

 protected:
  std::string prefix_;
  int out_dim_ = 0;
};

class ThpCore : public VecCore {
 public:
  static constexpr double kPrevFloor = 1e-6;

  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, int out_dim, Rng& rng) override {
    prefix_ = pfx;
    out_dim_ = out_dim;
    ps.add(pfx + ".wt_raw", owner, ad::glorot_init(rng, out_dim, 1));
    ps.add(pfx + ".W", owner, ad::glorot_init(rng, out_dim, spec.dims.d_h));
    ps.add(pfx + ".b", owner, ad::Tensor::zeros(out_dim, 1));
  }

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    return {t.param(ps.at(prefix_ + ".wt_raw")), t.param(ps.at(prefix_ + ".W")),
            t.param(ps.at(prefix_ + ".b"))};
  }

  ad::Var intensity_vec(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const override {
    require_ordered(t_prev, time, "thp intensity");
    // relative elapsed time, floored so the first interval stays finite
    double u = (time - t_prev) / (t_prev > kPrevFloor ? t_prev : kPrevFloor);
    ad::Var pre = t.add(t.scale(t.softplus(b[0]), u), t.affine(b[1], h, b[2]));
    return t.softplus(pre);
  }
};

class SahpCore : public VecCore {
 public:
  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, int out_dim, Rng& rng) override {
    prefix_ = pfx;
    out_dim_ = out_dim;
    ps.add(pfx + ".W_mu", owner, ad::glorot_init(rng, out_dim, spec.dims.d_h));
    ps.add(pfx + ".W_eta", owner, ad::glorot_init(rng, out_dim, spec.dims.d_h));
    ps.add(pfx + ".W_gamma", owner,
           ad::glorot_init(rng, out_dim, spec.dims.d_h));
  }

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    return {t.param(ps.at(prefix_ + ".W_mu")),
            t.param(ps.at(prefix_ + ".W_eta")),
            t.param(ps.at(prefix_ + ".W_gamma"))};
  }

  ad::Var intensity_vec(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const override {
    require_ordered(t_prev, time, "sahp intensity");
    double tau = time - t_prev;
    ad::Var mu = t.gelu(t.matvec(b[0], h));
    ad::Var eta = t.softplus(t.matvec(b[1], h));
    ad::Var gam = t.gelu(t.matvec(b[2], h));
    ad::Var decay = t.exp(t.scale(gam, -tau));
    ad::Var pre = t.sub(mu, t.mul(t.sub(eta, mu), decay));
    return t.softplus(pre);
  }
};

// Cumulative-hazard decoder: the network parametrizes G with nonnegative
// weights so G is increasing in tau, and the intensity is the tau-derivative
// assembled from the same graph pieces.
class FnnCore : public VecCore {
 public:
  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, int out_dim, Rng& rng) override {
    prefix_ = pfx;
    out_dim_ = out_dim;
    act_ = spec.fnn_act;
    int d_1 = spec.dims.d_1;
    ps.add(pfx + ".wt_raw", owner, ad::glorot_init(rng, d_1, 1));
    ps.add(pfx + ".Wh", owner, ad::glorot_init(rng, d_1, spec.dims.d_h));
    ps.add(pfx + ".b1", owner, ad::Tensor::zeros(d_1, 1));
    ps.add(pfx + ".W_raw", owner, ad::glorot_init(rng, out_dim, d_1));
    ps.add(pfx + ".b2", owner, ad::Tensor::zeros(out_dim, 1));
  }

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    Binding b;
    for (const char* n : {".wt_raw", ".Wh", ".b1", ".W_raw", ".b2"}) {
      b.push_back(t.param(ps.at(prefix_ + n)));
    }
    return b;
  }

  ad::Var intensity_vec(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const override {
    require_ordered(t_prev, time, "fnn intensity");
    Pieces p = pieces(t, b, h, time - t_prev);
    ad::Var inner_rate = t.mul(act_grad(t, p.zp), t.softplus(b[0]));
    ad::Var chain = t.matvec(p.Wp, inner_rate);
    return t.mul(t.sigmoid(p.pre2), chain);
  }

  ad::Var sum_compensator(ad::Tape& t, const Binding& b, ad::Var h,
                          double t_prev, double a, double b_end,
                          const quad::QuadSpec&, uint64_t) const override {
    require_ordered(t_prev, a, "fnn compensator");
    require_ordered(a, b_end, "fnn compensator");
    return t.sub(cumulative(t, b, h, b_end - t_prev),
                 cumulative(t, b, h, a - t_prev));
  }

  bool closed_compensator() const override { return true; }

 private:
  struct Pieces {
    ad::Var zp;    // pre-activation of the inner layer
    ad::Var Wp;    // nonnegative outer weights
    ad::Var pre2;  // pre-activation of the outer layer
  };

  Pieces pieces(ad::Tape& t, const Binding& b, ad::Var h, double tau) const {
    ad::Var zp = t.add(t.scale(t.softplus(b[0]), tau), t.affine(b[1], h, b[2]));
    ad::Var Wp = t.softplus(b[3]);
    ad::Var pre2 = t.add(t.matvec(Wp, act_apply(t, zp)), b[4]);
    return {zp, Wp, pre2};
  }

  ad::Var cumulative(ad::Tape& t, const Binding& b, ad::Var h,
                     double tau) const {
    return t.sum(t.softplus(pieces(t, b, h, tau).pre2));
  }

  ad::Var act_apply(ad::Tape& t, ad::Var x) const {
    switch (act_) {
      case FnnActivation::softplus: return t.softplus(x);
      case FnnActivation::sigmoid: return t.sigmoid(x);
      case FnnActivation::exp: return t.exp(x);
    }
    throw ConfigError("unknown fnn activation");
  }

  ad::Var act_grad(ad::Tape& t, ad::Var x) const {
    switch (act_) {
      case FnnActivation::softplus: return t.sigmoid(x);
      case FnnActivation::sigmoid: {
        ad::Var s = t.sigmoid(x);
        return t.mul(s, t.shift(t.neg(s), 1.0));
      }
      case FnnActivation::exp: return t.exp(x);
    }
    throw ConfigError("unknown fnn activation");
  }

  FnnActivation act_ = FnnActivation::softplus;
};

// ---------------------------------------------------------------------------
// adapters
// ---------------------------------------------------------------------------

// Time view of a vector core: the ground intensity is the channel sum.
class GroundVecTime : public TimeComponent {
 public:
  explicit GroundVecTime(const VecCore* core) : core_(core) {}

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    return core_->bind(t, ps);
  }

  ad::Var log_intensity(ad::Tape& t, const Binding& b, ad::Var h,
                        double t_prev, double time) const override {
    return t.log(t.sum(core_->intensity_vec(t, b, h, t_prev, time)));
  }

  ad::Var compensator(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                      double a, double b_end, const quad::QuadSpec& qs,
                      uint64_t stream) const override {
    return core_->sum_compensator(t, b, h, t_prev, a, b_end, qs, stream);
  }

  bool quadrature_compensator() const override {
    return !core_->closed_compensator();
  }

 private:
  const VecCore* core_;
};

// Mark view of a vector core: p(k) is the channel share of the total.
class VecMark : public MarkComponent {
 public:
  explicit VecMark(const VecCore* core) : core_(core) {}

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    return core_->bind(t, ps);
  }

  ad::Var log_prob(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                   double time, int k) const override {
    if (k < 0 || k >= core_->out_dim()) {
      throw DataError("mark id out of range for the decoder");
    }
    ad::Var v = checked_vec(t, b, h, t_prev, time);
    return t.sub(t.log(t.sum(t.slice(v, k, 1))), t.log(t.sum(v)));
  }

  ad::Var probs(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                double time) const override {
    ad::Var v = checked_vec(t, b, h, t_prev, time);
    return t.div(v, t.sum(v));
  }

 private:
  ad::Var checked_vec(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                      double time) const {
    ad::Var v = core_->intensity_vec(t, b, h, t_prev, time);
    double tot = 0.0;
    for (double x : t.val(v).v) tot += x;
    if (!(tot > 0.0) || !std::isfinite(tot)) {
      throw NumericError("mark distribution has no positive total intensity");
    }
    return v;
  }

  const VecCore* core_;
};

// Mark view of the two-layer categorical head.
class HeadMark : public MarkComponent {
 public:
  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, Rng& rng, bool time_dependent) {
    time_dependent_ = time_dependent;
    head_.init(ps, pfx, owner, spec, rng, time_dependent);
  }

  Binding bind(ad::Tape& t, ad::ParamStore& ps) const override {
    MarkHead::Bound b = head_.bind(t, ps);
    return {b.W1, b.b1, b.W2, b.b2};
  }

  ad::Var log_prob(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                   double time, int k) const override {
    return head_.log_prob(t, rebuild(b), h, guarded_tau(t_prev, time), k);
  }

  ad::Var probs(ad::Tape& t, const Binding& b, ad::Var h, double t_prev,
                double time) const override {
    return head_.probs(t, rebuild(b), h, guarded_tau(t_prev, time));
  }

 private:
  double guarded_tau(double t_prev, double time) const {
    double tau = time - t_prev;
    if (time_dependent_ && tau <= 0.0) {
      throw DataError("time-dependent mark head needs a positive gap");
    }
    return tau;
  }

  static MarkHead::Bound rebuild(const Binding& b) {
    return {b[0], b[1], b[2], b[3]};
  }

  MarkHead head_;
  bool time_dependent_ = true;
};

inline std::unique_ptr<VecCore> make_core(Family f) {
  switch (f) {
    case Family::thp: return std::make_unique<ThpCore>();
    case Family::sahp: return std::make_unique<SahpCore>();
    case Family::fnn: return std::make_unique<FnnCore>();
    default: throw ConfigError("family has no vector core");
  }
}

}  // namespace mtpp::models
