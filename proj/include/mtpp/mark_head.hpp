#pragma once

#include <cmath>
#include <string>

#include "mtpp/model_spec.hpp"
#include "mtpp/tape.hpp"

namespace mtpp::models {

// Inter-arrivals are clamped here before log, so a pathological tau of 0
// (or an underflow) cannot poison the head input.
inline constexpr double kTauFloor = 1e-8;

inline double log_tau_clamped(double tau) {
  return std::log(tau < kTauFloor ? kTauFloor : tau);
}

// Categorical mark distribution
//   p(k | tau, h) = softmax(W2 relu(W1 [h ; log tau] + b1) + b2)
// The time-independent variant drops the log tau input and models p(k | h).
struct MarkHead {
  std::string prefix;
  bool time_dependent = true;

  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            const ModelSpec& spec, Rng& rng, bool with_time) {
    prefix = pfx;
    time_dependent = with_time;
    int d_in = spec.dims.d_h + (with_time ? 1 : 0);
    ps.add(prefix + ".W1", owner, ad::glorot_init(rng, spec.dims.d_1, d_in));
    ps.add(prefix + ".b1", owner, ad::Tensor::zeros(spec.dims.d_1, 1));
    ps.add(prefix + ".W2", owner,
           ad::glorot_init(rng, spec.num_marks, spec.dims.d_1));
    ps.add(prefix + ".b2", owner, ad::Tensor::zeros(spec.num_marks, 1));
  }

  struct Bound {
    ad::Var W1, b1, W2, b2;
  };

  Bound bind(ad::Tape& t, ad::ParamStore& ps) const {
    return Bound{t.param(ps.at(prefix + ".W1")), t.param(ps.at(prefix + ".b1")),
                 t.param(ps.at(prefix + ".W2")), t.param(ps.at(prefix + ".b2"))};
  }

  ad::Var logits(ad::Tape& t, const Bound& b, ad::Var h, double tau) const {
    ad::Var in = h;
    if (time_dependent) {
      in = t.concat({h, t.constant(log_tau_clamped(tau))});
    }
    return t.affine(b.W2, t.relu(t.affine(b.W1, in, b.b1)), b.b2);
  }

  ad::Var log_prob(ad::Tape& t, const Bound& b, ad::Var h, double tau,
                   int k) const {
    ad::Var lg = logits(t, b, h, tau);
    return t.sub(t.slice(lg, k, 1), t.logsumexp(lg));
  }

  ad::Var probs(ad::Tape& t, const Bound& b, ad::Var h, double tau) const {
    return t.softmax(logits(t, b, h, tau));
  }
};

}  // namespace mtpp::models
