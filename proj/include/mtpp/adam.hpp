#pragma once

#include <cmath>
#include <unordered_map>

#include "mtpp/params.hpp"

namespace mtpp::ad {

// Adam with bias correction. Frozen blocks are skipped entirely, their
// moment buffers and step counters do not advance while frozen.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store) {
    for (auto& b : store.blocks()) {
      if (b.frozen) continue;
      State& s = state_[b.name];
      if (s.m.size() != b.value.size()) {
        s.m = Tensor(b.value.rows, b.value.cols);
        s.v = Tensor(b.value.rows, b.value.cols);
        s.t = 0;
      }
      s.t += 1;
      double c1 = 1.0 - std::pow(beta1_, s.t);
      double c2 = 1.0 - std::pow(beta2_, s.t);
      for (int i = 0; i < b.value.size(); ++i) {
        double g = b.grad.v[i];
        s.m.v[i] = beta1_ * s.m.v[i] + (1.0 - beta1_) * g;
        s.v.v[i] = beta2_ * s.v.v[i] + (1.0 - beta2_) * g * g;
        double mhat = s.m.v[i] / c1;
        double vhat = s.v.v[i] / c2;
        b.value.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  double lr() const { return lr_; }

 private:
  struct State {
    Tensor m, v;
    long t = 0;
  };
  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<std::string, State> state_;
};

// Plain gradient descent on every unfrozen block; used by the one-step
// split-advantage analysis where the first-order algebra assumes it.
inline void sgd_step(ParamStore& store, double lr) {
  for (auto& b : store.blocks()) {
    if (b.frozen) continue;
    for (int i = 0; i < b.value.size(); ++i) b.value.v[i] -= lr * b.grad.v[i];
  }
}

}  // namespace mtpp::ad
