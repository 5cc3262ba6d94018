#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mtpp/params.hpp"

namespace mtpp::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_block;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of d(loss)/d(params). `loss` must populate
// ParamStore gradients as a side effect (forward + backward) and return the
// loss value. Checks up to `per_block` entries of every block, strided so
// the sample covers the whole tensor. Relative error uses
// |a - n| / max(1, |a|, |n|), which behaves for near-zero gradients.
inline GradCheckReport grad_check(ParamStore& store,
                                  const std::function<double()>& loss,
                                  double eps = 1e-5, int per_block = 8) {
  store.zero_grad();
  loss();
  // Snapshot analytic gradients before the probing passes overwrite them.
  std::vector<Tensor> analytic;
  analytic.reserve(store.size());
  for (const auto& b : store.blocks()) analytic.push_back(b.grad);

  GradCheckReport rep;
  for (size_t bi = 0; bi < store.size(); ++bi) {
    auto& b = store.blocks()[bi];
    int n = b.value.size();
    int take = std::min(per_block, n);
    for (int s = 0; s < take; ++s) {
      int i = static_cast<int>((static_cast<long>(s) * n) / take);
      double keep = b.value.v[i];
      b.value.v[i] = keep + eps;
      store.zero_grad();
      double up = loss();
      b.value.v[i] = keep - eps;
      store.zero_grad();
      double dn = loss();
      b.value.v[i] = keep;
      double num = (up - dn) / (2.0 * eps);
      double ana = analytic[bi].v[i];
      double rel = std::fabs(ana - num) /
                   std::max({1.0, std::fabs(ana), std::fabs(num)});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_block = b.name;
        rep.worst_index = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  // Leave the store in the analytic state it started from.
  store.zero_grad();
  for (size_t bi = 0; bi < store.size(); ++bi) {
    store.blocks()[bi].grad = analytic[bi];
  }
  return rep;
}

}  // namespace mtpp::ad
