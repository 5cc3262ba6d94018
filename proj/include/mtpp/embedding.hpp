#pragma once

#include <cmath>
#include <string>

#include "mtpp/model_spec.hpp"
#include "mtpp/tape.hpp"

namespace mtpp::models {

// Sinusoidal encoding of an absolute event time, interleaved as
// [sin(a_j t), cos(a_j t)] for j = 0..d_t/2-1 with a_j = 1000^(-2j/d_t).
// No trainable parameters.
inline ad::Tensor time_encoding(double t, int d_t) {
  ad::Tensor e(d_t, 1);
  for (int j = 0; j < d_t / 2; ++j) {
    double a = std::pow(1000.0, -2.0 * j / d_t);
    e[2 * j] = std::sin(a * t);
    e[2 * j + 1] = std::cos(a * t);
  }
  return e;
}

// Learned mark embedding table, one row per mark type.
struct MarkEmbedding {
  std::string block;

  void init(ad::ParamStore& ps, const std::string& prefix, ad::Owner owner,
            const ModelSpec& spec, Rng& rng) {
    block = prefix + ".mark_emb";
    ps.add(block, owner,
           ad::glorot_init(rng, spec.num_marks, spec.dims.d_k));
  }

  struct Bound {
    ad::Var table;
  };

  Bound bind(ad::Tape& t, ad::ParamStore& ps) const {
    return Bound{t.param(ps.at(block))};
  }

  // Full event representation [time encoding ; mark embedding].
  ad::Var event_rep(ad::Tape& t, const Bound& b, double time, int mark,
                    int d_t) const {
    ad::Var te = t.leaf(time_encoding(time, d_t));
    ad::Var me = t.row(b.table, mark);
    return t.concat({te, me});
  }
};

}  // namespace mtpp::models
