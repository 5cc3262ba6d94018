#pragma once

#include <string>
#include <vector>

#include "mtpp/embedding.hpp"
#include "mtpp/events.hpp"
#include "mtpp/model_spec.hpp"
#include "mtpp/tape.hpp"

namespace mtpp::models {

// Single-layer GRU, gate convention
//   z = sigmoid(Wz e + Uz h + bz)
//   r = sigmoid(Wr e + Ur h + br)
//   n = tanh(Wn e + Un (r*h) + bn)
//   h' = (1 - z)*n + z*h
struct GruCell {
  std::string prefix;
  int d_h = 0;

  void init(ad::ParamStore& ps, const std::string& pfx, ad::Owner owner,
            int d_in, int d_hidden, Rng& rng) {
    prefix = pfx;
    d_h = d_hidden;
    for (const char* g : {"z", "r", "n"}) {
      ps.add(prefix + ".W" + g, owner, ad::glorot_init(rng, d_hidden, d_in));
      ps.add(prefix + ".U" + g, owner, ad::glorot_init(rng, d_hidden, d_hidden));
      ps.add(prefix + ".b" + g, owner, ad::Tensor::zeros(d_hidden, 1));
    }
  }

  struct Bound {
    ad::Var Wz, Uz, bz, Wr, Ur, br, Wn, Un, bn;
  };

  Bound bind(ad::Tape& t, ad::ParamStore& ps) const {
    Bound b;
    b.Wz = t.param(ps.at(prefix + ".Wz"));
    b.Uz = t.param(ps.at(prefix + ".Uz"));
    b.bz = t.param(ps.at(prefix + ".bz"));
    b.Wr = t.param(ps.at(prefix + ".Wr"));
    b.Ur = t.param(ps.at(prefix + ".Ur"));
    b.br = t.param(ps.at(prefix + ".br"));
    b.Wn = t.param(ps.at(prefix + ".Wn"));
    b.Un = t.param(ps.at(prefix + ".Un"));
    b.bn = t.param(ps.at(prefix + ".bn"));
    return b;
  }

  ad::Var step(ad::Tape& t, const Bound& b, ad::Var e, ad::Var h) const {
    ad::Var z = t.sigmoid(t.add(t.affine(b.Wz, e, b.bz), t.matvec(b.Uz, h)));
    ad::Var r = t.sigmoid(t.add(t.affine(b.Wr, e, b.br), t.matvec(b.Ur, h)));
    ad::Var n = t.tanh(t.add(t.affine(b.Wn, e, b.bn), t.matvec(b.Un, t.mul(r, h))));
    ad::Var one_minus_z = t.shift(t.neg(z), 1.0);
    return t.add(t.mul(one_minus_z, n), t.mul(z, h));
  }
};

// Event-sequence encoder: mark embedding + time encoding feeding a GRU.
// encode() returns n+1 states; state i is the history summary before event
// i (state 0 is the all-zeros start state, state n covers the whole
// sequence and conditions the censored tail).
struct Encoder {
  MarkEmbedding emb;
  GruCell gru;

  void init(ad::ParamStore& ps, const std::string& prefix, ad::Owner owner,
            const ModelSpec& spec, Rng& rng) {
    emb.init(ps, prefix, owner, spec, rng);
    gru.init(ps, prefix, owner, spec.dims.event_width(), spec.dims.d_h, rng);
  }

  struct Bound {
    MarkEmbedding::Bound emb;
    GruCell::Bound gru;
  };

  Bound bind(ad::Tape& t, ad::ParamStore& ps) const {
    return Bound{emb.bind(t, ps), gru.bind(t, ps)};
  }

  std::vector<ad::Var> encode(ad::Tape& t, const Bound& b,
                              const data::EventSequence& seq, int d_t) const {
    std::vector<ad::Var> states;
    states.reserve(seq.events.size() + 1);
    ad::Var h = t.leaf(ad::Tensor::zeros(gru.d_h, 1));
    states.push_back(h);
    for (const auto& ev : seq.events) {
      ad::Var e = emb.event_rep(t, b.emb, ev.t, ev.k, d_t);
      h = gru.step(t, b.gru, e, h);
      states.push_back(h);
    }
    return states;
  }
};

}  // namespace mtpp::models
