#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mtpp/decoders.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/events.hpp"
#include "mtpp/gru.hpp"
#include "mtpp/model_spec.hpp"
#include "mtpp/params.hpp"
#include "mtpp/tape.hpp"

namespace mtpp::models {

// A model is one or two encoders plus a time component and a mark component,
// with ownership tags deciding which blocks belong to which training task.
//
//   base         one encoder, the family's original decoder, all shared
//   plus         shared encoder; time decoder and time-aware head disjoint
//   plusplus     disjoint encoders and decoders
//   dup          shared encoder, two copies of the full marked decoder
//   dupdisjoint  disjoint encoders, two copies of the full marked decoder
//
// rmtpp and lnm factorize into a ground decoder and a categorical head, so
// their duplicated settings keep the base layout and only the ownership and
// the head's time input change. thp, sahp and fnn are marked intensity
// decoders: base and dup use K-output cores directly, the plus settings swap
// in a C-channel ground core plus a head.
class Model {
 public:
  static Model build(const ModelSpec& spec) {
    spec.validate();
    Model m;
    m.spec_ = spec;
    Rng rng(spec.seed);
    bool dual = spec.setting == Setting::plusplus ||
                spec.setting == Setting::dupdisjoint;
    m.dual_ = dual;

    if (dual) {
      m.enc_time_.init(m.params, "enc_t", ad::Owner::time, spec, rng);
      m.enc_mark_.init(m.params, "enc_m", ad::Owner::mark, spec, rng);
    } else {
      ad::Owner enc_owner = ad::Owner::shared;
      m.enc_time_.init(m.params, "enc", enc_owner, spec, rng);
    }

    bool factorized = spec.family == Family::rmtpp || spec.family == Family::lnm;
    if (factorized) {
      m.build_factorized(rng);
    } else {
      m.build_vec(rng);
    }
    return m;
  }

  const ModelSpec& spec() const { return spec_; }
  bool dual_encoder() const { return dual_; }
  bool quadrature_compensator() const {
    return time_->quadrature_compensator();
  }

  // Bound encoders and components for one sequence on one tape. State i is
  // the history before event i; state n conditions the censored tail.
  struct SeqGraph {
    const data::EventSequence* seq = nullptr;
    std::vector<ad::Var> h_time, h_mark;
    Binding time_bind, mark_bind;
  };

  SeqGraph encode(ad::Tape& t, const data::EventSequence& seq) {
    SeqGraph g;
    g.seq = &seq;
    Encoder::Bound bt = enc_time_.bind(t, params);
    g.h_time = enc_time_.encode(t, bt, seq, spec_.dims.d_t);
    if (dual_) {
      Encoder::Bound bm = enc_mark_.bind(t, params);
      g.h_mark = enc_mark_.encode(t, bm, seq, spec_.dims.d_t);
    } else {
      g.h_mark = g.h_time;
    }
    g.time_bind = time_->bind(t, params);
    g.mark_bind = mark_->bind(t, params);
    return g;
  }

  // interval index i ranges over 0..n; i == n is the censored tail interval
  ad::Var log_ground_intensity(ad::Tape& t, const SeqGraph& g, int i,
                               double time) const {
    return time_->log_intensity(t, g.time_bind, state(g.h_time, i),
                                prev_time(g, i), time);
  }

  ad::Var compensator(ad::Tape& t, const SeqGraph& g, int i, double a,
                      double b, const quad::QuadSpec& qs,
                      uint64_t stream) const {
    return time_->compensator(t, g.time_bind, state(g.h_time, i),
                              prev_time(g, i), a, b, qs, stream);
  }

  ad::Var log_density(ad::Tape& t, const SeqGraph& g, int i, double tau,
                      const quad::QuadSpec& qs, uint64_t stream) const {
    return time_->log_density(t, g.time_bind, state(g.h_time, i),
                              prev_time(g, i), tau, qs, stream);
  }

  ad::Var log_survival(ad::Tape& t, const SeqGraph& g, int i, double tau,
                       const quad::QuadSpec& qs, uint64_t stream) const {
    return time_->log_survival(t, g.time_bind, state(g.h_time, i),
                               prev_time(g, i), tau, qs, stream);
  }

  // mark distribution for event i at its observed time
  ad::Var log_mark_prob(ad::Tape& t, const SeqGraph& g, int i, int k) const {
    return mark_->log_prob(t, g.mark_bind, state(g.h_mark, i),
                           prev_time(g, i), g.seq->events[i].t, k);
  }

  ad::Var mark_probs_at(ad::Tape& t, const SeqGraph& g, int i,
                        double time) const {
    return mark_->probs(t, g.mark_bind, state(g.h_mark, i), prev_time(g, i),
                        time);
  }

  // ----- frozen-parameter views for evaluation -----

  // history states as plain values, one per interval (n+1 of them)
  std::vector<ad::Tensor> states_time(const data::EventSequence& seq) {
    ad::Tape t;
    SeqGraph g = encode(t, seq);
    return values(t, g.h_time);
  }

  std::vector<ad::Tensor> states_mark(const data::EventSequence& seq) {
    ad::Tape t;
    SeqGraph g = encode(t, seq);
    return values(t, g.h_mark);
  }

  // P(next gap <= tau) from a frozen history state
  double cdf(const ad::Tensor& h_time, double t_prev, double tau) {
    return cdf(h_time, t_prev, tau, spec_.quad);
  }

  double cdf(const ad::Tensor& h_time, double t_prev, double tau,
             const quad::QuadSpec& qs) {
    ad::Tape t;
    Binding b = time_->bind(t, params);
    ad::Var hv = t.leaf(h_time);
    ad::Var ls = time_->log_survival(t, b, hv, t_prev, tau, qs, 0);
    return 1.0 - std::exp(t.scalar(ls));
  }

  std::vector<double> mark_pmf(const ad::Tensor& h_mark, double t_prev,
                               double tau) {
    ad::Tape t;
    Binding b = mark_->bind(t, params);
    ad::Var hv = t.leaf(h_mark);
    ad::Var p = mark_->probs(t, b, hv, t_prev, t_prev + tau);
    return t.val(p).v;
  }

  std::int64_t clamp_events() const {
    auto* r = dynamic_cast<const RmtppTime*>(time_.get());
    if (r) return r->clamp_events();
    return 0;
  }

  ad::ParamStore params;

 private:
  void build_factorized(Rng& rng) {
    bool all_shared = spec_.setting == Setting::base;
    ad::Owner dec_owner = all_shared ? ad::Owner::shared : ad::Owner::time;
    ad::Owner head_owner = all_shared ? ad::Owner::shared : ad::Owner::mark;
    // the duplicated settings keep the family's original time-free head
    bool td_head = spec_.setting == Setting::plus ||
                   spec_.setting == Setting::plusplus;

    if (spec_.family == Family::rmtpp) {
      auto dec = std::make_unique<RmtppTime>();
      dec->init(params, "dec", dec_owner, spec_, rng);
      time_ = std::move(dec);
    } else {
      auto dec = std::make_unique<LnmTime>();
      dec->init(params, "dec", dec_owner, spec_, rng);
      time_ = std::move(dec);
    }
    auto head = std::make_unique<HeadMark>();
    head->init(params, "head", head_owner, spec_, rng, td_head);
    mark_ = std::move(head);
  }

  void build_vec(Rng& rng) {
    Setting s = spec_.setting;
    if (s == Setting::base) {
      core_time_ = make_core(spec_.family);
      core_time_->init(params, "dec", ad::Owner::shared, spec_,
                       spec_.num_marks, rng);
      time_ = std::make_unique<GroundVecTime>(core_time_.get());
      mark_ = std::make_unique<VecMark>(core_time_.get());
    } else if (s == Setting::plus || s == Setting::plusplus) {
      core_time_ = make_core(spec_.family);
      core_time_->init(params, "dec", ad::Owner::time, spec_,
                       spec_.dims.channels, rng);
      time_ = std::make_unique<GroundVecTime>(core_time_.get());
      auto head = std::make_unique<HeadMark>();
      head->init(params, "head", ad::Owner::mark, spec_, rng, true);
      mark_ = std::move(head);
    } else {
      core_time_ = make_core(spec_.family);
      core_time_->init(params, "dec_t", ad::Owner::time, spec_,
                       spec_.num_marks, rng);
      core_mark_ = make_core(spec_.family);
      core_mark_->init(params, "dec_m", ad::Owner::mark, spec_,
                       spec_.num_marks, rng);
      time_ = std::make_unique<GroundVecTime>(core_time_.get());
      mark_ = std::make_unique<VecMark>(core_mark_.get());
    }
  }

  ad::Var state(const std::vector<ad::Var>& hs, int i) const {
    if (i < 0 || i >= static_cast<int>(hs.size())) {
      throw ShapeError("interval index out of range");
    }
    return hs[i];
  }

  double prev_time(const SeqGraph& g, int i) const {
    const auto& s = *g.seq;
    return i == s.size() ? s.last_time() : s.t_prev(i);
  }

  std::vector<ad::Tensor> values(const ad::Tape& t,
                             const std::vector<ad::Var>& vs) const {
    std::vector<ad::Tensor> out;
    out.reserve(vs.size());
    for (ad::Var v : vs) out.push_back(t.val(v));
    return out;
  }

  ModelSpec spec_;
  bool dual_ = false;
  Encoder enc_time_, enc_mark_;
  std::unique_ptr<VecCore> core_time_, core_mark_;
  std::unique_ptr<TimeComponent> time_;
  std::unique_ptr<MarkComponent> mark_;
};

// Copies every block value of src into dst where dst is the duplicated
// layout of the same family: a block named like enc_t.Wz or dec_m.W reads
// from enc.Wz / dec.W when those exist in src, anything else must match by
// name. Shapes have to agree.
inline void init_from_shared(const Model& src, Model& dst) {
  for (auto& blk : dst.params.blocks()) {
    const std::string& name = blk.name;
    std::string mapped = name;
    auto d = name.find('.');
    if (d != std::string::npos) {
      std::string seg = name.substr(0, d);
      if (seg.size() > 2 && (seg.ends_with("_t") || seg.ends_with("_m"))) {
        std::string base = seg.substr(0, seg.size() - 2) + name.substr(d);
        if (src.params.has(base)) mapped = base;
      }
    }
    if (!src.params.has(mapped)) {
      throw ConfigError("no source block for " + name);
    }
    const ad::Tensor& v = src.params.at(mapped).value;
    if (!blk.value.same_shape(v)) {
      throw ShapeError("shape mismatch copying " + mapped + " into " + name);
    }
    blk.value = v;
  }
}

}  // namespace mtpp::models
