#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/events.hpp"
#include "mtpp/model.hpp"
#include "mtpp/quadrature.hpp"
#include "mtpp/tape.hpp"

namespace mtpp::obj {

// Algebraic form of the time term. The three agree in exact arithmetic:
//
//   density      sum log f*(tau_i)  + log survival of the censored tail
//   intensity    sum log lambda*(t_i) - numeric integral of lambda* over (0,T]
//   compensator  sum log dLambda/dt  - Lambda contributions per interval
//
// intensity always integrates lambda with the quadrature rule, even when the
// model has a closed compensator, so cross-form comparisons probe both the
// model identities and the quadrature error.
enum class NllForm { density, intensity, compensator };

inline const char* nll_form_name(NllForm f) {
  switch (f) {
    case NllForm::density: return "density";
    case NllForm::intensity: return "intensity";
    case NllForm::compensator: return "compensator";
  }
  return "?";
}

// Averages are over the sequence count, not the event count, so sequences
// with many events weigh more inside L_T/L_M but each sequence contributes
// one per_sequence entry.
struct NLLBreakdown {
  double L_T = 0.0;
  double L_M = 0.0;
  double total = 0.0;
  std::vector<std::pair<double, double>> per_sequence;  // (L_T, L_M)
  double mc_stderr = 0.0;  // zero for deterministic rules
};

// Batch losses as live graph nodes, averaged over the batch size. Callers
// run backward on L_T and L_M separately or on their sum.
struct BatchLoss {
  ad::Var L_T;
  ad::Var L_M;
  double mc_stderr = 0.0;
};

inline quad::IntegralEstimate integrate_ground_intensity(
    const std::function<double(double)>& lambda, double a, double b,
    const quad::QuadSpec& qs, uint64_t stream = 0) {
  if (!(b >= a)) throw DataError("integration interval with b < a");
  return quad::integrate(lambda, a, b, qs, stream);
}

namespace detail {

// One monte_carlo stream per (sequence position, interval); intervals are
// capped at 2^20 per sequence which is far beyond desk scale.
inline uint64_t interval_stream(int seq_pos, int interval) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(seq_pos)) << 20) |
         static_cast<uint64_t>(interval & 0xfffff);
}

inline void ensure_finite(const ad::Tape& t, ad::Var v,
                          const std::string& what) {
  if (std::isfinite(t.scalar(v))) return;
  throw NumericError("non-finite " + what);
}

inline std::string at_event(int seq_pos, int event) {
  return "sequence " + std::to_string(seq_pos) + ", event " +
         std::to_string(event);
}

// Variance of the monte_carlo estimate of one interval integral. Reuses the
// point stream the graph consumed, so the reported spread belongs to the
// value actually in the loss.
inline double interval_mc_variance(ad::Tape& t, const models::Model& m,
                                   const models::Model::SeqGraph& g, int i,
                                   double a, double b, const quad::QuadSpec& qs,
                                   uint64_t stream) {
  std::vector<double> pts, wts;
  quad::interval_points(qs, a, b, stream, pts, wts);
  size_t n = pts.size();
  if (n < 2) return 0.0;
  std::vector<double> lam(n);
  double mean = 0.0;
  for (size_t j = 0; j < n; ++j) {
    double p = pts[j] > a ? pts[j] : a + 1e-12 * (b - a);
    lam[j] = std::exp(t.scalar(m.log_ground_intensity(t, g, i, p)));
    mean += lam[j];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : lam) ss += (v - mean) * (v - mean);
  double sample_var = ss / static_cast<double>(n - 1);
  return (b - a) * (b - a) * sample_var / static_cast<double>(n);
}

struct SeqTerms {
  ad::Var lt;  // negative time log-likelihood of one sequence
  ad::Var lm;  // negative mark log-likelihood
  double mc_var = 0.0;
};

inline SeqTerms sequence_terms(ad::Tape& t, const models::Model& m,
                               const models::Model::SeqGraph& g, int seq_pos,
                               NllForm form, const quad::QuadSpec& qs) {
  const data::EventSequence& seq = *g.seq;
  const int n = seq.size();
  const bool mc = qs.rule == quad::Rule::monte_carlo;

  ad::Var ll_time = t.constant(0.0);
  ad::Var ll_mark = t.constant(0.0);
  double mc_var = 0.0;

  for (int i = 0; i < n; ++i) {
    uint64_t stream = interval_stream(seq_pos, i);
    ad::Var term;
    if (form == NllForm::density) {
      term = m.log_density(t, g, i, seq.tau(i), qs, stream);
    } else {
      term = m.log_ground_intensity(t, g, i, seq.events[i].t);
      if (form == NllForm::compensator) {
        // the change of variables needs dLambda/dt > 0 at every event
        double li = t.scalar(term);
        if (std::isnan(li) || li == -std::numeric_limits<double>::infinity()) {
          throw NumericError("compensator derivative <= 0 at " +
                             at_event(seq_pos, i));
        }
      }
    }
    ensure_finite(t, term, "time loss at " + at_event(seq_pos, i));
    ll_time = t.add(ll_time, term);

    ad::Var mk = m.log_mark_prob(t, g, i, seq.events[i].k);
    ensure_finite(t, mk, "mark loss at " + at_event(seq_pos, i));
    ll_mark = t.add(ll_mark, mk);
  }

  if (form == NllForm::density) {
    uint64_t stream = interval_stream(seq_pos, n);
    double tail = seq.T - seq.last_time();
    ad::Var s = m.log_survival(t, g, n, tail, qs, stream);
    ensure_finite(t, s, "survival term at sequence " + std::to_string(seq_pos));
    ll_time = t.add(ll_time, s);
    if (mc && m.quadrature_compensator()) {
      for (int i = 0; i < n; ++i) {
        mc_var += interval_mc_variance(t, m, g, i, seq.t_prev(i),
                                       seq.events[i].t, qs,
                                       interval_stream(seq_pos, i));
      }
      mc_var += interval_mc_variance(t, m, g, n, seq.last_time(), seq.T, qs,
                                     stream);
    }
  } else {
    ad::Var integral = t.constant(0.0);
    for (int i = 0; i <= n; ++i) {
      double a = (i == n) ? seq.last_time() : seq.t_prev(i);
      double b = (i == n) ? seq.T : seq.events[i].t;
      uint64_t stream = interval_stream(seq_pos, i);
      if (form == NllForm::compensator) {
        integral = t.add(integral, m.compensator(t, g, i, a, b, qs, stream));
        if (mc && m.quadrature_compensator()) {
          mc_var += interval_mc_variance(t, m, g, i, a, b, qs, stream);
        }
      } else {
        std::vector<double> pts, wts;
        quad::interval_points(qs, a, b, stream, pts, wts);
        std::vector<double> vals;
        if (mc) vals.reserve(pts.size());
        for (size_t j = 0; j < pts.size(); ++j) {
          // the trapezoid rule pins a point on the interval start, where a
          // zero gap leaves some decoders without an intensity
          double p = pts[j] > a ? pts[j] : a + 1e-12 * (b - a);
          ad::Var lam = t.exp(m.log_ground_intensity(t, g, i, p));
          if (mc) vals.push_back(t.scalar(lam));
          integral = t.add(integral, t.scale(lam, wts[j]));
        }
        if (mc && vals.size() >= 2) {
          double mean = 0.0;
          for (double v : vals) mean += v;
          mean /= static_cast<double>(vals.size());
          double ss = 0.0;
          for (double v : vals) ss += (v - mean) * (v - mean);
          double nn = static_cast<double>(vals.size());
          mc_var += (b - a) * (b - a) * (ss / (nn - 1.0)) / nn;
        }
      }
    }
    ensure_finite(t, integral,
                  "intensity integral at sequence " + std::to_string(seq_pos));
    ll_time = t.sub(ll_time, integral);
  }

  SeqTerms out;
  out.lt = t.neg(ll_time);
  out.lm = t.neg(ll_mark);
  out.mc_var = mc_var;
  return out;
}

}  // namespace detail

inline BatchLoss batch_nll(ad::Tape& t, models::Model& m,
                           const std::vector<const data::EventSequence*>& batch,
                           NllForm form, const quad::QuadSpec& qs) {
  if (batch.empty()) throw DataError("cannot build a loss for an empty batch");
  ad::Var lt = t.constant(0.0);
  ad::Var lm = t.constant(0.0);
  double var_sum = 0.0;
  for (size_t s = 0; s < batch.size(); ++s) {
    models::Model::SeqGraph g = m.encode(t, *batch[s]);
    detail::SeqTerms terms =
        detail::sequence_terms(t, m, g, static_cast<int>(s), form, qs);
    lt = t.add(lt, terms.lt);
    lm = t.add(lm, terms.lm);
    var_sum += terms.mc_var;
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  BatchLoss out;
  out.L_T = t.scale(lt, inv);
  out.L_M = t.scale(lm, inv);
  out.mc_stderr = std::sqrt(var_sum) * inv;
  return out;
}

// Fresh tape per sequence keeps memory flat on large datasets; the sum runs
// in dataset order so results are bit-stable.
inline NLLBreakdown nll_eval(models::Model& m, const data::Dataset& data,
                             NllForm form, const quad::QuadSpec& qs) {
  if (data.sequences.empty()) {
    throw DataError("cannot evaluate the NLL of an empty dataset");
  }
  NLLBreakdown out;
  out.per_sequence.reserve(data.size());
  double var_sum = 0.0;
  for (size_t s = 0; s < data.sequences.size(); ++s) {
    ad::Tape t;
    models::Model::SeqGraph g = m.encode(t, data.sequences[s]);
    detail::SeqTerms terms =
        detail::sequence_terms(t, m, g, static_cast<int>(s), form, qs);
    double lt = t.scalar(terms.lt);
    double lm = t.scalar(terms.lm);
    out.per_sequence.emplace_back(lt, lm);
    out.L_T += lt;
    out.L_M += lm;
    var_sum += terms.mc_var;
  }
  double inv = 1.0 / static_cast<double>(data.size());
  out.L_T *= inv;
  out.L_M *= inv;
  out.total = out.L_T + out.L_M;
  out.mc_stderr = std::sqrt(var_sum) * inv;
  return out;
}

inline NLLBreakdown nll_density(models::Model& m, const data::Dataset& d,
                                const quad::QuadSpec& qs) {
  return nll_eval(m, d, NllForm::density, qs);
}

inline NLLBreakdown nll_intensity(models::Model& m, const data::Dataset& d,
                                  const quad::QuadSpec& qs) {
  return nll_eval(m, d, NllForm::intensity, qs);
}

inline NLLBreakdown nll_compensator(models::Model& m, const data::Dataset& d,
                                    const quad::QuadSpec& qs) {
  return nll_eval(m, d, NllForm::compensator, qs);
}

}  // namespace mtpp::obj
