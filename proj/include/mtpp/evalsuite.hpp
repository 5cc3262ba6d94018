#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtpp/csvio.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/events.hpp"
#include "mtpp/hawkes.hpp"
#include "mtpp/model.hpp"
#include "mtpp/objectives.hpp"
#include "mtpp/quadrature.hpp"

namespace mtpp::eval {

// F*(tau_i) evaluated at an observed gap under the fitted model, teacher
// forced on the true history. Uniform samples mean calibrated timing.
struct PITSample {
  double z = 0.0;
};

struct MarkPrediction {
  std::vector<double> probs;
  int true_k = 0;
};

inline std::vector<double> pce_levels() {
  std::vector<double> q;
  for (int i = 1; i <= 19; ++i) q.push_back(0.05 * i);
  return q;
}

// mean absolute gap between the empirical PIT CDF and the level grid
inline double pce(const std::vector<PITSample>& zs,
                  const std::vector<double>& levels = pce_levels()) {
  if (zs.empty()) throw DataError("pce needs at least one sample");
  if (levels.empty()) throw ConfigError("pce needs a level grid");
  double acc = 0.0;
  for (double q : levels) {
    std::int64_t hits = 0;
    for (const auto& s : zs) {
      if (s.z <= q) ++hits;
    }
    acc += std::fabs(static_cast<double>(hits) /
                         static_cast<double>(zs.size()) -
                     q);
  }
  return acc / static_cast<double>(levels.size());
}

// 1-based rank of the true mark, ties resolved toward smaller mark ids
inline int rank_of_true(const MarkPrediction& p) {
  if (p.probs.empty()) throw DataError("prediction without probabilities");
  if (p.true_k < 0 || p.true_k >= static_cast<int>(p.probs.size())) {
    throw DataError("true mark outside the predicted vocabulary");
  }
  double pt = p.probs[p.true_k];
  int rank = 1;
  for (size_t j = 0; j < p.probs.size(); ++j) {
    if (p.probs[j] > pt) ++rank;
    else if (p.probs[j] == pt && static_cast<int>(j) < p.true_k) ++rank;
  }
  return rank;
}

inline double accuracy_at_n(const std::vector<MarkPrediction>& ps, int n) {
  if (ps.empty()) throw DataError("accuracy needs predictions");
  if (n < 1) throw ConfigError("accuracy cutoff must be >= 1");
  std::int64_t hit = 0;
  for (const auto& p : ps) {
    if (rank_of_true(p) <= n) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(ps.size());
}

inline double mrr(const std::vector<MarkPrediction>& ps) {
  if (ps.empty()) throw DataError("mrr needs predictions");
  double acc = 0.0;
  for (const auto& p : ps) acc += 1.0 / static_cast<double>(rank_of_true(p));
  return acc / static_cast<double>(ps.size());
}

namespace detail {

inline int conf_bin(double conf, int bins) {
  int b = static_cast<int>(std::floor(conf * bins));
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return b;
}

}  // namespace detail

// top-label expected calibration error over equal-width confidence bins
inline double ece(const std::vector<MarkPrediction>& ps, int bins = 10) {
  if (ps.empty()) throw DataError("ece needs predictions");
  if (bins < 1) throw ConfigError("ece needs at least one bin");
  std::vector<double> conf(bins, 0.0), acc(bins, 0.0);
  std::vector<std::int64_t> cnt(bins, 0);
  for (const auto& p : ps) {
    int top = 0;
    for (size_t j = 1; j < p.probs.size(); ++j) {
      if (p.probs[j] > p.probs[top]) top = static_cast<int>(j);
    }
    int b = detail::conf_bin(p.probs[top], bins);
    conf[b] += p.probs[top];
    acc[b] += (top == p.true_k) ? 1.0 : 0.0;
    cnt[b] += 1;
  }
  double out = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (cnt[b] == 0) continue;
    double n = static_cast<double>(cnt[b]);
    out += (n / static_cast<double>(ps.size())) *
           std::fabs(acc[b] / n - conf[b] / n);
  }
  return out;
}

struct ReliabilityBin {
  double center = 0.0;
  double confidence = 0.0;
  double accuracy = 0.0;
  std::int64_t count = 0;
};

inline std::vector<ReliabilityBin> mark_reliability(
    const std::vector<MarkPrediction>& ps, int bins = 10) {
  if (ps.empty()) throw DataError("reliability needs predictions");
  if (bins < 1) throw ConfigError("reliability needs at least one bin");
  std::vector<ReliabilityBin> out(bins);
  for (int b = 0; b < bins; ++b) {
    out[b].center = (b + 0.5) / static_cast<double>(bins);
  }
  for (const auto& p : ps) {
    int top = 0;
    for (size_t j = 1; j < p.probs.size(); ++j) {
      if (p.probs[j] > p.probs[top]) top = static_cast<int>(j);
    }
    ReliabilityBin& rb = out[detail::conf_bin(p.probs[top], bins)];
    rb.confidence += p.probs[top];
    rb.accuracy += (top == p.true_k) ? 1.0 : 0.0;
    rb.count += 1;
  }
  for (auto& rb : out) {
    if (rb.count > 0) {
      rb.confidence /= static_cast<double>(rb.count);
      rb.accuracy /= static_cast<double>(rb.count);
    }
  }
  return out;
}

struct TimeReliabilityRow {
  double level = 0.0;
  double frequency = 0.0;
};

inline std::vector<TimeReliabilityRow> time_reliability(
    const std::vector<PITSample>& zs,
    const std::vector<double>& levels = pce_levels()) {
  if (zs.empty()) throw DataError("reliability needs samples");
  std::vector<TimeReliabilityRow> out;
  for (double q : levels) {
    std::int64_t hits = 0;
    for (const auto& s : zs) {
      if (s.z <= q) ++hits;
    }
    out.push_back(
        {q, static_cast<double>(hits) / static_cast<double>(zs.size())});
  }
  return out;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// one-sample Kolmogorov-Smirnov against the uniform law on [0, 1], with the
// usual asymptotic tail series for the p-value
inline KsResult ks_uniform(const std::vector<PITSample>& zs) {
  if (zs.empty()) throw DataError("ks test needs samples");
  std::vector<double> v;
  v.reserve(zs.size());
  for (const auto& s : zs) v.push_back(s.z);
  std::sort(v.begin(), v.end());
  double n = static_cast<double>(v.size());
  KsResult r;
  for (size_t i = 0; i < v.size(); ++i) {
    double lo = v[i] - static_cast<double>(i) / n;
    double hi = static_cast<double>(i + 1) / n - v[i];
    r.statistic = std::max({r.statistic, lo, hi});
  }
  double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * r.statistic;
  if (lambda < 0.3) {
    r.p_value = 1.0;
    return r;
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-14) break;
    sign = -sign;
  }
  r.p_value = std::clamp(2.0 * sum, 0.0, 1.0);
  return r;
}

// Inter-arrival median from a frozen history state: double the horizon
// until F* crosses one half, then bisect. A cumulative hazard that stalls
// below log 2 never crosses; that is a defective distribution.
inline double median_tau(models::Model& m, const ad::Tensor& h_time,
                         double t_prev, const quad::QuadSpec& qs,
                         double tol = 1e-6) {
  if (!(tol > 0.0)) throw ConfigError("median tolerance must be > 0");
  constexpr double kCap = 1e12;
  double lo = 0.0;
  double hi = 1e-6;
  while (m.cdf(h_time, t_prev, hi, qs) <= 0.5) {
    lo = hi;
    hi *= 2.0;
    if (hi > kCap) {
      throw BracketError("F* stays below one half out to " +
                         std::to_string(kCap) +
                         "; the predicted distribution is defective");
    }
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double f = m.cdf(h_time, t_prev, mid, qs);
    if (std::fabs(f - 0.5) < tol) return mid;
    if (f < 0.5) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw NumericError("median bisection stalled without reaching tolerance");
}

// teacher-forced PIT samples, one per observed event, dataset order
inline std::vector<PITSample> pit_samples(models::Model& m,
                                          const data::Dataset& ds,
                                          const quad::QuadSpec& qs) {
  std::vector<PITSample> out;
  quad::QuadSpec dq = quad::deterministic(qs);
  for (const auto& seq : ds.sequences) {
    std::vector<ad::Tensor> hs = m.states_time(seq);
    for (int i = 0; i < seq.size(); ++i) {
      out.push_back({m.cdf(hs[i], seq.t_prev(i), seq.tau(i), dq)});
    }
  }
  return out;
}

// mark distribution at each observed event time, teacher forced
inline std::vector<MarkPrediction> mark_predictions(models::Model& m,
                                                    const data::Dataset& ds) {
  std::vector<MarkPrediction> out;
  for (const auto& seq : ds.sequences) {
    std::vector<ad::Tensor> hs = m.states_mark(seq);
    for (int i = 0; i < seq.size(); ++i) {
      MarkPrediction p;
      p.probs = m.mark_pmf(hs[i], seq.t_prev(i), seq.tau(i));
      p.true_k = seq.events[i].k;
      out.push_back(std::move(p));
    }
  }
  return out;
}

inline double mae(models::Model& m, const data::Dataset& ds,
                  const quad::QuadSpec& qs, double tol = 1e-6) {
  quad::QuadSpec dq = quad::deterministic(qs);
  double acc = 0.0;
  std::int64_t n = 0;
  for (const auto& seq : ds.sequences) {
    if (seq.size() == 0) continue;
    std::vector<ad::Tensor> hs = m.states_time(seq);
    for (int i = 0; i < seq.size(); ++i) {
      double med = median_tau(m, hs[i], seq.t_prev(i), dq, tol);
      acc += std::fabs(med - seq.tau(i));
      ++n;
    }
  }
  if (n == 0) throw DataError("mae needs observed events");
  return acc / static_cast<double>(n);
}

// ----- oracle adapters for the generating process -----

// PIT of the dataset under its own Hawkes generator, via the closed-form
// compensator between consecutive events
inline std::vector<PITSample> hawkes_pit(const data::HawkesConfig& cfg,
                                         const data::Dataset& ds) {
  std::vector<PITSample> out;
  for (const auto& seq : ds.sequences) {
    std::vector<data::Event> prefix;
    for (int i = 0; i < seq.size(); ++i) {
      double lam_int = data::hawkes_compensator(cfg, prefix, seq.t_prev(i),
                                                seq.events[i].t);
      out.push_back({1.0 - std::exp(-lam_int)});
      prefix.push_back(seq.events[i]);
    }
  }
  return out;
}

inline std::vector<MarkPrediction> hawkes_mark_predictions(
    const data::HawkesConfig& cfg, const data::Dataset& ds) {
  std::vector<MarkPrediction> out;
  for (const auto& seq : ds.sequences) {
    std::vector<data::Event> prefix;
    for (int i = 0; i < seq.size(); ++i) {
      std::vector<double> lam =
          data::hawkes_intensity(cfg, prefix, seq.events[i].t);
      double total = 0.0;
      for (double v : lam) total += v;
      for (double& v : lam) v /= total;
      out.push_back({std::move(lam), seq.events[i].k});
      prefix.push_back(seq.events[i]);
    }
  }
  return out;
}

// ----- assembled report -----

struct EvalConfig {
  quad::QuadSpec quad;
  int ece_bins = 10;
  int reliability_bins = 10;
  double median_tol = 1e-6;
};

struct Report {
  double L_T = 0.0;
  double L_M = 0.0;
  double pce = 0.0;
  double ece = 0.0;
  double mae = 0.0;
  double acc1 = 0.0;
  double acc3 = 0.0;
  double acc5 = 0.0;
  double mrr = 0.0;
  std::int64_t events = 0;
  std::vector<ReliabilityBin> mark_rel;
  std::vector<TimeReliabilityRow> time_rel;
};

inline Report evaluate(models::Model& m, const data::Dataset& test,
                       const EvalConfig& cfg) {
  quad::QuadSpec dq = quad::deterministic(cfg.quad);
  Report r;
  obj::NLLBreakdown nb = obj::nll_eval(m, test, obj::NllForm::density, dq);
  r.L_T = nb.L_T;
  r.L_M = nb.L_M;
  r.events = static_cast<std::int64_t>(test.total_events());

  std::vector<PITSample> zs = pit_samples(m, test, dq);
  std::vector<MarkPrediction> ps = mark_predictions(m, test);
  r.pce = pce(zs);
  r.ece = ece(ps, cfg.ece_bins);
  r.mae = mae(m, test, dq, cfg.median_tol);
  r.acc1 = accuracy_at_n(ps, 1);
  r.acc3 = accuracy_at_n(ps, 3);
  r.acc5 = accuracy_at_n(ps, 5);
  r.mrr = mrr(ps);
  r.mark_rel = mark_reliability(ps, cfg.reliability_bins);
  r.time_rel = time_reliability(zs);
  return r;
}

// report.csv plus the two reliability tables, stable names and columns
inline void write_report(const Report& r, const std::string& dir,
                         const std::string& comment = "") {
  std::filesystem::create_directories(dir);
  csv::Writer summary(dir + "/report.csv");
  if (!comment.empty()) summary.comment(comment);
  summary.row({"metric", "value"});
  summary.row({"L_T", csv::num(r.L_T)});
  summary.row({"L_M", csv::num(r.L_M)});
  summary.row({"PCE", csv::num(r.pce)});
  summary.row({"ECE", csv::num(r.ece)});
  summary.row({"MAE", csv::num(r.mae)});
  summary.row({"acc@1", csv::num(r.acc1)});
  summary.row({"acc@3", csv::num(r.acc3)});
  summary.row({"acc@5", csv::num(r.acc5)});
  summary.row({"MRR", csv::num(r.mrr)});
  summary.row({"events", std::to_string(r.events)});
  summary.close();

  csv::Writer marks(dir + "/reliability_marks.csv");
  if (!comment.empty()) marks.comment(comment);
  marks.row({"bin_center", "confidence", "accuracy", "count"});
  for (const auto& b : r.mark_rel) {
    marks.row({csv::num(b.center), csv::num(b.confidence),
               csv::num(b.accuracy), std::to_string(b.count)});
  }
  marks.close();

  csv::Writer times(dir + "/reliability_time.csv");
  if (!comment.empty()) times.comment(comment);
  times.row({"level", "frequency"});
  for (const auto& row : r.time_rel) {
    times.row({csv::num(row.level), csv::num(row.frequency)});
  }
  times.close();
}

}  // namespace mtpp::eval
