#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/events.hpp"
#include "mtpp/rng.hpp"

namespace mtpp::data {

// Multivariate Hawkes process with exponential kernels.
//   lambda_k(t) = mu[k] + sum_{t_j < t} alpha[k_j][k] exp(-beta[k_j][k] (t - t_j))
// alpha[i][j] is the intensity jump that a type-i event adds to type j.
struct HawkesConfig {
  int num_marks = 1;
  double T = 10.0;
  std::vector<double> mu;                  // size K
  std::vector<std::vector<double>> alpha;  // K x K
  std::vector<std::vector<double>> beta;   // K x K, > 0 wherever alpha > 0

  void validate() const {
    int K = num_marks;
    if (K < 1) throw DataError("hawkes: num_marks must be >= 1");
    if (!(T > 0.0)) throw DataError("hawkes: T must be positive");
    if (static_cast<int>(mu.size()) != K) throw DataError("hawkes: mu size != K");
    if (static_cast<int>(alpha.size()) != K || static_cast<int>(beta.size()) != K) {
      throw DataError("hawkes: alpha/beta must be K x K");
    }
    for (int i = 0; i < K; ++i) {
      if (static_cast<int>(alpha[i].size()) != K ||
          static_cast<int>(beta[i].size()) != K) {
        throw DataError("hawkes: alpha/beta must be K x K");
      }
      if (mu[i] < 0.0) throw DataError("hawkes: mu must be nonnegative");
      for (int j = 0; j < K; ++j) {
        if (alpha[i][j] < 0.0) throw DataError("hawkes: alpha must be nonnegative");
        if (alpha[i][j] > 0.0 && beta[i][j] <= 0.0) {
          throw DataError("hawkes: beta must be positive where alpha > 0");
        }
      }
    }
  }

  // Branching matrix B[i][j] = alpha[i][j]/beta[i][j], the expected number
  // of type-j children of a type-i event. Stationarity requires its
  // spectral radius to be below 1.
  double branching_spectral_radius() const {
    int K = num_marks;
    std::vector<std::vector<double>> B(K, std::vector<double>(K, 0.0));
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) {
        B[i][j] = alpha[i][j] > 0.0 ? alpha[i][j] / beta[i][j] : 0.0;
      }
    }
    // Power iteration on a nonnegative matrix.
    std::vector<double> x(K, 1.0);
    double lam = 0.0;
    for (int it = 0; it < 200; ++it) {
      std::vector<double> y(K, 0.0);
      for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) y[i] += B[i][j] * x[j];
      }
      double nrm = 0.0;
      for (double v : y) nrm = std::max(nrm, std::fabs(v));
      if (nrm == 0.0) return 0.0;
      for (double& v : y) v /= nrm;
      lam = nrm;
      x = std::move(y);
    }
    return lam;
  }
};

// Per-type intensities at time t given the events with t_j < t.
inline std::vector<double> hawkes_intensity(const HawkesConfig& cfg,
                                            const std::vector<Event>& events,
                                            double t) {
  std::vector<double> lam(cfg.mu);
  for (const auto& e : events) {
    if (!(e.t < t)) break;
    for (int k = 0; k < cfg.num_marks; ++k) {
      double a = cfg.alpha[e.k][k];
      if (a > 0.0) lam[k] += a * std::exp(-cfg.beta[e.k][k] * (t - e.t));
    }
  }
  return lam;
}

// Integral of the total intensity over [a, b] given events with t_j <= a.
// An event exactly at a contributes its full kernel over the interval.
// Exponential kernels integrate in closed form.
inline double hawkes_compensator(const HawkesConfig& cfg,
                                 const std::vector<Event>& events, double a,
                                 double b) {
  double total = 0.0;
  for (int k = 0; k < cfg.num_marks; ++k) total += cfg.mu[k] * (b - a);
  for (const auto& e : events) {
    if (e.t > a) break;
    for (int k = 0; k < cfg.num_marks; ++k) {
      double al = cfg.alpha[e.k][k];
      if (al > 0.0) {
        double be = cfg.beta[e.k][k];
        total += (al / be) * (std::exp(-be * (a - e.t)) - std::exp(-be * (b - e.t)));
      }
    }
  }
  return total;
}

// Ogata thinning. With decaying kernels the total intensity immediately
// after the current time bounds it until the next event, so that value is
// the rejection envelope.
inline EventSequence simulate_hawkes_sequence(const HawkesConfig& cfg, Rng& rng,
                                              const std::string& seq_id) {
  EventSequence s;
  s.seq_id = seq_id;
  s.T = cfg.T;
  double t = 0.0;
  while (true) {
    std::vector<double> lam = hawkes_intensity(cfg, s.events, t + 0.0);
    // Envelope at t+: kernels are evaluated with strict t_j < t, which at
    // t == t_j excludes the just-accepted event, so add its jump back in.
    double bar = 0.0;
    for (double v : lam) bar += v;
    if (!s.events.empty() && s.events.back().t == t) {
      int kj = s.events.back().k;
      for (int k = 0; k < cfg.num_marks; ++k) bar += cfg.alpha[kj][k];
    }
    if (bar <= 0.0) break;
    t += rng.exponential(bar);
    if (t > cfg.T) break;
    std::vector<double> cand = hawkes_intensity(cfg, s.events, t);
    double total = 0.0;
    for (double v : cand) total += v;
    if (rng.uniform() * bar <= total) {
      double u = rng.uniform() * total;
      int k = 0;
      double acc = cand[0];
      while (k + 1 < cfg.num_marks && u > acc) acc += cand[++k];
      s.events.push_back(Event{t, k});
    }
  }
  return s;
}

inline Dataset simulate_hawkes(const HawkesConfig& cfg, int n_sequences,
                               uint64_t seed) {
  cfg.validate();
  double rho = cfg.branching_spectral_radius();
  if (rho >= 1.0) {
    throw StationarityError("branching spectral radius " + std::to_string(rho) +
                            " >= 1, process explodes");
  }
  Dataset ds;
  ds.num_marks = cfg.num_marks;
  Rng rng(seed);
  for (int i = 0; i < n_sequences; ++i) {
    ds.sequences.push_back(
        simulate_hawkes_sequence(cfg, rng, "sim-" + std::to_string(i)));
  }
  return ds;
}

}  // namespace mtpp::data
