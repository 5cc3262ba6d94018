#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/rng.hpp"

namespace mtpp::quad {

enum class Rule { gauss_legendre, trapezoid, monte_carlo };

inline const char* rule_name(Rule r) {
  switch (r) {
    case Rule::gauss_legendre: return "gauss_legendre";
    case Rule::trapezoid: return "trapezoid";
    case Rule::monte_carlo: return "monte_carlo";
  }
  return "?";
}

inline std::optional<Rule> rule_from_name(const std::string& s) {
  if (s == "gauss_legendre") return Rule::gauss_legendre;
  if (s == "trapezoid") return Rule::trapezoid;
  if (s == "monte_carlo") return Rule::monte_carlo;
  return std::nullopt;
}

struct QuadSpec {
  Rule rule = Rule::gauss_legendre;
  int nodes = 32;       // per inter-event interval
  uint64_t seed = 0;    // monte_carlo only
};

// same spec with any sampling rule swapped for a fixed-node one, for places
// that must reproduce exactly (validation readings, reported metrics)
inline QuadSpec deterministic(QuadSpec q) {
  if (q.rule == Rule::monte_carlo) q.rule = Rule::gauss_legendre;
  return q;
}

// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on the
// Legendre recurrence. Cached per order.
struct GaussLegendre {
  std::vector<double> x, w;
};

inline const GaussLegendre& gauss_legendre(int n) {
  if (n < 1) throw Error("gauss_legendre order must be >= 1");
  static std::map<int, GaussLegendre> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussLegendre gl;
  gl.x.resize(n);
  gl.w.resize(n);
  int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) < 1e-15) break;
    }
    gl.x[i] = -z;
    gl.x[n - 1 - i] = z;
    gl.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    gl.w[n - 1 - i] = gl.w[i];
  }
  return cache.emplace(n, std::move(gl)).first->second;
}

// Deterministic per-interval stream for monte_carlo points, splitmix64 on
// (seed, interval index) so integrals are reproducible under parameter
// perturbation and across runs.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Abscissas and weights for integrating over [a, b] under `spec`.
// monte_carlo uses `stream` to index the deterministic point set.
inline void interval_points(const QuadSpec& spec, double a, double b,
                            uint64_t stream, std::vector<double>& pts,
                            std::vector<double>& wts) {
  pts.clear();
  wts.clear();
  if (!(b >= a)) throw Error("quadrature interval with b < a");
  if (b == a) return;
  switch (spec.rule) {
    case Rule::gauss_legendre: {
      const auto& gl = gauss_legendre(spec.nodes);
      double c = 0.5 * (a + b), hw = 0.5 * (b - a);
      for (int q = 0; q < spec.nodes; ++q) {
        pts.push_back(c + hw * gl.x[q]);
        wts.push_back(hw * gl.w[q]);
      }
      break;
    }
    case Rule::trapezoid: {
      int n = std::max(1, spec.nodes - 1);
      double h = (b - a) / n;
      for (int q = 0; q <= n; ++q) {
        pts.push_back(a + q * h);
        wts.push_back((q == 0 || q == n) ? 0.5 * h : h);
      }
      break;
    }
    case Rule::monte_carlo: {
      Rng rng(mix_seed(spec.seed, stream));
      double w = (b - a) / spec.nodes;
      for (int q = 0; q < spec.nodes; ++q) {
        pts.push_back(a + (b - a) * rng.uniform());
        wts.push_back(w);
      }
      break;
    }
  }
}

struct IntegralEstimate {
  double value = 0.0;
  double stderr_ = 0.0;  // zero for deterministic rules
};

// Numeric integral of a plain callable over [a, b].
inline IntegralEstimate integrate(const std::function<double(double)>& f,
                                  double a, double b, const QuadSpec& spec,
                                  uint64_t stream = 0) {
  std::vector<double> pts, wts;
  interval_points(spec, a, b, stream, pts, wts);
  IntegralEstimate est;
  if (pts.empty()) return est;
  for (size_t i = 0; i < pts.size(); ++i) est.value += wts[i] * f(pts[i]);
  if (spec.rule == Rule::monte_carlo) {
    // Sample variance of (b-a) * f(U) over the n draws.
    double n = static_cast<double>(pts.size());
    double mean = est.value / (b - a);
    double ss = 0.0;
    for (double p : pts) {
      double d = f(p) - mean;
      ss += d * d;
    }
    double var = ss / (n > 1 ? n - 1 : 1);
    est.stderr_ = (b - a) * std::sqrt(var / n);
  }
  return est;
}

}  // namespace mtpp::quad
