#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtpp/adam.hpp"
#include "mtpp/csvio.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/model.hpp"
#include "mtpp/objectives.hpp"
#include "mtpp/params.hpp"

namespace mtpp::conflict {

// Gradients with a norm under this are treated as absent: their angle is
// undefined and they are excluded from the statistics instead of being
// counted as non-conflicting.
inline constexpr double kZeroNorm = 1e-12;
inline constexpr int kHistBins = 40;

namespace detail {

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("gradient vectors of different length");
  }
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// nullopt when either gradient vanishes
inline std::optional<double> cos_angle(const std::vector<double>& g_t,
                                       const std::vector<double>& g_m) {
  double d = detail::dot(g_t, g_m);
  double nt = detail::norm(g_t), nm = detail::norm(g_m);
  if (nt < kZeroNorm || nm < kZeroNorm) return std::nullopt;
  return d / (nt * nm);
}

inline double gms(const std::vector<double>& g_t,
                  const std::vector<double>& g_m) {
  if (g_t.size() != g_m.size()) {
    throw ShapeError("gradient vectors of different length");
  }
  double nt = detail::norm(g_t), nm = detail::norm(g_m);
  if (nt < kZeroNorm && nm < kZeroNorm) {
    throw NumericError("magnitude similarity of two vanishing gradients");
  }
  return 2.0 * nt * nm / (nt * nt + nm * nm);
}

// 1 when the time gradient dominates a conflicting pair, 0 when the mark
// gradient does; nullopt when the pair does not conflict
inline std::optional<int> tpi(const std::vector<double>& g_t,
                              const std::vector<double>& g_m) {
  std::optional<double> c = cos_angle(g_t, g_m);
  if (!c || *c >= 0.0) return std::nullopt;
  return detail::norm(g_t) > detail::norm(g_m) ? 1 : 0;
}

// Fraction of conflicting entries. NaN entries mark undefined angles and are
// dropped before counting.
inline double cg_ratio(const std::vector<double>& cos_series) {
  std::int64_t n = 0, neg = 0;
  for (double c : cos_series) {
    if (std::isnan(c)) continue;
    ++n;
    if (c < 0.0) ++neg;
  }
  if (n == 0) throw DataError("cg_ratio of an empty cosine series");
  return static_cast<double>(neg) / static_cast<double>(n);
}

// Flattened per-block copies of the two task gradients at one step, taken
// before the optimizer moves anything.
struct GradSnapshot {
  std::int64_t step = 0;
  std::string block;
  std::vector<double> g_T, g_M;
};

struct BlockStats {
  std::array<std::int64_t, kHistBins> hist{};
  std::int64_t steps = 0;      // snapshots with a defined angle
  std::int64_t undefined = 0;  // dropped for a vanishing gradient
  std::int64_t conflicts = 0;
  double gms_sum = 0.0;  // accumulated over conflicting steps only
  double tpi_sum = 0.0;

  std::optional<double> cg() const {
    if (steps == 0) return std::nullopt;
    return static_cast<double>(conflicts) / static_cast<double>(steps);
  }
  std::optional<double> mean_gms() const {
    if (conflicts == 0) return std::nullopt;
    return gms_sum / static_cast<double>(conflicts);
  }
  std::optional<double> mean_tpi() const {
    if (conflicts == 0) return std::nullopt;
    return tpi_sum / static_cast<double>(conflicts);
  }
};

// Per-block histograms plus a pooled view that treats every (step, block)
// snapshot as one sample, so the pooled histogram is the sum of the block
// histograms.
struct ConflictStats {
  std::map<std::string, BlockStats> per_block;
  BlockStats pooled;

  void add(const GradSnapshot& s) {
    add_to(per_block[s.block], s);
    add_to(pooled, s);
  }

  void add_all(const std::vector<GradSnapshot>& snaps) {
    for (const auto& s : snaps) add(s);
  }

  bool empty() const { return pooled.steps == 0 && pooled.undefined == 0; }

 private:
  static void add_to(BlockStats& b, const GradSnapshot& s) {
    std::optional<double> c = cos_angle(s.g_T, s.g_M);
    if (!c) {
      ++b.undefined;
      return;
    }
    ++b.steps;
    int bin = static_cast<int>(std::floor((*c + 1.0) * 0.5 * kHistBins));
    if (bin < 0) bin = 0;
    if (bin >= kHistBins) bin = kHistBins - 1;
    ++b.hist[bin];
    if (*c < 0.0) {
      ++b.conflicts;
      b.gms_sum += gms(s.g_T, s.g_M);
      b.tpi_sum += static_cast<double>(*tpi(s.g_T, s.g_M));
    }
  }
};

// Full-store copies of d(L_T)/d(theta) and d(L_M)/d(theta), indexed like
// ParamStore::blocks().
struct SplitGrads {
  std::vector<ad::Tensor> g_T, g_M;
};

// Two independent backward passes over one forward graph, grads zeroed in
// between. Afterwards every block's grad holds the elementwise sum
// g_T + g_M, so an optimizer step after this call consumes exactly what the
// snapshots describe.
inline SplitGrads split_backward(ad::Tape& t, ad::ParamStore& ps, ad::Var l_t,
                                 ad::Var l_m) {
  SplitGrads sg;
  sg.g_T.reserve(ps.size());
  sg.g_M.reserve(ps.size());
  ps.zero_grad();
  t.backward(l_t);
  for (const auto& b : ps.blocks()) sg.g_T.push_back(b.grad);
  ps.zero_grad();
  t.backward(l_m);
  for (const auto& b : ps.blocks()) sg.g_M.push_back(b.grad);
  for (size_t i = 0; i < ps.size(); ++i) {
    ad::ParamBlock& b = ps.blocks()[i];
    for (int j = 0; j < b.grad.size(); ++j) {
      b.grad.v[j] = sg.g_T[i].v[j] + sg.g_M[i].v[j];
    }
  }
  return sg;
}

// Snapshots for the blocks both tasks can reach. Task-owned blocks see only
// their own loss, so they are skipped unless include_owned asks for them
// (their partner gradient is recorded as the zero it is).
inline std::vector<GradSnapshot> snapshots_from(const ad::ParamStore& ps,
                                                const SplitGrads& sg,
                                                std::int64_t step,
                                                bool include_owned = false) {
  std::vector<GradSnapshot> out;
  const auto& blocks = ps.blocks();
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (!include_owned && blocks[i].owner != ad::Owner::shared) continue;
    GradSnapshot s;
    s.step = step;
    s.block = blocks[i].name;
    s.g_T = sg.g_T[i].v;
    s.g_M = sg.g_M[i].v;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<GradSnapshot> capture_two_losses(
    models::Model& m, const std::vector<const data::EventSequence*>& batch,
    obj::NllForm form, const quad::QuadSpec& qs, std::int64_t step = 0,
    bool include_owned = false) {
  ad::Tape t;
  obj::BatchLoss bl = obj::batch_nll(t, m, batch, form, qs);
  SplitGrads sg = split_backward(t, m.params, bl.L_T, bl.L_M);
  return snapshots_from(m.params, sg, step, include_owned);
}

// Histogram table and summary table in one file, blocks in name order with
// the pooled row last. An empty stats object still produces the headers so
// settings without shared blocks leave a well-formed, row-free file.
inline void export_histograms(const ConflictStats& stats,
                              const std::string& path,
                              const std::string& comment = "") {
  csv::Writer w(path);
  if (!comment.empty()) w.comment(comment);
  w.raw("block,bin_lo,bin_hi,count");
  auto hist_rows = [&](const std::string& name, const BlockStats& b) {
    for (int i = 0; i < kHistBins; ++i) {
      double lo = -1.0 + 2.0 * i / kHistBins;
      double hi = -1.0 + 2.0 * (i + 1) / kHistBins;
      w.row({name, csv::label(lo), csv::label(hi),
             std::to_string(b.hist[i])});
    }
  };
  for (const auto& [name, b] : stats.per_block) hist_rows(name, b);
  if (!stats.empty()) hist_rows("pooled", stats.pooled);

  w.blank();
  w.raw("block,cg,mean_gms,mean_tpi,steps,undefined");
  auto summary_row = [&](const std::string& name, const BlockStats& b) {
    auto opt = [](std::optional<double> v) {
      return v ? csv::num(*v) : std::string();
    };
    w.row({name, opt(b.cg()), opt(b.mean_gms()), opt(b.mean_tpi()),
           std::to_string(b.steps), std::to_string(b.undefined)});
  };
  for (const auto& [name, b] : stats.per_block) summary_row(name, b);
  if (!stats.empty()) summary_row("pooled", stats.pooled);
  w.close();
}

// One-step comparison of a fully shared model against a duplicated model
// started from the same values. For a learning rate a, first-order Taylor
// gives
//
//   L_disjoint - L_shared = 2 a <g_T, g_M> + o(a)
//
// so a conflicting batch makes the duplicated scheme strictly better for
// small a. `rows` reports the measured delta and delta/a per grid entry;
// `limit` is the predicted slope 2 <g_T, g_M>.
struct SplitAdvantage {
  double cos_phi = 0.0;
  double norm_T = 0.0;
  double norm_M = 0.0;
  double limit = 0.0;
  double base_loss = 0.0;
  struct Row {
    double alpha = 0.0;
    double delta = 0.0;
    double ratio = 0.0;  // delta / alpha
  };
  std::vector<Row> rows;
};

namespace detail {

inline double batch_total(models::Model& m,
                          const std::vector<const data::EventSequence*>& batch,
                          obj::NllForm form, const quad::QuadSpec& qs) {
  ad::Tape t;
  obj::BatchLoss bl = obj::batch_nll(t, m, batch, form, qs);
  return t.scalar(bl.L_T) + t.scalar(bl.L_M);
}

inline std::vector<ad::Tensor> save_values(const ad::ParamStore& ps) {
  std::vector<ad::Tensor> out;
  out.reserve(ps.size());
  for (const auto& b : ps.blocks()) out.push_back(b.value);
  return out;
}

inline void restore_values(ad::ParamStore& ps,
                           const std::vector<ad::Tensor>& vals) {
  for (size_t i = 0; i < ps.size(); ++i) ps.blocks()[i].value = vals[i];
}

inline std::vector<double> flatten(const std::vector<ad::Tensor>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.v.begin(), t.v.end());
  return out;
}

}  // namespace detail

inline SplitAdvantage split_advantage_check(
    models::Model& shared, models::Model& split,
    const std::vector<const data::EventSequence*>& batch,
    const std::vector<double>& lr_grid, obj::NllForm form,
    const quad::QuadSpec& qs, bool require_conflict = true) {
  SplitAdvantage rep;
  rep.base_loss = detail::batch_total(shared, batch, form, qs);
  double split_base = detail::batch_total(split, batch, form, qs);
  if (std::fabs(rep.base_loss - split_base) > 1e-9) {
    throw ConfigError(
        "the shared and duplicated models disagree before any update; "
        "initialize the duplicated model from the shared one");
  }

  // pooled task gradients of the shared model, one vector over all blocks
  SplitGrads sg;
  {
    ad::Tape t;
    obj::BatchLoss bl = obj::batch_nll(t, shared, batch, form, qs);
    sg = split_backward(t, shared.params, bl.L_T, bl.L_M);
  }
  std::vector<double> g_t = detail::flatten(sg.g_T);
  std::vector<double> g_m = detail::flatten(sg.g_M);
  std::optional<double> c = cos_angle(g_t, g_m);
  if (!c) throw NumericError("task gradients vanish on this batch");
  rep.cos_phi = *c;
  rep.norm_T = detail::norm(g_t);
  rep.norm_M = detail::norm(g_m);
  rep.limit = 2.0 * detail::dot(g_t, g_m);
  if (require_conflict && rep.cos_phi >= 0.0) {
    throw DataError("no gradient conflict on this batch; supply another");
  }

  // the duplicated model's blocks are task-owned, so one combined backward
  // already gives every copy exactly its own task gradient
  {
    ad::Tape t;
    obj::BatchLoss bl = obj::batch_nll(t, split, batch, form, qs);
    split.params.zero_grad();
    t.backward(t.add(bl.L_T, bl.L_M));
  }

  std::vector<ad::Tensor> shared_vals = detail::save_values(shared.params);
  std::vector<ad::Tensor> split_vals = detail::save_values(split.params);
  for (double alpha : lr_grid) {
    ad::sgd_step(shared.params, alpha);
    double l_shared = detail::batch_total(shared, batch, form, qs);
    detail::restore_values(shared.params, shared_vals);

    ad::sgd_step(split.params, alpha);
    double l_split = detail::batch_total(split, batch, form, qs);
    detail::restore_values(split.params, split_vals);

    SplitAdvantage::Row row;
    row.alpha = alpha;
    row.delta = l_split - l_shared;
    row.ratio = row.delta / alpha;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace mtpp::conflict
