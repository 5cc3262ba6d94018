#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mtpp/adam.hpp"
#include "mtpp/conflict.hpp"
#include "mtpp/csvio.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/events.hpp"
#include "mtpp/model.hpp"
#include "mtpp/objectives.hpp"
#include "mtpp/params.hpp"
#include "mtpp/quadrature.hpp"
#include "mtpp/rng.hpp"

namespace mtpp::train {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 500;
  int patience = 50;
  uint64_t seed = 1;
  quad::QuadSpec quad;
  bool capture_conflicts = false;
  int capture_stride = 1;
  // the update and the stopping criterion use L_T / loss_scale + L_M; the
  // history always records the unscaled likelihood terms
  double loss_scale = 1.0;

  void validate() const {
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) {
      throw ConfigError("patience must lie in [1, max_epochs)");
    }
    if (capture_stride < 1) throw ConfigError("capture stride must be >= 1");
    if (!(loss_scale > 0.0)) throw ConfigError("loss scale must be > 0");
  }
};

// One stopping criterion. Strict improvement resets the countdown, any other
// reading ages it.
struct TaskStop {
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stale = 0;
  bool frozen = false;
};

// Feeds one validation reading; returns true on the reading that exhausts
// the patience.
inline bool stop_update(TaskStop& s, double val, int patience, int epoch) {
  if (val < s.best_val) {
    s.best_val = val;
    s.best_epoch = epoch;
    s.stale = 0;
    return false;
  }
  s.stale += 1;
  if (!s.frozen && s.stale >= patience) {
    s.frozen = true;
    return true;
  }
  return false;
}

// Settings with fully task-owned parameters stop each task on its own
// validation term and freeze it independently; the rest stop once on the
// total.
inline bool dual_stopping(models::Setting s) {
  return s == models::Setting::plusplus || s == models::Setting::dupdisjoint;
}

struct EarlyStopState {
  bool dual = false;
  TaskStop total;
  TaskStop time;
  TaskStop mark;
};

// Stopping decisions must not move with a sampling rule, so monte carlo
// training still validates on a fixed-node rule of the same order.
inline quad::QuadSpec validation_quad(const quad::QuadSpec& q) {
  return quad::deterministic(q);
}

struct EpochRow {
  int epoch = 0;
  double train_LT = 0.0;
  double train_LM = 0.0;
  double val_LT = 0.0;
  double val_LM = 0.0;
  bool frozen_T = false;
  bool frozen_M = false;
};

struct History {
  std::vector<EpochRow> rows;

  void write_csv(const std::string& path,
                 const std::string& comment = "") const {
    csv::Writer w(path);
    if (!comment.empty()) w.comment(comment);
    w.row({"epoch", "train_LT", "train_LM", "val_LT", "val_LM", "frozen_T",
           "frozen_M"});
    for (const auto& r : rows) {
      w.row({std::to_string(r.epoch), csv::num(r.train_LT),
             csv::num(r.train_LM), csv::num(r.val_LT), csv::num(r.val_LM),
             r.frozen_T ? "1" : "0", r.frozen_M ? "1" : "0"});
    }
    w.close();
  }
};

using Batch = std::vector<const data::EventSequence*>;

struct EpochSummary {
  double train_LT = 0.0;
  double train_LM = 0.0;
};

// One pass over the given batches: forward, both task backwards, one Adam
// step per batch. Gradients are always taken per task and then summed, so
// the optimizer input does not depend on whether snapshots are kept.
// Losses are recorded before each step and averaged per sequence.
inline EpochSummary train_epoch(models::Model& m,
                                const std::vector<Batch>& batches,
                                const TrainConfig& cfg, ad::Adam& opt,
                                conflict::ConflictStats* sink,
                                std::int64_t& step) {
  EpochSummary out;
  size_t total = 0;
  for (size_t bi = 0; bi < batches.size(); ++bi) {
    const Batch& batch = batches[bi];
    try {
      ad::Tape t;
      obj::BatchLoss bl =
          obj::batch_nll(t, m, batch, obj::NllForm::density, cfg.quad);
      ad::Var lt = bl.L_T;
      if (cfg.loss_scale != 1.0) lt = t.scale(bl.L_T, 1.0 / cfg.loss_scale);
      conflict::SplitGrads sg = conflict::split_backward(t, m.params, lt, bl.L_M);
      if (sink && cfg.capture_conflicts && step % cfg.capture_stride == 0) {
        sink->add_all(conflict::snapshots_from(m.params, sg, step));
      }
      m.params.check_grads_finite();
      opt.step(m.params);

      double b = static_cast<double>(batch.size());
      out.train_LT += t.scalar(bl.L_T) * b;
      out.train_LM += t.scalar(bl.L_M) * b;
      total += batch.size();
      ++step;
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(bi + 1) + ": " + e.what());
    }
  }
  out.train_LT /= static_cast<double>(total);
  out.train_LM /= static_cast<double>(total);
  return out;
}

struct FitResult {
  History history;
  conflict::ConflictStats conflicts;
  EarlyStopState stop;
};

// Mini-batch Adam with early stopping and best-state restoration. The model
// is trained in place; on return its parameters sit at the best validation
// epoch (per task when stopping is dual).
inline FitResult fit(models::Model& m, const data::Dataset& train,
                     const data::Dataset& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) throw DataError("fit needs a nonempty training set");
  if (val.size() == 0) throw DataError("fit needs a nonempty validation set");
  if (train.num_marks > m.spec().num_marks ||
      val.num_marks > m.spec().num_marks) {
    throw ConfigError("the dataset uses more mark types than the model has");
  }

  FitResult out;
  out.stop.dual = dual_stopping(m.spec().setting);
  if (out.stop.dual) {
    for (const auto& b : m.params.blocks()) {
      if (b.owner == ad::Owner::shared) {
        throw ConfigError("per-task early stopping needs task-owned blocks, '" +
                          b.name + "' is shared");
      }
    }
  }
  for (auto& b : m.params.blocks()) b.frozen = false;

  quad::QuadSpec vq = validation_quad(cfg.quad);
  ad::Adam opt(cfg.lr);
  Rng shuffle_rng(cfg.seed);
  std::int64_t step = 0;

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto values_copy = [&m] {
    std::vector<ad::Tensor> vs;
    vs.reserve(m.params.size());
    for (const auto& b : m.params.blocks()) vs.push_back(b.value);
    return vs;
  };
  std::vector<ad::Tensor> best_total, best_time, best_mark;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::vector<Batch> batches;
    for (size_t i = 0; i < order.size();
         i += static_cast<size_t>(cfg.batch_size)) {
      Batch b;
      size_t hi =
          std::min(order.size(), i + static_cast<size_t>(cfg.batch_size));
      for (size_t j = i; j < hi; ++j) b.push_back(&train.sequences[order[j]]);
      batches.push_back(std::move(b));
    }

    EpochSummary es;
    obj::NLLBreakdown vb;
    try {
      es = train_epoch(m, batches, cfg, opt, &out.conflicts, step);
      vb = obj::nll_eval(m, val, obj::NllForm::density, vq);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    if (out.stop.dual) {
      if (!out.stop.time.frozen) {
        if (stop_update(out.stop.time, vb.L_T, cfg.patience, epoch)) {
          m.params.set_frozen(ad::Owner::time, true);
        }
        if (out.stop.time.best_epoch == epoch) best_time = values_copy();
      }
      if (!out.stop.mark.frozen) {
        if (stop_update(out.stop.mark, vb.L_M, cfg.patience, epoch)) {
          m.params.set_frozen(ad::Owner::mark, true);
        }
        if (out.stop.mark.best_epoch == epoch) best_mark = values_copy();
      }
    } else {
      double tot = vb.L_T / cfg.loss_scale + vb.L_M;
      stop_update(out.stop.total, tot, cfg.patience, epoch);
      if (out.stop.total.best_epoch == epoch) best_total = values_copy();
    }

    bool f_t = out.stop.dual ? out.stop.time.frozen : out.stop.total.frozen;
    bool f_m = out.stop.dual ? out.stop.mark.frozen : out.stop.total.frozen;
    out.history.rows.push_back(
        {epoch, es.train_LT, es.train_LM, vb.L_T, vb.L_M, f_t, f_m});
    if (f_t && f_m) break;
  }

  auto restore = [&m](const std::vector<ad::Tensor>& vs,
                      std::optional<ad::Owner> who) {
    for (size_t i = 0; i < m.params.size(); ++i) {
      ad::ParamBlock& b = m.params.blocks()[i];
      if (!who || b.owner == *who) b.value = vs[i];
    }
  };
  if (out.stop.dual) {
    restore(best_time, ad::Owner::time);
    restore(best_mark, ad::Owner::mark);
  } else {
    restore(best_total, std::nullopt);
  }
  return out;
}

struct BalanceRow {
  std::string setting;
  size_t total = 0;
  size_t encoder = 0;
  size_t decoder = 0;
  double encoder_fraction = 0.0;
  double decoder_fraction = 0.0;
  bool flagged = false;
};

// Parameter budgets per sharing setting, measured by instantiating each
// spec. The first row is the reference; totals more than 10% away from it
// are flagged so cross-setting comparisons stay capacity-matched.
inline std::vector<BalanceRow> balance_report(
    const std::vector<models::ModelSpec>& specs) {
  if (specs.empty()) throw ConfigError("balance report needs at least one spec");
  for (const auto& s : specs) {
    if (s.family != specs.front().family) {
      throw ConfigError("balance report compares settings of one family");
    }
  }
  std::vector<BalanceRow> rows;
  double ref = 0.0;
  for (const auto& spec : specs) {
    models::Model m = models::Model::build(spec);
    BalanceRow r;
    r.setting = models::setting_name(spec.setting);
    for (const auto& b : m.params.blocks()) {
      size_t n = static_cast<size_t>(b.value.size());
      r.total += n;
      if (b.name.rfind("enc", 0) == 0) {
        r.encoder += n;
      } else {
        r.decoder += n;
      }
    }
    r.encoder_fraction =
        static_cast<double>(r.encoder) / static_cast<double>(r.total);
    r.decoder_fraction =
        static_cast<double>(r.decoder) / static_cast<double>(r.total);
    if (rows.empty()) ref = static_cast<double>(r.total);
    r.flagged = std::fabs(static_cast<double>(r.total) - ref) > 0.1 * ref;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mtpp::train
