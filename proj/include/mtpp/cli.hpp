#pragma once

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtpp/checkpoint.hpp"
#include "mtpp/conflict.hpp"
#include "mtpp/csvio.hpp"
#include "mtpp/dataset_io.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/evalsuite.hpp"
#include "mtpp/events.hpp"
#include "mtpp/hawkes.hpp"
#include "mtpp/model.hpp"
#include "mtpp/objectives.hpp"
#include "mtpp/trainer.hpp"
#include "mtpp/version.hpp"

namespace mtpp::cli {

namespace fs = std::filesystem;

// ----- config grammar -----
//
// Flat dotted keys, one `key = value` per line, full-line # comments.
// Every key must be in the schema below; a config may carry keys its
// command does not consume (a run config can keep the synth block that
// produced its data), but misspelled keys are always an error.

enum class Kind { integer, real, boolean, text, reals, matrix };

struct SchemaEntry {
  const char* key;
  Kind kind;
};

inline const std::vector<SchemaEntry>& schema() {
  static const std::vector<SchemaEntry> entries = {
      {"seed", Kind::integer},
      {"out", Kind::text},
      {"synth.num_marks", Kind::integer},
      {"synth.T", Kind::real},
      {"synth.sequences", Kind::integer},
      {"synth.mu", Kind::reals},
      {"synth.alpha", Kind::matrix},
      {"synth.beta", Kind::matrix},
      {"data.train", Kind::text},
      {"data.val", Kind::text},
      {"data.test", Kind::text},
      {"model.family", Kind::text},
      {"model.setting", Kind::text},
      {"model.num_marks", Kind::integer},
      {"model.d_t", Kind::integer},
      {"model.d_k", Kind::integer},
      {"model.d_h", Kind::integer},
      {"model.d_1", Kind::integer},
      {"model.mixtures", Kind::integer},
      {"model.channels", Kind::integer},
      {"model.fnn_act", Kind::text},
      {"quad.rule", Kind::text},
      {"quad.nodes", Kind::integer},
      {"train.lr", Kind::real},
      {"train.batch_size", Kind::integer},
      {"train.max_epochs", Kind::integer},
      {"train.patience", Kind::integer},
      {"train.loss_scale", Kind::real},
      {"train.capture_conflicts", Kind::boolean},
      {"train.capture_stride", Kind::integer},
      {"eval.ece_bins", Kind::integer},
      {"eval.reliability_bins", Kind::integer},
      {"eval.median_tol", Kind::real},
  };
  return entries;
}

inline const SchemaEntry* schema_entry(const std::string& key) {
  for (const auto& e : schema()) {
    if (key == e.key) return &e;
  }
  return nullptr;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  long long x = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(key + ": cannot parse '" + v + "' as an integer");
  }
  return x;
}

inline double parse_real(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  }
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_reals(const std::string& key,
                                       const std::string& v) {
  std::vector<double> out;
  for (const auto& piece : split_on(v, ',')) {
    out.push_back(parse_real(key, piece));
  }
  return out;
}

inline std::vector<std::vector<double>> parse_matrix(const std::string& key,
                                                     const std::string& v) {
  std::vector<std::vector<double>> out;
  for (const auto& row : split_on(v, ';')) {
    out.push_back(parse_reals(key, row));
  }
  return out;
}

inline void check_value(const SchemaEntry& e, const std::string& v) {
  switch (e.kind) {
    case Kind::integer: parse_int(e.key, v); break;
    case Kind::real: parse_real(e.key, v); break;
    case Kind::boolean: parse_bool(e.key, v); break;
    case Kind::reals: parse_reals(e.key, v); break;
    case Kind::matrix: parse_matrix(e.key, v); break;
    case Kind::text: break;
  }
}

struct ParsedConfig {
  std::string path;
  std::map<std::string, std::string> kv;
};

inline ParsedConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  ParsedConfig pc;
  pc.path = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string at = path + ":" + std::to_string(lineno);
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(at + ": expected 'key = value'");
    }
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + ": empty key");
    if (val.empty()) throw ConfigError(at + ": empty value for '" + key + "'");
    const SchemaEntry* se = schema_entry(key);
    if (!se) throw ConfigError(at + ": unknown key '" + key + "'");
    if (pc.kv.count(key)) {
      throw ConfigError(at + ": duplicate key '" + key + "'");
    }
    check_value(*se, val);
    pc.kv[key] = val;
  }
  return pc;
}

// ----- resolution -----

struct Overrides {
  std::optional<std::int64_t> seed;
  std::optional<std::string> family;
  std::optional<std::string> setting;
};

// A fully resolved run: every default materialized, every override applied.
// `echo` holds the canonical key/value view that gets written next to the
// artifacts; its serialized form is what the config hash covers.
struct RunConfig {
  std::int64_t seed = 0;
  std::string out;

  data::HawkesConfig hawkes;
  int synth_sequences = 0;

  std::string train_path, val_path, test_path;
  models::ModelSpec model;
  train::TrainConfig tcfg;
  eval::EvalConfig ecfg;

  std::map<std::string, std::string> echo;
};

inline std::string join_reals(const std::vector<double>& v, char sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += csv::num(v[i]);
  }
  return s;
}

inline std::string join_matrix(const std::vector<std::vector<double>>& m) {
  std::string s;
  for (size_t i = 0; i < m.size(); ++i) {
    if (i) s += ';';
    s += join_reals(m[i], ',');
  }
  return s;
}

namespace detail {

struct Getter {
  const std::map<std::string, std::string>& kv;
  RunConfig& rc;

  std::int64_t geti(const char* k, std::int64_t dflt) const {
    auto it = kv.find(k);
    std::int64_t v = it == kv.end() ? dflt : parse_int(k, it->second);
    rc.echo[k] = std::to_string(v);
    return v;
  }
  double getr(const char* k, double dflt) const {
    auto it = kv.find(k);
    double v = it == kv.end() ? dflt : parse_real(k, it->second);
    rc.echo[k] = csv::num(v);
    return v;
  }
  bool getb(const char* k, bool dflt) const {
    auto it = kv.find(k);
    bool v = it == kv.end() ? dflt : parse_bool(k, it->second);
    rc.echo[k] = v ? "true" : "false";
    return v;
  }
  std::string gets(const char* k, const std::string& dflt) const {
    auto it = kv.find(k);
    std::string v = it == kv.end() ? dflt : it->second;
    if (!v.empty()) rc.echo[k] = v;
    return v;
  }
};

}  // namespace detail

enum class Use { synth, run };

inline RunConfig resolve_config(const ParsedConfig& pc, const Overrides& ov,
                                Use use) {
  std::map<std::string, std::string> kv = pc.kv;
  if (ov.seed) kv["seed"] = std::to_string(*ov.seed);
  if (ov.family) kv["model.family"] = *ov.family;
  if (ov.setting) kv["model.setting"] = *ov.setting;

  RunConfig rc;
  detail::Getter g{kv, rc};

  if (!kv.count("seed")) {
    throw ConfigError("seed is required: set 'seed' in " + pc.path +
                      " or pass --seed");
  }
  rc.seed = g.geti("seed", 0);
  rc.out = kv.count("out") ? kv.at("out") : "";

  if (use == Use::synth) {
    int K = static_cast<int>(g.geti("synth.num_marks", 2));
    if (K < 1) throw ConfigError("synth.num_marks must be >= 1");
    rc.hawkes.num_marks = K;
    rc.hawkes.T = g.getr("synth.T", 10.0);
    rc.synth_sequences = static_cast<int>(g.geti("synth.sequences", 100));

    auto it = kv.find("synth.mu");
    rc.hawkes.mu = it == kv.end() ? std::vector<double>(K, 0.2)
                                  : parse_reals("synth.mu", it->second);
    if (static_cast<int>(rc.hawkes.mu.size()) != K) {
      throw ConfigError("synth.mu: expected " + std::to_string(K) +
                        " entries");
    }
    rc.echo["synth.mu"] = join_reals(rc.hawkes.mu, ',');

    auto matrix = [&](const char* key, double diag, double off) {
      auto mit = kv.find(key);
      std::vector<std::vector<double>> m;
      if (mit == kv.end()) {
        m.assign(K, std::vector<double>(K, off));
        for (int i = 0; i < K; ++i) m[i][i] = diag;
      } else {
        m = parse_matrix(key, mit->second);
      }
      if (static_cast<int>(m.size()) != K) {
        throw ConfigError(std::string(key) + ": expected " +
                          std::to_string(K) + " rows");
      }
      for (const auto& row : m) {
        if (static_cast<int>(row.size()) != K) {
          throw ConfigError(std::string(key) + ": expected " +
                            std::to_string(K) + " columns per row");
        }
      }
      rc.echo[key] = join_matrix(m);
      return m;
    };
    rc.hawkes.alpha = matrix("synth.alpha", 0.3, 0.1);
    rc.hawkes.beta = matrix("synth.beta", 1.0, 1.0);
    return rc;
  }

  rc.train_path = g.gets("data.train", "");
  rc.val_path = g.gets("data.val", "");
  rc.test_path = g.gets("data.test", "");

  std::string fam = g.gets("model.family", "rmtpp");
  auto family = models::family_from_name(fam);
  if (!family) throw ConfigError("model.family: unknown value '" + fam + "'");
  rc.model.family = *family;

  std::string set = g.gets("model.setting", "base");
  auto setting = models::setting_from_name(set);
  if (!setting) {
    throw ConfigError("model.setting: unknown value '" + set + "'");
  }
  rc.model.setting = *setting;

  // zero marks means "take the vocabulary from the data"; the echo is
  // patched once the count is known so eval can rebuild without the data
  rc.model.num_marks = static_cast<int>(g.geti("model.num_marks", 0));
  if (rc.model.num_marks < 0) {
    throw ConfigError("model.num_marks must be >= 0");
  }

  models::Dims dflt;
  rc.model.dims.d_t = static_cast<int>(g.geti("model.d_t", dflt.d_t));
  rc.model.dims.d_k = static_cast<int>(g.geti("model.d_k", dflt.d_k));
  rc.model.dims.d_h = static_cast<int>(g.geti("model.d_h", dflt.d_h));
  rc.model.dims.d_1 = static_cast<int>(g.geti("model.d_1", dflt.d_1));
  rc.model.dims.mixtures =
      static_cast<int>(g.geti("model.mixtures", dflt.mixtures));
  rc.model.dims.channels =
      static_cast<int>(g.geti("model.channels", dflt.channels));

  std::string act = g.gets("model.fnn_act", "softplus");
  auto fnn_act = models::fnn_activation_from_name(act);
  if (!fnn_act) throw ConfigError("model.fnn_act: unknown value '" + act + "'");
  rc.model.fnn_act = *fnn_act;

  std::string rule = g.gets("quad.rule", "gauss_legendre");
  auto qr = quad::rule_from_name(rule);
  if (!qr) throw ConfigError("quad.rule: unknown value '" + rule + "'");
  rc.model.quad.rule = *qr;
  rc.model.quad.nodes = static_cast<int>(g.geti("quad.nodes", 32));
  rc.model.quad.seed = static_cast<uint64_t>(rc.seed);
  rc.model.seed = static_cast<uint64_t>(rc.seed);

  rc.tcfg.lr = g.getr("train.lr", 1e-3);
  rc.tcfg.batch_size = static_cast<int>(g.geti("train.batch_size", 32));
  rc.tcfg.max_epochs = static_cast<int>(g.geti("train.max_epochs", 500));
  rc.tcfg.patience = static_cast<int>(g.geti("train.patience", 50));
  rc.tcfg.loss_scale = g.getr("train.loss_scale", 1.0);
  rc.tcfg.capture_conflicts = g.getb("train.capture_conflicts", true);
  rc.tcfg.capture_stride =
      static_cast<int>(g.geti("train.capture_stride", 1));
  rc.tcfg.seed = static_cast<uint64_t>(rc.seed);
  rc.tcfg.quad = rc.model.quad;

  rc.ecfg.quad = rc.model.quad;
  rc.ecfg.ece_bins = static_cast<int>(g.geti("eval.ece_bins", 10));
  rc.ecfg.reliability_bins =
      static_cast<int>(g.geti("eval.reliability_bins", 10));
  rc.ecfg.median_tol = g.getr("eval.median_tol", 1e-6);
  return rc;
}

// ----- provenance stamp -----

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string echo_text(const std::map<std::string, std::string>& echo) {
  std::string s;
  for (const auto& [k, v] : echo) s += k + " = " + v + "\n";
  return s;
}

inline std::string stamp(const std::string& echo) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(echo)));
  return std::string("mtpp ") + kVersion + " config 0x" + hex;
}

// ----- commands -----

inline int cmd_synth(const RunConfig& rc, const std::string& out_path,
                     std::ostream& out) {
  if (out_path.empty()) {
    throw ConfigError("no output path; pass --out or set 'out'");
  }
  data::Dataset ds = data::simulate_hawkes(rc.hawkes, rc.synth_sequences,
                                           static_cast<uint64_t>(rc.seed));
  fs::path parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  data::save_jsonl(ds, out_path);

  std::string echo = echo_text(rc.echo);
  std::ofstream meta(out_path + ".meta");
  if (!meta) throw IoError("cannot write " + out_path + ".meta");
  meta << "# " << stamp(echo) << "\n" << echo;
  meta.close();

  out << "wrote " << ds.sequences.size() << " sequences ("
      << ds.total_events() << " events) to " << out_path << "\n";
  return 0;
}

struct TrainedRun {
  RunConfig rc;
  train::FitResult fit;
  models::Model model;
};

inline TrainedRun train_run(RunConfig rc, const std::string& run_dir,
                            std::ostream& out) {
  if (rc.train_path.empty() || rc.val_path.empty()) {
    throw ConfigError("training needs data.train and data.val");
  }
  rc.tcfg.validate();

  int K = rc.model.num_marks;
  data::Dataset train = data::load_jsonl(rc.train_path, K);
  data::Dataset val = data::load_jsonl(rc.val_path, K);
  std::optional<data::Dataset> test;
  if (!rc.test_path.empty()) test = data::load_jsonl(rc.test_path, K);
  if (K == 0) {
    K = std::max(train.num_marks, val.num_marks);
    if (test) K = std::max(K, test->num_marks);
    train.num_marks = val.num_marks = K;
    if (test) test->num_marks = K;
  }
  rc.model.num_marks = K;
  rc.echo["model.num_marks"] = std::to_string(K);

  models::Model m = models::Model::build(rc.model);
  train::FitResult fr = train::fit(m, train, val, rc.tcfg);

  fs::create_directories(run_dir);
  std::string echo = echo_text(rc.echo);
  {
    std::ofstream cfg(run_dir + "/config.resolved");
    if (!cfg) throw IoError("cannot write " + run_dir + "/config.resolved");
    cfg << echo;
  }
  std::string st = stamp(echo);
  ad::save_checkpoint(m.params, run_dir + "/checkpoint.json");
  fr.history.write_csv(run_dir + "/history.csv", st);
  conflict::export_histograms(fr.conflicts, run_dir + "/conflicts.csv", st);

  out << "run " << run_dir << "\n";
  out << "family " << models::family_name(rc.model.family) << " setting "
      << models::setting_name(rc.model.setting) << " marks " << K << "\n";
  out << "epochs " << fr.history.rows.size() << "\n";
  return TrainedRun{std::move(rc), std::move(fr), std::move(m)};
}

inline int cmd_train(const RunConfig& rc, const std::string& run_dir,
                     std::ostream& out) {
  if (run_dir.empty()) {
    throw ConfigError("no output path; pass --out or set 'out'");
  }
  train_run(rc, run_dir, out);
  return 0;
}

inline int cmd_eval(const std::string& run_dir, const std::string& data_path,
                    const std::string& out_dir, std::ostream& out) {
  std::string cfg_path = run_dir + "/config.resolved";
  if (!fs::exists(cfg_path)) {
    throw IoError("no run configuration at " + cfg_path);
  }
  RunConfig rc = resolve_config(read_config_file(cfg_path), {}, Use::run);

  std::string ckpt = run_dir + "/checkpoint.json";
  if (!fs::exists(ckpt)) throw IoError("no checkpoint at " + ckpt);

  std::string test_path = data_path.empty() ? rc.test_path : data_path;
  if (test_path.empty()) {
    throw ConfigError("no test data; pass --data or set data.test");
  }
  if (rc.model.num_marks < 1) {
    throw ConfigError("resolved config lacks model.num_marks");
  }
  data::Dataset test = data::load_jsonl(test_path, rc.model.num_marks);

  models::Model m = models::Model::build(rc.model);
  ad::load_checkpoint(m.params, ckpt);

  eval::Report rep = eval::evaluate(m, test, rc.ecfg);
  std::string dir = out_dir.empty() ? run_dir : out_dir;
  eval::write_report(rep, dir, stamp(echo_text(rc.echo)));

  out << "events " << rep.events << "\n";
  out << "L_T " << csv::num(rep.L_T) << "  L_M " << csv::num(rep.L_M) << "\n";
  out << "PCE " << csv::num(rep.pce) << "  ECE " << csv::num(rep.ece)
      << "  MAE " << csv::num(rep.mae) << "\n";
  out << "acc@1 " << csv::num(rep.acc1) << "  acc@3 " << csv::num(rep.acc3)
      << "  acc@5 " << csv::num(rep.acc5) << "  MRR " << csv::num(rep.mrr)
      << "\n";
  return 0;
}

namespace detail {

struct SummaryRow {
  std::string block;
  std::string cg, gms, tpi;
  std::int64_t steps = 0;
  std::int64_t undefined = 0;
};

}  // namespace detail

inline int cmd_diagnose(const std::string& run_dir, std::ostream& out) {
  std::string path = run_dir + "/conflicts.csv";
  if (!fs::exists(path)) {
    throw IoError("no conflict diagnostics at " + path + "; train with "
                  "train.capture_conflicts = true first");
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);

  size_t i = 0;
  while (i < lines.size() && (lines[i].empty() || lines[i][0] == '#')) ++i;
  if (i >= lines.size() || lines[i] != "block,bin_lo,bin_hi,count") {
    throw DataError(path + " is not a conflict log");
  }
  ++i;

  // histogram rows come in the same bin order for every block, so pooling
  // is a per-position sum over the non-pooled blocks
  std::vector<std::pair<std::string, std::int64_t>> bins;  // "lo,hi" -> count
  std::string first_block;
  size_t pos = 0;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    auto cells = split_on(lines[i], ',');
    if (cells.size() != 4) throw DataError(path + ": bad histogram row");
    if (cells[0] == "pooled") continue;
    if (first_block.empty()) first_block = cells[0];
    if (cells[0] == first_block) {
      bins.push_back({cells[1] + "," + cells[2],
                      parse_int("count", cells[3])});
    } else {
      pos = pos % bins.size();
      bins[pos].second += parse_int("count", cells[3]);
      ++pos;
    }
  }
  while (i < lines.size() && lines[i].empty()) ++i;
  if (i >= lines.size() ||
      lines[i] != "block,cg,mean_gms,mean_tpi,steps,undefined") {
    throw DataError(path + " is missing the summary table");
  }
  ++i;

  std::vector<detail::SummaryRow> rows;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    auto cells = split_on(lines[i], ',');
    if (cells.size() != 6) throw DataError(path + ": bad summary row");
    if (cells[0] == "pooled") continue;
    detail::SummaryRow r;
    r.block = cells[0];
    r.cg = cells[1];
    r.gms = cells[2];
    r.tpi = cells[3];
    r.steps = parse_int("steps", cells[4]);
    r.undefined = parse_int("undefined", cells[5]);
    rows.push_back(std::move(r));
  }

  if (rows.empty()) {
    out << "no shared blocks were captured in this run\n";
    return 0;
  }

  // recombine the pooled view from the per-block rows: counts add, and the
  // conflicting-step sums rebuild from each block's mean
  std::int64_t steps = 0, undefined = 0, conflicts = 0;
  double gms_sum = 0.0, tpi_sum = 0.0;
  for (const auto& r : rows) {
    steps += r.steps;
    undefined += r.undefined;
    if (!r.cg.empty()) {
      std::int64_t c = std::llround(parse_real("cg", r.cg) *
                                    static_cast<double>(r.steps));
      conflicts += c;
      if (!r.gms.empty()) gms_sum += parse_real("mean_gms", r.gms) *
                                     static_cast<double>(c);
      if (!r.tpi.empty()) tpi_sum += parse_real("mean_tpi", r.tpi) *
                                     static_cast<double>(c);
    }
  }

  out << "conflicts from " << path << "\n";
  out << "block,cg,mean_gms,mean_tpi,steps,undefined\n";
  for (const auto& r : rows) {
    out << r.block << ',' << r.cg << ',' << r.gms << ',' << r.tpi << ','
        << r.steps << ',' << r.undefined << "\n";
  }
  out << "pooled,";
  out << (steps > 0 ? csv::num(static_cast<double>(conflicts) /
                               static_cast<double>(steps))
                    : std::string());
  out << ',';
  out << (conflicts > 0
              ? csv::num(gms_sum / static_cast<double>(conflicts))
              : std::string());
  out << ',';
  out << (conflicts > 0
              ? csv::num(tpi_sum / static_cast<double>(conflicts))
              : std::string());
  out << ',' << steps << ',' << undefined << "\n";

  out << "\npooled histogram\nbin_lo,bin_hi,count\n";
  for (const auto& [edges, count] : bins) {
    out << edges << ',' << count << "\n";
  }
  return 0;
}

inline int cmd_compare(const std::string& path_a, const std::string& path_b,
                       const std::string& out_dir, const Overrides& ov,
                       std::ostream& out) {
  if (out_dir.empty()) throw ConfigError("no output path; pass --out");
  RunConfig a = resolve_config(read_config_file(path_a), ov, Use::run);
  RunConfig b = resolve_config(read_config_file(path_b), ov, Use::run);
  if (a.train_path != b.train_path || a.val_path != b.val_path ||
      a.test_path != b.test_path) {
    throw ConfigError("compare needs the same data in both configs");
  }
  if (a.test_path.empty()) {
    throw ConfigError("compare needs data.test for the metrics table");
  }

  TrainedRun ra = train_run(a, out_dir + "/a", out);
  TrainedRun rb = train_run(b, out_dir + "/b", out);

  auto test_metrics = [&](TrainedRun& r) {
    data::Dataset test =
        data::load_jsonl(r.rc.test_path, r.rc.model.num_marks);
    return obj::nll_eval(r.model, test, obj::NllForm::density,
                         quad::deterministic(r.rc.model.quad));
  };
  obj::NLLBreakdown na = test_metrics(ra);
  obj::NLLBreakdown nb = test_metrics(rb);

  // one-step probe for a shared/duplicated pair started from the same
  // values; any other pairing leaves the column empty
  std::string delta_cell;
  auto duplicated = [](models::Setting s) {
    return s == models::Setting::dup || s == models::Setting::dupdisjoint;
  };
  bool pair = ra.rc.model.family == rb.rc.model.family &&
              ra.rc.seed == rb.rc.seed;
  bool a_base = ra.rc.model.setting == models::Setting::base &&
                duplicated(rb.rc.model.setting);
  bool b_base = rb.rc.model.setting == models::Setting::base &&
                duplicated(ra.rc.model.setting);
  if (pair && (a_base || b_base)) {
    const RunConfig& sh = a_base ? ra.rc : rb.rc;
    const RunConfig& sp = a_base ? rb.rc : ra.rc;
    models::Model shared = models::Model::build(sh.model);
    models::Model split = models::Model::build(sp.model);
    models::init_from_shared(shared, split);
    data::Dataset train =
        data::load_jsonl(sh.train_path, sh.model.num_marks);
    std::vector<const data::EventSequence*> batch;
    for (const auto& s : train.sequences) batch.push_back(&s);
    conflict::SplitAdvantage adv = conflict::split_advantage_check(
        shared, split, batch, {sh.tcfg.lr}, obj::NllForm::density,
        sh.model.quad, false);
    delta_cell = csv::num(adv.rows[0].delta);
  }

  fs::create_directories(out_dir);
  std::string st = stamp(echo_text(ra.rc.echo) + echo_text(rb.rc.echo));
  csv::Writer w(out_dir + "/compare.csv");
  w.comment(st);
  const std::string header =
      "config,family,setting,L_T,L_M,CG,GMS,TPI,delta_one_step";
  w.raw(header);
  out << header << "\n";
  auto opt = [](std::optional<double> v) {
    return v ? csv::num(*v) : std::string();
  };
  auto emit = [&](const char* label, TrainedRun& r,
                  const obj::NLLBreakdown& m) {
    const conflict::BlockStats& p = r.fit.conflicts.pooled;
    std::vector<std::string> cells = {
        label,
        models::family_name(r.rc.model.family),
        models::setting_name(r.rc.model.setting),
        csv::num(m.L_T),
        csv::num(m.L_M),
        opt(p.cg()),
        opt(p.mean_gms()),
        opt(p.mean_tpi()),
        delta_cell};
    w.row(cells);
    out << csv::join(cells) << "\n";
  };
  emit("a", ra, na);
  emit("b", rb, nb);
  w.close();
  return 0;
}

// ----- entry point -----

inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"disjoint-parametrization toolkit for marked point processes"};
  app.require_subcommand(1);

  std::string config_path, out_path, run_dir, data_path;
  std::string cfg_a, cfg_b;
  std::int64_t seed_val = 0;
  std::string family_val, setting_val;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_val, "override the config seed");
    cmd->add_option("--decoder", family_val,
                    "override model.family (rmtpp|lnm|fnn|thp|sahp)");
    cmd->add_option("--setting", setting_val,
                    "override model.setting "
                    "(base|plus|plusplus|dup|dupdisjoint)");
  };

  CLI::App* synth = app.add_subcommand("synth", "simulate a Hawkes dataset");
  synth->add_option("--config", config_path, "config file")->required();
  synth->add_option("--out", out_path, "output data file");
  synth->add_option("--seed", seed_val, "override the config seed");

  CLI::App* train = app.add_subcommand("train", "fit a model");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_path, "run directory");
  add_overrides(train);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  eval_cmd->add_option("--run", run_dir, "run directory")->required();
  eval_cmd->add_option("--data", data_path, "test data override");
  eval_cmd->add_option("--out", out_path, "report directory");

  CLI::App* diagnose =
      app.add_subcommand("diagnose", "summarize logged conflicts");
  diagnose->add_option("--run", run_dir, "run directory")->required();

  CLI::App* compare =
      app.add_subcommand("compare", "train two configs side by side");
  compare->add_option("--config-a", cfg_a, "first config")->required();
  compare->add_option("--config-b", cfg_b, "second config")->required();
  compare->add_option("--out", out_path, "output directory");
  add_overrides(compare);

  std::vector<const char*> argv;
  argv.push_back("mtpp");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  auto overrides = [&](CLI::App* cmd) {
    Overrides ov;
    if (cmd->count("--seed")) ov.seed = seed_val;
    if (cmd->count("--decoder")) ov.family = family_val;
    if (cmd->count("--setting")) ov.setting = setting_val;
    return ov;
  };

  try {
    if (synth->parsed()) {
      Overrides ov;
      if (synth->count("--seed")) ov.seed = seed_val;
      RunConfig rc = resolve_config(read_config_file(config_path), ov,
                                    Use::synth);
      return cmd_synth(rc, out_path.empty() ? rc.out : out_path, out);
    }
    if (train->parsed()) {
      RunConfig rc = resolve_config(read_config_file(config_path),
                                    overrides(train), Use::run);
      return cmd_train(rc, out_path.empty() ? rc.out : out_path, out);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(run_dir, data_path, out_path, out);
    }
    if (diagnose->parsed()) {
      return cmd_diagnose(run_dir, out);
    }
    if (compare->parsed()) {
      return cmd_compare(cfg_a, cfg_b, out_path, overrides(compare), out);
    }
    err << "error: no command\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mtpp::cli
