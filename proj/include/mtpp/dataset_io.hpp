#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "mtpp/events.hpp"

namespace mtpp::data {

// JSONL, one sequence per line:
//   {"seq_id": "...", "T": 10.0, "events": [{"t": 0.5, "k": 1}, ...]}
// Unknown mark count: taken as max observed mark + 1 unless the caller
// passes a positive num_marks (needed when a split happens to miss the
// largest mark id).
inline Dataset load_jsonl(const std::string& path, int num_marks = 0) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  Dataset ds;
  std::string line;
  size_t lineno = 0;
  int max_mark = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    EventSequence s;
    try {
      s.seq_id = j.at("seq_id").get<std::string>();
      s.T = j.at("T").get<double>();
      for (const auto& je : j.at("events")) {
        Event e;
        e.t = je.at("t").get<double>();
        e.k = je.at("k").get<int>();
        max_mark = std::max(max_mark, e.k);
        s.events.push_back(e);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ds.sequences.push_back(std::move(s));
  }
  ds.num_marks = num_marks > 0 ? num_marks : max_mark + 1;
  validate_dataset(ds);
  return ds;
}

inline void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& s : ds.sequences) {
    nlohmann::json j;
    j["seq_id"] = s.seq_id;
    j["T"] = s.T;
    j["events"] = nlohmann::json::array();
    for (const auto& e : s.events) {
      j["events"].push_back({{"t", e.t}, {"k", e.k}});
    }
    out << j.dump() << "\n";
  }
}

}  // namespace mtpp::data
