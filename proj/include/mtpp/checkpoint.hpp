#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "mtpp/errors.hpp"
#include "mtpp/params.hpp"
#include "mtpp/version.hpp"

namespace mtpp::ad {

// Checkpoints are JSON: an ordered array of blocks, each with its name,
// owner tag, shape, and row-major values. The JSON writer emits
// shortest-round-trip decimal text, so doubles reload bit-exactly.
inline nlohmann::json checkpoint_to_json(const ParamStore& store) {
  nlohmann::json j;
  j["format"] = "mtpp-checkpoint";
  j["version"] = kVersion;
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : store.blocks()) {
    nlohmann::json jb;
    jb["name"] = b.name;
    jb["owner"] = owner_name(b.owner);
    jb["rows"] = b.value.rows;
    jb["cols"] = b.value.cols;
    jb["values"] = b.value.v;
    j["blocks"].push_back(std::move(jb));
  }
  return j;
}

inline void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(store).dump(1) << "\n";
}

// Strict load into an existing store: every block must match by name,
// owner, and shape. Guards against evaluating a checkpoint with the wrong
// model architecture or sharing setting.
inline void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("checkpoint parse failure in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "mtpp-checkpoint") {
    throw Error("not a checkpoint file: " + path);
  }
  const auto& blocks = j.at("blocks");
  if (blocks.size() != store.size()) {
    throw Error("checkpoint block count " + std::to_string(blocks.size()) +
                " != model block count " + std::to_string(store.size()));
  }
  for (const auto& jb : blocks) {
    const std::string name = jb.at("name").get<std::string>();
    if (!store.has(name)) throw Error("checkpoint block '" + name + "' not in model");
    ParamBlock& b = store.at(name);
    auto owner = owner_from_name(jb.at("owner").get<std::string>());
    if (!owner || *owner != b.owner) {
      throw Error("checkpoint block '" + name + "' owner mismatch");
    }
    int rows = jb.at("rows").get<int>();
    int cols = jb.at("cols").get<int>();
    if (rows != b.value.rows || cols != b.value.cols) {
      throw Error("checkpoint block '" + name + "' shape mismatch");
    }
    auto vals = jb.at("values").get<std::vector<double>>();
    if (static_cast<int>(vals.size()) != b.value.size()) {
      throw Error("checkpoint block '" + name + "' value count mismatch");
    }
    b.value.v = std::move(vals);
  }
}

}  // namespace mtpp::ad
