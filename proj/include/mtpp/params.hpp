#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/rng.hpp"
#include "mtpp/tensor.hpp"

namespace mtpp::ad {

// Which training task owns a parameter block. Shared blocks receive
// gradients from both the time loss and the mark loss; owned blocks from
// exactly one of them.
enum class Owner { time, mark, shared };

inline const char* owner_name(Owner o) {
  switch (o) {
    case Owner::time: return "time";
    case Owner::mark: return "mark";
    case Owner::shared: return "shared";
  }
  return "?";
}

inline std::optional<Owner> owner_from_name(const std::string& s) {
  if (s == "time") return Owner::time;
  if (s == "mark") return Owner::mark;
  if (s == "shared") return Owner::shared;
  return std::nullopt;
}

struct ParamBlock {
  std::string name;
  Owner owner = Owner::shared;
  Tensor value;
  Tensor grad;
  bool frozen = false;  // set by the trainer; optimizers skip frozen blocks

  void zero_grad() { grad.fill(0.0); }
};

// Named parameter blocks in insertion order. Iteration order is the
// registration order, which keeps every downstream reduction deterministic.
class ParamStore {
 public:
  ParamBlock& add(const std::string& name, Owner owner, Tensor init) {
    if (index_.count(name)) throw Error("duplicate parameter block: " + name);
    index_[name] = blocks_.size();
    blocks_.push_back(ParamBlock{name, owner, init, Tensor(init.rows, init.cols), false});
    return blocks_.back();
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  ParamBlock& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter block: " + name);
    return blocks_[it->second];
  }

  const ParamBlock& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter block: " + name);
    return blocks_[it->second];
  }

  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  size_t size() const { return blocks_.size(); }

  void zero_grad() {
    for (auto& b : blocks_) b.zero_grad();
  }

  // Total scalar parameter count, optionally restricted to one owner.
  size_t param_count(std::optional<Owner> owner = std::nullopt) const {
    size_t n = 0;
    for (const auto& b : blocks_) {
      if (!owner || b.owner == *owner) n += static_cast<size_t>(b.value.size());
    }
    return n;
  }

  // Throws NumericError naming the first block with a non-finite gradient.
  void check_grads_finite() const {
    for (const auto& b : blocks_) {
      if (!b.grad.all_finite()) {
        throw NumericError("non-finite gradient in block '" + b.name + "'");
      }
    }
  }

  void set_frozen(Owner owner, bool frozen) {
    for (auto& b : blocks_) {
      if (b.owner == owner) b.frozen = frozen;
    }
  }

 private:
  std::vector<ParamBlock> blocks_;
  std::unordered_map<std::string, size_t> index_;
};

// Uniform init on +/- 1/sqrt(fan_in), the usual recurrent-net default.
inline Tensor uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  Tensor t(rows, cols);
  double b = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  for (auto& x : t.v) x = rng.uniform(-b, b);
  return t;
}

// Glorot-style uniform range for weight matrices, fan_in = cols and
// fan_out = rows. Biases are initialized to zero throughout the models.
inline Tensor glorot_init(Rng& rng, int rows, int cols) {
  Tensor t(rows, cols);
  double b = std::sqrt(6.0 / (rows + cols));
  for (auto& x : t.v) x = rng.uniform(-b, b);
  return t;
}

}  // namespace mtpp::ad
