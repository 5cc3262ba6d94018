#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mtpp/errors.hpp"
#include "mtpp/quadrature.hpp"

namespace mtpp::models {

enum class Family { rmtpp, lnm, thp, sahp, fnn };

// Parameter sharing between the time task and the mark task.
//   base        one encoder, the original decoder layout of the family
//   plus        one encoder, disjoint time decoder and mark head
//   plusplus    two encoders, fully disjoint parameter sets
//   dup         one encoder, two copies of the full marked decoder
//   dupdisjoint two encoders, two copies of the full marked decoder
enum class Setting { base, plus, plusplus, dup, dupdisjoint };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::rmtpp: return "rmtpp";
    case Family::lnm: return "lnm";
    case Family::thp: return "thp";
    case Family::sahp: return "sahp";
    case Family::fnn: return "fnn";
  }
  return "?";
}

inline const char* setting_name(Setting s) {
  switch (s) {
    case Setting::base: return "base";
    case Setting::plus: return "plus";
    case Setting::plusplus: return "plusplus";
    case Setting::dup: return "dup";
    case Setting::dupdisjoint: return "dupdisjoint";
  }
  return "?";
}

inline std::optional<Family> family_from_name(const std::string& s) {
  if (s == "rmtpp") return Family::rmtpp;
  if (s == "lnm") return Family::lnm;
  if (s == "thp") return Family::thp;
  if (s == "sahp") return Family::sahp;
  if (s == "fnn") return Family::fnn;
  return std::nullopt;
}

inline std::optional<Setting> setting_from_name(const std::string& s) {
  if (s == "base") return Setting::base;
  if (s == "plus") return Setting::plus;
  if (s == "plusplus") return Setting::plusplus;
  if (s == "dup") return Setting::dup;
  if (s == "dupdisjoint") return Setting::dupdisjoint;
  return std::nullopt;
}

// Inner activation of the fnn cumulative decoder. The outer layer is always
// softplus so the compensator stays increasing in t.
enum class FnnActivation { softplus, sigmoid, exp };

inline const char* fnn_activation_name(FnnActivation a) {
  switch (a) {
    case FnnActivation::softplus: return "softplus";
    case FnnActivation::sigmoid: return "sigmoid";
    case FnnActivation::exp: return "exp";
  }
  return "?";
}

inline std::optional<FnnActivation> fnn_activation_from_name(
    const std::string& s) {
  if (s == "softplus") return FnnActivation::softplus;
  if (s == "sigmoid") return FnnActivation::sigmoid;
  if (s == "exp") return FnnActivation::exp;
  return std::nullopt;
}

struct Dims {
  int d_t = 4;       // sinusoidal time-encoding width (even)
  int d_k = 4;       // mark embedding width
  int d_h = 32;      // recurrent state width
  int d_1 = 32;      // hidden width of MLP pieces (mark head, fnn layer)
  int mixtures = 32; // lnm mixture components
  int channels = 32; // projection channels of ground decoders (thp, sahp, fnn)

  int event_width() const { return d_t + d_k; }
};

struct ModelSpec {
  Family family = Family::rmtpp;
  Setting setting = Setting::base;
  Dims dims;
  int num_marks = 2;
  uint64_t seed = 1;
  quad::QuadSpec quad;  // used wherever a compensator needs quadrature
  FnnActivation fnn_act = FnnActivation::softplus;

  void validate() const {
    if (num_marks < 1) throw ConfigError("model needs at least one mark type");
    if (dims.d_t < 2 || dims.d_t % 2 != 0) {
      throw ConfigError("d_t must be even and >= 2");
    }
    if (dims.d_k < 1 || dims.d_h < 1 || dims.d_1 < 1 || dims.mixtures < 1 ||
        dims.channels < 1) {
      throw ConfigError("model dimensions must be positive");
    }
  }
};

}  // namespace mtpp::models
