#pragma once

#include <string>
#include <vector>

#include "mtpp/errors.hpp"

namespace mtpp::data {

struct Event {
  double t = 0.0;
  int k = 0;
};

// One observed realization on the window (0, T]. Event times are strictly
// increasing; an empty event list is a legal observation.
struct EventSequence {
  std::string seq_id;
  double T = 0.0;
  std::vector<Event> events;

  int size() const { return static_cast<int>(events.size()); }

  // Inter-arrival of event i, measured from the previous event (or 0).
  double tau(int i) const {
    return events[i].t - (i == 0 ? 0.0 : events[i - 1].t);
  }

  double t_prev(int i) const { return i == 0 ? 0.0 : events[i - 1].t; }

  double last_time() const { return events.empty() ? 0.0 : events.back().t; }
};

struct Dataset {
  std::vector<EventSequence> sequences;
  int num_marks = 0;

  size_t size() const { return sequences.size(); }

  size_t total_events() const {
    size_t n = 0;
    for (const auto& s : sequences) n += s.events.size();
    return n;
  }
};

// Structural checks. Every violation names the sequence and event index.
inline void validate_sequence(const EventSequence& s, int num_marks) {
  if (!(s.T > 0.0)) {
    throw DataError("sequence '" + s.seq_id + "': horizon T must be positive");
  }
  double prev = 0.0;
  for (size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    std::string at = "sequence '" + s.seq_id + "' event " + std::to_string(i);
    if (!(e.t > 0.0)) throw DataError(at + ": time must be > 0");
    if (e.t > s.T) throw DataError(at + ": time exceeds horizon T");
    if (e.t == prev) throw DataError(at + ": duplicate timestamp");
    if (e.t < prev) throw DataError(at + ": times not increasing");
    if (e.k < 0 || e.k >= num_marks) {
      throw DataError(at + ": mark " + std::to_string(e.k) + " outside [0, " +
                      std::to_string(num_marks) + ")");
    }
    prev = e.t;
  }
}

inline void validate_dataset(const Dataset& ds) {
  if (ds.num_marks <= 0) throw DataError("dataset has no mark types");
  for (const auto& s : ds.sequences) validate_sequence(s, ds.num_marks);
}

}  // namespace mtpp::data
