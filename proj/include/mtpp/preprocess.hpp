#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "mtpp/events.hpp"
#include "mtpp/rng.hpp"

namespace mtpp::data {

// Affine rescale anchored at zero: [0, max_T] maps onto [lo, hi], where
// max_T is the largest horizon in the dataset. Event order and the
// time-per-horizon ratio of every sequence are preserved.
inline void rescale_times(Dataset& ds, double lo, double hi) {
  if (!(hi > lo)) throw DataError("rescale needs hi > lo");
  double max_T = 0.0;
  for (const auto& s : ds.sequences) max_T = std::max(max_T, s.T);
  if (max_T <= 0.0) throw DataError("rescale on dataset with no horizon");
  double a = (hi - lo) / max_T;
  for (auto& s : ds.sequences) {
    s.T = lo + a * s.T;
    for (auto& e : s.events) e.t = lo + a * e.t;
  }
}

// Keeps the `keep` most frequent marks and drops events of all others.
// Kept marks are remapped to 0..keep-1 in order of descending frequency,
// ties broken by ascending original id. Returns old-id -> new-id.
inline std::map<int, int> filter_top_marks(Dataset& ds, int keep) {
  if (keep <= 0) throw DataError("top-mark filter needs keep >= 1");
  std::vector<long> freq(ds.num_marks, 0);
  for (const auto& s : ds.sequences) {
    for (const auto& e : s.events) freq[e.k] += 1;
  }
  std::vector<int> order(ds.num_marks);
  for (int k = 0; k < ds.num_marks; ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (freq[a] != freq[b]) return freq[a] > freq[b];
    return a < b;
  });
  keep = std::min(keep, ds.num_marks);
  std::map<int, int> remap;
  for (int r = 0; r < keep; ++r) remap[order[r]] = r;

  for (auto& s : ds.sequences) {
    std::vector<Event> kept;
    kept.reserve(s.events.size());
    for (const auto& e : s.events) {
      auto it = remap.find(e.k);
      if (it != remap.end()) kept.push_back(Event{e.t, it->second});
    }
    s.events = std::move(kept);
  }
  ds.num_marks = keep;
  return remap;
}

struct SplitResult {
  Dataset train, val, test;
};

// Seeded shuffle of sequence indices, then contiguous cuts. Fractions are
// floored; leftover sequences go to the earliest splits, so sizes are
// deterministic in n and the fractions alone.
inline SplitResult split_dataset(const Dataset& ds, double f_train, double f_val,
                                 double f_test, uint64_t seed) {
  double fsum = f_train + f_val + f_test;
  if (fsum <= 0.0 || fsum > 1.0 + 1e-9) {
    throw DataError("split fractions must be positive and sum to at most 1");
  }
  size_t n = ds.sequences.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);

  size_t n_train = static_cast<size_t>(f_train * n);
  size_t n_val = static_cast<size_t>(f_val * n);
  size_t n_test = static_cast<size_t>(f_test * n);
  size_t leftover = n - std::min(n, n_train + n_val + n_test);
  while (leftover > 0) {
    n_train += 1;
    --leftover;
    if (leftover > 0) { n_val += 1; --leftover; }
    if (leftover > 0) { n_test += 1; --leftover; }
  }

  SplitResult out;
  out.train.num_marks = out.val.num_marks = out.test.num_marks = ds.num_marks;
  size_t at = 0;
  for (size_t i = 0; i < n_train; ++i) out.train.sequences.push_back(ds.sequences[idx[at++]]);
  for (size_t i = 0; i < n_val; ++i) out.val.sequences.push_back(ds.sequences[idx[at++]]);
  for (size_t i = 0; i < n_test; ++i) out.test.sequences.push_back(ds.sequences[idx[at++]]);
  return out;
}

}  // namespace mtpp::data
