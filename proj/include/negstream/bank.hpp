#pragma once

// Dynamic negative bank and overflow buffer: acceptance criterion, delta
// ranking, capacity-bounded insertion and the Flash merge.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "negstream/core.hpp"
#include "negstream/static_negatives.hpp"

namespace negstream {

struct BankEntry {
  EmbeddingVector feature;
  double delta;                   // mean (1 + cos) against the ID prototypes
  std::string origin;             // sample the feature was learned from
  std::uint64_t insertion_index;  // monotone counter, never reused
};

// Capacity-bounded store of learned negative features. Entries are kept
// sorted by insertion_index.
struct NegativeBank {
  std::vector<BankEntry> entries;
  std::size_t capacity = 0;  // M

  std::size_t size() const { return entries.size(); }
  bool full() const { return entries.size() >= capacity; }
};

// Overflow queue consumed by the Flash merge. Buffered entries never
// contribute to scoring.
struct BufferState {
  std::vector<BankEntry> entries;
  std::size_t capacity = 0;  // M
  double rho = 0.5;          // buffer selection ratio

  std::size_t size() const { return entries.size(); }
  bool full() const { return entries.size() >= capacity; }
};

// True iff cos(t_neg, mu_c) < cos(t_{y_c}, mu_c) for every class c, with
// strict inequality at each class.
bool id_separated_criterion(const EmbeddingVector& t_neg, const IdModel& model);

// ID-similarity score (1/C) * sum_c (1 + cos(t_neg, mu_c)); smaller means
// stronger separation and higher priority to stay in the bank.
double delta(const EmbeddingVector& t_neg, const IdModel& model);

// Top-rho selection from the overflow pool merged with the bank, then a
// uniform M-sample without replacement from the merged set. Ties in the
// delta ranking prefer the smaller insertion index.
NegativeBank flash(const NegativeBank& bank,
                   std::span<const BankEntry> overflow_pool, double rho,
                   Rng& rng);

// Applies the three-case update rule for an accepted candidate:
//   1. bank below capacity: append, buffer untouched;
//   2. bank full, buffer below capacity: keep the M smallest-delta entries of
//      bank + candidate, displaced entry joins the buffer;
//   3. bank and buffer full: as case 2, then Flash consumes the buffer plus
//      the displaced entry and the buffer is cleared.
// Returns whether the bank's membership changed.
bool update(NegativeBank& bank, BufferState& buffer, BankEntry candidate,
            Rng& rng);

// Ablation variant with the buffer disabled: same delta ranking, but the
// displaced entry is dropped instead of queued.
bool update_without_buffer(NegativeBank& bank, BankEntry candidate);

// Bank features in insertion order.
std::vector<EmbeddingVector> snapshot_features(const NegativeBank& bank);

}  // namespace negstream
