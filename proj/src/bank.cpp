#include "negstream/bank.hpp"

#include <algorithm>
#include <cmath>

namespace negstream {

namespace {

// Ranking key for "keep the smallest delta": the displaced element is the
// largest under this order. Equal deltas keep the older entry.
bool rank_after(const BankEntry& a, const BankEntry& b) {
  if (a.delta != b.delta) return a.delta > b.delta;
  return a.insertion_index > b.insertion_index;
}

void sort_by_insertion(std::vector<BankEntry>& entries) {
  std::sort(entries.begin(), entries.end(),
            [](const BankEntry& a, const BankEntry& b) {
              return a.insertion_index < b.insertion_index;
            });
}

}  // namespace

bool id_separated_criterion(const EmbeddingVector& t_neg,
                            const IdModel& model) {
  for (std::size_t c = 0; c < model.class_count(); ++c) {
    double candidate_align = cosine(t_neg, model.prototypes[c]);
    double class_align = cosine(model.class_text_features[c], model.prototypes[c]);
    if (!(candidate_align < class_align)) return false;
  }
  return true;
}

double delta(const EmbeddingVector& t_neg, const IdModel& model) {
  double total = 0.0;
  for (const auto& prototype : model.prototypes) {
    total += 1.0 + cosine(t_neg, prototype);
  }
  return total / static_cast<double>(model.class_count());
}

NegativeBank flash(const NegativeBank& bank,
                   std::span<const BankEntry> overflow_pool, double rho,
                   Rng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw Error(ErrorCode::invalid_rho, "rho must lie in [0, 1]");
  }
  std::size_t keep = static_cast<std::size_t>(
      std::floor(rho * static_cast<double>(overflow_pool.size())));

  std::vector<BankEntry> pool(overflow_pool.begin(), overflow_pool.end());
  std::sort(pool.begin(), pool.end(), [](const BankEntry& a, const BankEntry& b) {
    if (a.delta != b.delta) return a.delta < b.delta;
    return a.insertion_index < b.insertion_index;
  });
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end());

  std::vector<BankEntry> merged = bank.entries;
  merged.insert(merged.end(), pool.begin(), pool.end());

  NegativeBank result;
  result.capacity = bank.capacity;
  if (merged.size() <= bank.capacity) {
    result.entries = std::move(merged);
  } else {
    result.entries = rng.sample(std::move(merged), bank.capacity);
  }
  sort_by_insertion(result.entries);
  return result;
}

bool update(NegativeBank& bank, BufferState& buffer, BankEntry candidate,
            Rng& rng) {
  if (bank.size() < bank.capacity) {
    // Only reachable before the bank first fills, where the buffer is
    // necessarily empty; leaving it untouched matches the erase-to-empty
    // formulation on every reachable state.
    bank.entries.push_back(std::move(candidate));
    return true;
  }

  // Rank the candidate against the full bank; exactly one entry overflows.
  std::size_t worst_pos = bank.size();  // sentinel: the candidate itself
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const BankEntry& current =
        worst_pos == bank.size() ? candidate : bank.entries[worst_pos];
    if (rank_after(bank.entries[i], current)) worst_pos = i;
  }

  bool bank_changed = worst_pos != bank.size();
  BankEntry overflow = [&]() -> BankEntry {
    if (!bank_changed) return std::move(candidate);
    BankEntry displaced = std::move(bank.entries[worst_pos]);
    bank.entries.erase(bank.entries.begin() +
                       static_cast<std::ptrdiff_t>(worst_pos));
    bank.entries.push_back(std::move(candidate));  // largest index, stays sorted
    return displaced;
  }();

  if (buffer.size() < buffer.capacity) {
    buffer.entries.push_back(std::move(overflow));
    return bank_changed;
  }

  std::vector<BankEntry> pool = std::move(buffer.entries);
  pool.push_back(std::move(overflow));
  bank = flash(bank, pool, buffer.rho, rng);
  buffer.entries.clear();
  return true;
}

bool update_without_buffer(NegativeBank& bank, BankEntry candidate) {
  if (bank.size() < bank.capacity) {
    bank.entries.push_back(std::move(candidate));
    return true;
  }
  std::size_t worst_pos = bank.size();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const BankEntry& current =
        worst_pos == bank.size() ? candidate : bank.entries[worst_pos];
    if (rank_after(bank.entries[i], current)) worst_pos = i;
  }
  if (worst_pos == bank.size()) return false;
  bank.entries.erase(bank.entries.begin() +
                     static_cast<std::ptrdiff_t>(worst_pos));
  bank.entries.push_back(std::move(candidate));
  return true;
}

std::vector<EmbeddingVector> snapshot_features(const NegativeBank& bank) {
  std::vector<EmbeddingVector> features;
  features.reserve(bank.entries.size());
  for (const auto& entry : bank.entries) features.push_back(entry.feature);
  return features;
}

}  // namespace negstream
