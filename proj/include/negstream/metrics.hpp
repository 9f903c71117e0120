#pragma once

// Evaluation metrics over stream results: AUROC and FPR95, with per-phase
// aggregation for temporal-shift runs.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "negstream/engine.hpp"

namespace negstream {

struct MetricReport {
  double auroc = 0.0;
  double fpr95 = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  std::vector<std::pair<std::size_t, MetricReport>> per_phase;
};

// Probability that a random ID score exceeds a random OOD score, ties
// counted as one half (rank-based, O(n log n)).
double auroc(std::span<const double> id_scores,
             std::span<const double> ood_scores);

// False positive rate at the largest threshold that keeps at least 95% of
// the ID scores on or above it.
double fpr95(std::span<const double> id_scores,
             std::span<const double> ood_scores);

// Metrics over final scores. `samples` provides phases when per-phase
// aggregation is wanted; pass an empty span to skip it.
MetricReport evaluate(std::span<const StreamResult> results,
                      std::span<const StreamSample> samples = {});

}  // namespace negstream
