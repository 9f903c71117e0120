#pragma once

// Closed-form scores: zero-shot probabilities, the negative-label score, the
// group-wise aggregation score with random permutation, and the thresholded
// detector.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "negstream/core.hpp"
#include "negstream/static_negatives.hpp"

namespace negstream {

struct ScoreConfig {
  double tau = 0.01;       // softmax temperature
  std::size_t groups = 5;  // G
  // Balancing factor between the positive and the per-group negative term.
  // Zero means "resolve to the ID class count" (done at engine setup).
  double c_scale = 0.0;

  double effective_c_scale(std::size_t class_count) const {
    return c_scale > 0.0 ? c_scale : static_cast<double>(class_count);
  }
};

// A random permutation of all negatives plus contiguous group slices whose
// sizes differ by at most one.
struct Grouping {
  std::vector<std::size_t> permutation;
  std::vector<std::pair<std::size_t, std::size_t>> boundaries;  // [begin, end)

  std::size_t size() const { return permutation.size(); }
  std::size_t group_count() const { return boundaries.size(); }
};

// Softmax over v . t_{y_j} / tau across the ID classes.
std::vector<double> zero_shot_probabilities(const EmbeddingVector& v,
                                            const IdModel& model, double tau);

// Share of the positive activation against positives plus all negatives in
// one denominator. Returns 1.0 when the negative list is empty.
double negative_label_score(const EmbeddingVector& v, const IdModel& model,
                      std::span<const EmbeddingVector> negatives, double tau);

// Uniformly random permutation of n_negatives indices carved into `groups`
// contiguous slices; the first (n mod G) slices get one extra element.
Grouping make_grouping(std::size_t n_negatives, std::size_t groups, Rng& rng);

// Mean over groups of P / (P + A_g), where P sums the positive activations
// and A_g = c_scale * mean of the group's negative activations.
double group_score(const EmbeddingVector& v, const IdModel& model,
                   std::span<const EmbeddingVector> negatives,
                   const Grouping& grouping, const ScoreConfig& cfg);

// ID iff score >= gamma.
Label classify(double score, double gamma);

}  // namespace negstream
