#pragma once

// Empirical verification that balanced group activations never increase the
// group-wise aggregation score: majorization checks plus randomized search
// for counterexamples.

#include <cstddef>
#include <span>
#include <vector>

#include "negstream/core.hpp"

namespace negstream {

// Whether `a` majorizes `b` (i.e. `b` is more balanced): equal totals and
// every descending partial sum of `b` bounded by the matching partial sum
// of `a`. Throws TotalMismatch when the totals differ beyond tolerance.
bool majorizes(std::span<const double> a, std::span<const double> b);

// Mean of P / (P + a_g) over the activation vector.
double mean_score(double p, std::span<const double> activations);

struct TheoremViolation {
  double p;
  std::vector<double> before;
  std::vector<double> after;
  double score_before;
  double score_after;
};

struct TheoremReport {
  std::size_t trials = 0;
  std::size_t transfer_checks = 0;
  std::size_t pair_checks = 0;
  std::size_t majorized_pairs = 0;
  std::vector<TheoremViolation> violations;

  bool ok() const { return violations.empty(); }
};

// Randomized search: balancing transfers must never increase the mean score,
// and whenever one random vector majorizes another the scores must be
// ordered accordingly. Violations beyond 1e-12 are reported with inputs.
TheoremReport verify_theorem(std::size_t trials, std::size_t groups, Rng& rng);

}  // namespace negstream
