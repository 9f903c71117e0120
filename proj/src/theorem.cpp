#include "negstream/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace negstream {

namespace {

constexpr double kTolerance = 1e-12;

std::vector<double> sorted_descending(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

// Heavy-tailed activations exercise strong imbalance.
std::vector<double> draw_activations(std::size_t groups, Rng& rng) {
  std::vector<double> a(groups);
  for (double& x : a) {
    double u = rng.uniform();
    x = -std::log(1.0 - u);  // exponential(1)
  }
  return a;
}

// One Robin Hood move: shift delta from a larger entry to a smaller one.
void balancing_transfer(std::vector<double>& a, Rng& rng) {
  std::size_t i = rng.index(a.size());
  std::size_t j = rng.index(a.size());
  if (i == j) return;
  if (a[i] < a[j]) std::swap(i, j);
  double delta = rng.uniform() * (a[i] - a[j]) / 2.0;
  a[i] -= delta;
  a[j] += delta;
}

}  // namespace

bool majorizes(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "activation vectors must share the group count");
  }
  double total_a = std::accumulate(a.begin(), a.end(), 0.0);
  double total_b = std::accumulate(b.begin(), b.end(), 0.0);
  double scale = std::max({1.0, std::abs(total_a), std::abs(total_b)});
  if (std::abs(total_a - total_b) > 1e-9 * scale) {
    throw Error(ErrorCode::total_mismatch,
                "majorization requires equal totals");
  }
  std::vector<double> da = sorted_descending(a);
  std::vector<double> db = sorted_descending(b);
  double partial_a = 0.0;
  double partial_b = 0.0;
  for (std::size_t m = 0; m + 1 < da.size(); ++m) {
    partial_a += da[m];
    partial_b += db[m];
    if (partial_b > partial_a + kTolerance * scale) return false;
  }
  return true;
}

double mean_score(double p, std::span<const double> activations) {
  if (!(p > 0.0)) {
    throw Error(ErrorCode::non_positive_p, "P must be positive");
  }
  if (activations.empty()) {
    throw Error(ErrorCode::empty_group, "activation vector is empty");
  }
  double total = 0.0;
  for (double a : activations) total += p / (p + a);
  return total / static_cast<double>(activations.size());
}

TheoremReport verify_theorem(std::size_t trials, std::size_t groups,
                             Rng& rng) {
  if (trials == 0) {
    throw Error(ErrorCode::invalid_config, "trials must be >= 1");
  }
  if (groups < 2) {
    throw Error(ErrorCode::invalid_config, "need at least two groups");
  }
  TheoremReport report;
  report.trials = trials;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    // P spans several magnitudes so the check is not tied to one scale.
    double p = std::pow(10.0, rng.uniform() * 4.0 - 2.0);

    // Balancing transfers applied in sequence: each one must keep the mean
    // score from increasing.
    std::vector<double> a = draw_activations(groups, rng);
    std::vector<double> current = a;
    std::size_t moves = 1 + rng.index(4);
    for (std::size_t m = 0; m < moves; ++m) {
      std::vector<double> next = current;
      balancing_transfer(next, rng);
      double before = mean_score(p, current);
      double after = mean_score(p, next);
      report.transfer_checks += 1;
      if (after > before + kTolerance) {
        report.violations.push_back(
            {p, current, next, before, after});
      }
      current = std::move(next);
    }

    // The end state is majorized by the start state; the full ordering must
    // hold across the chain as well.
    report.pair_checks += 1;
    if (majorizes(a, current)) {
      report.majorized_pairs += 1;
      double score_a = mean_score(p, a);
      double score_b = mean_score(p, current);
      if (score_b > score_a + kTolerance) {
        report.violations.push_back({p, a, current, score_a, score_b});
      }
    }

    // Independent pair with matched totals; test only when the majorization
    // relation happens to hold.
    std::vector<double> c = draw_activations(groups, rng);
    double total_a = std::accumulate(a.begin(), a.end(), 0.0);
    double total_c = std::accumulate(c.begin(), c.end(), 0.0);
    for (double& x : c) x *= total_a / total_c;
    report.pair_checks += 1;
    if (majorizes(a, c)) {
      report.majorized_pairs += 1;
      double score_a = mean_score(p, a);
      double score_c = mean_score(p, c);
      if (score_c > score_a + kTolerance) {
        report.violations.push_back({p, a, c, score_a, score_c});
      }
    } else if (majorizes(c, a)) {
      report.majorized_pairs += 1;
      double score_a = mean_score(p, a);
      double score_c = mean_score(p, c);
      if (score_a > score_c + kTolerance) {
        report.violations.push_back({p, c, a, score_c, score_a});
      }
    }
  }
  return report;
}

}  // namespace negstream
