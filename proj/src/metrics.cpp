#include "negstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace negstream {

namespace {

void check_nonempty(std::span<const double> id_scores,
                    std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw Error(ErrorCode::empty_class,
                "metrics need at least one ID and one OOD score");
  }
}

}  // namespace

double auroc(std::span<const double> id_scores,
             std::span<const double> ood_scores) {
  check_nonempty(id_scores, ood_scores);
  std::vector<double> ood_sorted(ood_scores.begin(), ood_scores.end());
  std::sort(ood_sorted.begin(), ood_sorted.end());

  double wins = 0.0;
  for (double s : id_scores) {
    auto lower = std::lower_bound(ood_sorted.begin(), ood_sorted.end(), s);
    auto upper = std::upper_bound(lower, ood_sorted.end(), s);
    double below = static_cast<double>(lower - ood_sorted.begin());
    double ties = static_cast<double>(upper - lower);
    wins += below + 0.5 * ties;
  }
  return wins / (static_cast<double>(id_scores.size()) *
                 static_cast<double>(ood_scores.size()));
}

double fpr95(std::span<const double> id_scores,
             std::span<const double> ood_scores) {
  check_nonempty(id_scores, ood_scores);
  std::vector<double> id_sorted(id_scores.begin(), id_scores.end());
  std::sort(id_sorted.begin(), id_sorted.end(), std::greater<>());

  // Smallest count whose fraction reaches 0.95; its score is the largest
  // threshold with TPR >= 0.95 (no interpolation).
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(id_sorted.size())));
  keep = std::max<std::size_t>(keep, 1);
  double threshold = id_sorted[keep - 1];

  std::size_t false_positives = 0;
  for (double s : ood_scores) {
    if (s >= threshold) ++false_positives;
  }
  return static_cast<double>(false_positives) /
         static_cast<double>(ood_scores.size());
}

MetricReport evaluate(std::span<const StreamResult> results,
                      std::span<const StreamSample> samples) {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  for (const auto& r : results) {
    (r.truth == Label::id ? id_scores : ood_scores).push_back(r.final_score);
  }
  MetricReport report;
  report.n_id = id_scores.size();
  report.n_ood = ood_scores.size();
  report.auroc = auroc(id_scores, ood_scores);
  report.fpr95 = fpr95(id_scores, ood_scores);

  if (!samples.empty()) {
    if (samples.size() != results.size()) {
      throw Error(ErrorCode::dimension_mismatch,
                  "results and samples must align for per-phase metrics");
    }
    std::map<std::size_t, std::vector<StreamResult>> by_phase;
    for (std::size_t i = 0; i < results.size(); ++i) {
      by_phase[samples[i].phase].push_back(results[i]);
    }
    if (by_phase.size() > 1) {
      for (const auto& [phase, phase_results] : by_phase) {
        report.per_phase.emplace_back(phase, evaluate(phase_results));
      }
    }
  }
  return report;
}

}  // namespace negstream
