#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "negstream/metrics.hpp"
#include "test_support.hpp"

using namespace negstream;

namespace {

// O(n*m) pairwise comparison reference.
double oracle_auroc(const std::vector<double>& id_scores,
                    const std::vector<double>& ood_scores) {
  double wins = 0.0;
  for (double a : id_scores) {
    for (double b : ood_scores) {
      if (a > b) {
        wins += 1.0;
      } else if (a == b) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(id_scores.size()) *
                 static_cast<double>(ood_scores.size()));
}

// Exhaustive-threshold reference: scan every candidate threshold, keep the
// largest one whose TPR reaches 0.95, report the FPR there.
double oracle_fpr95(const std::vector<double>& id_scores,
                    const std::vector<double>& ood_scores) {
  std::vector<double> candidates = id_scores;
  candidates.insert(candidates.end(), ood_scores.begin(), ood_scores.end());
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  double best_threshold = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (double threshold : candidates) {
    std::size_t kept = 0;
    for (double s : id_scores) {
      if (s >= threshold) ++kept;
    }
    double tpr = static_cast<double>(kept) /
                 static_cast<double>(id_scores.size());
    if (tpr >= 0.95) {
      if (!found || threshold > best_threshold) best_threshold = threshold;
      found = true;
    }
  }
  std::size_t fp = 0;
  for (double s : ood_scores) {
    if (s >= best_threshold) ++fp;
  }
  return static_cast<double>(fp) / static_cast<double>(ood_scores.size());
}

std::vector<double> random_scores(std::size_t n, Rng& rng) {
  std::vector<double> scores(n);
  for (double& s : scores) s = rng.uniform();
  return scores;
}

}  // namespace

TEST_CASE("auroc trivial separations") {
  std::vector<double> high(5, 0.9);
  std::vector<double> low(7, 0.1);
  CHECK(auroc(high, low) == doctest::Approx(1.0));
  std::vector<double> same_a(4, 0.5);
  std::vector<double> same_b(6, 0.5);
  CHECK(auroc(same_a, same_b) == doctest::Approx(0.5));
}

TEST_CASE("auroc matches the pairwise oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a = random_scores(20, rng);
    std::vector<double> b = random_scores(20, rng);
    // Inject ties occasionally.
    if (trial % 3 == 0) b[0] = a[0];
    CHECK(auroc(a, b) == doctest::Approx(oracle_auroc(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("auroc complement identity") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a = random_scores(15, rng);
    std::vector<double> b = random_scores(11, rng);
    CHECK(auroc(a, b) + auroc(b, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("metrics reject empty classes") {
  std::vector<double> some{0.5};
  try {
    auroc(some, {});
    FAIL("expected EmptyClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_class);
  }
  try {
    fpr95({}, some);
    FAIL("expected EmptyClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_class);
  }
}

TEST_CASE("fpr95 trivial separations") {
  std::vector<double> id_scores(10, 1.0);
  std::vector<double> ood_scores(10, 0.0);
  CHECK(fpr95(id_scores, ood_scores) == doctest::Approx(0.0));

  // Disjoint supports.
  Rng rng(3);
  std::vector<double> id_hi(100);
  std::vector<double> ood_lo(100);
  for (double& s : id_hi) s = 0.5 + 0.5 * rng.uniform();
  for (double& s : ood_lo) s = 0.5 * rng.uniform();
  CHECK(fpr95(id_hi, ood_lo) == doctest::Approx(0.0));
}

TEST_CASE("fpr95 on a shared multiset sits at the TPR target") {
  // Identical 20-element score multisets: the threshold keeping 19 of 20 ID
  // scores keeps 19 of 20 OOD scores too.
  Rng rng(4);
  std::vector<double> scores = random_scores(20, rng);
  CHECK(fpr95(scores, scores) == doctest::Approx(0.95));
}

TEST_CASE("fpr95 matches the exhaustive-threshold oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a = random_scores(25, rng);
    std::vector<double> b = random_scores(30, rng);
    CHECK(fpr95(a, b) == doctest::Approx(oracle_fpr95(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
  Rng rng(6);
  std::vector<double> a = random_scores(30, rng);
  std::vector<double> b = random_scores(30, rng);
  auto squash = [](std::vector<double> v) {
    for (double& x : v) x = std::tanh(3.0 * x) + x * 0.1;
    return v;
  };
  CHECK(auroc(a, b) == doctest::Approx(auroc(squash(a), squash(b))).epsilon(1e-12));
  CHECK(fpr95(a, b) == doctest::Approx(fpr95(squash(a), squash(b))).epsilon(1e-12));
}

TEST_CASE("fpr95 never increases when OOD scores drop uniformly") {
  Rng rng(7);
  std::vector<double> a = random_scores(40, rng);
  std::vector<double> b = random_scores(40, rng);
  double previous = fpr95(a, b);
  for (int step = 0; step < 5; ++step) {
    for (double& s : b) s -= 0.05;
    double current = fpr95(a, b);
    CHECK(current <= previous + 1e-12);
    previous = current;
  }
}

TEST_CASE("evaluate aggregates per phase") {
  std::vector<StreamResult> results;
  std::vector<StreamSample> samples;
  Rng rng(8);
  for (std::size_t phase = 0; phase < 2; ++phase) {
    for (int i = 0; i < 10; ++i) {
      bool is_id = i % 2 == 0;
      double score = is_id ? 0.8 + 0.01 * i : 0.2 + 0.01 * i;
      results.push_back(StreamResult{"s", score, score, false, 0,
                                     is_id ? Label::id : Label::ood});
      samples.push_back(StreamSample{"s", test::random_unit(4, rng),
                                     is_id ? Label::id : Label::ood, phase});
    }
  }
  MetricReport report = evaluate(results, samples);
  CHECK(report.n_id == 10);
  CHECK(report.n_ood == 10);
  CHECK(report.per_phase.size() == 2);
  for (const auto& [phase, phase_report] : report.per_phase) {
    CHECK(phase_report.n_id == 5);
    CHECK(phase_report.auroc == doctest::Approx(1.0));
  }
}
