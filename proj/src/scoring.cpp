#include "negstream/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace negstream {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::invalid_config, "temperature must be positive");
  }
}

// Logits for the ID classes and the negatives. The shared maximum is
// subtracted before exponentiation everywhere; every score here is a ratio of
// exponential sums, so a common shift cancels exactly. At tau = 0.01 raw
// logits reach 100 and naive exp would already be near the overflow cliff
// for less tame inputs.
struct Activations {
  std::vector<double> id_logits;
  std::vector<double> neg_logits;
  double max_logit;
};

Activations compute_logits(const EmbeddingVector& v, const IdModel& model,
                           std::span<const EmbeddingVector> negatives,
                           double tau) {
  Activations act;
  act.id_logits.reserve(model.class_count());
  act.neg_logits.reserve(negatives.size());
  act.max_logit = -std::numeric_limits<double>::infinity();
  for (const auto& t : model.class_text_features) {
    double logit = cosine(v, t) / tau;
    act.id_logits.push_back(logit);
    act.max_logit = std::max(act.max_logit, logit);
  }
  for (const auto& t : negatives) {
    double logit = cosine(v, t) / tau;
    act.neg_logits.push_back(logit);
    act.max_logit = std::max(act.max_logit, logit);
  }
  return act;
}

}  // namespace

std::vector<double> zero_shot_probabilities(const EmbeddingVector& v,
                                            const IdModel& model, double tau) {
  check_tau(tau);
  if (model.class_count() == 0) {
    throw Error(ErrorCode::empty_class, "model holds no classes");
  }
  std::vector<double> logits;
  logits.reserve(model.class_count());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const auto& t : model.class_text_features) {
    logits.push_back(cosine(v, t) / tau);
    max_logit = std::max(max_logit, logits.back());
  }
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - max_logit);
    sum += l;
  }
  for (double& l : logits) l /= sum;
  return logits;
}

double negative_label_score(const EmbeddingVector& v, const IdModel& model,
                      std::span<const EmbeddingVector> negatives, double tau) {
  check_tau(tau);
  if (model.class_count() == 0) {
    throw Error(ErrorCode::empty_class, "model holds no classes");
  }
  Activations act = compute_logits(v, model, negatives, tau);
  double positive = 0.0;
  for (double l : act.id_logits) positive += std::exp(l - act.max_logit);
  double negative = 0.0;
  for (double l : act.neg_logits) negative += std::exp(l - act.max_logit);
  return positive / (positive + negative);
}

Grouping make_grouping(std::size_t n_negatives, std::size_t groups, Rng& rng) {
  if (groups == 0) {
    throw Error(ErrorCode::invalid_config, "group count must be >= 1");
  }
  if (n_negatives < groups) {
    throw Error(ErrorCode::too_few_negatives,
                std::to_string(n_negatives) + " negatives cannot fill " +
                    std::to_string(groups) + " groups");
  }
  Grouping grouping;
  grouping.permutation.resize(n_negatives);
  std::iota(grouping.permutation.begin(), grouping.permutation.end(), 0);
  rng.shuffle(grouping.permutation);

  std::size_t base = n_negatives / groups;
  std::size_t remainder = n_negatives % groups;
  std::size_t begin = 0;
  grouping.boundaries.reserve(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    std::size_t size = base + (g < remainder ? 1 : 0);
    grouping.boundaries.emplace_back(begin, begin + size);
    begin += size;
  }
  return grouping;
}

double group_score(const EmbeddingVector& v, const IdModel& model,
                   std::span<const EmbeddingVector> negatives,
                   const Grouping& grouping, const ScoreConfig& cfg) {
  check_tau(cfg.tau);
  if (grouping.size() != negatives.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "grouping covers " + std::to_string(grouping.size()) +
                    " negatives, got " + std::to_string(negatives.size()));
  }
  if (model.class_count() == 0) {
    throw Error(ErrorCode::empty_class, "model holds no classes");
  }
  double c_scale = cfg.effective_c_scale(model.class_count());

  Activations act = compute_logits(v, model, negatives, cfg.tau);
  double positive = 0.0;
  for (double l : act.id_logits) positive += std::exp(l - act.max_logit);

  double total = 0.0;
  for (const auto& [begin, end] : grouping.boundaries) {
    if (begin == end) {
      throw Error(ErrorCode::empty_group, "grouping contains an empty group");
    }
    double group_sum = 0.0;
    for (std::size_t slot = begin; slot < end; ++slot) {
      group_sum +=
          std::exp(act.neg_logits[grouping.permutation[slot]] - act.max_logit);
    }
    double activation =
        c_scale * group_sum / static_cast<double>(end - begin);
    total += positive / (positive + activation);
  }
  return total / static_cast<double>(grouping.group_count());
}

Label classify(double score, double gamma) {
  return score >= gamma ? Label::id : Label::ood;
}

}  // namespace negstream
