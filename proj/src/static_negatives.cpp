#include "negstream/static_negatives.hpp"

#include <algorithm>
#include <numeric>

namespace negstream {

std::vector<EmbeddingVector> build_prototypes(
    const std::vector<std::vector<EmbeddingVector>>& shots) {
  std::vector<EmbeddingVector> prototypes;
  prototypes.reserve(shots.size());
  for (std::size_t c = 0; c < shots.size(); ++c) {
    const auto& class_shots = shots[c];
    if (class_shots.empty()) {
      throw Error(ErrorCode::empty_class,
                  "class " + std::to_string(c) + " has no shots");
    }
    std::size_t dim = class_shots[0].dim();
    std::vector<double> mean(dim, 0.0);
    for (const auto& shot : class_shots) {
      if (shot.dim() != dim) {
        throw Error(ErrorCode::dimension_mismatch,
                    "shot dimension mismatch in class " + std::to_string(c));
      }
      for (std::size_t i = 0; i < dim; ++i) mean[i] += shot[i];
    }
    for (double& x : mean) x /= static_cast<double>(class_shots.size());
    prototypes.push_back(normalize(mean));
  }
  return prototypes;
}

IdModel build_id_model(std::vector<std::string> class_names,
                       std::vector<EmbeddingVector> class_text_features,
                       const std::vector<std::vector<EmbeddingVector>>& shots) {
  if (class_names.size() != shots.size() ||
      class_text_features.size() != shots.size()) {
    throw Error(ErrorCode::invalid_config,
                "class names, text features and shots must align");
  }
  if (shots.empty()) {
    throw Error(ErrorCode::empty_class, "at least one ID class is required");
  }
  IdModel model;
  model.class_names = std::move(class_names);
  model.class_text_features = std::move(class_text_features);
  model.prototypes = build_prototypes(shots);
  for (const auto& t : model.class_text_features) {
    if (t.dim() != model.dim()) {
      throw Error(ErrorCode::dimension_mismatch,
                  "class text feature dimension mismatch");
    }
  }
  return model;
}

double negative_distance(const VocabularyEntry& candidate,
                         const IdModel& model) {
  double total = 0.0;
  for (const auto& prototype : model.prototypes) {
    total += 1.0 - cosine(candidate.text_feature, prototype);
  }
  return total / static_cast<double>(model.class_count());
}

StaticNegatives mine_negatives(const std::vector<VocabularyEntry>& vocabulary,
                               const IdModel& model, std::size_t count) {
  if (vocabulary.size() < count) {
    throw Error(ErrorCode::vocabulary_too_small,
                "vocabulary holds " + std::to_string(vocabulary.size()) +
                    " entries, need " + std::to_string(count));
  }
  if (count == 0) {
    throw Error(ErrorCode::invalid_config, "negative count must be >= 1");
  }
  std::vector<double> dist(vocabulary.size());
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    dist[i] = negative_distance(vocabulary[i], model);
  }
  std::vector<std::size_t> order(vocabulary.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return a < b;  // ties by ascending vocabulary index
  });

  StaticNegatives result;
  result.entries.reserve(count);
  result.distances.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    result.entries.push_back(vocabulary[order[i]]);
    result.distances.push_back(dist[order[i]]);
  }
  return result;
}

std::vector<EmbeddingVector> static_features(const StaticNegatives& negatives) {
  std::vector<EmbeddingVector> features;
  features.reserve(negatives.entries.size());
  for (const auto& entry : negatives.entries) {
    features.push_back(entry.text_feature);
  }
  return features;
}

}  // namespace negstream
