#pragma once

// Class-wise image prototypes from N-shot ID images and top-L mining of
// static negative labels from a vocabulary.

#include <cstddef>
#include <string>
#include <vector>

#include "negstream/core.hpp"

namespace negstream {

// ID class text features t_{y_c} plus class-wise image prototypes mu_c.
struct IdModel {
  std::vector<std::string> class_names;
  std::vector<EmbeddingVector> class_text_features;
  std::vector<EmbeddingVector> prototypes;

  std::size_t class_count() const { return prototypes.size(); }
  std::size_t dim() const { return prototypes.empty() ? 0 : prototypes[0].dim(); }
};

// One vocabulary word: its pseudo-token embedding (encoder input space) and
// the text feature the encoder produces for it.
struct VocabularyEntry {
  std::string token_id;
  std::vector<double> token_embedding;
  EmbeddingVector text_feature;
};

// Mined negative labels, sorted by distance to the ID visual space,
// descending; ties broken by ascending vocabulary index.
struct StaticNegatives {
  std::vector<VocabularyEntry> entries;
  std::vector<double> distances;

  std::size_t size() const { return entries.size(); }
};

// Per-class mean of the shot embeddings, re-normalized to unit length.
// Throws EmptyClass when any class has no shots.
std::vector<EmbeddingVector> build_prototypes(
    const std::vector<std::vector<EmbeddingVector>>& shots);

IdModel build_id_model(std::vector<std::string> class_names,
                       std::vector<EmbeddingVector> class_text_features,
                       const std::vector<std::vector<EmbeddingVector>>& shots);

// Mean cosine distance of a candidate's text feature to all class
// prototypes: (1/C) * sum_c (1 - cos(t, mu_c)). Range [0, 2].
double negative_distance(const VocabularyEntry& candidate, const IdModel& model);

// Top-L vocabulary entries by largest negative_distance.
StaticNegatives mine_negatives(const std::vector<VocabularyEntry>& vocabulary,
                               const IdModel& model, std::size_t count);

std::vector<EmbeddingVector> static_features(const StaticNegatives& negatives);

}  // namespace negstream
